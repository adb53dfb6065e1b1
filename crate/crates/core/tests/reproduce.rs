use pmtrap_core::reproduce::{reproduce, Figure, ReproduceOptions};

fn quick() -> ReproduceOptions {
    ReproduceOptions {
        rate_pulses: 1_000_000,
        repeats: 1,
        cluster_sizes: vec![4, 16, 64],
        g2_duration: 0.3,
        ..ReproduceOptions::default()
    }
}

fn num(c: &pmtrap_core::reproduce::Campaign, key: &str) -> f64 {
    c.summary[key].as_f64().unwrap_or_else(|| panic!("{key} missing in {}", c.summary))
}

#[test]
fn ids_parse_and_unknown_is_rejected() {
    for id in Figure::ALL_IDS {
        assert_eq!(id.parse::<Figure>().unwrap().id(), id);
    }
    assert!("fig9z".parse::<Figure>().is_err());
}

#[test]
fn closed_form_campaigns() {
    let o = quick();
    let e = reproduce(Figure::Efficiency, &o).unwrap();
    assert!((num(&e, "linear") - 0.94).abs() < 0.005);
    assert!((num(&e, "circular") - 0.76).abs() < 0.005);
    let p = reproduce(Figure::MinPower, &o).unwrap();
    assert_eq!(num(&p, "P_min_mW"), 41.0);
    let g = reproduce(Figure::Damping, &o).unwrap();
    assert!((num(&g, "gamma_over_2pi_MHz") - 2.0).abs() < 0.2);
    let r = reproduce(Figure::CountRate, &o).unwrap();
    assert!(num(&r, "relative_difference").abs() < 0.02);
}

#[test]
fn scaling_campaign_reports_the_model_exponent() {
    let o = ReproduceOptions {
        cluster_sizes: vec![4, 8, 16, 32, 64],
        ..quick()
    };
    let c = reproduce(Figure::DampingScaling, &o).unwrap();
    assert!((num(&c, "exponent") - 0.5).abs() < 1e-9);
    assert!(num(&c, "exponent_full_knudsen") < 0.2);
    let t = &c.tables[0];
    assert_eq!(t.rows.len(), 5);
    let pmin = t.column("P_min_mW").unwrap();
    assert!(pmin.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn antibunching_campaign_stays_in_band() {
    let c = reproduce(Figure::Antibunching, &quick()).unwrap();
    assert!(num(&c, "g2_min") >= 0.1);
    assert!(num(&c, "g2_max") <= 0.5);
}

#[test]
fn dipole_fraction_campaign_is_monotone() {
    let c = reproduce(Figure::DipoleFraction, &quick()).unwrap();
    assert_eq!(c.summary["monotone"], true);
    assert!(num(&c, "max_fit_error") < 0.01);
}

#[test]
fn campaigns_are_deterministic() {
    let o = quick();
    for f in [Figure::CountRate, Figure::Antibunching] {
        assert_eq!(reproduce(f, &o).unwrap(), reproduce(f, &o).unwrap());
    }
}
