use pmtrap_core::analysis::*;
use pmtrap_core::emitter::*;
use pmtrap_core::langevin::{SimConfig, TimeSeries};
use pmtrap_core::reproduce::SpectralMeasurement;
use pmtrap_core::rng::rng_from_seed;
use pmtrap_core::units::*;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

const PERIOD: f64 = 1e-6;

fn white_noise(n: usize, sigma: f64, seed: u64) -> TimeSeries {
    let mut rng = rng_from_seed(seed);
    TimeSeries {
        dt: 1e-8,
        unit: "V".into(),
        samples: (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn synthetic_spectrum(a: f64, f0: f64, width: f64, b: f64) -> Spectrum {
    let df = width / 40.0;
    let n = (((f0 + 25.0 * width) / df).ceil() as usize).max(2048);
    let frequencies: Vec<f64> = (0..n).map(|k| k as f64 * df).collect();
    let densities = frequencies.iter().map(|f| lorentzian(a, f0, width / 2.0, b, *f)).collect();
    Spectrum {
        frequencies,
        densities,
        resolution_bandwidth: df,
        averages: 1,
    }
}

// constant-rate Poisson detections split evenly over two channels
fn poisson_stream(rate: f64, duration: f64, seed: u64) -> TimeTagStream {
    let mut rng = rng_from_seed(seed);
    let exp = Exp::new(rate).unwrap();
    let mut t = 0.0;
    let mut events = Vec::new();
    loop {
        t += exp.sample(&mut rng);
        if t >= duration {
            break;
        }
        events.push(TimeTag {
            channel: rng.random_range(0..2),
            time: t,
        });
    }
    TimeTagStream::new(events, duration, seed)
}

fn blinking_stream(blink: BlinkModel, duration: f64, seed: u64) -> TimeTagStream {
    let em = EmitterModel {
        blink,
        ..EmitterModel::default()
    };
    generate_time_tags(&ExcitationConfig::default(), &em, &DetectionChain::default(), duration, seed).unwrap()
}

#[test]
fn white_noise_spectrum_is_flat_and_integrates_to_variance() {
    let sigma = 0.3;
    let s = white_noise(1 << 21, sigma, 4);
    let spec = power_spectral_density(&s, &PsdOptions::default()).unwrap();
    assert!((spec.integral() / (sigma * sigma) - 1.0).abs() < 0.01);
    let fs = 1.0 / s.dt;
    let level = 2.0 * sigma * sigma / fs;
    let inner = &spec.densities[1..spec.densities.len() - 1];
    let mean = inner.iter().sum::<f64>() / inner.len() as f64;
    assert!((mean / level - 1.0).abs() < 0.01);
    // Hann ENBW is 1.5 bins
    assert!((spec.resolution_bandwidth / spec.bin_width() - 1.5).abs() < 1e-9);
}

#[test]
fn lorentzian_round_trip_across_damping_rates() {
    // quality factor 10: well below that the line shape is not Lorentzian
    for gamma_hz in [0.2e6, 0.62e6, 2.0e6] {
        let base = SpectralMeasurement::default();
        let f = 10.0 * gamma_hz;
        let m = SpectralMeasurement {
            trap_frequency_hz: f,
            sim: SimConfig {
                dt: base.sim.dt.min(0.05 / (2.0 * std::f64::consts::PI * f)),
                ..base.sim
            },
            ..base
        };
        let widths: Vec<f64> = (0..9)
            .map(|seed| {
                m.measure(AngularRate::from_hz(gamma_hz), Mass(6.5e-21), Temperature(296.0), 300 + seed)
                    .unwrap()
                    .width_hz
            })
            .collect();
        let ratio = median(widths) / gamma_hz;
        assert!((ratio - 1.0).abs() < 0.05, "Γ/2π {gamma_hz}: median ratio {ratio}");
    }
}

#[test]
fn flat_spectrum_has_no_peak() {
    let s = white_noise(1 << 18, 1.0, 8);
    let spec = power_spectral_density(&s, &PsdOptions::default()).unwrap();
    assert!(matches!(
        fit_lorentzian(&spec, &LorentzianPolicy::default()),
        Err(AnalysisError::NoPeak { .. })
    ));
}

#[test]
fn poisson_source_has_unit_g2() {
    let s = poisson_stream(200e3, 1.0, 12);
    let r = g2_zero(&s, PERIOD, 50).unwrap();
    assert!((r.g2_zero - 1.0).abs() < 3.0 * r.error, "{} ± {}", r.g2_zero, r.error);
    assert!(r.warnings.is_empty());
}

#[test]
fn merged_single_photon_pair_gives_one_half() {
    let ex = ExcitationConfig::default();
    let chain = DetectionChain::default();
    let em = EmitterModel::default();
    let a = generate_time_tags(&ex, &em, &chain, 1.0, 21).unwrap();
    let b = generate_time_tags(&ex, &em, &chain, 1.0, 22).unwrap();
    let r = g2_zero(&TimeTagStream::merge(&[&a, &b]), PERIOD, 50).unwrap();
    assert!((r.g2_zero - 0.5).abs() < 3.0 * r.error, "{} ± {}", r.g2_zero, r.error);
}

#[test]
fn sparse_stream_carries_a_warning() {
    let s = poisson_stream(2e3, 1.0, 3);
    let r = g2_zero(&s, PERIOD, 50).unwrap();
    assert!(!r.warnings.is_empty());
    assert!(r.error > 0.0);
}

#[test]
fn constant_rate_stream_peaks_at_expected_count() {
    let s = poisson_stream(20e3, 10.0, 31);
    let h = blink_analysis(&s, &BlinkOptions::default()).unwrap();
    assert_eq!(h.classification, BlinkClass::GreyStatePeak);
    let peak = h.grey_peak.unwrap();
    assert!((peak.mean_counts - 10.0).abs() < 0.5, "{}", peak.mean_counts);
    assert!((peak.mean_rate - 20e3).abs() < 1e3);
}

#[test]
fn always_bright_emitter_is_unimodal() {
    let h = blinking_stream(BlinkModel::AlwaysBright, 2.0, 5);
    let h = blink_analysis(&h, &BlinkOptions::default()).unwrap();
    assert_eq!(h.classification, BlinkClass::GreyStatePeak);
    assert!(h.bright_peak.is_none());
}

#[test]
fn two_state_grey_level_follows_attenuation() {
    let g = 3.0;
    let blink = BlinkModel::TwoState {
        grey_attenuation: g,
        bright_dwell: 20e-3,
        grey_dwell: 80e-3,
    };
    let s = blinking_stream(blink, 20.0, 77);
    let h = blink_analysis(&s, &BlinkOptions::default()).unwrap();
    assert_eq!(h.classification, BlinkClass::TwoState);
    let (grey, bright) = (h.grey_peak.unwrap(), h.bright_peak.unwrap());
    let ratio = grey.mean_rate * g / bright.mean_rate;
    assert!((ratio - 1.0).abs() < 0.1, "grey {} bright {}", grey.mean_rate, bright.mean_rate);
}

#[test]
fn burst_mode_is_classified_exponential() {
    let blink = BlinkModel::DarkWithBursts {
        burst_dwell: 100e-6,
        dark_dwell: 5e-3,
    };
    for seed in [1, 2, 3] {
        let s = blinking_stream(blink, 10.0, seed);
        let h = blink_analysis(&s, &BlinkOptions::default()).unwrap();
        assert_eq!(h.classification, BlinkClass::ExponentialBurst, "seed {seed}");
    }
}

#[test]
fn blink_classification_is_deterministic() {
    let blink = BlinkModel::TwoState {
        grey_attenuation: 3.0,
        bright_dwell: 20e-3,
        grey_dwell: 80e-3,
    };
    let a = blink_analysis(&blinking_stream(blink, 2.0, 9), &BlinkOptions::default()).unwrap();
    let b = blink_analysis(&blinking_stream(blink, 2.0, 9), &BlinkOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn too_few_bins_is_an_error() {
    let s = poisson_stream(20e3, 0.1, 1);
    assert!(matches!(
        blink_analysis(&s, &BlinkOptions::default()),
        Err(AnalysisError::TooFewBins { .. })
    ));
}

#[test]
fn saturation_fit_tolerates_five_percent_noise() {
    let p_sat = 2.63e-6;
    let c = 2.4e5;
    let powers: Vec<f64> = (1..=12).map(|i| 0.25e-6 * 1.4f64.powi(i)).collect();
    let estimates: Vec<f64> = (0..100)
        .map(|seed| {
            let mut rng = rng_from_seed(5000 + seed);
            let pts: Vec<(Power, f64)> = powers
                .iter()
                .map(|&p| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    (Power(p), c * (1.0 - (-p / p_sat).exp()) * (1.0 + 0.05 * noise))
                })
                .collect();
            fit_saturation(&pts).unwrap().p_sat.0
        })
        .collect();
    let m = median(estimates);
    assert!((m / p_sat - 1.0).abs() < 0.15, "{m}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rectangular_psd_satisfies_parseval(
        seed in 0u64..100_000,
        n_seg in 4usize..12,
        seg_pow in 6u32..11,
        offset in -5.0f64..5.0,
    ) {
        let seg = 1usize << seg_pow;
        let mut s = white_noise(seg * n_seg, 1.0, seed);
        for (i, v) in s.samples.iter_mut().enumerate() {
            *v += offset + (i as f64 * 0.37).sin();
        }
        let spec = power_spectral_density(
            &s,
            &PsdOptions { segment_len: seg, overlap: 0.0, window: Window::Rectangular },
        ).unwrap();
        let var = {
            let m = s.samples.iter().sum::<f64>() / s.samples.len() as f64;
            s.samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.samples.len() as f64
        };
        prop_assert!((spec.integral() / var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hann_psd_of_white_noise_matches_variance(seed in 0u64..100_000, sigma in 0.01f64..100.0) {
        let s = white_noise(1 << 20, sigma, seed);
        let spec = power_spectral_density(&s, &PsdOptions::default()).unwrap();
        prop_assert!((spec.integral() / (sigma * sigma) - 1.0).abs() < 0.01);
    }

    #[test]
    fn g2_is_invariant_under_shift_and_swap(
        seed in 0u64..10_000,
        whole in 0i64..1000,
        frac in -0.4f64..0.4,
    ) {
        // shifts move every tag by the same number of pulses
        let s = generate_time_tags(
            &ExcitationConfig::default(),
            &EmitterModel { auger: AugerModel::Fixed { p: 0.9 }, ..EmitterModel::default() },
            &DetectionChain::default(),
            0.05,
            seed,
        ).unwrap();
        let base = g2_zero(&s, PERIOD, 20).unwrap();
        let shifted = g2_zero(&s.shifted((whole as f64 + frac) * PERIOD), PERIOD, 20).unwrap();
        let swapped = g2_zero(&s.swapped_channels(), PERIOD, 20).unwrap();
        prop_assert_eq!(base.zero_lag_coincidences, shifted.zero_lag_coincidences);
        prop_assert_eq!(base.side_coincidences, shifted.side_coincidences);
        prop_assert!((base.g2_zero - shifted.g2_zero).abs() < 1e-12);
        prop_assert_eq!(base.zero_lag_coincidences, swapped.zero_lag_coincidences);
        prop_assert_eq!(base.side_coincidences, swapped.side_coincidences);
        prop_assert!((base.g2_zero - swapped.g2_zero).abs() < 1e-12);
    }

    #[test]
    fn exact_lorentzian_is_recovered(
        la in -1.0f64..1.0,
        lf in -1.0f64..1.0,
        lw in -1.0f64..1.0,
        lb in -1.0f64..1.0,
    ) {
        // two decades around A = 1, f0 = 5 MHz, Γ/2π = 0.62 MHz, B = 0.01·A,
        // restricted to resolvable peaks (width below centre frequency)
        let a = 10f64.powf(la);
        let f0 = 5e6 * 10f64.powf(lf);
        let w = 0.62e6 * 10f64.powf(lw);
        let b = 0.01 * a * 10f64.powf(lb);
        prop_assume!(w < f0);
        let fit = fit_lorentzian(&synthetic_spectrum(a, f0, w, b), &LorentzianPolicy::default()).unwrap();
        prop_assert!((fit.width_hz / w - 1.0).abs() < 1e-6, "width {} vs {}", fit.width_hz, w);
        prop_assert!((fit.center_hz / f0 - 1.0).abs() < 1e-6);
        prop_assert!((fit.amplitude / a - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exact_saturation_curve_is_recovered(lp in -1.0f64..1.0, lc in -1.0f64..1.0) {
        let p_sat = 2.63e-6 * 10f64.powf(lp);
        let c = 2.4e5 * 10f64.powf(lc);
        // fixed 0.1-29 µW power ladder
        let pts: Vec<(Power, f64)> = (0..15)
            .map(|i| {
                let p = 0.1e-6 * 1.5f64.powi(i);
                (Power(p), c * (1.0 - (-p / p_sat).exp()))
            })
            .collect();
        let fit = fit_saturation(&pts).unwrap();
        prop_assert!((fit.p_sat.0 / p_sat - 1.0).abs() < 1e-6);
        prop_assert!((fit.amplitude / c - 1.0).abs() < 1e-6);
    }
}
