//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pmtrap_core::analysis::{blink_analysis, estimate_damping, g2_zero, BlinkClass, GaussianPeak, LorentzianFit};
use pmtrap_core::emitter::{
    expected_count_rate, expected_g2, generate_time_tags_with, TagOptions, TimeTagStream,
};
use pmtrap_core::langevin::{detector_signal, simulate_axial_motion, AxialParams, TimeSeries, TrapStiffness};
use pmtrap_core::optics::{
    asymmetry_metric, azimuthal_average, fit_dipole_fraction, mix_image, ApertureImage, Asymmetry, DipoleFit, DipoleMix,
};
use pmtrap_core::reproduce::{reproduce, Campaign, Figure, ReproduceOptions};
use pmtrap_core::rng::{child_rng, child_seed};
use pmtrap_core::trap::{
    calibrate_field_factor, cluster_damping_rate, cluster_mass, trap_depth, ClusterSample, TrapParams,
};
use pmtrap_core::units::{AngularRate, Length};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AxialStiffness, ExperimentConfig};
use crate::error::CliError;
use crate::formats::{self, read_image, read_json, read_series, read_tags, write_json, write_table};
use crate::manifest::RunManifest;

pub const TAGS: &str = "tags.bin";
pub const DETECTOR: &str = "detector.ts";
pub const IMAGE: &str = "image_total.csv";
pub const IMAGE_HEADER: &str = "image_total.json";
pub const GROUND_TRUTH: &str = "ground_truth.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const RESULTS: &str = "results.json";

/// Artifacts of a simulated dataset, in manifest order.
pub const DATASET_FILES: [&str; 6] = [CONFIG_SNAPSHOT, TAGS, DETECTOR, IMAGE, IMAGE_HEADER, GROUND_TRUTH];

/// Parameters injected into a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub n_rods: u32,
    pub mass_kg: f64,
    pub gamma_over_2pi_hz: f64,
    pub trap_frequency_hz: f64,
    pub p_min_mw: f64,
    /// Trap depth at the configured power, units of k_BT.
    pub trap_depth_kt: f64,
    pub a_pi: f64,
    /// Closed-form count rate scaled by the long-time blinking factor, 1/s.
    pub expected_count_rate: f64,
    pub expected_count_rate_uncertainty: f64,
    pub mean_excitons: f64,
    pub auger_probability: f64,
    pub expected_g2: f64,
    pub motion_seed: u64,
    pub tags_seed: u64,
    pub image_seed: u64,
}

struct Physical {
    cluster: ClusterSample,
    gamma: AngularRate,
    stiffness: TrapStiffness,
    p_min_mw: f64,
    depth_kt: f64,
}

fn physical(cfg: &ExperimentConfig) -> Result<Physical, CliError> {
    let cluster = ClusterSample::new(cfg.emitter.n_rods, cfg.rod, cfg.material)?;
    let single = ClusterSample::single(cfg.rod, cfg.material);
    let t = &cfg.trap;
    let kt = cfg.gas.temperature.thermal_energy();
    let field_factor =
        calibrate_field_factor(single.polarizability(), cfg.gas.temperature, t.single_rod_p_min, t.escape_kt);
    let trap = TrapParams {
        wavelength: t.wavelength,
        power: t.power,
        field_factor,
    };
    trap.validate()?;
    let depth = trap_depth(cluster.polarizability(), &trap);
    let p_min = pmtrap_core::trap::min_power(cluster.polarizability(), cfg.gas.temperature, field_factor, t.escape_kt)?;
    let mass = cluster_mass(&cluster);
    let stiffness = match t.stiffness {
        AxialStiffness::Frequency { hz } => TrapStiffness::from_frequency(AngularRate::from_hz(hz), mass),
        AxialStiffness::Depth => TrapStiffness::from_depth(depth, Length(t.wavelength.0 / 2.0))?,
    };
    Ok(Physical {
        cluster,
        gamma: cluster_damping_rate(&cluster, &cfg.gas, t.damping)?,
        stiffness,
        p_min_mw: p_min.in_mw(),
        depth_kt: depth.0 / kt.0,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn remove_if_present(path: &Path) -> Result<(), CliError> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(CliError::io(path, e)),
        _ => Ok(()),
    }
}

/// Write a complete dataset to `out`; returns the manifest.
pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    cfg.validate()?;
    ensure_dir(out)?;
    remove_if_present(&out.join(crate::manifest::MANIFEST))?;

    let root = cfg.seed;
    let ph = physical(cfg)?;
    let mass = cluster_mass(&ph.cluster);
    let omega = ph.stiffness.angular_frequency(mass);
    let motion_seed = child_seed(root, "simulate.motion", 0);
    let sim = pmtrap_core::langevin::SimConfig {
        seed: motion_seed,
        ..cfg.simulation
    };
    sim.check_step(ph.gamma, omega)?;
    sim.check_spectral(ph.gamma)?;

    fs::write(out.join(CONFIG_SNAPSHOT), cfg.to_toml()).map_err(|e| CliError::io(&out.join(CONFIG_SNAPSHOT), e))?;

    let params = AxialParams {
        stiffness: ph.stiffness,
        gamma: ph.gamma,
        mass,
        temperature: cfg.gas.temperature,
        initial: None,
    };
    let z = simulate_axial_motion(&params, &sim)?;
    formats::write_series(&out.join(DETECTOR), &detector_signal(&z, &sim))?;
    drop(z);

    let tags_seed = child_seed(root, "simulate.tags", 0);
    let opts = TagOptions {
        jitter: cfg.acquisition.jitter,
        ..TagOptions::default()
    };
    let stream = generate_time_tags_with(
        &cfg.excitation,
        &cfg.emitter,
        &cfg.detection,
        cfg.acquisition.duration,
        tags_seed,
        &opts,
    )?;
    formats::write_tags(&out.join(TAGS), &stream)?;
    drop(stream);

    let image_seed = child_seed(root, "simulate.image", 0);
    let clean = mix_image(&DipoleMix::from_fraction(cfg.image.a_pi), &cfg.image.grid, Some(&cfg.mirror));
    let image = if cfg.image.snr > 0.0 {
        clean.with_shot_noise(cfg.image.snr, &mut child_rng(root, "simulate.image", 0))
    } else {
        clean
    };
    formats::write_image(&out.join(IMAGE), &out.join(IMAGE_HEADER), &image)?;

    let rate = expected_count_rate(&cfg.excitation, &cfg.emitter, &cfg.detection);
    let blink = cfg.emitter.blink.mean_factor();
    let truth = GroundTruth {
        n_rods: ph.cluster.n_rods,
        mass_kg: mass.0,
        gamma_over_2pi_hz: ph.gamma.hz(),
        trap_frequency_hz: omega.hz(),
        p_min_mw: ph.p_min_mw,
        trap_depth_kt: ph.depth_kt,
        a_pi: cfg.image.a_pi,
        expected_count_rate: rate.rate * blink,
        expected_count_rate_uncertainty: rate.uncertainty * blink,
        mean_excitons: cfg.excitation.mean_excitons(),
        auger_probability: cfg.emitter.auger_probability(),
        expected_g2: expected_g2(cfg.excitation.mean_excitons(), cfg.emitter.auger_probability()),
        motion_seed,
        tags_seed,
        image_seed,
    };
    write_json(&out.join(GROUND_TRUTH), &truth)?;

    let manifest = RunManifest::build(out, &DATASET_FILES, cfg.hash(), root)?;
    manifest.write(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingResult {
    pub fit: LorentzianFit,
    pub gamma_over_2pi_hz: f64,
    pub segment_len: usize,
    pub averages: usize,
    pub resolution_bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Summary {
    pub g2_zero: f64,
    pub error: f64,
    pub zero_lag_coincidences: u64,
    pub side_coincidences: u64,
    pub side_mean: f64,
    pub max_lag: i64,
    pub events: usize,
    pub mean_rate: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlinkSummary {
    pub bin_width: f64,
    pub classification: BlinkClass,
    pub grey_peak: Option<GaussianPeak>,
    pub bright_peak: Option<GaussianPeak>,
    pub log_linear_r2: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleSummary {
    pub fit: DipoleFit,
    pub profile_bins: usize,
    pub asymmetry: Option<Asymmetry>,
}

/// Recovered values next to the injected ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub gamma_ratio: Option<f64>,
    pub a_pi_error: Option<f64>,
    /// `(measured − expected) / error`.
    pub g2_z_score: Option<f64>,
    pub count_rate_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResults {
    pub toolkit_version: String,
    pub config_hash: String,
    pub seed: u64,
    /// sha256 of every input artifact.
    pub inputs: BTreeMap<String, String>,
    pub damping: Option<DampingResult>,
    pub g2: Option<G2Summary>,
    pub blinking: Option<BlinkSummary>,
    pub dipole: Option<DipoleSummary>,
    pub ground_truth: GroundTruth,
    pub comparison: Comparison,
    /// Analyses that failed, by name.
    pub errors: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub max_lag: Option<i64>,
    /// Directory for results; the dataset directory when absent.
    pub out: Option<PathBuf>,
}

fn record<T>(errors: &mut BTreeMap<String, String>, name: &str, r: Result<T, CliError>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.insert(name.to_string(), e.to_string());
            None
        }
    }
}

/// Verify and analyse a dataset. Writes `results.json` and CSV tables even
/// when individual analyses fail; those are listed under `errors`.
pub fn analyze(dataset: &Path, opts: &AnalyzeOptions) -> Result<AnalysisResults, CliError> {
    let manifest = RunManifest::load(dataset)?;
    manifest.verify(dataset, &DATASET_FILES)?;
    let cfg = ExperimentConfig::load(&dataset.join(CONFIG_SNAPSHOT))?;
    if cfg.hash() != manifest.config_hash {
        return Err(CliError::BadManifest {
            path: dataset.join(crate::manifest::MANIFEST),
            reason: "config hash does not match config.toml".into(),
        });
    }
    let truth: GroundTruth = read_json(&dataset.join(GROUND_TRUTH))?;
    let out = opts.out.clone().unwrap_or_else(|| dataset.to_path_buf());
    ensure_dir(&out)?;
    remove_if_present(&out.join(RESULTS))?;

    let max_lag = opts.max_lag.unwrap_or(cfg.analysis.max_lag);
    if max_lag < 1 {
        return Err(CliError::Config("--max-lag must be at least 1".into()));
    }
    let an = &cfg.analysis;
    let mut errors = BTreeMap::new();

    let stream = read_tags(&dataset.join(TAGS))?;
    let series = read_series(&dataset.join(DETECTOR))?;
    let image = read_image(&dataset.join(IMAGE), &dataset.join(IMAGE_HEADER))?;

    let damping = record(&mut errors, "damping", damping_section(&series, &cfg, &out));
    let g2 = record(
        &mut errors,
        "g2",
        g2_section(&stream, cfg.excitation.pulse_period(), max_lag, &out),
    );
    let blinking = record(&mut errors, "blinking", blink_section(&stream, &cfg, &out));
    let dipole = record(&mut errors, "dipole", dipole_section(&image, an, &out));

    let comparison = Comparison {
        gamma_ratio: damping.as_ref().map(|d| d.gamma_over_2pi_hz / truth.gamma_over_2pi_hz),
        a_pi_error: dipole.as_ref().map(|d| d.fit.a_pi - truth.a_pi),
        g2_z_score: g2
            .as_ref()
            .filter(|g| g.error > 0.0)
            .map(|g| (g.g2_zero - truth.expected_g2) / g.error),
        count_rate_ratio: g2.as_ref().map(|g| g.mean_rate / truth.expected_count_rate),
    };
    let results = AnalysisResults {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: manifest.config_hash.clone(),
        seed: manifest.seed,
        inputs: manifest
            .artifacts
            .iter()
            .map(|a| (a.file.clone(), a.sha256.clone()))
            .collect(),
        damping,
        g2,
        blinking,
        dipole,
        ground_truth: truth,
        comparison,
        errors,
    };
    write_json(&out.join(RESULTS), &results)?;
    Ok(results)
}

fn damping_section(series: &TimeSeries, cfg: &ExperimentConfig, out: &Path) -> Result<DampingResult, CliError> {
    let (spec, fit) = estimate_damping(series, cfg.analysis.coarse_segment, &cfg.analysis.lorentzian)?;
    write_table(
        &out.join("psd.csv"),
        &["frequency_hz", "psd", "lorentzian_fit"],
        spec.frequencies
            .iter()
            .zip(&spec.densities)
            .map(|(&f, &d)| vec![f, d, fit.evaluate(f)]),
    )?;
    Ok(DampingResult {
        gamma_over_2pi_hz: fit.width_hz,
        segment_len: 2 * (spec.frequencies.len() - 1),
        averages: spec.averages,
        resolution_bandwidth_hz: spec.resolution_bandwidth,
        fit,
    })
}

fn g2_section(stream: &TimeTagStream, period: f64, max_lag: i64, out: &Path) -> Result<G2Summary, CliError> {
    let g = g2_zero(stream, period, max_lag)?;
    write_table(
        &out.join("g2_histogram.csv"),
        &["lag_pulses", "coincidences"],
        g.histogram.iter().map(|&(l, c)| vec![l as f64, c as f64]),
    )?;
    Ok(G2Summary {
        g2_zero: g.g2_zero,
        error: g.error,
        zero_lag_coincidences: g.zero_lag_coincidences,
        side_coincidences: g.side_coincidences,
        side_mean: g.side_mean,
        max_lag,
        events: stream.len(),
        mean_rate: stream.mean_rate(),
        warnings: g.warnings,
    })
}

fn blink_section(stream: &TimeTagStream, cfg: &ExperimentConfig, out: &Path) -> Result<BlinkSummary, CliError> {
    let b = blink_analysis(stream, &cfg.analysis.blink)?;
    write_table(
        &out.join("blink_histogram.csv"),
        &["counts_per_bin", "bins"],
        b.histogram.iter().enumerate().map(|(c, &n)| vec![c as f64, n as f64]),
    )?;
    Ok(BlinkSummary {
        bin_width: b.bin_width,
        classification: b.classification,
        grey_peak: b.grey_peak,
        bright_peak: b.bright_peak,
        log_linear_r2: b.log_linear_r2,
        warnings: b.warnings,
    })
}

fn dipole_section(
    image: &ApertureImage,
    an: &crate::config::AnalysisSection,
    out: &Path,
) -> Result<DipoleSummary, CliError> {
    let profile = azimuthal_average(image, None)?;
    let fit = fit_dipole_fraction(&profile)?;
    write_table(
        &out.join("radial_profile.csv"),
        &["radius_over_f", "intensity", "dipole_fit"],
        profile
            .radii
            .iter()
            .zip(&profile.intensities)
            .map(|(&r, &i)| vec![r, i, fit.mix.profile(r)]),
    )?;
    let asymmetry = asymmetry_metric(image, &an.asymmetry).ok();
    Ok(DipoleSummary {
        fit,
        profile_bins: profile.len(),
        asymmetry,
    })
}

/// Run campaigns and write `<out>/<figure>/summary.json` plus one CSV per
/// table. Independent campaigns run in parallel.
pub fn reproduce_figures(figures: &[Figure], opts: &ReproduceOptions, out: &Path) -> Result<Vec<Campaign>, CliError> {
    let campaigns: Vec<Campaign> = figures
        .par_iter()
        .map(|&f| reproduce(f, opts).map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    for c in &campaigns {
        let dir = out.join(&c.figure);
        ensure_dir(&dir)?;
        let mut summary = c.summary.clone();
        if let Some(obj) = summary.as_object_mut() {
            obj.insert("figure".into(), c.figure.clone().into());
            obj.insert("seed".into(), opts.seed.into());
        }
        write_json(&dir.join("summary.json"), &summary)?;
        for t in &c.tables {
            let headers: Vec<&str> = t.headers.iter().map(String::as_str).collect();
            write_table(&dir.join(format!("{}.csv", t.name)), &headers, t.rows.iter().cloned())?;
        }
    }
    Ok(campaigns)
}

pub fn parse_figures(id: &str) -> Result<Vec<Figure>, CliError> {
    if id == "all" {
        return Ok(Figure::ALL.to_vec());
    }
    id.parse::<Figure>()
        .map(|f| vec![f])
        .map_err(|_| CliError::UnknownFigure(id.to_string(), format!("all, {}", Figure::ALL_IDS.join(", "))))
}
