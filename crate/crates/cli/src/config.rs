//! Experiment configuration, read from TOML.
//!
//! Every section is optional and falls back to the model defaults. Unknown
//! keys are rejected at every level.

use std::path::{Path, PathBuf};

use pmtrap_core::analysis::{BlinkOptions, LorentzianPolicy};
use pmtrap_core::emitter::{DetectionChain, EmitterModel, ExcitationConfig};
use pmtrap_core::langevin::SimConfig;
use pmtrap_core::optics::{AsymmetryThresholds, GridSpec, MirrorGeometry};
use pmtrap_core::trap::{ClusterDamping, GasParams, MaterialParams, RodGeometry, SINGLE_ROD_P_MIN};
use pmtrap_core::units::{Length, Power};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed for every random stream of a run.
    pub seed: u64,
    /// Dataset directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub mirror: MirrorGeometry,
    pub rod: RodGeometry,
    pub material: MaterialParams,
    pub gas: GasParams,
    pub trap: TrapSection,
    /// Also sets the cluster size for trap, mass and damping.
    pub emitter: EmitterModel,
    pub excitation: ExcitationConfig,
    pub detection: DetectionChain,
    pub simulation: SimConfig,
    pub acquisition: AcquisitionSection,
    pub image: ImageSection,
    pub analysis: AnalysisSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            output_dir: None,
            mirror: MirrorGeometry::default(),
            rod: RodGeometry::default(),
            material: MaterialParams::default(),
            gas: GasParams::default(),
            trap: TrapSection::default(),
            emitter: EmitterModel::default(),
            excitation: ExcitationConfig::default(),
            detection: DetectionChain::default(),
            simulation: SimConfig::default(),
            acquisition: AcquisitionSection::default(),
            image: ImageSection::default(),
            analysis: AnalysisSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapSection {
    pub wavelength: Length,
    pub power: Power,
    /// Escape power of a single rod; calibrates the field factor.
    pub single_rod_p_min: Power,
    /// Escape threshold, trap depth in units of k_BT.
    pub escape_kt: f64,
    pub damping: ClusterDamping,
    pub stiffness: AxialStiffness,
}

/// Axial stiffness used for the motion record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxialStiffness {
    /// Fixed axial trap frequency, Hz.
    Frequency { hz: f64 },
    /// `k = 2·U₀/w²` from the trap depth at `power`, with `w` half the
    /// wavelength.
    Depth,
}

impl Default for TrapSection {
    fn default() -> Self {
        TrapSection {
            wavelength: Length::nm(1064.0),
            power: Power::mw(360.0),
            single_rod_p_min: SINGLE_ROD_P_MIN,
            escape_kt: 1.0,
            damping: ClusterDamping::default(),
            stiffness: AxialStiffness::Frequency { hz: 15e6 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionSection {
    /// Length of the time-tag record, s.
    pub duration: f64,
    /// Gaussian timing jitter per click, s.
    pub jitter: f64,
}

impl Default for AcquisitionSection {
    fn default() -> Self {
        AcquisitionSection {
            duration: 2.0,
            jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageSection {
    pub grid: GridSpec,
    /// Linear-dipole fraction of the recorded pattern.
    pub a_pi: f64,
    /// Peak signal-to-noise ratio; 0 records a noiseless image.
    pub snr: f64,
}

impl Default for ImageSection {
    fn default() -> Self {
        ImageSection {
            grid: GridSpec::default(),
            a_pi: 0.31,
            snr: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Pulse lags averaged for the g²(0) side peaks.
    pub max_lag: i64,
    /// Segment length of the first, coarse spectrum.
    pub coarse_segment: usize,
    pub lorentzian: LorentzianPolicy,
    pub blink: BlinkOptions,
    pub asymmetry: AsymmetryThresholds,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            max_lag: 50,
            coarse_segment: 4096,
            lorentzian: LorentzianPolicy::default(),
            blink: BlinkOptions::default(),
            asymmetry: AsymmetryThresholds::default(),
        }
    }
}

fn field<E: std::fmt::Display>(section: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Config(format!("{section}: {e}"))
}

fn check(ok: bool, section: &str, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("{section}: {msg}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises to TOML")
    }

    /// SHA-256 of the canonical TOML serialisation.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.mirror.validate().map_err(field("mirror"))?;
        self.rod.validate().map_err(field("rod"))?;
        self.material.validate().map_err(field("material"))?;
        self.gas.validate().map_err(field("gas"))?;
        self.emitter.validate().map_err(field("emitter"))?;
        self.excitation.validate().map_err(field("excitation"))?;
        self.detection.validate().map_err(field("detection"))?;

        let t = &self.trap;
        check(t.wavelength.is_finite_positive(), "trap", "wavelength must be positive")?;
        check(t.power.is_finite_positive(), "trap", "power must be positive")?;
        check(t.single_rod_p_min.is_finite_positive(), "trap", "single_rod_p_min must be positive")?;
        check(t.escape_kt > 0.0 && t.escape_kt.is_finite(), "trap", "escape_kt must be positive")?;
        if let AxialStiffness::Frequency { hz } = t.stiffness {
            check(hz > 0.0 && hz.is_finite(), "trap.stiffness", "hz must be positive")?;
        }

        let s = &self.simulation;
        check(s.dt > 0.0 && s.dt.is_finite(), "simulation", "dt must be positive")?;
        check(s.duration > s.dt, "simulation", "duration must exceed dt")?;
        check(s.sample_every >= 1, "simulation", "sample_every must be at least 1")?;
        check(s.gain >= 0.0 && s.noise_floor >= 0.0, "simulation", "gain and noise_floor must be non-negative")?;

        let a = &self.acquisition;
        check(a.duration > 0.0 && a.duration.is_finite(), "acquisition", "duration must be positive")?;
        check(a.jitter >= 0.0, "acquisition", "jitter must be non-negative")?;

        let i = &self.image;
        check(i.grid.pixels >= 16, "image.grid", "pixels must be at least 16")?;
        check(i.grid.half_extent > 0.0, "image.grid", "half_extent must be positive")?;
        check((0.0..=1.0).contains(&i.a_pi), "image", "a_pi must lie in [0, 1]")?;
        check(i.snr >= 0.0 && i.snr.is_finite(), "image", "snr must be non-negative")?;

        let an = &self.analysis;
        check(an.max_lag >= 1, "analysis", "max_lag must be at least 1")?;
        check(an.coarse_segment >= 64, "analysis", "coarse_segment must be at least 64")?;
        check(an.blink.bin_width > 0.0, "analysis.blink", "bin_width must be positive")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
    }

    #[test]
    fn minimal_file_takes_defaults() {
        let c = ExperimentConfig::from_toml("seed = 7\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.trap, TrapSection::default());
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::from_toml("seed = 1\n[trap]\nn_rod = 3\n").unwrap_err();
        assert!(err.to_string().contains("n_rod"), "{err}");
    }

    #[test]
    fn invalid_value_names_the_section() {
        let mut c = ExperimentConfig::default();
        c.detection.apd_qe = 1.5;
        let err = ExperimentConfig::from_toml(&c.to_toml()).unwrap_err();
        assert!(err.to_string().starts_with("invalid configuration: detection:"), "{err}");
    }
}
