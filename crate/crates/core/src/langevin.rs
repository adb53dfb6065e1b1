//! Axial Langevin motion of a trapped cluster and its rotational alignment.
//!
//! Translation along the optical axis is integrated with a BAOAB splitting:
//! half kicks from the harmonic force around an exact Ornstein–Uhlenbeck
//! update of the velocity. The damping/noise sub-step is exact, so the scheme
//! is stable in both the under- and over-damped regimes as long as the
//! oscillation is resolved.
//!
//! Rotation is described only by its stationary Boltzmann statistics in the
//! alignment potential `ΔU·sin²β`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::BOLTZMANN;
use crate::rng::{child_rng, SimRng};
use crate::units::{AngularRate, Energy, Length, Mass, Polarizability, Power, Temperature};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LangevinError {
    #[error("time step {dt:e} s is too coarse: must be below {limit:e} s (1/(10·max(Γ, Ω)))")]
    UnstableStep { dt: f64, limit: f64 },
    #[error("duration {duration:e} s is shorter than 100/Γ = {needed:e} s")]
    TooShort { duration: f64, needed: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, LangevinError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapStiffness {
    /// Spring constant, N/m.
    pub k_z: f64,
    /// Length scale of the harmonic expansion of the trap potential, when
    /// the stiffness was derived from a depth.
    pub width: Option<Length>,
}

impl TrapStiffness {
    /// `k_z = 2·U₀/w²`.
    pub fn from_depth(depth: Energy, width: Length) -> Result<Self> {
        if !depth.is_finite_positive() || !width.is_finite_positive() {
            return Err(LangevinError::InvalidParameter(
                "trap depth and width must be positive".into(),
            ));
        }
        Ok(TrapStiffness {
            k_z: 2.0 * depth.0 / (width.0 * width.0),
            width: Some(width),
        })
    }

    pub fn from_frequency(omega: AngularRate, mass: Mass) -> Self {
        let k_z = mass.0 * omega.0 * omega.0;
        TrapStiffness {
            k_z,
            width: None,
        }
    }

    pub fn angular_frequency(&self, mass: Mass) -> AngularRate {
        AngularRate((self.k_z / mass.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step, s.
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    /// Detector gain, V/m.
    pub gain: f64,
    /// One-sided white-noise floor of the detector, V/√Hz.
    pub noise_floor: f64,
    /// Record every n-th integration step.
    pub sample_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-9,
            duration: 4e-3,
            seed: 1,
            gain: 1e7,
            noise_floor: 1e-5,
            sample_every: 10,
        }
    }
}

impl SimConfig {
    pub fn sample_interval(&self) -> f64 {
        self.dt * self.sample_every as f64
    }

    /// Reject steps that do not resolve the fastest timescale.
    pub fn check_step(&self, gamma: AngularRate, omega: AngularRate) -> Result<()> {
        let fastest = gamma.0.max(omega.0);
        let limit = 1.0 / (10.0 * fastest);
        if !(self.dt > 0.0) || self.dt >= limit {
            return Err(LangevinError::UnstableStep { dt: self.dt, limit });
        }
        Ok(())
    }

    /// Spectral estimates need at least 100 damping times.
    pub fn check_spectral(&self, gamma: AngularRate) -> Result<()> {
        let needed = 100.0 / gamma.0;
        if self.duration < needed {
            return Err(LangevinError::TooShort {
                duration: self.duration,
                needed,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    /// Sample interval, s.
    pub dt: f64,
    pub unit: String,
    pub samples: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialParams {
    pub stiffness: TrapStiffness,
    pub gamma: AngularRate,
    pub mass: Mass,
    pub temperature: Temperature,
    /// Initial `(z, ż)`; drawn from equilibrium when absent.
    pub initial: Option<(f64, f64)>,
}

/// Integrate `m z̈ = −k z − mΓ ż + √(2mΓk_BT)·ξ(t)`.
pub fn simulate_axial_motion(params: &AxialParams, cfg: &SimConfig) -> Result<TimeSeries> {
    let m = params.mass.0;
    let k = params.stiffness.k_z;
    let gamma = params.gamma.0;
    let kt = BOLTZMANN * params.temperature.0;
    if !(m > 0.0) || !(k > 0.0) || !(gamma >= 0.0) || !(kt >= 0.0) {
        return Err(LangevinError::InvalidParameter(
            "mass and stiffness must be positive; damping and temperature non-negative".into(),
        ));
    }
    if cfg.sample_every == 0 {
        return Err(LangevinError::InvalidParameter("sample_every must be at least 1".into()));
    }
    let omega = (k / m).sqrt();
    cfg.check_step(params.gamma, AngularRate(omega))?;

    let mut rng = child_rng(cfg.seed, "langevin.axial", 0);
    let (mut z, mut v) = match params.initial {
        Some(iv) => iv,
        None => {
            let nz: f64 = rng.sample(StandardNormal);
            let nv: f64 = rng.sample(StandardNormal);
            (nz * (kt / k).sqrt(), nv * (kt / m).sqrt())
        }
    };
    let dt = cfg.dt;
    let half = 0.5 * dt;
    let decay = (-gamma * dt).exp();
    let kick = ((kt / m) * (1.0 - decay * decay)).sqrt();
    let w2 = k / m;
    let steps = (cfg.duration / dt).round() as usize;
    let n_out = steps / cfg.sample_every;
    let mut samples = Vec::with_capacity(n_out);
    for _ in 0..n_out {
        for _ in 0..cfg.sample_every {
            v -= w2 * z * half;
            z += v * half;
            if kick > 0.0 {
                let xi: f64 = rng.sample(StandardNormal);
                v = decay * v + kick * xi;
            } else {
                v *= decay;
            }
            z += v * half;
            v -= w2 * z * half;
        }
        samples.push(z);
    }
    Ok(TimeSeries {
        dt: cfg.sample_interval(),
        unit: "m".into(),
        samples,
    })
}

/// Linearised interferometric readout `s = gain·z + white noise`.
pub fn detector_signal(z: &TimeSeries, cfg: &SimConfig) -> TimeSeries {
    let mut rng = child_rng(cfg.seed, "langevin.detector", 0);
    let sigma = cfg.noise_floor * (1.0 / (2.0 * z.dt)).sqrt();
    let samples = z
        .samples
        .iter()
        .map(|&x| {
            let n: f64 = if sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            cfg.gain * x + sigma * n
        })
        .collect();
    TimeSeries {
        dt: z.dt,
        unit: "V".into(),
        samples,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltSamples {
    /// Tilt angles β in [0, π/2].
    pub betas: Vec<f64>,
    pub mean_cos2: f64,
    pub stderr: f64,
}

/// Draw tilt angles from `p(β) ∝ exp(−ΔU·sin²β/k_BT)·sinβ` on `[0, π/2]`.
///
/// In `u = cosβ` the density is `∝ exp(a·u²)` on `[0, 1]` with `a = ΔU/k_BT`.
/// Samples come from rejection against the truncated exponential `∝ exp(a·u)`
/// (acceptance `exp(−a·u(1−u))`, never below about one half).
pub fn sample_tilt_distribution(
    delta_u: Energy,
    temperature: Temperature,
    n_samples: usize,
    seed: u64,
) -> Result<TiltSamples> {
    if !(delta_u.0 >= 0.0) || !temperature.is_finite_positive() {
        return Err(LangevinError::InvalidParameter(
            "alignment energy must be non-negative and temperature positive".into(),
        ));
    }
    let a = delta_u.0 / temperature.thermal_energy().0;
    let mut rng = child_rng(seed, "langevin.tilt", 0);
    let mut betas = Vec::with_capacity(n_samples);
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    while betas.len() < n_samples {
        let u = sample_truncated_exp(a, &mut rng);
        let accept = (-a * u * (1.0 - u)).exp();
        if rng.random::<f64>() < accept {
            let c2 = u * u;
            s1 += c2;
            s2 += c2 * c2;
            betas.push(u.acos());
        }
    }
    let n = n_samples.max(1) as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0);
    Ok(TiltSamples {
        betas,
        mean_cos2: mean,
        stderr: (var / n).sqrt(),
    })
}

/// Inverse-CDF draw from the density `∝ exp(a·u)` on `[0, 1]`.
fn sample_truncated_exp(a: f64, rng: &mut SimRng) -> f64 {
    let x: f64 = rng.random();
    if a < 1e-9 {
        return x;
    }
    // u = 1 + ln(x + (1−x)·e^{−a}) / a, written to avoid overflow for large a
    let u = 1.0 + (x + (1.0 - x) * (-a).exp()).ln() / a;
    u.clamp(0.0, 1.0)
}

/// `⟨cos²β⟩` in the alignment potential with depth `a = ΔU/k_BT`.
pub fn mean_cos2(a: f64) -> f64 {
    let n = 4000;
    let h = 1.0 / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..=n {
        let u = i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        // scaled by e^{−a} so that large depths stay finite
        let f = (a * (u * u - 1.0)).exp();
        num += w * u * u * f;
        den += w * f;
    }
    num / den
}

/// Rotational alignment of a cluster by the longitudinal trap field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModel {
    /// Polarizability anisotropy `Δα` of the trapped object.
    pub anisotropy: Polarizability,
    pub field_factor: f64,
    pub temperature: Temperature,
}

impl AlignmentModel {
    /// Well depth `ΔU = (Δα/2)·κ·P`.
    pub fn alignment_energy(&self, power: Power) -> Energy {
        Energy(self.anisotropy.0 / 2.0 * self.field_factor * power.0)
    }

    pub fn depth_in_kt(&self, power: Power) -> f64 {
        self.alignment_energy(power) / self.temperature.thermal_energy()
    }

    /// Linear-dipole fraction seen in the time-averaged aperture pattern.
    ///
    /// A dipole tilted by β averages in azimuth to `cos²β·Iπ + sin²β·Iσ`, so
    /// the apparent fraction is the intrinsic one times `⟨cos²β⟩`.
    pub fn apparent_a_pi(&self, power: Power, intrinsic_a_pi: f64) -> f64 {
        intrinsic_a_pi * mean_cos2(self.depth_in_kt(power))
    }
}

/// Apparent linear-dipole fraction at trap power `power`.
pub fn apparent_a_pi(
    power: Power,
    intrinsic_a_pi: f64,
    anisotropy: Polarizability,
    field_factor: f64,
    temperature: Temperature,
) -> f64 {
    AlignmentModel {
        anisotropy,
        field_factor,
        temperature,
    }
    .apparent_a_pi(power, intrinsic_a_pi)
}
