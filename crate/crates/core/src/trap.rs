//! Trap depth, minimum trapping power, cluster geometry and gas damping.
//!
//! The trap is treated in the Rayleigh approximation: depth `U₀ = α/2·E²` with
//! `E² = κ·P`. The field factor `κ` stands in for the focal-field calculation
//! of the doughnut beam and is calibrated so that a single bare rod escapes at
//! 41 mW at 296 K.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;
use thiserror::Error;

use crate::constants::{BOLTZMANN, VACUUM_PERMITTIVITY};
use crate::lsq::{self, LsqError};
use crate::units::{AngularRate, Energy, Length, Mass, Polarizability, Power, Temperature};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrapError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported packing model '{0}'")]
    UnsupportedPacking(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error(transparent)]
    Lsq(#[from] LsqError),
}

pub type Result<T> = std::result::Result<T, TrapError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(TrapError::InvalidParameter(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RodGeometry {
    pub length: Length,
    pub diameter: Length,
    /// CdSe core diameter; informational only.
    pub core_diameter: Length,
    /// Length of the ligand (alkyl) chains padding the rod surface.
    pub shell_thickness: Length,
}

impl Default for RodGeometry {
    fn default() -> Self {
        RodGeometry {
            length: Length::nm(35.0),
            diameter: Length::nm(7.0),
            core_diameter: Length::nm(2.7),
            shell_thickness: Length::nm(1.6),
        }
    }
}

impl RodGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rod length", self.length),
            ("rod diameter", self.diameter),
            ("core diameter", self.core_diameter),
            ("shell thickness", self.shell_thickness),
        ] {
            if !v.is_finite_positive() {
                return invalid(format!("{name} must be positive"));
            }
        }
        if self.core_diameter.0 >= self.diameter.0 {
            return invalid("core diameter must be smaller than the rod diameter");
        }
        Ok(())
    }

    /// Bare cylinder volume `π(d/2)²L` in m³.
    pub fn volume(&self) -> f64 {
        PI * (self.diameter.0 / 2.0).powi(2) * self.length.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    /// Refractive index at the trap wavelength.
    pub refractive_index: f64,
    /// Mass density, kg/m³.
    pub density: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        // bulk CdS
        MaterialParams {
            refractive_index: 2.34,
            density: 4826.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.refractive_index >= 1.0) || !self.refractive_index.is_finite() {
            return invalid("refractive index must be at least 1");
        }
        if !(self.density > 0.0) || !self.density.is_finite() {
            return invalid("density must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasParams {
    /// Dynamic viscosity, Pa·s.
    pub viscosity: f64,
    pub mean_free_path: Length,
    pub temperature: Temperature,
}

impl Default for GasParams {
    fn default() -> Self {
        // ambient air
        GasParams {
            viscosity: 1.82e-5,
            mean_free_path: Length::nm(68.0),
            temperature: Temperature(296.0),
        }
    }
}

impl GasParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.viscosity > 0.0) || !self.viscosity.is_finite() {
            return invalid("viscosity must be positive");
        }
        if !self.mean_free_path.is_finite_positive() {
            return invalid("mean free path must be positive");
        }
        if !self.temperature.is_finite_positive() {
            return invalid("temperature must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapParams {
    pub wavelength: Length,
    pub power: Power,
    /// Peak squared field per unit power, V²/(m²·W).
    pub field_factor: f64,
}

impl TrapParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.field_factor > 0.0) || !self.field_factor.is_finite() {
            return invalid("field factor must be positive");
        }
        if !(self.power.0 >= 0.0) || !self.power.0.is_finite() {
            return invalid("trap power must be non-negative");
        }
        if !self.wavelength.is_finite_positive() {
            return invalid("trap wavelength must be positive");
        }
        Ok(())
    }

    pub fn with_power(self, power: Power) -> Self {
        TrapParams { power, ..self }
    }

    /// Peak squared field `E²_max = κ·P`.
    pub fn peak_field_squared(&self) -> f64 {
        self.field_factor * self.power.0
    }
}

/// Calibrate `κ` so that a particle of polarizability `alpha` escapes at
/// `p_min` with trap depth `escape_kt · k_B·T`.
pub fn calibrate_field_factor(
    alpha: Polarizability,
    temperature: Temperature,
    p_min: Power,
    escape_kt: f64,
) -> f64 {
    2.0 * escape_kt * temperature.thermal_energy().0 / (alpha.0 * p_min.0)
}

/// Reference escape power of a single bare rod.
pub const SINGLE_ROD_P_MIN: Power = Power(0.041);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Packing {
    /// Rods side by side along the optical axis, cross-sections additive.
    #[default]
    ParallelClosePacked,
}

impl FromStr for Packing {
    type Err = TrapError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel_close_packed" => Ok(Packing::ParallelClosePacked),
            other => Err(TrapError::UnsupportedPacking(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub n_rods: u32,
    pub rod: RodGeometry,
    pub material: MaterialParams,
    pub packing: Packing,
}

impl ClusterSample {
    pub fn new(n_rods: u32, rod: RodGeometry, material: MaterialParams) -> Result<Self> {
        if n_rods == 0 {
            return invalid("a cluster holds at least one rod");
        }
        rod.validate()?;
        material.validate()?;
        Ok(ClusterSample {
            n_rods,
            rod,
            material,
            packing: Packing::ParallelClosePacked,
        })
    }

    pub fn single(rod: RodGeometry, material: MaterialParams) -> Self {
        ClusterSample::new(1, rod, material).expect("valid single rod")
    }

    pub fn polarizability(&self) -> Polarizability {
        polarizability(&self.rod, &self.material) * self.n_rods as f64
    }
}

/// `α = ε₀·V_rod·(n² − 1)` of one bare rod aligned with the field.
pub fn polarizability(rod: &RodGeometry, material: &MaterialParams) -> Polarizability {
    Polarizability(VACUUM_PERMITTIVITY * rod.volume() * (material.refractive_index.powi(2) - 1.0))
}

/// Trap depth `U₀ = (α/2)·κ·P`.
pub fn trap_depth(alpha: Polarizability, trap: &TrapParams) -> Energy {
    Energy(alpha.0 / 2.0 * trap.peak_field_squared())
}

/// Power at which the trap depth equals `escape_kt · k_B·T`.
pub fn min_power(
    alpha: Polarizability,
    temperature: Temperature,
    field_factor: f64,
    escape_kt: f64,
) -> Result<Power> {
    if !alpha.is_finite_positive() {
        return invalid("polarizability must be positive");
    }
    Ok(Power(
        2.0 * escape_kt * BOLTZMANN * temperature.0 / (alpha.0 * field_factor),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodEstimate {
    pub n_rods: f64,
    pub warning: Option<String>,
}

/// Number of rods implied by an escape power, `P_min(1 rod) / P_min`.
pub fn rods_from_pmin(p_min: Power, single_rod_p_min: Power) -> Result<RodEstimate> {
    if !p_min.is_finite_positive() {
        return invalid("escape power must be positive");
    }
    let n = single_rod_p_min / p_min;
    let warning = (n < 1.0).then(|| {
        format!(
            "escape power {:.3} mW exceeds the single-rod value {:.3} mW; estimate N = {:.3} is outside the model",
            p_min.in_mw(),
            single_rod_p_min.in_mw(),
            n
        )
    });
    Ok(RodEstimate { n_rods: n, warning })
}

/// Radius of the disc with the cluster's cross-section seen along `z`,
/// including the ligand shell: `(d/2 + shell)·√N`.
pub fn effective_radius(cluster: &ClusterSample) -> Length {
    match cluster.packing {
        Packing::ParallelClosePacked => {
            let single = cluster.rod.diameter.0 / 2.0 + cluster.rod.shell_thickness.0;
            Length(single * (cluster.n_rods as f64).sqrt())
        }
    }
}

pub fn cluster_mass(cluster: &ClusterSample) -> Mass {
    Mass(cluster.n_rods as f64 * cluster.material.density * cluster.rod.volume())
}

/// Rarefied-gas correction `0.619/(0.619 + Kn)·(1 + c_K)` at `Kn = Λ/r`.
pub fn knudsen_factor(radius: Length, gas: &GasParams) -> f64 {
    let kn = gas.mean_free_path / radius;
    let ck = 0.31 * kn / (0.785 + 1.152 * kn + kn * kn);
    0.619 / (0.619 + kn) * (1.0 + ck)
}

/// Gas damping rate `Γ = 6πηr/m · 0.619/(0.619+Kn)·(1+c_K)`.
pub fn damping_rate(radius: Length, mass: Mass, gas: &GasParams) -> Result<AngularRate> {
    if !radius.is_finite_positive() || !mass.is_finite_positive() {
        return invalid("radius and mass must be positive");
    }
    let stokes = 6.0 * PI * gas.viscosity * radius.0 / mass.0;
    Ok(AngularRate(stokes * knudsen_factor(radius, gas)))
}

/// How cluster damping is derived from the single-rod value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClusterDamping {
    /// `Γ ∝ r_z/m` with the rarefied-gas factor frozen at its single-rod value.
    #[default]
    RadiusOverMass,
    /// Full rarefied-gas formula re-evaluated at the cluster radius.
    FullKnudsen,
}

pub fn cluster_damping_rate(
    cluster: &ClusterSample,
    gas: &GasParams,
    model: ClusterDamping,
) -> Result<AngularRate> {
    let r = effective_radius(cluster);
    let m = cluster_mass(cluster);
    match model {
        ClusterDamping::FullKnudsen => damping_rate(r, m, gas),
        ClusterDamping::RadiusOverMass => {
            let single = ClusterSample { n_rods: 1, ..*cluster };
            let r1 = effective_radius(&single);
            let m1 = cluster_mass(&single);
            let g1 = damping_rate(r1, m1, gas)?;
            Ok(g1 * ((r / r1) / (m / m1)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub stderr: f64,
    /// 95 % confidence interval of the exponent.
    pub ci95: (f64, f64),
    pub prefactor: f64,
    pub n: usize,
}

/// Exponent `a` in `Γ_z ∝ P_min^a` from a log-log least-squares line.
pub fn gamma_pmin_exponent(samples: &[(Power, AngularRate)]) -> Result<PowerLawFit> {
    if samples.len() < 5 {
        return Err(TrapError::InsufficientData {
            needed: 5,
            got: samples.len(),
        });
    }
    if samples
        .iter()
        .any(|(p, g)| !p.is_finite_positive() || !g.is_finite_positive())
    {
        return invalid("all powers and damping rates must be positive");
    }
    let x: Vec<f64> = samples.iter().map(|(p, _)| p.0.ln()).collect();
    let y: Vec<f64> = samples.iter().map(|(_, g)| g.0.ln()).collect();
    let line = lsq::linear_regression(&x, &y)?;
    let t = lsq::t_quantile(0.95, line.n - 2);
    Ok(PowerLawFit {
        exponent: line.slope,
        stderr: line.slope_stderr,
        ci95: (line.slope - t * line.slope_stderr, line.slope + t * line.slope_stderr),
        prefactor: line.intercept.exp(),
        n: line.n,
    })
}

/// Trap knobs bundled for the model chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapModel {
    pub rod: RodGeometry,
    pub material: MaterialParams,
    pub gas: GasParams,
    pub field_factor: f64,
    pub escape_kt: f64,
}

impl Default for TrapModel {
    fn default() -> Self {
        let rod = RodGeometry::default();
        let material = MaterialParams::default();
        let gas = GasParams::default();
        let escape_kt = 1.0;
        let field_factor = calibrate_field_factor(
            polarizability(&rod, &material),
            gas.temperature,
            SINGLE_ROD_P_MIN,
            escape_kt,
        );
        TrapModel {
            rod,
            material,
            gas,
            field_factor,
            escape_kt,
        }
    }
}

impl TrapModel {
    pub fn cluster(&self, n_rods: u32) -> Result<ClusterSample> {
        ClusterSample::new(n_rods, self.rod, self.material)
    }

    pub fn min_power(&self, n_rods: u32) -> Result<Power> {
        let c = self.cluster(n_rods)?;
        min_power(c.polarizability(), self.gas.temperature, self.field_factor, self.escape_kt)
    }

    pub fn single_rod_min_power(&self) -> Result<Power> {
        self.min_power(1)
    }
}
