//! Dipole radiation collimated by a deep parabolic mirror.
//!
//! Positions in the mirror's output aperture are measured in units of the focal
//! length. A ray leaving the focus at polar angle `θ` (measured from the
//! optical axis, pointing towards the vertex) reaches the aperture at radius
//! `R = 2·tan(θ/2)`. The solid-angle-to-area Jacobian of this map is
//! `(R²/4 + 1)⁻²`, so an angular pattern `P(θ, φ)` appears in the aperture as
//! `P(θ(R), φ) / (R²/4 + 1)²`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::lsq::{self, LsqError};
use crate::units::Length;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("invalid mirror geometry: {0}")]
    InvalidGeometry(String),
    #[error("aperture radius must be non-negative, got {0}")]
    NegativeRadius(f64),
    #[error("dipole vector must have unit norm (|d| = {0})")]
    NotUnitVector(f64),
    #[error("image center ({0}, {1}) lies outside the pixel grid")]
    OffGridCenter(f64, f64),
    #[error("image has {got} samples but {expected} were expected")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("radial profile does not constrain the fit: {0}")]
    InsufficientProfile(String),
    #[error("dipole fraction fit failed: {0}")]
    FitFailure(String),
    #[error(transparent)]
    Lsq(#[from] LsqError),
}

pub type Result<T> = std::result::Result<T, OpticsError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MirrorGeometry {
    pub focal_length: Length,
    pub aperture_radius: Length,
    pub bore_radius: Length,
    pub reflectivity: f64,
}

impl Default for MirrorGeometry {
    fn default() -> Self {
        Self::nominal()
    }
}

impl MirrorGeometry {
    pub fn new(
        focal_length: Length,
        aperture_radius: Length,
        bore_radius: Length,
        reflectivity: f64,
    ) -> Result<Self> {
        let g = MirrorGeometry {
            focal_length,
            aperture_radius,
            bore_radius,
            reflectivity,
        };
        g.validate()?;
        Ok(g)
    }

    /// f = 2.1 mm, aperture radius 10 mm, bore diameter 1.5 mm, 72 % reflectivity.
    pub fn nominal() -> Self {
        MirrorGeometry {
            focal_length: Length::mm(2.1),
            aperture_radius: Length::mm(10.0),
            bore_radius: Length::mm(0.75),
            reflectivity: 0.72,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OpticsError::InvalidGeometry(m.to_string()));
        if !self.focal_length.is_finite_positive() {
            return bad("focal length must be positive");
        }
        if !self.bore_radius.is_finite_positive() {
            return bad("bore radius must be positive");
        }
        if !(self.bore_radius.0 < self.aperture_radius.0) || !self.aperture_radius.0.is_finite() {
            return bad("bore radius must be smaller than the aperture radius");
        }
        if !(self.reflectivity > 0.0 && self.reflectivity <= 1.0) {
            return bad("reflectivity must lie in (0, 1]");
        }
        let rim = self.rim_angle();
        if !(rim > PI / 2.0 && rim < PI) {
            return bad("rim half-angle must lie between 90° and 180° (aperture radius > 2f)");
        }
        Ok(())
    }

    /// Aperture radius in units of the focal length.
    pub fn rim_radius(&self) -> f64 {
        self.aperture_radius / self.focal_length
    }

    /// Bore-hole radius in units of the focal length.
    pub fn bore_radius_norm(&self) -> f64 {
        self.bore_radius / self.focal_length
    }

    pub fn rim_angle(&self) -> f64 {
        2.0 * (self.rim_radius() / 2.0).atan()
    }

    pub fn bore_angle(&self) -> f64 {
        2.0 * (self.bore_radius_norm() / 2.0).atan()
    }
}

/// Polar emission angle reaching aperture radius `r` (units of f).
pub fn theta_from_r(r: f64) -> Result<f64> {
    if r < 0.0 || r.is_nan() {
        return Err(OpticsError::NegativeRadius(r));
    }
    Ok(2.0 * (r / 2.0).atan())
}

/// Aperture radius (units of f) reached by a ray at polar angle `theta`.
pub fn r_from_theta(theta: f64) -> f64 {
    2.0 * (theta / 2.0).tan()
}

/// Aperture intensity of a linear dipole on the optical axis, `R²/(R²/4+1)⁴`.
pub fn intensity_linear(r: f64) -> f64 {
    let q = r * r / 4.0 + 1.0;
    r * r / q.powi(4)
}

/// Aperture intensity of a circular dipole about the optical axis,
/// `(R⁴/16+1)/(R²/4+1)⁴`.
pub fn intensity_circular(r: f64) -> f64 {
    let q = r * r / 4.0 + 1.0;
    (r.powi(4) / 16.0 + 1.0) / q.powi(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitVector([f64; 3]);

impl TryFrom<[f64; 3]> for UnitVector {
    type Error = OpticsError;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        UnitVector::new(v[0], v[1], v[2])
    }
}

impl From<UnitVector> for [f64; 3] {
    fn from(v: UnitVector) -> Self {
        v.0
    }
}

impl UnitVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(OpticsError::NotUnitVector(n));
        }
        Ok(UnitVector([x, y, z]))
    }

    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(OpticsError::NotUnitVector(n));
        }
        Ok(UnitVector([x / n, y / n, z / n]))
    }

    pub const Z: UnitVector = UnitVector([0.0, 0.0, 1.0]);
    pub const X: UnitVector = UnitVector([1.0, 0.0, 0.0]);
    pub const Y: UnitVector = UnitVector([0.0, 1.0, 0.0]);

    /// Optical axis tilted by `tilt` towards azimuth `azimuth`.
    pub fn tilted(tilt: f64, azimuth: f64) -> Self {
        UnitVector([
            tilt.sin() * azimuth.cos(),
            tilt.sin() * azimuth.sin(),
            tilt.cos(),
        ])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn dot(&self, other: &[f64; 3]) -> f64 {
        self.0[0] * other[0] + self.0[1] * other[1] + self.0[2] * other[2]
    }
}

/// Orientation of an elementary emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipoleOrientation {
    /// Linear dipole oscillating along the given axis.
    Linear(UnitVector),
    /// Circular dipole rotating in the plane normal to the given axis.
    Circular(UnitVector),
}

impl DipoleOrientation {
    pub fn linear_on_axis() -> Self {
        DipoleOrientation::Linear(UnitVector::Z)
    }

    pub fn circular_on_axis() -> Self {
        DipoleOrientation::Circular(UnitVector::Z)
    }

    /// Angular emission pattern towards unit direction `k`, normalised so the
    /// on-axis linear dipole gives `sin²θ` and the circular one `(1+cos²θ)/2`.
    pub fn angular_pattern(&self, k: &[f64; 3]) -> f64 {
        match self {
            DipoleOrientation::Linear(d) => 1.0 - d.dot(k).powi(2),
            DipoleOrientation::Circular(n) => 0.5 * (1.0 + n.dot(k).powi(2)),
        }
    }
}

/// Emission direction for polar angle `theta` and azimuth `phi`.
pub fn emission_direction(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Pixels along each side.
    pub pixels: usize,
    /// The grid covers `[-half_extent, half_extent]²` in units of f.
    pub half_extent: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            pixels: 256,
            half_extent: 5.0,
        }
    }
}

impl GridSpec {
    pub fn pitch(&self) -> f64 {
        2.0 * self.half_extent / self.pixels as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Total,
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarizerAxis {
    Vertical,
    Horizontal,
}

/// Row-major intensity image of the mirror aperture.
///
/// Pixel `(ix, iy)` sits at `((ix − center_x)·pitch, (iy − center_y)·pitch)`
/// in units of f; `y` is the vertical direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApertureImage {
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
    pub center_x: f64,
    pub center_y: f64,
    pub channel: Channel,
    /// Radii (units of f) between which pixels carry signal; pixels outside
    /// are excluded from averages.
    pub valid_annulus: Option<(f64, f64)>,
    pub data: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ApertureImage {
    pub fn from_data(
        width: usize,
        height: usize,
        pitch: f64,
        center: (f64, f64),
        channel: Channel,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != width * height {
            return Err(OpticsError::ShapeMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        let img = ApertureImage {
            width,
            height,
            pitch,
            center_x: center.0,
            center_y: center.1,
            channel,
            valid_annulus: None,
            data,
            warnings: Vec::new(),
        };
        img.check_center()?;
        Ok(img)
    }

    fn check_center(&self) -> Result<()> {
        let inside = |c: f64, n: usize| c.is_finite() && c >= -0.5 && c <= n as f64 - 0.5;
        if inside(self.center_x, self.width) && inside(self.center_y, self.height) {
            Ok(())
        } else {
            Err(OpticsError::OffGridCenter(self.center_x, self.center_y))
        }
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.data[iy * self.width + ix]
    }

    pub fn position(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            (ix as f64 - self.center_x) * self.pitch,
            (iy as f64 - self.center_y) * self.pitch,
        )
    }

    fn is_valid_radius(&self, r: f64) -> bool {
        match self.valid_annulus {
            Some((lo, hi)) => r >= lo && r <= hi,
            None => true,
        }
    }

    /// Iterate `(x, y, intensity)` over pixels inside the valid annulus.
    pub fn valid_pixels(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.height).flat_map(move |iy| {
            (0..self.width).filter_map(move |ix| {
                let (x, y) = self.position(ix, iy);
                let r = x.hypot(y);
                self.is_valid_radius(r).then(|| (x, y, self.at(ix, iy)))
            })
        })
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }

    fn with_data(&self, channel: Channel, data: Vec<f64>) -> ApertureImage {
        ApertureImage {
            channel,
            data,
            ..self.clone()
        }
    }

    pub fn scaled(&self, factor: f64) -> ApertureImage {
        self.with_data(self.channel, self.data.iter().map(|v| v * factor).collect())
    }

    /// Pixelwise weighted sum of images sharing one grid (incoherent mixture).
    pub fn weighted_sum(parts: &[(f64, &ApertureImage)]) -> Result<ApertureImage> {
        let (_, first) = parts
            .first()
            .ok_or_else(|| OpticsError::InvalidGeometry("empty image mixture".into()))?;
        let mut data = vec![0.0; first.data.len()];
        for (w, img) in parts {
            if img.data.len() != data.len() {
                return Err(OpticsError::ShapeMismatch {
                    expected: data.len(),
                    got: img.data.len(),
                });
            }
            for (d, v) in data.iter_mut().zip(&img.data) {
                *d += w * v;
            }
        }
        Ok(first.with_data(Channel::Total, data))
    }

    /// Replace each pixel by a Poisson draw whose mean puts `peak_snr²` counts
    /// in the brightest pixel, i.e. shot-noise SNR `peak_snr` at the peak.
    pub fn with_shot_noise<R: Rng + ?Sized>(&self, peak_snr: f64, rng: &mut R) -> ApertureImage {
        let peak = self.max();
        if peak <= 0.0 {
            return self.clone();
        }
        let scale = peak_snr * peak_snr / peak;
        let data = self
            .data
            .iter()
            .map(|&v| {
                let mean = v * scale;
                if mean > 0.0 {
                    Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        self.with_data(self.channel, data)
    }
}

/// Aperture image (total channel) of an arbitrary dipole.
///
/// With `clip` set, pixels inside the bore hole or beyond the rim are zero and
/// the image records the valid annulus.
pub fn general_dipole_image(
    dipole: &DipoleOrientation,
    grid: &GridSpec,
    clip: Option<&MirrorGeometry>,
) -> ApertureImage {
    let n = grid.pixels;
    let pitch = grid.pitch();
    let c = (n as f64 - 1.0) / 2.0;
    let annulus = clip.map(|g| (g.bore_radius_norm(), g.rim_radius()));
    let mut warnings = Vec::new();
    if let Some((bore, _)) = annulus {
        if bore < pitch {
            warnings.push(format!(
                "pixel pitch {pitch:.4} f does not resolve the bore radius {bore:.4} f"
            ));
        }
    }
    let mut data = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let x = (ix as f64 - c) * pitch;
            let y = (iy as f64 - c) * pitch;
            let r = x.hypot(y);
            let inside = annulus.is_none_or(|(lo, hi)| r >= lo && r <= hi);
            if !inside {
                data.push(0.0);
                continue;
            }
            let theta = 2.0 * (r / 2.0).atan();
            let phi = y.atan2(x);
            let k = emission_direction(theta, phi);
            let q = r * r / 4.0 + 1.0;
            data.push(dipole.angular_pattern(&k) / (q * q));
        }
    }
    ApertureImage {
        width: n,
        height: n,
        pitch,
        center_x: c,
        center_y: c,
        channel: Channel::Total,
        valid_annulus: annulus,
        data,
        warnings,
    }
}

/// Linear/circular amplitudes of an on-axis dipole mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleMix {
    pub i0_pi: f64,
    pub i0_sigma: f64,
}

impl DipoleMix {
    /// Unit-total mixture with linear fraction `a_pi`.
    pub fn from_fraction(a_pi: f64) -> Self {
        let a = a_pi.clamp(0.0, 1.0);
        DipoleMix {
            i0_pi: a,
            i0_sigma: 1.0 - a,
        }
    }

    pub fn a_pi(&self) -> f64 {
        let s = self.i0_pi + self.i0_sigma;
        if s > 0.0 {
            self.i0_pi / s
        } else {
            0.0
        }
    }

    pub fn profile(&self, r: f64) -> f64 {
        self.i0_pi * intensity_linear(r) + self.i0_sigma * intensity_circular(r)
    }
}

/// Total-channel image of an on-axis linear/circular mixture.
pub fn mix_image(mix: &DipoleMix, grid: &GridSpec, clip: Option<&MirrorGeometry>) -> ApertureImage {
    let lin = general_dipole_image(&DipoleOrientation::linear_on_axis(), grid, clip);
    let circ = general_dipole_image(&DipoleOrientation::circular_on_axis(), grid, clip);
    let mut out = ApertureImage::weighted_sum(&[(mix.i0_pi, &lin), (mix.i0_sigma, &circ)])
        .expect("images share a grid");
    out.warnings = lin.warnings;
    out
}

/// Project a total-channel image of an on-axis mixture onto a linear polarizer.
///
/// The linear-dipole part is radially polarized and transmits `|r̂·û|²`; the
/// circular part is treated as unpolarized and transmits one half. Vertical and
/// horizontal projections add back to the input.
pub fn polarized_projection(
    image: &ApertureImage,
    mix: &DipoleMix,
    axis: PolarizerAxis,
) -> ApertureImage {
    let mut data = Vec::with_capacity(image.data.len());
    for iy in 0..image.height {
        for ix in 0..image.width {
            let total = image.at(ix, iy);
            let (x, y) = image.position(ix, iy);
            let r = x.hypot(y);
            let lin = mix.i0_pi * intensity_linear(r);
            let circ = mix.i0_sigma * intensity_circular(r);
            let share = if lin + circ > 0.0 { lin / (lin + circ) } else { 0.0 };
            let phi = y.atan2(x);
            let transmission = match axis {
                PolarizerAxis::Vertical => phi.sin().powi(2),
                PolarizerAxis::Horizontal => phi.cos().powi(2),
            };
            let frac = share * transmission + (1.0 - share) * 0.5;
            data.push(total * frac);
        }
    }
    let channel = match axis {
        PolarizerAxis::Vertical => Channel::Vertical,
        PolarizerAxis::Horizontal => Channel::Horizontal,
    };
    image.with_data(channel, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipoleKind {
    Linear,
    Circular,
}

impl DipoleKind {
    /// Normalised radiated power per solid angle of the on-axis dipole.
    pub fn angular_density(self, theta: f64) -> f64 {
        match self {
            DipoleKind::Linear => 3.0 / (8.0 * PI) * theta.sin().powi(2),
            DipoleKind::Circular => 3.0 / (16.0 * PI) * (1.0 + theta.cos().powi(2)),
        }
    }
}

const EFFICIENCY_INTERVALS: usize = 20_000;

/// Fraction of the emitted power reaching the aperture between the bore hole
/// and the rim.
pub fn collection_efficiency(kind: DipoleKind, geom: &MirrorGeometry) -> Result<f64> {
    collection_efficiency_between(kind, geom.bore_angle(), geom.rim_angle())
}

/// Fraction of the emitted power in the polar range `[theta_min, theta_max]`
/// (composite Simpson rule over 2·10⁴ intervals).
pub fn collection_efficiency_between(kind: DipoleKind, theta_min: f64, theta_max: f64) -> Result<f64> {
    if !(theta_min >= 0.0 && theta_max <= PI && theta_min < theta_max) {
        return Err(OpticsError::InvalidGeometry(format!(
            "polar range [{theta_min}, {theta_max}] is empty or outside [0, π]"
        )));
    }
    let f = |t: f64| 2.0 * PI * kind.angular_density(t) * t.sin();
    let n = EFFICIENCY_INTERVALS;
    let h = (theta_max - theta_min) / n as f64;
    let mut s = f(theta_min) + f(theta_max);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(theta_min + i as f64 * h);
    }
    Ok(s * h / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    /// Mean sample radius of each bin (units of f), strictly increasing.
    pub radii: Vec<f64>,
    pub intensities: Vec<f64>,
    pub counts: Vec<usize>,
    /// Azimuthal variance of the pixel intensities in each bin.
    pub variances: Vec<f64>,
    /// Bin averages of `Iπ` and `Iσ` over the contributing pixels. The fit
    /// uses these instead of the profiles at the mean radius, which makes it
    /// exact on noiseless images. Empty when the profile came from samples.
    #[serde(default)]
    pub basis_pi: Vec<f64>,
    #[serde(default)]
    pub basis_sigma: Vec<f64>,
}

impl RadialProfile {
    pub fn from_samples(radii: Vec<f64>, intensities: Vec<f64>) -> Self {
        let n = radii.len();
        RadialProfile {
            radii,
            intensities,
            counts: vec![1; n],
            variances: vec![0.0; n],
            basis_pi: Vec::new(),
            basis_sigma: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

/// Azimuthal average in annular bins of `bin_width` (default: pixel pitch).
///
/// Empty bins are omitted; pixels outside the image's valid annulus are
/// ignored.
pub fn azimuthal_average(image: &ApertureImage, bin_width: Option<f64>) -> Result<RadialProfile> {
    image.check_center()?;
    let bw = bin_width.unwrap_or(image.pitch);
    if !(bw > 0.0) {
        return Err(OpticsError::InvalidGeometry("bin width must be positive".into()));
    }
    let rmax = (image.width.max(image.height) as f64) * image.pitch * 1.5;
    let nbins = (rmax / bw).ceil() as usize + 1;
    let mut sum_r = vec![0.0; nbins];
    let mut sum_i = vec![0.0; nbins];
    let mut sum_i2 = vec![0.0; nbins];
    let mut sum_pi = vec![0.0; nbins];
    let mut sum_sigma = vec![0.0; nbins];
    let mut count = vec![0usize; nbins];
    for (x, y, v) in image.valid_pixels() {
        let r = x.hypot(y);
        let b = ((r / bw) as usize).min(nbins - 1);
        sum_r[b] += r;
        sum_i[b] += v;
        sum_i2[b] += v * v;
        sum_pi[b] += intensity_linear(r);
        sum_sigma[b] += intensity_circular(r);
        count[b] += 1;
    }
    let mut p = RadialProfile {
        radii: Vec::new(),
        intensities: Vec::new(),
        counts: Vec::new(),
        variances: Vec::new(),
        basis_pi: Vec::new(),
        basis_sigma: Vec::new(),
    };
    for b in 0..nbins {
        if count[b] == 0 {
            continue;
        }
        let n = count[b] as f64;
        let mean = sum_i[b] / n;
        p.radii.push(sum_r[b] / n);
        p.intensities.push(mean);
        p.counts.push(count[b]);
        p.variances.push((sum_i2[b] / n - mean * mean).max(0.0));
        p.basis_pi.push(sum_pi[b] / n);
        p.basis_sigma.push(sum_sigma[b] / n);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipoleFit {
    pub mix: DipoleMix,
    pub a_pi: f64,
    pub a_pi_stderr: f64,
    pub residual_norm: f64,
}

/// Non-negative least-squares fit of `I0π·Iπ(R) + I0σ·Iσ(R)` to a profile.
pub fn fit_dipole_fraction(profile: &RadialProfile) -> Result<DipoleFit> {
    let n = profile.len();
    if n < 8 {
        return Err(OpticsError::InsufficientProfile(format!(
            "need at least 8 radial samples, got {n}"
        )));
    }
    let has_inner = profile.radii.iter().any(|&r| r < 1.0);
    let has_outer = profile.radii.iter().any(|&r| r > 1.5);
    if !(has_inner && has_outer) {
        return Err(OpticsError::InsufficientProfile(
            "samples must cover both R < 1 and R > 1.5".into(),
        ));
    }
    if profile.intensities.iter().all(|&v| v == 0.0) {
        return Err(OpticsError::FitFailure("profile is identically zero".into()));
    }
    if profile.intensities.iter().any(|v| !v.is_finite()) {
        return Err(OpticsError::FitFailure("profile contains non-finite values".into()));
    }
    let binned = profile.basis_pi.len() == n && profile.basis_sigma.len() == n;
    let a = DMatrix::from_fn(n, 2, |i, j| {
        let r = profile.radii[i];
        match (j, binned) {
            (0, true) => profile.basis_pi[i],
            (_, true) => profile.basis_sigma[i],
            (0, false) => intensity_linear(r),
            _ => intensity_circular(r),
        }
    });
    let b = DVector::from_column_slice(&profile.intensities);
    let sol = lsq::nnls(&a, &b)?;
    let (ip, is) = (sol.x[0], sol.x[1]);
    let s = ip + is;
    if !(s > 0.0) {
        return Err(OpticsError::FitFailure(
            "both dipole amplitudes fitted to zero".into(),
        ));
    }
    let a_pi = ip / s;
    let s2 = sol.residual_norm.powi(2) / (n as f64 - 2.0);
    let grad = [is / (s * s), -ip / (s * s)];
    let cov = &sol.normal_inverse * s2;
    let var = grad[0] * grad[0] * cov[(0, 0)]
        + 2.0 * grad[0] * grad[1] * cov[(0, 1)]
        + grad[1] * grad[1] * cov[(1, 1)];
    Ok(DipoleFit {
        mix: DipoleMix {
            i0_pi: ip,
            i0_sigma: is,
        },
        a_pi,
        a_pi_stderr: var.max(0.0).sqrt(),
        residual_norm: sol.residual_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymmetryThresholds {
    pub symmetric_below: f64,
    pub asymmetric_above: f64,
}

impl Default for AsymmetryThresholds {
    fn default() -> Self {
        AsymmetryThresholds {
            symmetric_below: 0.02,
            asymmetric_above: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymmetryClass {
    Symmetric,
    Asymmetric,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymmetry {
    pub score: f64,
    pub class: AsymmetryClass,
}

/// Highest azimuthal order entering the asymmetry score. Orders that are
/// multiples of four are excluded because a square pixel grid aliases a
/// rotationally symmetric image into them.
const ASYMMETRY_ORDERS: [u32; 3] = [1, 2, 3];

/// Azimuthal asymmetry of an image.
///
/// In each one-pixel-wide ring the Fourier coefficients `c_m` of the intensity
/// in azimuth are computed; the ring score is `Σ_{m=1..3} 2|c_m|² / c_0²`. Ring
/// scores are averaged with weights equal to the ring's summed intensity.
pub fn asymmetry_metric(image: &ApertureImage, thresholds: &AsymmetryThresholds) -> Result<Asymmetry> {
    image.check_center()?;
    let bw = image.pitch;
    let nbins = ((image.width.max(image.height) as f64) * 1.5).ceil() as usize + 1;
    let k = ASYMMETRY_ORDERS.len();
    let mut c0 = vec![0.0; nbins];
    let mut re = vec![0.0; nbins * k];
    let mut im = vec![0.0; nbins * k];
    let mut count = vec![0usize; nbins];
    for (x, y, v) in image.valid_pixels() {
        let r = x.hypot(y);
        let b = ((r / bw) as usize).min(nbins - 1);
        let phi = y.atan2(x);
        c0[b] += v;
        count[b] += 1;
        for (j, &m) in ASYMMETRY_ORDERS.iter().enumerate() {
            let a = m as f64 * phi;
            re[b * k + j] += v * a.cos();
            im[b * k + j] -= v * a.sin();
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for b in 0..nbins {
        if count[b] < 8 || c0[b] <= 0.0 {
            continue;
        }
        let energy: f64 = (0..k)
            .map(|j| 2.0 * (re[b * k + j].powi(2) + im[b * k + j].powi(2)))
            .sum();
        let ring = energy / (c0[b] * c0[b]);
        num += c0[b] * ring;
        den += c0[b];
    }
    let score = if den > 0.0 { num / den } else { 0.0 };
    let class = if score < thresholds.symmetric_below {
        AsymmetryClass::Symmetric
    } else if score > thresholds.asymmetric_above {
        AsymmetryClass::Asymmetric
    } else {
        AsymmetryClass::Inconclusive
    };
    Ok(Asymmetry { score, class })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_mapping_values() {
        assert_eq!(theta_from_r(0.0).unwrap(), 0.0);
        assert!((theta_from_r(2.0).unwrap() - PI / 2.0).abs() < 1e-15);
        let rim = theta_from_r(10.0 / 2.1).unwrap().to_degrees();
        assert!((rim - 134.4).abs() < 0.05, "{rim}");
        assert!(theta_from_r(-0.1).is_err());
        assert!((r_from_theta(theta_from_r(3.3).unwrap()) - 3.3).abs() < 1e-12);
    }

    #[test]
    fn nominal_geometry_rim_angle() {
        let g = MirrorGeometry::nominal();
        let deg = g.rim_angle().to_degrees();
        assert!((deg - 134.0).abs() <= 1.0, "{deg}");
    }

    #[test]
    fn geometry_validation() {
        let g = MirrorGeometry::nominal();
        assert!(MirrorGeometry::new(g.focal_length, g.aperture_radius, Length::mm(11.0), 0.7).is_err());
        assert!(MirrorGeometry::new(g.focal_length, g.aperture_radius, g.bore_radius, 0.0).is_err());
        assert!(MirrorGeometry::new(g.focal_length, g.aperture_radius, g.bore_radius, 1.1).is_err());
        // shallow mirror: rim below 90°
        assert!(MirrorGeometry::new(g.focal_length, Length::mm(3.0), g.bore_radius, 0.7).is_err());
    }

    #[test]
    fn profile_shapes() {
        assert_eq!(intensity_linear(0.0), 0.0);
        assert!((intensity_linear(2.0) - 0.25).abs() < 1e-15);
        assert_eq!(intensity_circular(0.0), 1.0);
        assert!((intensity_circular(2.0) - 0.125).abs() < 1e-15);
        // grid-search the linear maximum
        let (mut best, mut arg) = (0.0, 0.0);
        for i in 0..200_000 {
            let r = i as f64 * 1e-5;
            let v = intensity_linear(r);
            if v > best {
                best = v;
                arg = r;
            }
        }
        assert!((arg - 2.0 / 3f64.sqrt()).abs() < 2e-5);
        assert!(intensity_circular(1e-4) / intensity_linear(1e-4) > 1e7);
    }

    #[test]
    fn unit_vector_norm_enforced() {
        assert!(UnitVector::new(1.0, 1e-4, 0.0).is_err());
        assert!(UnitVector::new(0.6, 0.8, 0.0).is_ok());
        assert!(UnitVector::normalized(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn tilted_image_is_not_azimuthally_flat() {
        let grid = GridSpec { pixels: 64, half_extent: 5.0 };
        let img = general_dipole_image(&DipoleOrientation::Linear(UnitVector::tilted(PI / 4.0, 0.0)), &grid, None);
        let prof = azimuthal_average(&img, None).unwrap();
        assert!(prof.variances.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn coarse_grid_flags_bore() {
        let grid = GridSpec { pixels: 16, half_extent: 5.0 };
        let img = general_dipole_image(&DipoleOrientation::linear_on_axis(), &grid, Some(&MirrorGeometry::nominal()));
        assert!(!img.warnings.is_empty());
        let fine = general_dipole_image(&DipoleOrientation::linear_on_axis(), &GridSpec::default(), Some(&MirrorGeometry::nominal()));
        assert!(fine.warnings.is_empty());
    }

    #[test]
    fn constant_image_gives_constant_profile() {
        let img = ApertureImage::from_data(32, 32, 0.1, (15.5, 15.5), Channel::Total, vec![2.5; 1024]).unwrap();
        let p = azimuthal_average(&img, None).unwrap();
        assert!(p.intensities.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        assert!(p.radii.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn off_grid_center_rejected() {
        let err = ApertureImage::from_data(8, 8, 0.1, (20.0, 3.0), Channel::Total, vec![0.0; 64]);
        assert!(matches!(err, Err(OpticsError::OffGridCenter(..))));
        let mut ok = ApertureImage::from_data(8, 8, 0.1, (3.5, 3.5), Channel::Total, vec![0.0; 64]).unwrap();
        ok.center_x = -4.0;
        assert!(azimuthal_average(&ok, None).is_err());
    }

    #[test]
    fn degenerate_profile_rejected() {
        let radii: Vec<f64> = (0..12).map(|i| 0.2 + i as f64 * 0.3).collect();
        let zero = RadialProfile::from_samples(radii.clone(), vec![0.0; 12]);
        assert!(matches!(fit_dipole_fraction(&zero), Err(OpticsError::FitFailure(_))));
        let narrow = RadialProfile::from_samples(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8], vec![1.0; 8]);
        assert!(matches!(fit_dipole_fraction(&narrow), Err(OpticsError::InsufficientProfile(_))));
    }

    #[test]
    fn pure_circular_profile_fits_zero_fraction() {
        let radii: Vec<f64> = (0..40).map(|i| 0.1 + i as f64 * 0.1).collect();
        let ints = radii.iter().map(|&r| 3.0 * intensity_circular(r)).collect();
        let fit = fit_dipole_fraction(&RadialProfile::from_samples(radii, ints)).unwrap();
        assert!(fit.a_pi.abs() < 1e-12);
    }

    #[test]
    fn pure_circular_projections_are_equal_halves() {
        let grid = GridSpec { pixels: 48, half_extent: 5.0 };
        let mix = DipoleMix::from_fraction(0.0);
        let img = mix_image(&mix, &grid, None);
        let v = polarized_projection(&img, &mix, PolarizerAxis::Vertical);
        let h = polarized_projection(&img, &mix, PolarizerAxis::Horizontal);
        for i in 0..img.data.len() {
            assert!((v.data[i] - h.data[i]).abs() <= 1e-15 * img.data[i].max(1.0));
            assert!((v.data[i] - 0.5 * img.data[i]).abs() <= 1e-15);
        }
    }
}
