//! Simulation and analysis of rod-shaped single-photon emitters held in an
//! optical trap at the focus of a deep parabolic mirror.
//!
//! The crate is organised along the physical model chain:
//!
//! - [`optics`]: dipole radiation collimated by the mirror, aperture images,
//!   polarization projections, collection efficiencies and dipole-fraction fits.
//! - [`trap`]: Rayleigh trap depth, minimum trapping power, cluster geometry and
//!   gas damping.
//! - [`langevin`]: axial Langevin motion, detector signal and rotational
//!   alignment statistics.
//! - [`emitter`]: pulsed-excitation Monte Carlo with Auger reduction, blinking
//!   and a two-detector chain producing time tags.
//! - [`analysis`]: spectra, Lorentzian fits, g²(0), blinking histograms and
//!   saturation fits.
//! - [`reproduce`]: self-contained synthetic campaigns for the headline numbers.

pub mod analysis;
pub mod constants;
pub mod emitter;
pub mod langevin;
pub mod lsq;
pub mod optics;
pub mod reproduce;
pub mod rng;
pub mod trap;
pub mod units;
