//! Unit-annotated scalar newtypes used at module boundaries.
//!
//! Every quantity stores its SI value. Arithmetic is limited to what the model
//! chain needs: scaling by a dimensionless factor and ratios of like quantities.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Div, Mul};

macro_rules! quantity {
    ($(#[$meta:meta])* $name:ident, $unit:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub f64);

        impl $name {
            pub const UNIT: &'static str = $unit;

            pub fn value(self) -> f64 {
                self.0
            }

            pub fn is_finite_positive(self) -> bool {
                self.0.is_finite() && self.0 > 0.0
            }
        }

        impl Mul<f64> for $name {
            type Output = $name;
            fn mul(self, rhs: f64) -> $name {
                $name(self.0 * rhs)
            }
        }

        impl Div<f64> for $name {
            type Output = $name;
            fn div(self, rhs: f64) -> $name {
                $name(self.0 / rhs)
            }
        }

        impl Div<$name> for $name {
            type Output = f64;
            fn div(self, rhs: $name) -> f64 {
                self.0 / rhs.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:e} {}", self.0, $unit)
            }
        }
    };
}

quantity!(/// Length in metres.
    Length, "m");
quantity!(/// Mass in kilograms.
    Mass, "kg");
quantity!(/// Optical power in watts.
    Power, "W");
quantity!(/// Energy in joules.
    Energy, "J");
quantity!(/// Absolute temperature in kelvin.
    Temperature, "K");
quantity!(/// Scalar polarizability in C·m²/V.
    Polarizability, "C m^2/V");
quantity!(/// Angular rate in rad/s.
    AngularRate, "rad/s");

impl Length {
    pub fn nm(v: f64) -> Self {
        Length(v * 1e-9)
    }
    pub fn mm(v: f64) -> Self {
        Length(v * 1e-3)
    }
}

impl Power {
    pub fn mw(v: f64) -> Self {
        Power(v * 1e-3)
    }
    pub fn uw(v: f64) -> Self {
        Power(v * 1e-6)
    }
    pub fn in_mw(self) -> f64 {
        self.0 * 1e3
    }
}

impl AngularRate {
    /// Ordinary frequency Γ/2π in Hz.
    pub fn hz(self) -> f64 {
        self.0 / (2.0 * std::f64::consts::PI)
    }

    pub fn from_hz(hz: f64) -> Self {
        AngularRate(hz * 2.0 * std::f64::consts::PI)
    }
}

impl Temperature {
    /// Thermal energy k_B·T.
    pub fn thermal_energy(self) -> Energy {
        Energy(crate::constants::BOLTZMANN * self.0)
    }
}
