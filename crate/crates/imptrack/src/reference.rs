//! Sinusoidal exosystem generating the stimulus: position r1 and velocity
//! r2 of a harmonic oscillation at frequency omega0.
//!
//! The closed form is authoritative; the state-space form
//! r' = [[0, 1], [-omega0^2, 0]] r exists only for cross-validation, which
//! keeps long simulations of the input free of integration drift.

use crate::error::{Error, Result};
use crate::numcore::Vector;

/// Amplitude, angular frequency, and phase of the stimulus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceSpec {
    amplitude: f64,
    omega0: f64,
    phase: f64,
}

impl ReferenceSpec {
    pub fn new(amplitude: f64, omega0: f64, phase: f64) -> Result<Self> {
        if !amplitude.is_finite() || !omega0.is_finite() || !phase.is_finite() {
            return Err(Error::NonFinite {
                context: "ReferenceSpec fields".into(),
            });
        }
        if omega0 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "reference.omega0: must be > 0, got {omega0}"
            )));
        }
        if amplitude < 0.0 {
            return Err(Error::InvalidParams(format!(
                "reference.amplitude: must be >= 0, got {amplitude}"
            )));
        }
        Ok(ReferenceSpec {
            amplitude,
            omega0,
            phase,
        })
    }

    pub fn from_freq_hz(amplitude: f64, freq_hz: f64, phase: f64) -> Result<Self> {
        ReferenceSpec::new(amplitude, 2.0 * std::f64::consts::PI * freq_hz, phase)
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn freq_hz(&self) -> f64 {
        self.omega0 / (2.0 * std::f64::consts::PI)
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega0
    }

    /// Stimulus state [r1, r2] = [A sin(w0 t + phi), A w0 cos(w0 t + phi)].
    pub fn state(&self, t: f64) -> Vector {
        let arg = self.omega0 * t + self.phase;
        Vector::from(vec![
            self.amplitude * arg.sin(),
            self.amplitude * self.omega0 * arg.cos(),
        ])
    }

    /// Position component r1(t).
    pub fn position(&self, t: f64) -> f64 {
        self.amplitude * (self.omega0 * t + self.phase).sin()
    }

    /// Regressor M r(t) = [0, r1(t)] driving the frequency update law.
    pub fn regressor(&self, t: f64) -> Vector {
        Vector::from(vec![0.0, self.position(t)])
    }

    /// The frequency parameter theta = -omega0^2.
    pub fn theta_true(&self) -> f64 {
        -self.omega0 * self.omega0
    }
}
