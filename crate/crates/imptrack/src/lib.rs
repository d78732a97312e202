//! Simulation and verification toolkit for adaptive internal-model
//! tracking of sinusoidal stimuli.
//!
//! A moving stimulus r1(t) = A sin(w0 t + phi) with unknown frequency is
//! tracked by a two-part model:
//!
//! * an adaptive identifier that estimates the stimulus state and its
//!   frequency parameter theta = -w0^2 online, with a Lyapunov-shaped
//!   update law ([`identifier`]);
//! * a 6-state closed loop whose controller embeds a damped resonator at
//!   the *estimated* frequency, in parallel with a second-order path and
//!   behind a Pade-approximated sensorimotor delay ([`closed_loop`]).
//!
//! The toolkit simulates both the online loop and its perfect-information
//! twin, measures convergence rates and frequency responses
//! ([`analysis`]), and ships a property suite ([`verify`]) that checks the
//! advertised invariants numerically: Lyapunov decrease, exponential decay
//! of the estimation error and of the online/ideal discrepancy, all-pass
//! delay fidelity, and steady-state tracking of the ideal loop.

pub mod analysis;
pub mod closed_loop;
pub mod error;
pub mod identifier;
pub mod numcore;
pub mod reference;
pub mod verify;

pub use error::{Error, Result};
