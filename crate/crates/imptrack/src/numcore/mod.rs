//! Fixed-dimension numerical kernels: dense matrix/vector arithmetic,
//! a fixed-step RK4 integrator, a 2x2 Lyapunov solver, eigenvalues for
//! Hurwitz checks, and exponential-rate fitting.
//!
//! All operations are pure functions of their inputs and safe to call
//! concurrently.

mod eig;
mod fit;
mod lyapunov;
mod mat;
mod ode;

pub(crate) use eig::solve_complex;
pub use eig::{eigenvalues, hurwitz_margin, MAX_EIG_DIM};
pub use fit::{fit_exponential_rate, DECAY_FLOOR};
pub use lyapunov::{solve_lyapunov_2x2, symmetric_2x2_eigenvalues, LYAPUNOV_RESIDUAL_TOL};
pub use mat::{Mat, Vector};
pub use ode::{integrate, rk4_step, FnOde, OdeSystem, Trajectory};
pub(crate) use ode::{plan_steps, rk4_step_into, Rk4Scratch};
