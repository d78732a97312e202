//! Fixed-step classical Runge-Kutta 4 integration for (possibly
//! time-varying) ODEs.
//!
//! The step size is fixed so trajectories are bit-reproducible and the
//! step-halving order test is meaningful; when the span is not an integer
//! multiple of `h` the final step is shortened to land exactly on `t_end`.
//! Every RK4 stage is checked for non-finite values so a blow-up is caught
//! at the step where it happens.

use crate::error::{Error, Result};
use crate::numcore::Vector;

/// Right-hand side of an autonomous-in-form ODE x' = f(t, x).
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, x: &Vector, dxdt: &mut Vector);
}

/// Adapter turning a closure into an [`OdeSystem`].
pub struct FnOde<F: Fn(f64, &Vector, &mut Vector)> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &Vector, &mut Vector)> FnOde<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOde { dim, f }
    }
}

impl<F: Fn(f64, &Vector, &mut Vector)> OdeSystem for FnOde<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&self, t: f64, x: &Vector, dxdt: &mut Vector) {
        (self.f)(t, x, dxdt)
    }
}

/// Scratch buffers reused across RK4 steps.
pub(crate) struct Rk4Scratch {
    k1: Vector,
    k2: Vector,
    k3: Vector,
    k4: Vector,
    tmp: Vector,
}

impl Rk4Scratch {
    pub(crate) fn new(dim: usize) -> Self {
        Rk4Scratch {
            k1: Vector::zeros(dim),
            k2: Vector::zeros(dim),
            k3: Vector::zeros(dim),
            k4: Vector::zeros(dim),
            tmp: Vector::zeros(dim),
        }
    }
}

fn check_finite(v: &Vector, t: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::IntegrationDiverged { t })
    }
}

/// One classical RK4 step, writing the updated state into `out`.
pub(crate) fn rk4_step_into(
    sys: &dyn OdeSystem,
    t: f64,
    x: &Vector,
    h: f64,
    s: &mut Rk4Scratch,
    out: &mut Vector,
) -> Result<()> {
    let n = x.dim();
    check_finite(x, t)?;

    sys.rhs(t, x, &mut s.k1);
    check_finite(&s.k1, t)?;

    for i in 0..n {
        s.tmp[i] = x[i] + 0.5 * h * s.k1[i];
    }
    sys.rhs(t + 0.5 * h, &s.tmp, &mut s.k2);
    check_finite(&s.k2, t)?;

    for i in 0..n {
        s.tmp[i] = x[i] + 0.5 * h * s.k2[i];
    }
    sys.rhs(t + 0.5 * h, &s.tmp, &mut s.k3);
    check_finite(&s.k3, t)?;

    for i in 0..n {
        s.tmp[i] = x[i] + h * s.k3[i];
    }
    sys.rhs(t + h, &s.tmp, &mut s.k4);
    check_finite(&s.k4, t)?;

    for i in 0..n {
        out[i] = x[i] + (h / 6.0) * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
    }
    check_finite(out, t + h)
}

/// One classical RK4 step; local truncation error O(h^5).
pub fn rk4_step(sys: &dyn OdeSystem, t: f64, x: &Vector, h: f64) -> Result<Vector> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::InvalidParams(format!(
            "rk4_step: h must be > 0, got {h}"
        )));
    }
    if x.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            op: "rk4_step",
            expected: format!("state dim {}", sys.dim()),
            got: format!("dim {}", x.dim()),
        });
    }
    let mut scratch = Rk4Scratch::new(x.dim());
    let mut out = Vector::zeros(x.dim());
    rk4_step_into(sys, t, x, h, &mut scratch, &mut out)?;
    Ok(out)
}

/// Plan the step sequence over [t0, t_end]: nominal steps of size `h`,
/// with the final step shortened to land exactly on `t_end`.
pub(crate) fn plan_steps(t0: f64, t_end: f64, h: f64) -> Vec<(f64, f64)> {
    let span = t_end - t0;
    // Snap to an integer step count when span/h is within rounding of one.
    let ratio = span / h;
    let n_full = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round() as usize
    } else {
        ratio.floor() as usize
    };
    let mut steps = Vec::with_capacity(n_full + 1);
    for k in 0..n_full {
        steps.push((t0 + k as f64 * h, h));
    }
    let t_last = t0 + n_full as f64 * h;
    if t_end - t_last > 1e-12 * span.max(1.0) {
        steps.push((t_last, t_end - t_last));
    }
    steps
}

/// Integrate over [t0, t_end] with fixed step `h`, sampling every step.
pub fn integrate(
    sys: &dyn OdeSystem,
    x0: &Vector,
    t0: f64,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::InvalidParams(format!(
            "integrate: h must be > 0, got {h}"
        )));
    }
    if t_end <= t0 {
        return Err(Error::InvalidParams(format!(
            "integrate: t_end ({t_end}) must exceed t0 ({t0})"
        )));
    }
    if x0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            op: "integrate",
            expected: format!("state dim {}", sys.dim()),
            got: format!("dim {}", x0.dim()),
        });
    }

    let mut traj = Trajectory::new(Vec::new());
    let mut scratch = Rk4Scratch::new(x0.dim());
    let mut x = x0.clone();
    let mut next = Vector::zeros(x0.dim());
    traj.push(t0, x.clone())?;
    for (t, hk) in plan_steps(t0, t_end, h) {
        rk4_step_into(sys, t, &x, hk, &mut scratch, &mut next)?;
        std::mem::swap(&mut x, &mut next);
        traj.push(t + hk, x.clone())?;
    }
    Ok(traj)
}

/// Time series of state (or channel) vectors on a strictly increasing
/// time grid, with optional channel labels.
#[derive(Clone, Debug)]
pub struct Trajectory {
    times: Vec<f64>,
    samples: Vec<Vector>,
    labels: Vec<String>,
}

impl Trajectory {
    pub fn new(labels: Vec<String>) -> Self {
        Trajectory {
            times: Vec::new(),
            samples: Vec::new(),
            labels,
        }
    }

    pub fn push(&mut self, t: f64, sample: Vector) -> Result<()> {
        if !t.is_finite() || !sample.is_finite() {
            return Err(Error::IntegrationDiverged { t });
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::InvalidParams(format!(
                    "trajectory times must be strictly increasing ({t} after {last})"
                )));
            }
        }
        self.times.push(t);
        self.samples.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn sample(&self, i: usize) -> &Vector {
        &self.samples[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// (t, value) pairs for a named channel.
    pub fn channel(&self, name: &str) -> Result<Vec<(f64, f64)>> {
        let idx = self
            .channel_index(name)
            .ok_or_else(|| Error::InvalidParams(format!("unknown trajectory channel '{name}'")))?;
        Ok(self
            .times
            .iter()
            .zip(&self.samples)
            .map(|(&t, s)| (t, s[idx]))
            .collect())
    }
}
