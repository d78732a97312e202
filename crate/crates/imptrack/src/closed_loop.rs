//! The 6-state tracking loop and its idealized twin.
//!
//! The controller-plant cascade is a second-order path
//! (k1 s + k2)/(s^2 + k3 s) in parallel with a damped resonator
//! k4/(s^2 + 2 zeta w s + w^2), followed by a second-order Pade
//! realization of the sensorimotor delay e^(-tau s). Stacked as
//! x = [z1, z2, v] in R^6 with
//!
//! ```text
//! A(w) = blkdiag(A1, A2(w), A_v)      B = [0 1 0 1 0 0]^T
//! D = [0 0 0 0 0 1/tau^2]^T           F = [k2 k1 k4 0 0 0]
//! C = [k2 k1 k4 0 0 -12 tau]
//! x' = (A(w) + D F - B C) x + B * input,   y = C x
//! ```
//!
//! The online loop runs the resonator at the identifier's current
//! frequency estimate (re-evaluated at every RK4 stage) and is driven by
//! the estimated position; the ideal loop runs at the true frequency,
//! driven by the true position. Their gap l = x - x_c is the quantity
//! whose exponential decay the verification suite measures.

use num_complex::Complex64;

use crate::analysis::wrap_phase;
use crate::error::{Error, Result};
use crate::identifier::{identifier_rhs, project_theta, IdentifierConfig, IdentifierState};
use crate::numcore::{
    hurwitz_margin, plan_steps, rk4_step_into, solve_complex, FnOde, Mat, Rk4Scratch, Trajectory,
    Vector,
};
use crate::reference::ReferenceSpec;

/// Controller gains, resonator damping, and sensorimotor delay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub zeta: f64,
    pub tau: f64,
}

impl LoopParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.k1, self.k2, self.k3, self.k4, self.zeta, self.tau];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "loop parameters".into(),
            });
        }
        if self.k3 <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "loop.k3: must be > 0, got {}",
                self.k3
            )));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "loop.tau: must be > 0, got {}",
                self.tau
            )));
        }
        if !(0.0..1.0).contains(&self.zeta) {
            return Err(Error::InvalidParams(format!(
                "loop.zeta: must be in [0, 1), got {}",
                self.zeta
            )));
        }
        Ok(())
    }

    /// Same global gains with the per-frequency oscillator entries swapped in.
    pub fn with_oscillator(&self, k4: f64, zeta: f64) -> LoopParams {
        LoopParams { k4, zeta, ..*self }
    }

    /// Fitted defaults: k1, k2, k3, tau are frequency-independent; the
    /// oscillator entries default to the 0.55 Hz table row.
    pub fn default_global() -> LoopParams {
        LoopParams {
            k1: 1.0,
            k2: 2.0,
            k3: 2.0,
            k4: 8.307,
            zeta: 0.34,
            tau: 0.1,
        }
    }
}

/// Per-frequency resonator settings (k4, zeta), fitted per stimulus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorEntry {
    pub freq_hz: f64,
    pub k4: f64,
    pub zeta: f64,
}

/// Lookup table mapping stimulus frequency to fitted (k4, zeta).
#[derive(Clone, Debug)]
pub struct FrequencyTable {
    entries: Vec<OscillatorEntry>,
}

impl FrequencyTable {
    pub fn new(entries: Vec<OscillatorEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidParams(
                "frequency table must not be empty".into(),
            ));
        }
        for w in entries.windows(2) {
            if w[1].freq_hz <= w[0].freq_hz {
                return Err(Error::InvalidParams(format!(
                    "frequency table must be strictly increasing ({} after {})",
                    w[1].freq_hz, w[0].freq_hz
                )));
            }
        }
        if entries.iter().any(|e| e.freq_hz <= 0.0) {
            return Err(Error::InvalidParams("table frequencies must be > 0".into()));
        }
        Ok(FrequencyTable { entries })
    }

    pub fn entries(&self) -> &[OscillatorEntry] {
        &self.entries
    }

    /// Entry for the requested frequency; falls back to the nearest entry
    /// (by log-frequency distance) and reports whether the match was exact.
    pub fn lookup(&self, freq_hz: f64) -> (&OscillatorEntry, bool) {
        let mut best = &self.entries[0];
        let mut best_dist = f64::INFINITY;
        for e in &self.entries {
            let dist = (e.freq_hz.ln() - freq_hz.ln()).abs();
            if dist < best_dist {
                best = e;
                best_dist = dist;
            }
        }
        let exact = (best.freq_hz - freq_hz).abs() <= 1e-9 * freq_hz;
        (best, exact)
    }
}

impl Default for FrequencyTable {
    /// Per-frequency resonator settings fitted against the measured
    /// tracking trends (near-unity gain with small lag at 0.10 Hz, gain
    /// falling and lag growing toward 2.05 Hz), with the closed loop kept
    /// comfortably Hurwitz at every entry.
    fn default() -> Self {
        FrequencyTable::new(vec![
            OscillatorEntry {
                freq_hz: 0.10,
                k4: 0.8228,
                zeta: 0.11,
            },
            OscillatorEntry {
                freq_hz: 0.25,
                k4: 3.5622,
                zeta: 0.33,
            },
            OscillatorEntry {
                freq_hz: 0.55,
                k4: 8.3070,
                zeta: 0.34,
            },
            OscillatorEntry {
                freq_hz: 0.85,
                k4: 20.6753,
                zeta: 0.50,
            },
            OscillatorEntry {
                freq_hz: 1.00,
                k4: 23.5518,
                zeta: 0.49,
            },
            OscillatorEntry {
                freq_hz: 1.55,
                k4: 60.5585,
                zeta: 0.89,
            },
            OscillatorEntry {
                freq_hz: 2.05,
                k4: 68.9839,
                zeta: 0.78,
            },
        ])
        .expect("default table is valid")
    }
}

/// The block matrices of the stacked loop at a given resonator frequency.
#[derive(Clone, Debug)]
pub struct LoopMatrices {
    pub a1: Mat,
    pub a2: Mat,
    pub a_v: Mat,
    pub b: Vector,
    pub d: Vector,
    pub f: Vector,
    pub c: Vector,
}

impl LoopMatrices {
    pub fn assemble(params: &LoopParams, omega: f64) -> Result<LoopMatrices> {
        params.validate()?;
        if omega <= 0.0 || !omega.is_finite() {
            return Err(Error::InvalidParams(format!(
                "oscillator frequency must be > 0, got {omega}"
            )));
        }
        let tau = params.tau;
        Ok(LoopMatrices {
            a1: Mat::from_rows(&[&[0.0, 1.0], &[0.0, -params.k3]])?,
            a2: Mat::from_rows(&[&[0.0, 1.0], &[-omega * omega, -2.0 * params.zeta * omega]])?,
            a_v: Mat::from_rows(&[&[0.0, 1.0], &[-12.0 / (tau * tau), -6.0 / tau]])?,
            b: Vector::from(vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0]),
            d: Vector::from(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / (tau * tau)]),
            f: Vector::from(vec![params.k2, params.k1, params.k4, 0.0, 0.0, 0.0]),
            c: Vector::from(vec![params.k2, params.k1, params.k4, 0.0, 0.0, -12.0 * tau]),
        })
    }

    /// blkdiag(A1, A2, A_v).
    pub fn a_full(&self) -> Mat {
        Mat::block_diag(&[&self.a1, &self.a2, &self.a_v])
    }

    /// A + D F - B C, the matrix whose Hurwitz margin gates every run.
    pub fn closed_loop_matrix(&self) -> Mat {
        let df = Mat::outer(&self.d, &self.f);
        let bc = Mat::outer(&self.b, &self.c);
        self.a_full().add(&df).expect("6x6").sub(&bc).expect("6x6")
    }
}

/// Closed-loop state derivative (A(omega) + DF - BC) x + B * input,
/// assembled from the block matrices.
pub fn closed_loop_rhs(
    x: &Vector,
    r1_input: f64,
    omega: f64,
    params: &LoopParams,
) -> Result<Vector> {
    if x.dim() != 6 {
        return Err(Error::DimensionMismatch {
            op: "closed_loop_rhs",
            expected: "dim 6".into(),
            got: format!("dim {}", x.dim()),
        });
    }
    let mats = LoopMatrices::assemble(params, omega)?;
    let hx = mats.closed_loop_matrix().mul_vec(x)?;
    Ok(Vector::from(
        (0..6)
            .map(|i| hx[i] + mats.b[i] * r1_input)
            .collect::<Vec<_>>(),
    ))
}

/// Plant output y = C x.
pub fn loop_output(params: &LoopParams, x: &[f64]) -> f64 {
    params.k2 * x[0] + params.k1 * x[1] + params.k4 * x[2] - 12.0 * params.tau * x[5]
}

/// Structural form of the same derivative, written per block; used by the
/// simulators (no matrix assembly in the stage loop).
#[inline]
fn loop_block_rhs(p: &LoopParams, omega: f64, x: &[f64], input: f64, dx: &mut [f64]) {
    let u = p.k2 * x[0] + p.k1 * x[1] + p.k4 * x[2];
    let y = u - 12.0 * p.tau * x[5];
    let e = input - y;
    dx[0] = x[1];
    dx[1] = -p.k3 * x[1] + e;
    dx[2] = x[3];
    dx[3] = -omega * omega * x[2] - 2.0 * p.zeta * omega * x[3] + e;
    dx[4] = x[5];
    dx[5] = (-12.0 * x[4] - 6.0 * p.tau * x[5] + u) / (p.tau * p.tau);
}

/// Frequency response of the Pade delay block,
/// (s^2 - 6 s/tau + 12/tau^2) / (s^2 + 6 s/tau + 12/tau^2) at s = j omega.
pub fn delay_frequency_response(tau: f64, omega: f64) -> Result<Complex64> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidParams(format!("tau must be > 0, got {tau}")));
    }
    let re = 12.0 / (tau * tau) - omega * omega;
    let im = 6.0 * omega / tau;
    Ok(Complex64::new(re, -im) / Complex64::new(re, im))
}

/// Closed-loop frequency response input -> y with the resonator designed
/// at `omega` and evaluated at the same frequency:
/// C (j omega I - (A + DF - BC))^-1 B.
pub fn loop_frequency_response(params: &LoopParams, omega: f64) -> Result<Complex64> {
    let mats = LoopMatrices::assemble(params, omega)?;
    let h = mats.closed_loop_matrix();
    let margin = hurwitz_margin(&h)?;
    if margin >= 0.0 {
        return Err(Error::NotHurwitz { margin });
    }
    let jw = Complex64::new(0.0, omega);
    let a: Vec<Vec<Complex64>> = (0..6)
        .map(|i| {
            (0..6)
                .map(|j| {
                    let diag = if i == j { jw } else { Complex64::new(0.0, 0.0) };
                    diag - Complex64::new(h[(i, j)], 0.0)
                })
                .collect()
        })
        .collect();
    let b: Vec<Complex64> = (0..6).map(|i| Complex64::new(mats.b[i], 0.0)).collect();
    let z = solve_complex(&a, &b)?;
    let g = z
        .iter()
        .zip(mats.c.as_slice())
        .map(|(zi, ci)| zi * ci)
        .sum();
    Ok(g)
}

/// Steady-state tracking response of the perfect-information loop at the
/// stimulus frequency, as (gain, phase).
pub fn ideal_tracking_response(spec: &ReferenceSpec, params: &LoopParams) -> Result<(f64, f64)> {
    let g = loop_frequency_response(params, spec.omega0())?;
    Ok((g.norm(), wrap_phase(g.arg())))
}

/// How the 6-state loop integrator obtains its resonator frequency.
enum OmegaSource<'a> {
    Frozen(f64),
    Schedule(&'a dyn Fn(f64) -> f64),
}

/// Integrate the 6-state loop alone, driven by `input`, either at a frozen
/// resonator frequency or along a frequency schedule. Channels: x1..x6, y.
pub fn simulate_loop_frozen(
    params: &LoopParams,
    omega: f64,
    input: impl Fn(f64) -> f64,
    x0: &Vector,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    simulate_loop_inner(params, OmegaSource::Frozen(omega), &input, x0, t_end, h)
}

/// Same integrator with the resonator frequency re-evaluated from the
/// schedule at every RK4 stage.
pub fn simulate_loop_scheduled(
    params: &LoopParams,
    omega: impl Fn(f64) -> f64,
    input: impl Fn(f64) -> f64,
    x0: &Vector,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    simulate_loop_inner(params, OmegaSource::Schedule(&omega), &input, x0, t_end, h)
}

fn simulate_loop_inner(
    params: &LoopParams,
    omega: OmegaSource<'_>,
    input: &dyn Fn(f64) -> f64,
    x0: &Vector,
    t_end: f64,
    h: f64,
) -> Result<Trajectory> {
    params.validate()?;
    if x0.dim() != 6 {
        return Err(Error::DimensionMismatch {
            op: "simulate_loop",
            expected: "dim 6".into(),
            got: format!("dim {}", x0.dim()),
        });
    }
    let p = *params;
    let sys = FnOde::new(6, move |t, x, dx| {
        let w = match &omega {
            OmegaSource::Frozen(w) => *w,
            OmegaSource::Schedule(f) => f(t),
        };
        loop_block_rhs(&p, w, x.as_slice(), input(t), dx.as_slice_mut());
    });

    let labels: Vec<String> = (1..=6)
        .map(|i| format!("x{i}"))
        .chain(std::iter::once("y".to_string()))
        .collect();
    let mut traj = Trajectory::new(labels);
    let mut scratch = Rk4Scratch::new(6);
    let mut x = x0.clone();
    let mut next = Vector::zeros(6);
    let record = |traj: &mut Trajectory, t: f64, x: &Vector| {
        let mut row: Vec<f64> = x.as_slice().to_vec();
        row.push(loop_output(&p, x.as_slice()));
        traj.push(t, Vector::from(row))
    };
    record(&mut traj, 0.0, &x)?;
    for (t, hk) in plan_steps(0.0, t_end, h) {
        rk4_step_into(&sys, t, &x, hk, &mut scratch, &mut next)?;
        std::mem::swap(&mut x, &mut next);
        record(&mut traj, t + hk, &x)?;
    }
    Ok(traj)
}

/// Channel labels of the coupled trajectory.
pub const COUPLED_CHANNELS: [&str; 23] = [
    "r1",
    "r2",
    "r1_hat",
    "r2_hat",
    "theta_hat",
    "omega_hat",
    "x1",
    "x2",
    "x3",
    "x4",
    "x5",
    "x6",
    "xc1",
    "xc2",
    "xc3",
    "xc4",
    "xc5",
    "xc6",
    "y",
    "y_c",
    "e",
    "e_c",
    "l_norm",
];

/// Coupled simulation output.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub trajectory: Trajectory,
    pub projection_events: Vec<f64>,
    /// Margin of A_c + DF - BC at the true frequency (checked < 0 before
    /// the run starts).
    pub hurwitz_margin: f64,
}

/// Integrate identifier + online loop + ideal loop as one 15-state system.
///
/// The identifier is driven by the closed-form stimulus; the online loop
/// by the estimated position with the resonator at omega_hat(t); the ideal
/// loop by the true position at the true frequency. Refuses to run when
/// the perfect-information closed-loop matrix is not Hurwitz.
#[allow(clippy::too_many_arguments)]
pub fn simulate_coupled(
    spec: &ReferenceSpec,
    id_cfg: &IdentifierConfig,
    id_init: &IdentifierState,
    params: &LoopParams,
    x0: &Vector,
    xc0: &Vector,
    t_end: f64,
    h: f64,
) -> Result<CoupledRun> {
    params.validate()?;
    if x0.dim() != 6 || xc0.dim() != 6 {
        return Err(Error::DimensionMismatch {
            op: "simulate_coupled",
            expected: "loop states of dim 6".into(),
            got: format!("dims {} and {}", x0.dim(), xc0.dim()),
        });
    }
    if t_end <= 0.0 || h <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "simulate_coupled: need t_end > 0 and h > 0, got t_end = {t_end}, h = {h}"
        )));
    }

    let mats = LoopMatrices::assemble(params, spec.omega0())?;
    let margin = hurwitz_margin(&mats.closed_loop_matrix())?;
    if margin >= 0.0 {
        return Err(Error::NotHurwitz { margin });
    }

    let spec_c = *spec;
    let cfg_c = id_cfg.clone();
    let p = *params;
    let cap = id_cfg.theta_cap();
    let sys = FnOde::new(15, move |t, s, ds| {
        let sl = s.as_slice();
        let r = spec_c.state(t);
        let id_state = IdentifierState {
            r_hat: Vector::from(vec![sl[0], sl[1]]),
            theta_hat: sl[2],
        };
        let (r_hat_dot, theta_dot) = identifier_rhs(&id_state, &r, &cfg_c);
        let d = ds.as_slice_mut();
        d[0] = r_hat_dot[0];
        d[1] = r_hat_dot[1];
        d[2] = theta_dot;
        // Stage values of theta_hat may sit past the projection boundary;
        // clamp inside the readout so the resonator frequency stays real.
        let omega_hat = (-sl[2].min(-cap)).sqrt();
        let (online, rest) = d[3..15].split_at_mut(6);
        loop_block_rhs(&p, omega_hat, &sl[3..9], sl[0], online);
        loop_block_rhs(&p, spec_c.omega0(), &sl[9..15], r[0], rest);
    });

    let mut traj = Trajectory::new(COUPLED_CHANNELS.iter().map(|s| s.to_string()).collect());
    let mut events = Vec::new();
    let mut state = Vector::zeros(15);
    state[0] = id_init.r_hat[0];
    state[1] = id_init.r_hat[1];
    state[2] = project_theta(id_init.theta_hat, id_cfg);
    for i in 0..6 {
        state[3 + i] = x0[i];
        state[9 + i] = xc0[i];
    }

    let record = |traj: &mut Trajectory, t: f64, s: &Vector| -> Result<()> {
        let sl = s.as_slice();
        let r = spec.state(t);
        let y = loop_output(params, &sl[3..9]);
        let y_c = loop_output(params, &sl[9..15]);
        let l_norm = (0..6)
            .map(|i| (sl[3 + i] - sl[9 + i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let omega_hat = (-sl[2]).max(0.0).sqrt();
        let mut row = vec![r[0], r[1], sl[0], sl[1], sl[2], omega_hat];
        row.extend_from_slice(&sl[3..15]);
        row.extend_from_slice(&[y, y_c, sl[0] - y, r[0] - y_c, l_norm]);
        traj.push(t, Vector::from(row))
    };

    let mut scratch = Rk4Scratch::new(15);
    let mut next = Vector::zeros(15);
    record(&mut traj, 0.0, &state)?;
    for (t, hk) in plan_steps(0.0, t_end, h) {
        rk4_step_into(&sys, t, &state, hk, &mut scratch, &mut next)?;
        std::mem::swap(&mut state, &mut next);
        let projected = project_theta(state[2], id_cfg);
        if projected != state[2] {
            state[2] = projected;
            events.push(t + hk);
        }
        record(&mut traj, t + hk, &state)?;
    }
    Ok(CoupledRun {
        trajectory: traj,
        projection_events: events,
        hurwitz_margin: margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn params() -> LoopParams {
        LoopParams::default_global()
    }

    #[test]
    fn assemble_pade_block_at_tau_tenth() {
        let p = LoopParams {
            tau: 0.1,
            ..params()
        };
        let m = LoopMatrices::assemble(&p, 1.0).unwrap();
        let expected = Mat::from_rows(&[&[0.0, 1.0], &[-1200.0, -60.0]]).unwrap();
        assert!(m.a_v.sub(&expected).unwrap().frobenius_norm() < 1e-9);
        assert!((m.d[5] - 100.0).abs() < 1e-11);
        assert!((m.c[5] + 1.2).abs() < 1e-14);
    }

    #[test]
    fn assemble_undamped_unit_oscillator() {
        let p = LoopParams {
            zeta: 0.0,
            ..params()
        };
        let m = LoopMatrices::assemble(&p, 1.0).unwrap();
        assert_eq!(m.a2, Mat::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap());
    }

    #[test]
    fn zero_gains_decouple_controller() {
        let p = LoopParams {
            k1: 0.0,
            k2: 0.0,
            k4: 0.0,
            ..params()
        };
        let m = LoopMatrices::assemble(&p, 1.0).unwrap();
        assert_eq!(m.f.as_slice(), &[0.0; 6]);
        let mut c_expected = vec![0.0; 6];
        c_expected[5] = -12.0 * p.tau;
        assert_eq!(m.c.as_slice(), c_expected.as_slice());
    }

    #[test]
    fn assemble_rejects_bad_params() {
        let p = LoopParams {
            tau: 0.0,
            ..params()
        };
        assert!(matches!(
            LoopMatrices::assemble(&p, 1.0),
            Err(Error::InvalidParams(_))
        ));
        let p = LoopParams {
            k3: -1.0,
            ..params()
        };
        assert!(matches!(
            LoopMatrices::assemble(&p, 1.0),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn delay_response_examples() {
        // DC gain of the all-pass is exactly 1.
        let g0 = delay_frequency_response(0.2, 0.0).unwrap();
        assert_eq!(g0, Complex64::new(1.0, 0.0));

        // Unit magnitude at arbitrary frequency.
        let g = delay_frequency_response(0.1, 37.0).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-14);

        // Phase tracks -omega*tau closely for small omega*tau.
        let g = delay_frequency_response(0.1, 1.0).unwrap();
        let err = (g.arg() + 0.1).abs();
        assert!(err < 1e-4 * 0.1, "phase error {err}");
    }

    #[test]
    fn rhs_examples() {
        let p = params();
        let zero = Vector::zeros(6);
        let out = closed_loop_rhs(&zero, 0.0, 1.0, &p).unwrap();
        assert_eq!(out.as_slice(), &[0.0; 6]);

        let driven = closed_loop_rhs(&zero, 1.0, 1.0, &p).unwrap();
        assert_eq!(driven.as_slice(), &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn rhs_is_linear_at_frozen_frequency() {
        let p = params();
        let x1 = Vector::from(vec![0.1, -0.2, 0.3, 0.05, -0.4, 0.02]);
        let x2 = Vector::from(vec![-0.5, 0.1, 0.0, 0.2, 0.3, -0.1]);
        let a = closed_loop_rhs(&x1, 0.7, 2.0, &p).unwrap();
        let b = closed_loop_rhs(&x2, -0.3, 2.0, &p).unwrap();
        let sum = closed_loop_rhs(&x1.add(&x2).unwrap(), 0.4, 2.0, &p).unwrap();
        for i in 0..6 {
            assert!((a[i] + b[i] - sum[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn structural_rhs_matches_matrix_route() {
        let p = params();
        let omega = 2.0 * PI * 0.55;
        let x = Vector::from(vec![0.3, -0.7, 1.1, 0.2, -0.05, 0.4]);
        let input = 0.83;
        let via_matrix = closed_loop_rhs(&x, input, omega, &p).unwrap();
        let mut via_blocks = [0.0; 6];
        loop_block_rhs(&p, omega, x.as_slice(), input, &mut via_blocks);
        for i in 0..6 {
            assert!(
                (via_matrix[i] - via_blocks[i]).abs() < 1e-12,
                "component {i}: {} vs {}",
                via_matrix[i],
                via_blocks[i]
            );
        }
    }

    #[test]
    fn frozen_and_scheduled_paths_agree_exactly() {
        let p = params();
        let w0 = 2.0 * PI * 0.55;
        let input = |t: f64| (w0 * t).sin();
        let x0 = Vector::zeros(6);
        let a = simulate_loop_frozen(&p, w0, input, &x0, 5.0, 1e-3).unwrap();
        let b = simulate_loop_scheduled(&p, |_| w0, input, &x0, 5.0, 1e-3).unwrap();
        assert_eq!(a.len(), b.len());
        let mut worst = 0.0f64;
        for i in 0..a.len() {
            for j in 0..6 {
                worst = worst.max((a.sample(i)[j] - b.sample(i)[j]).abs());
            }
        }
        assert!(worst <= 1e-12, "max trajectory gap {worst}");
    }

    #[test]
    fn locked_on_coupled_run_keeps_loops_together() {
        let spec = ReferenceSpec::from_freq_hz(1.0, 0.55, 0.0).unwrap();
        let id_cfg = IdentifierConfig::default();
        let init = IdentifierState::locked_on(&spec);
        let table = FrequencyTable::default();
        let (entry, _) = table.lookup(0.55);
        let (k4, zeta) = (entry.k4, entry.zeta);
        let p = LoopParams::default_global().with_oscillator(k4, zeta);
        let x0 = Vector::zeros(6);
        let run = simulate_coupled(&spec, &id_cfg, &init, &p, &x0, &x0, 20.0, 1e-3).unwrap();
        let mut worst = 0.0f64;
        for (_, l) in run.trajectory.channel("l_norm").unwrap() {
            worst = worst.max(l);
        }
        assert!(worst < 1e-9, "max loop gap {worst}");
    }

    #[test]
    fn coupled_run_rejects_unstable_gains() {
        let spec = ReferenceSpec::from_freq_hz(1.0, 0.55, 0.0).unwrap();
        let id_cfg = IdentifierConfig::default();
        let init = IdentifierState::locked_on(&spec);
        // Strong positive feedback destabilizes the cascade.
        let p = LoopParams {
            k1: -50.0,
            k2: -50.0,
            ..params()
        };
        let x0 = Vector::zeros(6);
        match simulate_coupled(&spec, &id_cfg, &init, &p, &x0, &x0, 1.0, 1e-3) {
            Err(Error::NotHurwitz { margin }) => assert!(margin >= 0.0),
            other => panic!("expected NotHurwitz, got {other:?}"),
        }
    }

    #[test]
    fn dc_limit_gain_approaches_unity() {
        // The second-order path has a free integrator, so tracking gain
        // tends to 1 as the stimulus frequency goes to 0 (k2 != 0).
        let p = params();
        let g = loop_frequency_response(&p, 1e-3).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-2, "gain = {}", g.norm());
    }

    #[test]
    fn zero_gains_give_zero_forward_response() {
        // With k1 = k2 = k4 = 0 nothing reaches the output path; the
        // resolvent response is identically zero. Evaluated directly on
        // the assembled matrices since the integrator pole at the origin
        // fails the Hurwitz gate of the public response function.
        let p = LoopParams {
            k1: 0.0,
            k2: 0.0,
            k4: 0.0,
            ..params()
        };
        let omega = 2.0 * PI * 0.55;
        let mats = LoopMatrices::assemble(&p, omega).unwrap();
        let h = mats.closed_loop_matrix();
        let jw = Complex64::new(0.0, omega);
        let a: Vec<Vec<Complex64>> = (0..6)
            .map(|i| {
                (0..6)
                    .map(|j| {
                        let d = if i == j { jw } else { Complex64::new(0.0, 0.0) };
                        d - Complex64::new(h[(i, j)], 0.0)
                    })
                    .collect()
            })
            .collect();
        let b: Vec<Complex64> = (0..6).map(|i| Complex64::new(mats.b[i], 0.0)).collect();
        let z = crate::numcore::solve_complex(&a, &b).unwrap();
        let g: Complex64 = (0..6).map(|i| Complex64::new(mats.c[i], 0.0) * z[i]).sum();
        assert!(g.norm() < 1e-12, "gain = {}", g.norm());

        let unstable = loop_frequency_response(&p, omega);
        assert!(matches!(unstable, Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn ideal_loop_scales_linearly_with_amplitude() {
        let id_cfg = IdentifierConfig::default();
        let p = LoopParams::default_global();
        let x0 = Vector::zeros(6);
        let run_for = |amp: f64| {
            let spec = ReferenceSpec::from_freq_hz(amp, 0.55, 0.0).unwrap();
            let init = IdentifierState::detuned(2.0 * PI * 0.3).unwrap();
            simulate_coupled(&spec, &id_cfg, &init, &p, &x0, &x0, 5.0, 1e-3).unwrap()
        };
        let a = run_for(1.0);
        let b = run_for(2.0);
        let ya = a.trajectory.channel("y_c").unwrap();
        let yb = b.trajectory.channel("y_c").unwrap();
        let mut worst = 0.0f64;
        for (pa, pb) in ya.iter().zip(&yb) {
            worst = worst.max((2.0 * pa.1 - pb.1).abs());
        }
        assert!(worst < 1e-10, "superposition violation {worst}");
    }
}
