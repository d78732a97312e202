//! Runtime property suite: every invariant the toolkit advertises,
//! executed as a named check with a measured value and a threshold.
//!
//! Checks never abort the suite; a failing or erroring check is reported
//! and the remaining checks still run. Random inputs are drawn from a
//! seeded generator so the suite is reproducible.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    extract_response, fit_frequency_point, truncate_at_floor, wrap_phase, FrequencyResponsePoint,
    RATE_FIT_FLOOR,
};
use crate::closed_loop::{
    delay_frequency_response, ideal_tracking_response, simulate_coupled, simulate_loop_frozen,
    simulate_loop_scheduled, FrequencyTable, LoopMatrices, LoopParams,
};
use crate::error::Result;
use crate::identifier::{
    lyapunov_value, simulate_identifier, ErrorCoordinates, IdentifierConfig, IdentifierState,
};
use crate::numcore::{
    eigenvalues, fit_exponential_rate, integrate, rk4_step, solve_lyapunov_2x2,
    symmetric_2x2_eigenvalues, FnOde, Mat, OdeSystem, Trajectory, Vector,
};
use crate::reference::ReferenceSpec;

/// Everything the suite needs: the frozen configs under test plus a seed.
#[derive(Clone, Debug)]
pub struct VerifyInputs {
    pub id_cfg: IdentifierConfig,
    /// Slow gains used by the convergence-grid measurement.
    pub rate_cfg: IdentifierConfig,
    pub global: LoopParams,
    pub table: FrequencyTable,
    pub amplitude: f64,
    pub seed: u64,
    pub h: f64,
}

impl Default for VerifyInputs {
    fn default() -> Self {
        VerifyInputs {
            id_cfg: IdentifierConfig::default(),
            rate_cfg: IdentifierConfig::rate_measurement(),
            global: LoopParams::default_global(),
            table: FrequencyTable::default(),
            amplitude: 1.0,
            seed: 42,
            h: 1e-3,
        }
    }
}

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Informational entries report measurements without gating the suite.
    pub informational: bool,
    pub measured: String,
    pub threshold: String,
    pub seconds: f64,
}

struct Outcome {
    passed: bool,
    informational: bool,
    measured: String,
    threshold: String,
}

impl Outcome {
    fn gated(passed: bool, measured: String, threshold: String) -> Self {
        Outcome {
            passed,
            informational: false,
            measured,
            threshold,
        }
    }

    fn info(measured: String) -> Self {
        Outcome {
            passed: true,
            informational: true,
            measured,
            threshold: "logged only".into(),
        }
    }
}

type Check = fn(&VerifyInputs) -> Result<Outcome>;

const CHECKS: &[(&str, Check)] = &[
    ("lyapunov-solver-random", check_lyapunov_random),
    ("rk4-order", check_rk4_order),
    ("eig-residual", check_eig_residual),
    ("oscillator-energy", check_oscillator_energy),
    ("reference-state-form", check_reference_state_form),
    ("reference-periodicity", check_reference_periodicity),
    ("identifier-lyapunov-monotone", check_lyapunov_monotone),
    ("identifier-vdot-analytic", check_vdot_analytic),
    ("identifier-convergence-grid", check_convergence_grid),
    ("identifier-equilibrium", check_equilibrium),
    ("identifier-projection-steady", check_projection_steady),
    ("identifier-gamma-sweep", check_gamma_sweep),
    ("pade-allpass", check_pade_allpass),
    ("pade-phase", check_pade_phase),
    ("pade-realization", check_pade_realization),
    ("loop-frozen-omega", check_frozen_omega),
    ("loop-prop2-decay", check_prop2_decay),
    ("loop-lti-superposition", check_lti_superposition),
    ("analysis-amplitude-invariance", check_amplitude_invariance),
    ("analysis-bode-vs-analytic", check_bode_vs_analytic),
    ("analysis-phase-wrapping", check_phase_wrapping),
    ("analysis-grid-refinement", check_grid_refinement),
];

/// Names of all available checks, in execution order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Run every check whose name contains `filter` (all when `None`).
pub fn run_suite(inputs: &VerifyInputs, filter: Option<&str>) -> Vec<CheckResult> {
    let mut results = Vec::new();
    for (name, check) in CHECKS {
        if let Some(f) = filter {
            if !name.contains(f) {
                continue;
            }
        }
        let start = std::time::Instant::now();
        let outcome = check(inputs);
        let seconds = start.elapsed().as_secs_f64();
        let result = match outcome {
            Ok(o) => CheckResult {
                name: name.to_string(),
                passed: o.passed,
                informational: o.informational,
                measured: o.measured,
                threshold: o.threshold,
                seconds,
            },
            Err(e) => CheckResult {
                name: name.to_string(),
                passed: false,
                informational: false,
                measured: format!("error: {e}"),
                threshold: "check must run to completion".into(),
                seconds,
            },
        };
        results.push(result);
    }
    results
}

/// True iff every gating (non-informational) check passed.
pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed || r.informational)
}

// ---------------------------------------------------------------------
// numcore checks
// ---------------------------------------------------------------------

/// Random well-conditioned 2x2 similarity transform.
fn random_transform(rng: &mut ChaCha8Rng) -> Mat {
    loop {
        let t = Mat::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let det = t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)];
        if det.abs() > 0.25 {
            return t;
        }
    }
}

fn random_hurwitz_2x2(rng: &mut ChaCha8Rng) -> Mat {
    let l1 = rng.gen_range(-10.0..-0.1);
    let l2 = rng.gen_range(-10.0..-0.1);
    let t = random_transform(rng);
    let det = t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)];
    let t_inv = Mat::from_rows(&[
        &[t[(1, 1)] / det, -t[(0, 1)] / det],
        &[-t[(1, 0)] / det, t[(0, 0)] / det],
    ])
    .expect("finite");
    t.matmul(&Mat::diag(&[l1, l2]))
        .unwrap()
        .matmul(&t_inv)
        .unwrap()
}

fn random_spd_2x2(rng: &mut ChaCha8Rng) -> Mat {
    let g = Mat::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
    let gtg = g.transpose().matmul(&g).unwrap();
    gtg.add(&Mat::diag(&[0.1, 0.1])).unwrap()
}

fn check_lyapunov_random(inputs: &VerifyInputs) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed);
    let mut worst_residual = 0.0f64;
    let mut min_p_eig = f64::INFINITY;
    for _ in 0..100 {
        let a = random_hurwitz_2x2(&mut rng);
        let q = random_spd_2x2(&mut rng);
        let p = solve_lyapunov_2x2(&a, &q)?;
        let residual = a
            .transpose()
            .matmul(&p)?
            .add(&p.matmul(&a)?)?
            .add(&q)?
            .frobenius_norm();
        worst_residual = worst_residual.max(residual);
        min_p_eig = min_p_eig.min(symmetric_2x2_eigenvalues(&p).0);
    }
    Ok(Outcome::gated(
        worst_residual < 1e-10 && min_p_eig > 0.0,
        format!("max residual {worst_residual:.2e}, min P eigenvalue {min_p_eig:.2e}"),
        "residual < 1e-10 and P positive-definite over 100 random cases".into(),
    ))
}

fn check_rk4_order(_inputs: &VerifyInputs) -> Result<Outcome> {
    let sys = FnOde::new(1, |_t, x, dx| dx[0] = x[0]);
    let x0 = Vector::from_slice(&[1.0])?;
    let exact = 1.0f64.exp();
    let mut ratios = Vec::new();
    for h in [0.1, 0.05, 0.02] {
        let err = |step: f64| -> Result<f64> {
            let traj = integrate(&sys, &x0, 0.0, 1.0, step)?;
            Ok((traj.sample(traj.len() - 1)[0] - exact).abs())
        };
        ratios.push(err(h)? / err(h / 2.0)?);
    }
    let ok = ratios.iter().all(|r| (14.0..=18.0).contains(r));
    Ok(Outcome::gated(
        ok,
        format!("step-halving error ratios {ratios:.3?}"),
        "each ratio in [14, 18] (ideal 16 for order 4)".into(),
    ))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
/// Independent of the QR path; used as the residual oracle.
#[allow(clippy::needless_range_loop)]
fn jacobi_symmetric_eigenvalues(mut g: Vec<Vec<f64>>) -> Vec<f64> {
    let n = g.len();
    let frob: f64 = g
        .iter()
        .flat_map(|r| r.iter().map(|x| x * x))
        .sum::<f64>()
        .sqrt();
    let tol = (frob * 1e-15).max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off += g[p][q] * g[p][q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = g[p][q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let theta = (g[q][q] - g[p][p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let gkp = g[k][p];
                    let gkq = g[k][q];
                    g[k][p] = c * gkp - s * gkq;
                    g[k][q] = s * gkp + c * gkq;
                }
                for k in 0..n {
                    let gpk = g[p][k];
                    let gqk = g[q][k];
                    g[p][k] = c * gpk - s * gqk;
                    g[q][k] = s * gpk + c * gqk;
                }
            }
        }
    }
    (0..n).map(|i| g[i][i]).collect()
}

/// Smallest singular value of (A - lambda I) via the real 2n x 2n
/// embedding of the complex shift and a Jacobi eigensolve of E^T E.
pub fn sigma_min_shifted(a: &Mat, lambda: Complex64) -> f64 {
    let n = a.rows();
    let m = 2 * n;
    // E = [[Re B, -Im B], [Im B, Re B]] for B = A - lambda I.
    let re = |i: usize, j: usize| a[(i, j)] - if i == j { lambda.re } else { 0.0 };
    let im = |i: usize, j: usize| if i == j { -lambda.im } else { 0.0 };
    let mut e = vec![vec![0.0f64; m]; m];
    for i in 0..n {
        for j in 0..n {
            e[i][j] = re(i, j);
            e[i][j + n] = -im(i, j);
            e[i + n][j] = im(i, j);
            e[i + n][j + n] = re(i, j);
        }
    }
    let mut g = vec![vec![0.0f64; m]; m];
    for (i, row) in g.iter_mut().enumerate() {
        for (j, out) in row.iter_mut().enumerate() {
            *out = (0..m).map(|k| e[k][i] * e[k][j]).sum();
        }
    }
    let eigs = jacobi_symmetric_eigenvalues(g);
    eigs.into_iter()
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
        .sqrt()
}

fn check_eig_residual(inputs: &VerifyInputs) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed ^ 0x51ac);
    let mut cases: Vec<Mat> = Vec::new();
    // Structured cases: oscillator pair, delay block, a closed-loop matrix.
    let w0 = 2.0 * std::f64::consts::PI * 0.55;
    cases.push(Mat::from_rows(&[&[0.0, 1.0], &[-w0 * w0, 0.0]])?);
    let mats = LoopMatrices::assemble(&inputs.global, w0)?;
    cases.push(mats.a_v.clone());
    cases.push(mats.closed_loop_matrix());
    // Random dense matrices of assorted sizes.
    for n in [2, 3, 4, 5, 6, 7] {
        cases.push(Mat::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0)));
    }
    let mut worst = 0.0f64;
    for a in &cases {
        let fro = a.frobenius_norm().max(f64::MIN_POSITIVE);
        for lambda in eigenvalues(a)? {
            let sigma = sigma_min_shifted(a, lambda);
            worst = worst.max(sigma / fro);
        }
    }
    Ok(Outcome::gated(
        worst < 1e-8,
        format!("max sigma_min(A - lambda I) / |A|_F = {worst:.2e}"),
        "< 1e-8 for every reported eigenvalue".into(),
    ))
}

fn check_oscillator_energy(_inputs: &VerifyInputs) -> Result<Outcome> {
    let sys = FnOde::new(2, |_t, x, dx| {
        dx[0] = x[1];
        dx[1] = -x[0];
    });
    let x0 = Vector::from_slice(&[1.0, 0.0])?;
    let traj = integrate(&sys, &x0, 0.0, 20.0 * std::f64::consts::PI, 1e-3)?;
    let last = traj.sample(traj.len() - 1);
    let drift = (last[0] * last[0] + last[1] * last[1] - 1.0).abs();
    Ok(Outcome::gated(
        drift < 1e-8,
        format!("energy drift over 10 periods {drift:.2e}"),
        "< 1e-8".into(),
    ))
}

// ---------------------------------------------------------------------
// reference checks
// ---------------------------------------------------------------------

fn check_reference_state_form(inputs: &VerifyInputs) -> Result<Outcome> {
    let spec = ReferenceSpec::from_freq_hz(inputs.amplitude, 0.55, 0.3)?;
    let w2 = spec.omega0() * spec.omega0();
    let sys = FnOde::new(2, move |_t, r, dr| {
        dr[0] = r[1];
        dr[1] = -w2 * r[0];
    });
    let traj = integrate(&sys, &spec.state(0.0), 0.0, spec.period(), 1e-3)?;
    let mut worst = 0.0f64;
    for i in 0..traj.len() {
        let closed = spec.state(traj.time(i));
        let s = traj.sample(i);
        worst = worst.max((s[0] - closed[0]).abs().max((s[1] - closed[1]).abs()));
    }
    Ok(Outcome::gated(
        worst < 1e-8,
        format!("max |integrated - closed form| = {worst:.2e}"),
        "< 1e-8 over one period".into(),
    ))
}

fn check_reference_periodicity(inputs: &VerifyInputs) -> Result<Outcome> {
    let spec = ReferenceSpec::from_freq_hz(inputs.amplitude, 0.55, 0.4)?;
    let mut worst = 0.0f64;
    for t in [0.0, 0.17, 2.9, 11.3] {
        let a = spec.state(t);
        let b = spec.state(t + spec.period());
        worst = worst.max((a[0] - b[0]).abs() + (a[1] - b[1]).abs() / spec.omega0());
    }
    Ok(Outcome::gated(
        worst < 1e-12,
        format!("max periodicity defect {worst:.2e}"),
        "< 1e-12".into(),
    ))
}

// ---------------------------------------------------------------------
// identifier checks
// ---------------------------------------------------------------------

fn check_lyapunov_monotone(inputs: &VerifyInputs) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed ^ 0x11a9);
    let mut worst_ratio = f64::NEG_INFINITY;
    for _ in 0..20 {
        let f0 = rng.gen_range(0.1..2.05);
        let ratio = (rng.gen_range(0.25f64.ln()..4.0f64.ln())).exp();
        let phase = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let spec = ReferenceSpec::from_freq_hz(inputs.amplitude, f0, phase)?;
        let init = IdentifierState::detuned(spec.omega0() * ratio)?;
        let run = simulate_identifier(&spec, &inputs.id_cfg, &init, 30.0, 1e-3)?;
        let v = run.trajectory.channel("v")?;
        let tol = 1e-9 * v[0].1.max(1.0);
        for w in v.windows(2) {
            worst_ratio = worst_ratio.max((w[1].1 - w[0].1) / tol);
        }
    }
    Ok(Outcome::gated(
        worst_ratio <= 1.0,
        format!("max per-step V increase = {worst_ratio:.3} x tolerance"),
        "<= 1e-9 * max(1, V(0)) per step over 20 random runs".into(),
    ))
}

fn check_vdot_analytic(inputs: &VerifyInputs) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed ^ 0x7d07);
    let spec = ReferenceSpec::from_freq_hz(inputs.amplitude, 0.55, 0.0)?;
    let cfg = &inputs.id_cfg;
    let spec_c = spec;
    let cfg_c = cfg.clone();
    let sys = FnOde::new(3, move |t, s, ds| {
        let state = IdentifierState {
            r_hat: Vector::from(vec![s[0], s[1]]),
            theta_hat: s[2],
        };
        let (rd, td) = crate::identifier::identifier_rhs(&state, &spec_c.state(t), &cfg_c);
        ds[0] = rd[0];
        ds[1] = rd[1];
        ds[2] = td;
    });

    let h_fd = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = rng.gen_range(0.0..10.0);
        let state = Vector::from(vec![
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-20.0..-0.1),
        ]);
        let v_of = |s: &Vector, at: f64| {
            let id = IdentifierState {
                r_hat: Vector::from(vec![s[0], s[1]]),
                theta_hat: s[2],
            };
            lyapunov_value(&ErrorCoordinates::of(&id, &spec, at), cfg)
        };
        let fwd = rk4_step(&sys, t, &state, h_fd)?;
        // Backward flow for the central difference: integrate the
        // time-reversed field s(t) -> s(t - h).
        let neg = FnOde::new(3, |tt: f64, s: &Vector, ds: &mut Vector| {
            sys.rhs(2.0 * t - tt, s, ds);
            for i in 0..3 {
                ds[i] = -ds[i];
            }
        });
        let bwd = rk4_step(&neg, t, &state, h_fd)?;
        let v_plus = v_of(&fwd, t + h_fd);
        let v_minus = v_of(&bwd, t - h_fd);
        let fd = (v_plus - v_minus) / (2.0 * h_fd);

        let id = IdentifierState {
            r_hat: Vector::from(vec![state[0], state[1]]),
            theta_hat: state[2],
        };
        let err = ErrorCoordinates::of(&id, &spec, t);
        let q = cfg.q();
        let dr = &err.delta_r;
        let analytic = -0.5
            * (dr[0] * (q[(0, 0)] * dr[0] + q[(0, 1)] * dr[1])
                + dr[1] * (q[(1, 0)] * dr[0] + q[(1, 1)] * dr[1]));
        let rel = (fd - analytic).abs() / analytic.abs().max(1e-6);
        worst = worst.max(rel);
    }
    Ok(Outcome::gated(
        worst < 1e-4,
        format!("max relative defect between dV/dt and -dr'Q dr/2 = {worst:.2e}"),
        "< 1e-4 at 100 random states".into(),
    ))
}

/// The 5 x 4 x 2 convergence grid shared by the acceptance suite.
pub const GRID_FREQS_HZ: [f64; 5] = [0.1, 0.25, 0.55, 1.0, 2.05];
pub const GRID_DETUNE_RATIOS: [f64; 4] = [0.25, 0.5, 2.0, 4.0];
pub const GRID_PHASES: [f64; 2] = [0.0, std::f64::consts::PI / 3.0];

/// One cell of the convergence grid: simulate with the measurement gains,
/// fit the stacked error decay after one period, and report the terminal
/// relative frequency error at 60 s.
pub fn convergence_cell(
    rate_cfg: &IdentifierConfig,
    amplitude: f64,
    f0: f64,
    detune_ratio: f64,
    phase: f64,
) -> Result<(f64, f64, f64)> {
    let spec = ReferenceSpec::from_freq_hz(amplitude, f0, phase)?;
    let init = IdentifierState::detuned(spec.omega0() * detune_ratio)?;
    let run = simulate_identifier(&spec, rate_cfg, &init, 60.0, 1e-3)?;
    let err = truncate_at_floor(&run.trajectory.channel("err_norm")?, RATE_FIT_FLOOR);
    let (rate, r2) = fit_exponential_rate(&err, spec.period())?;
    let om = run.trajectory.channel("omega_hat")?;
    let end_rel = (om.last().expect("nonempty").1 - spec.omega0()).abs() / spec.omega0();
    Ok((rate, r2, end_rel))
}

fn check_convergence_grid(inputs: &VerifyInputs) -> Result<Outcome> {
    let mut min_rate = f64::INFINITY;
    let mut min_r2 = f64::INFINITY;
    let mut max_end = 0.0f64;
    for f0 in GRID_FREQS_HZ {
        for ratio in GRID_DETUNE_RATIOS {
            for phase in GRID_PHASES {
                let (rate, r2, end) =
                    convergence_cell(&inputs.rate_cfg, inputs.amplitude, f0, ratio, phase)?;
                min_rate = min_rate.min(rate);
                min_r2 = min_r2.min(r2);
                max_end = max_end.max(end);
            }
        }
    }
    Ok(Outcome::gated(
        min_rate > 0.0 && min_r2 > 0.95 && max_end < 1e-3,
        format!(
            "min rate {min_rate:.3}/s, min R^2 {min_r2:.4}, max |omega error|(60s) {max_end:.2e} x omega0"
        ),
        "rate > 0, R^2 > 0.95, terminal error < 1e-3 x omega0 in all 40 cells".into(),
    ))
}

fn check_equilibrium(inputs: &VerifyInputs) -> Result<Outcome> {
    let spec = ReferenceSpec::from_freq_hz(inputs.amplitude, 0.55, 0.0)?;
    let init = IdentifierState::locked_on(&spec);
    let run = simulate_identifier(&spec, &inputs.id_cfg, &init, 20.0, 1e-3)?;
    let dr1 = run.trajectory.channel("dr1")?;
    let dr2 = run.trajectory.channel("dr2")?;
    let dth = run.trajectory.channel("dtheta")?;
    let mut worst = 0.0f64;
    for i in 0..dr1.len() {
        worst = worst.max((dr1[i].1.powi(2) + dr2[i].1.powi(2)).sqrt() + dth[i].1.abs());
    }
    Ok(Outcome::gated(
        worst < 1e-7,
        format!("max |dr| + |dtheta| from locked-on start = {worst:.2e}"),
        "< 1e-7 over 20 s".into(),
    ))
}

fn check_projection_steady(inputs: &VerifyInputs) -> Result<Outcome> {
    // Default gains plus a deliberately underdamped config that does
    // produce projection events during the transient.
    let wiggly = IdentifierConfig::new(
        Mat::diag(&[-5.0, -5.0]),
        Mat::identity(2),
        300.0,
        inputs.id_cfg.theta_cap(),
    )?;
    let mut detail = Vec::new();
    let mut ok = true;
    for (label, cfg) in [("default", &inputs.id_cfg), ("underdamped", &wiggly)] {
        let spec = ReferenceSpec::from_freq_hz(inputs.amplitude, 0.55, 0.0)?;
        let init = IdentifierState::detuned(spec.omega0() * 0.1)?;
        let run = simulate_identifier(&spec, cfg, &init, 30.0, 1e-3)?;
        let settle = run.settling_time(spec.omega0(), 0.01);
        let late = match settle {
            Some(ts) => run.projection_events.iter().filter(|&&t| t > ts).count(),
            None => {
                ok = false;
                0
            }
        };
        if late > 0 {
            ok = false;
        }
        detail.push(format!(
            "{label}: {} events, {} after settling at {settle:?}",
            run.projection_events.len(),
            late
        ));
    }
    Ok(Outcome::gated(
        ok,
        detail.join("; "),
        "no projection events after the frequency estimate settles".into(),
    ))
}

fn check_gamma_sweep(inputs: &VerifyInputs) -> Result<Outcome> {
    // Tunability of the adaptation speed: measured rates for gamma,
    // 2 gamma, 4 gamma. Reported, not asserted.
    let base = &inputs.rate_cfg;
    let spec = ReferenceSpec::from_freq_hz(inputs.amplitude, 0.55, 0.0)?;
    let mut rates = Vec::new();
    for mult in [1.0, 2.0, 4.0] {
        let cfg = IdentifierConfig::new(
            base.a_m().clone(),
            base.q().clone(),
            base.gamma() * mult,
            base.theta_cap(),
        )?;
        let init = IdentifierState::detuned(spec.omega0() * 0.5)?;
        let run = simulate_identifier(&spec, &cfg, &init, 40.0, 1e-3)?;
        let dth: Vec<(f64, f64)> = run
            .trajectory
            .channel("dtheta")?
            .into_iter()
            .map(|(t, v)| (t, v.abs()))
            .collect();
        let data = truncate_at_floor(&dth, RATE_FIT_FLOOR);
        let (rate, _) = fit_exponential_rate(&data, spec.period())?;
        rates.push(rate);
    }
    Ok(Outcome::info(format!(
        "|dtheta| decay rates for gamma x {{1, 2, 4}}: {rates:.3?} (first transition {})",
        if rates[1] >= rates[0] {
            "non-decreasing"
        } else {
            "decreasing"
        }
    )))
}

// ---------------------------------------------------------------------
// loop checks
// ---------------------------------------------------------------------

fn check_pade_allpass(inputs: &VerifyInputs) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for tau in [0.01, 0.1, 0.3] {
        for i in 0..50 {
            let omega = (1e-2f64.ln() + (1e3f64.ln() - 1e-2f64.ln()) * i as f64 / 49.0).exp();
            let g = delay_frequency_response(tau, omega)?;
            worst = worst.max((g.norm() - 1.0).abs());
        }
    }
    let _ = inputs;
    Ok(Outcome::gated(
        worst < 1e-12,
        format!("max | |H| - 1 | = {worst:.2e}"),
        "< 1e-12 over 50 log-spaced frequencies x 3 delays".into(),
    ))
}

fn check_pade_phase(_inputs: &VerifyInputs) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for tau in [0.01, 0.1, 0.3] {
        for i in 0..50 {
            let omega = (1e-2f64.ln() + (1e3f64.ln() - 1e-2f64.ln()) * i as f64 / 49.0).exp();
            let wt = omega * tau;
            if wt > 1.0 {
                continue;
            }
            let g = delay_frequency_response(tau, omega)?;
            worst = worst.max((g.arg() + wt).abs() / wt);
        }
    }
    Ok(Outcome::gated(
        worst < 0.01,
        format!("max relative phase defect vs -omega*tau = {worst:.2e}"),
        "< 1% for omega*tau <= 1".into(),
    ))
}

fn check_pade_realization(_inputs: &VerifyInputs) -> Result<Outcome> {
    // Drive the delay state block with a sinusoid and compare the
    // steady-state response against the analytic frequency response.
    let mut worst = 0.0f64;
    for tau in [0.01f64, 0.1, 0.3] {
        for freq_hz in [0.25f64, 1.0, 4.0] {
            let omega = 2.0 * std::f64::consts::PI * freq_hz;
            let period = 1.0 / freq_hz;
            // Step small relative to the block poles (|s| ~ 3.46/tau) and
            // an exact divisor of the period.
            let n_per_period = ((period * 500.0 / tau).ceil() as usize).max(2000);
            let h = period / n_per_period as f64;
            // The block's slowest pole is at -3/tau; 7 tau of settling
            // puts the transient below 1e-9 of the signal.
            let discard = ((7.0 * tau * freq_hz).ceil() as u32).max(1) + 1;
            let measure = 4u32;
            let t_end = (discard + measure) as f64 * period;

            let it = 1.0 / (tau * tau);
            let sys = FnOde::new(2, move |t, v, dv| {
                let u = (omega * t).sin();
                dv[0] = v[1];
                dv[1] = -12.0 * it * v[0] - 6.0 / tau * v[1] + it * u;
            });
            let raw = integrate(&sys, &Vector::zeros(2), 0.0, t_end, h)?;
            let mut traj = Trajectory::new(vec!["in".into(), "out".into()]);
            for i in 0..raw.len() {
                let t = raw.time(i);
                let v = raw.sample(i);
                let u = (omega * t).sin();
                let y = -12.0 * tau * v[1] + u;
                traj.push(t, Vector::from(vec![u, y]))?;
            }
            let point = extract_response(&traj, "in", "out", freq_hz, discard, measure)?;
            let analytic = delay_frequency_response(tau, omega)?;
            let gain_err = (point.gain - analytic.norm()).abs();
            let phase_err = wrap_phase(point.phase - analytic.arg()).abs();
            worst = worst.max(gain_err.max(phase_err));
        }
    }
    Ok(Outcome::gated(
        worst < 1e-6,
        format!("max |time-domain - analytic| over gain/phase = {worst:.2e}"),
        "< 1e-6 over 3 delays x 3 frequencies".into(),
    ))
}

fn check_frozen_omega(inputs: &VerifyInputs) -> Result<Outcome> {
    let w0 = 2.0 * std::f64::consts::PI * 0.55;
    let amp = inputs.amplitude;
    let input = move |t: f64| amp * (w0 * t).sin();
    let x0 = Vector::zeros(6);
    let (entry, _) = inputs.table.lookup(0.55);
    let params = inputs.global.with_oscillator(entry.k4, entry.zeta);
    let frozen = simulate_loop_frozen(&params, w0, input, &x0, 5.0, inputs.h)?;
    let scheduled = simulate_loop_scheduled(&params, |_| w0, input, &x0, 5.0, inputs.h)?;
    let mut worst = 0.0f64;
    for i in 0..frozen.len() {
        for j in 0..6 {
            worst = worst.max((frozen.sample(i)[j] - scheduled.sample(i)[j]).abs());
        }
    }
    Ok(Outcome::gated(
        worst <= 1e-12,
        format!("max state gap between frozen and scheduled paths = {worst:.2e}"),
        "<= 1e-12 with the schedule held at omega0".into(),
    ))
}

fn check_prop2_decay(inputs: &VerifyInputs) -> Result<Outcome> {
    let mut detail = Vec::new();
    let mut ok = true;
    for f0 in [0.1, 0.55, 2.05] {
        let spec = ReferenceSpec::from_freq_hz(inputs.amplitude, f0, 0.0)?;
        let (entry, _) = inputs.table.lookup(f0);
        let params = inputs.global.with_oscillator(entry.k4, entry.zeta);
        let init = IdentifierState::detuned(spec.omega0() * 0.5)?;
        let x0 = Vector::zeros(6);
        let run = simulate_coupled(
            &spec,
            &inputs.id_cfg,
            &init,
            &params,
            &x0,
            &x0,
            40.0,
            inputs.h,
        )?;
        let l = truncate_at_floor(&run.trajectory.channel("l_norm")?, RATE_FIT_FLOOR);
        let (rate, r2) = fit_exponential_rate(&l, spec.period())?;
        // Identifier decay over the same run, for the rate comparison.
        let r1 = run.trajectory.channel("r1")?;
        let r1h = run.trajectory.channel("r1_hat")?;
        let th = run.trajectory.channel("theta_hat")?;
        let err: Vec<(f64, f64)> = (0..r1.len())
            .map(|i| {
                let d1 = r1h[i].1 - r1[i].1;
                let dth = th[i].1 - spec.theta_true();
                (r1[i].0, (d1 * d1 + dth * dth).sqrt())
            })
            .collect();
        let id_rate = fit_exponential_rate(&truncate_at_floor(&err, RATE_FIT_FLOOR), spec.period())
            .map(|(r, _)| r)
            .unwrap_or(f64::NAN);
        let bound = 0.5 * (-run.hurwitz_margin).min(id_rate);
        if rate <= 0.0 || r2 <= 0.9 {
            ok = false;
        }
        detail.push(format!(
            "{f0} Hz: rate {rate:.3} (R^2 {r2:.3}), 0.5*min(loop margin, id rate) = {bound:.3}"
        ));
    }
    Ok(Outcome::gated(
        ok,
        detail.join("; "),
        "rate > 0 and R^2 > 0.9 at each frequency (rate-vs-bound logged)".into(),
    ))
}

fn check_lti_superposition(inputs: &VerifyInputs) -> Result<Outcome> {
    let (entry, _) = inputs.table.lookup(0.55);
    let params = inputs.global.with_oscillator(entry.k4, entry.zeta);
    let x0 = Vector::zeros(6);
    let run_for = |amp: f64| -> Result<Vec<(f64, f64)>> {
        let spec = ReferenceSpec::from_freq_hz(amp, 0.55, 0.0)?;
        let init = IdentifierState::detuned(spec.omega0() * 0.5)?;
        let run = simulate_coupled(
            &spec,
            &inputs.id_cfg,
            &init,
            &params,
            &x0,
            &x0,
            5.0,
            inputs.h,
        )?;
        run.trajectory.channel("y_c")
    };
    let base = run_for(inputs.amplitude)?;
    let doubled = run_for(2.0 * inputs.amplitude)?;
    let mut worst = 0.0f64;
    for (a, b) in base.iter().zip(&doubled) {
        worst = worst.max((2.0 * a.1 - b.1).abs());
    }
    Ok(Outcome::gated(
        worst < 1e-10,
        format!("max |2 y_c(A) - y_c(2A)| = {worst:.2e}"),
        "< 1e-10 pointwise".into(),
    ))
}

// ---------------------------------------------------------------------
// analysis checks
// ---------------------------------------------------------------------

fn check_amplitude_invariance(_inputs: &VerifyInputs) -> Result<Outcome> {
    let f = |t: f64| (2.0 * std::f64::consts::PI * 0.5 * t).sin();
    let g = |t: f64| 0.7 * (2.0 * std::f64::consts::PI * 0.5 * (t - 0.3)).sin();
    let build = |scale: f64| -> Result<Trajectory> {
        let mut traj = Trajectory::new(vec!["in".into(), "out".into()]);
        let h = 1e-3;
        let n = (10.0 / h) as usize;
        for k in 0..=n {
            let t = k as f64 * h;
            traj.push(t, Vector::from(vec![scale * f(t), scale * g(t)]))?;
        }
        Ok(traj)
    };
    let a = extract_response(&build(1.0)?, "in", "out", 0.5, 1, 4)?;
    let b = extract_response(&build(4.0)?, "in", "out", 0.5, 1, 4)?;
    let exact = a.gain == b.gain && a.phase == b.phase;
    Ok(Outcome::gated(
        exact,
        format!(
            "gain {} vs {}, phase {} vs {}",
            a.gain, b.gain, a.phase, b.phase
        ),
        "bit-identical response under power-of-two channel scaling".into(),
    ))
}

fn check_bode_vs_analytic(inputs: &VerifyInputs) -> Result<Outcome> {
    // Time-domain response of the ideal loop vs the resolvent.
    let f0 = 0.55;
    let spec = ReferenceSpec::from_freq_hz(inputs.amplitude, f0, 0.0)?;
    let (entry, _) = inputs.table.lookup(f0);
    let params = inputs.global.with_oscillator(entry.k4, entry.zeta);
    let init = IdentifierState::locked_on(&spec);
    let x0 = Vector::zeros(6);
    let discard = 14u32;
    let measure = 5u32;
    let t_end = (discard + measure) as f64 * spec.period();
    let run = simulate_coupled(
        &spec,
        &inputs.id_cfg,
        &init,
        &params,
        &x0,
        &x0,
        t_end,
        inputs.h,
    )?;
    let point = extract_response(&run.trajectory, "r1", "y_c", f0, discard, measure)?;
    let (gain, phase) = ideal_tracking_response(&spec, &params)?;
    let dg = (point.gain - gain).abs();
    let dp = wrap_phase(point.phase - phase).abs();
    Ok(Outcome::gated(
        dg < 1e-4 && dp < 1e-3,
        format!("gain defect {dg:.2e}, phase defect {dp:.2e} rad"),
        "gain within 1e-4 and phase within 1e-3 rad of the resolvent".into(),
    ))
}

fn check_phase_wrapping(_inputs: &VerifyInputs) -> Result<Outcome> {
    let pi = std::f64::consts::PI;
    let mut ok = true;
    let mut worst = 0.0f64;
    for i in -100..=100 {
        let x = i as f64 * 0.37;
        let w = wrap_phase(x);
        if !(w > -pi && w <= pi) {
            ok = false;
        }
        worst = worst.max((wrap_phase(x + 2.0 * pi) - w).abs());
    }
    if (wrap_phase(-pi) - pi).abs() > 1e-15 || (wrap_phase(pi) - pi).abs() > 1e-15 {
        ok = false;
    }
    Ok(Outcome::gated(
        ok && worst < 1e-9,
        format!("range respected; max 2pi-shift defect {worst:.2e}"),
        "wrapped phase in (-pi, pi], invariant under 2pi shifts".into(),
    ))
}

fn check_grid_refinement(inputs: &VerifyInputs) -> Result<Outcome> {
    let base = inputs.global;
    let coarse_k4 = [1.0, 4.0, 16.0, 64.0];
    let coarse_zeta = [0.0, 0.3, 0.6];
    let mut fine_k4 = coarse_k4.to_vec();
    fine_k4.extend([2.0, 8.0, 32.0]);
    fine_k4.sort_by(f64::total_cmp);
    let mut fine_zeta = coarse_zeta.to_vec();
    fine_zeta.extend([0.15, 0.45, 0.75]);
    fine_zeta.sort_by(f64::total_cmp);

    let target = FrequencyResponsePoint::new(0.85, 0.8, -0.9)?;
    let (_, _, coarse_loss) = fit_frequency_point(&target, &base, &coarse_k4, &coarse_zeta)?;
    let (_, _, fine_loss) = fit_frequency_point(&target, &base, &fine_k4, &fine_zeta)?;
    Ok(Outcome::gated(
        fine_loss <= coarse_loss,
        format!("coarse loss {coarse_loss:.3e}, refined loss {fine_loss:.3e}"),
        "loss non-increasing under grid refinement".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_selects_subset() {
        let inputs = VerifyInputs::default();
        let results = run_suite(&inputs, Some("pade-allpass"));
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].name, "pade-allpass");
        assert!(results[0].passed);
    }

    #[test]
    fn sigma_min_of_singular_shift_is_small() {
        // For an exact eigenvalue the shifted matrix is singular.
        let a = Mat::diag(&[-1.0, -2.0]);
        let s = sigma_min_shifted(&a, Complex64::new(-1.0, 0.0));
        assert!(s < 1e-12, "sigma_min = {s}");
        // A non-eigenvalue shift keeps it comfortably nonsingular.
        let s = sigma_min_shifted(&a, Complex64::new(0.5, 0.0));
        assert!(s > 0.1, "sigma_min = {s}");
    }

    #[test]
    fn quick_numeric_checks_pass() {
        let inputs = VerifyInputs::default();
        for name in [
            "rk4-order",
            "oscillator-energy",
            "reference-state-form",
            "reference-periodicity",
            "pade-phase",
            "analysis-phase-wrapping",
        ] {
            let results = run_suite(&inputs, Some(name));
            assert_eq!(results.len(), 1, "{name}");
            assert!(results[0].passed, "{name}: {}", results[0].measured);
        }
    }
}
