//! Acceptance suite: one test per advertised guarantee, each printing a
//! PASS/FAIL line with the measured values (run with --nocapture to see
//! them all).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use imptrack::analysis::{
    bode_sweep, extract_response, fit_frequency_point, truncate_at_floor, FrequencyResponsePoint,
    SweepSettings, RATE_FIT_FLOOR,
};
use imptrack::closed_loop::{
    delay_frequency_response, ideal_tracking_response, simulate_coupled, simulate_loop_frozen,
    simulate_loop_scheduled, FrequencyTable, LoopParams,
};
use imptrack::identifier::{simulate_identifier, IdentifierConfig, IdentifierState};
use imptrack::numcore::{
    fit_exponential_rate, integrate, solve_lyapunov_2x2, symmetric_2x2_eigenvalues, FnOde, Mat,
    Trajectory, Vector,
};
use imptrack::reference::ReferenceSpec;
use imptrack::verify::{convergence_cell, GRID_DETUNE_RATIOS, GRID_FREQS_HZ, GRID_PHASES};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn report(n: u32, name: &str, passed: bool, detail: &str) {
    println!(
        "acceptance {n} ({name}): {} | {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "acceptance {n} ({name}) failed: {detail}");
}

/// Random 2x2 with eigenvalues drawn from [-10, -0.1] under a random
/// well-conditioned similarity transform.
fn random_hurwitz(rng: &mut ChaCha8Rng) -> Mat {
    let l1 = rng.gen_range(-10.0..-0.1);
    let l2 = rng.gen_range(-10.0..-0.1);
    let t = loop {
        let t = Mat::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        if (t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)]).abs() > 0.25 {
            break t;
        }
    };
    let det = t[(0, 0)] * t[(1, 1)] - t[(0, 1)] * t[(1, 0)];
    let t_inv = Mat::from_rows(&[
        &[t[(1, 1)] / det, -t[(0, 1)] / det],
        &[-t[(1, 0)] / det, t[(0, 0)] / det],
    ])
    .unwrap();
    t.matmul(&Mat::diag(&[l1, l2]))
        .unwrap()
        .matmul(&t_inv)
        .unwrap()
}

#[test]
fn acceptance_1_lyapunov_solver() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_residual = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for _ in 0..100 {
        let a = random_hurwitz(&mut rng);
        let g = Mat::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let q = g
            .transpose()
            .matmul(&g)
            .unwrap()
            .add(&Mat::diag(&[0.1, 0.1]))
            .unwrap();
        let p = solve_lyapunov_2x2(&a, &q).expect("solvable");
        let residual = a
            .transpose()
            .matmul(&p)
            .unwrap()
            .add(&p.matmul(&a).unwrap())
            .unwrap()
            .add(&q)
            .unwrap()
            .frobenius_norm();
        worst_residual = worst_residual.max(residual);
        min_eig = min_eig.min(symmetric_2x2_eigenvalues(&p).0);
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        "lyapunov-solver",
        worst_residual < 1e-10 && min_eig > 0.0 && elapsed < 1.0,
        &format!(
            "max residual {worst_residual:.2e} (< 1e-10), min P eigenvalue {min_eig:.2e} (> 0), {elapsed:.2}s (< 1s)"
        ),
    );
}

#[test]
fn acceptance_2_lyapunov_monotone_decrease() {
    let start = Instant::now();
    let cfg = IdentifierConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let f0 = rng.gen_range(0.1..2.05);
        let ratio = rng.gen_range(0.25f64.ln()..4.0f64.ln()).exp();
        let phase = rng.gen_range(0.0..TWO_PI);
        let spec = ReferenceSpec::from_freq_hz(1.0, f0, phase).unwrap();
        let init = IdentifierState::detuned(spec.omega0() * ratio).unwrap();
        let run = simulate_identifier(&spec, &cfg, &init, 30.0, 1e-3).unwrap();
        let v = run.trajectory.channel("v").unwrap();
        let tol = 1e-9 * v[0].1.max(1.0);
        for w in v.windows(2) {
            worst = worst.max((w[1].1 - w[0].1) / tol);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        2,
        "lyapunov-monotone",
        worst <= 1.0 && elapsed < 30.0,
        &format!("max per-step V increase {worst:.3} x tolerance (<= 1), {elapsed:.1}s (< 30s)"),
    );
}

#[test]
fn acceptance_3_identifier_exponential_convergence() {
    // Property check of the convergence claim across the grid, measured
    // with the deliberately slow rate-measurement gains so the log-linear
    // fit resolves several stimulus periods at every frequency.
    let start = Instant::now();
    let cfg = IdentifierConfig::rate_measurement();
    let mut min_rate = f64::INFINITY;
    let mut min_r2 = f64::INFINITY;
    let mut max_end = 0.0f64;
    for f0 in GRID_FREQS_HZ {
        for ratio in GRID_DETUNE_RATIOS {
            for phase in GRID_PHASES {
                let (rate, r2, end) = convergence_cell(&cfg, 1.0, f0, ratio, phase).unwrap();
                min_rate = min_rate.min(rate);
                min_r2 = min_r2.min(r2);
                max_end = max_end.max(end);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        3,
        "identifier-convergence-grid",
        min_rate > 0.0 && min_r2 > 0.95 && max_end < 1e-3 && elapsed < 120.0,
        &format!(
            "min rate {min_rate:.3}/s (> 0), min R^2 {min_r2:.4} (> 0.95), max terminal frequency error {max_end:.2e} x omega0 (< 1e-3), {elapsed:.1}s (< 120s)"
        ),
    );
}

#[test]
fn acceptance_4_settling_time_band() {
    let spec = ReferenceSpec::from_freq_hz(1.0, 0.55, 0.0).unwrap();
    let cfg = IdentifierConfig::default();
    let init = IdentifierState::detuned(TWO_PI * 0.30).unwrap();
    let run = simulate_identifier(&spec, &cfg, &init, 10.0, 1e-3).unwrap();
    let settle = run.settling_time(spec.omega0(), 0.01);
    let passed = settle.is_some_and(|s| (0.0..=3.0).contains(&s));
    report(
        4,
        "settling-time",
        passed,
        &format!(
            "1%-frequency-error settling time {:?} s (within [0, 3.0])",
            settle
        ),
    );
}

#[test]
fn acceptance_5_imp_perfect_tracking() {
    // Undamped resonator at the stimulus frequency, stabilizing gains:
    // the steady-state response is exactly unity.
    let params = LoopParams {
        k1: 20.0,
        k2: 20.0,
        k3: 1.0,
        k4: 20.0,
        zeta: 0.0,
        tau: 0.05,
    };
    let mut worst_gain = 0.0f64;
    let mut worst_phase = 0.0f64;
    for f in [0.1, 0.55, 1.0, 2.05] {
        let spec = ReferenceSpec::from_freq_hz(1.0, f, 0.0).unwrap();
        let (gain, phase) = ideal_tracking_response(&spec, &params).expect("stable loop");
        worst_gain = worst_gain.max((gain - 1.0).abs());
        worst_phase = worst_phase.max(phase.abs());
    }
    report(
        5,
        "imp-perfect-tracking",
        worst_gain < 1e-6 && worst_phase < 1e-6,
        &format!("max |gain - 1| = {worst_gain:.2e}, max |phase| = {worst_phase:.2e} (< 1e-6)"),
    );
}

#[test]
fn acceptance_6_discrepancy_decay() {
    let start = Instant::now();
    let id_cfg = IdentifierConfig::default();
    let global = LoopParams::default_global();
    let table = FrequencyTable::default();
    let mut passed = true;
    let mut detail = Vec::new();
    for f0 in [0.1, 0.55, 2.05] {
        let spec = ReferenceSpec::from_freq_hz(1.0, f0, 0.0).unwrap();
        let (entry, exact) = table.lookup(f0);
        assert!(exact);
        let params = global.with_oscillator(entry.k4, entry.zeta);
        let init = IdentifierState::detuned(spec.omega0() * 0.5).unwrap();
        let x0 = Vector::zeros(6);
        let run = simulate_coupled(&spec, &id_cfg, &init, &params, &x0, &x0, 40.0, 1e-3).unwrap();
        let l = truncate_at_floor(&run.trajectory.channel("l_norm").unwrap(), RATE_FIT_FLOOR);
        let (rate, r2) = fit_exponential_rate(&l, spec.period()).unwrap();
        let e = run.trajectory.channel("e").unwrap().last().unwrap().1;
        let ec = run.trajectory.channel("e_c").unwrap().last().unwrap().1;
        let gap = (e - ec).abs();
        let ok = rate > 0.0 && r2 > 0.9 && gap < 1e-6 * spec.amplitude();
        passed &= ok;
        detail.push(format!(
            "{f0} Hz: rate {rate:.3} R^2 {r2:.3} |e-e_c|(40s) {gap:.2e}"
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    passed &= elapsed < 60.0;
    detail.push(format!("{elapsed:.1}s (< 60s)"));
    report(6, "discrepancy-decay", passed, &detail.join("; "));
}

#[test]
fn acceptance_7_bode_trends() {
    let template = ReferenceSpec::from_freq_hz(1.0, 0.55, 0.0).unwrap();
    let table = FrequencyTable::default();
    let freqs: Vec<f64> = table.entries().iter().map(|e| e.freq_hz).collect();
    let sweep = bode_sweep(
        &freqs,
        &template,
        &IdentifierConfig::default(),
        &LoopParams::default_global(),
        &table,
        &SweepSettings::default(),
    )
    .unwrap();
    assert!(sweep.all_ok(), "sweep failures: {:?}", sweep.rows);
    let points: Vec<FrequencyResponsePoint> = sweep
        .rows
        .iter()
        .map(|r| *r.point.as_ref().unwrap())
        .collect();

    let low = points
        .iter()
        .find(|p| (p.freq_hz - 0.10).abs() < 1e-9)
        .unwrap();
    let band: Vec<&FrequencyResponsePoint> = points
        .iter()
        .filter(|p| p.freq_hz >= 0.55 - 1e-9 && p.freq_hz <= 2.05 + 1e-9)
        .collect();
    let gains_decrease = band.windows(2).all(|w| w[1].gain < w[0].gain);
    let lag_increases = band.windows(2).all(|w| -w[1].phase > -w[0].phase);
    let passed = (0.9..=1.1).contains(&low.gain)
        && low.phase.abs() < 0.15
        && gains_decrease
        && lag_increases;
    report(
        7,
        "bode-trends",
        passed,
        &format!(
            "gain(0.10 Hz) = {:.4} (in [0.9, 1.1]), |phase(0.10 Hz)| = {:.4} (< 0.15); gains {:?} strictly decreasing: {gains_decrease}; lag strictly increasing: {lag_increases}",
            low.gain,
            low.phase.abs(),
            band.iter().map(|p| (p.gain * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn acceptance_8_pade_fidelity() {
    // All-pass magnitude and small-lag phase accuracy over the grids.
    let mut worst_mag = 0.0f64;
    let mut worst_phase_rel = 0.0f64;
    for tau in [0.01, 0.1, 0.3] {
        for i in 0..50 {
            let omega = (1e-2f64.ln() + (1e3f64.ln() - 1e-2f64.ln()) * i as f64 / 49.0).exp();
            let g = delay_frequency_response(tau, omega).unwrap();
            worst_mag = worst_mag.max((g.norm() - 1.0).abs());
            let wt = omega * tau;
            if wt <= 1.0 {
                worst_phase_rel = worst_phase_rel.max((g.arg() + wt).abs() / wt);
            }
        }
    }

    // Time-domain realization against the analytic response.
    let mut worst_realization = 0.0f64;
    for tau in [0.01f64, 0.1, 0.3] {
        for freq_hz in [0.25f64, 1.0, 4.0] {
            let omega = TWO_PI * freq_hz;
            let period = 1.0 / freq_hz;
            let n_per_period = ((period * 500.0 / tau).ceil() as usize).max(2000);
            let h = period / n_per_period as f64;
            let discard = ((7.0 * tau * freq_hz).ceil() as u32).max(1) + 1;
            let measure = 4u32;
            let t_end = (discard + measure) as f64 * period;
            let it = 1.0 / (tau * tau);
            let sys = FnOde::new(2, move |t: f64, v: &Vector, dv: &mut Vector| {
                let u = (omega * t).sin();
                dv[0] = v[1];
                dv[1] = -12.0 * it * v[0] - 6.0 / tau * v[1] + it * u;
            });
            let raw = integrate(&sys, &Vector::zeros(2), 0.0, t_end, h).unwrap();
            let mut traj = Trajectory::new(vec!["in".into(), "out".into()]);
            for i in 0..raw.len() {
                let t = raw.time(i);
                let u = (omega * t).sin();
                let y = -12.0 * tau * raw.sample(i)[1] + u;
                traj.push(t, Vector::from(vec![u, y])).unwrap();
            }
            let point = extract_response(&traj, "in", "out", freq_hz, discard, measure).unwrap();
            let analytic = delay_frequency_response(tau, omega).unwrap();
            worst_realization = worst_realization
                .max((point.gain - analytic.norm()).abs())
                .max(imptrack::analysis::wrap_phase(point.phase - analytic.arg()).abs());
        }
    }
    report(
        8,
        "pade-fidelity",
        worst_mag < 1e-12 && worst_phase_rel < 0.01 && worst_realization < 1e-6,
        &format!(
            "max ||H|-1| = {worst_mag:.2e} (< 1e-12), max phase defect {worst_phase_rel:.2e} (< 1%), realization gap {worst_realization:.2e} (< 1e-6)"
        ),
    );
}

#[test]
fn acceptance_9_numerical_oracles() {
    // RK4 order via step halving.
    let sys = FnOde::new(1, |_t, x: &Vector, dx: &mut Vector| dx[0] = x[0]);
    let x0 = Vector::from_slice(&[1.0]).unwrap();
    let exact = 1.0f64.exp();
    let mut ratios_ok = true;
    let mut ratios = Vec::new();
    for h in [0.1, 0.05, 0.02] {
        let err = |step: f64| {
            let traj = integrate(&sys, &x0, 0.0, 1.0, step).unwrap();
            (traj.sample(traj.len() - 1)[0] - exact).abs()
        };
        let ratio = err(h) / err(h / 2.0);
        ratios_ok &= (14.0..=18.0).contains(&ratio);
        ratios.push(ratio);
    }

    // Frozen-frequency loop equals the scheduled loop.
    let w0 = TWO_PI * 0.55;
    let params = LoopParams::default_global();
    let input = move |t: f64| (w0 * t).sin();
    let zeros = Vector::zeros(6);
    let frozen = simulate_loop_frozen(&params, w0, input, &zeros, 5.0, 1e-3).unwrap();
    let scheduled = simulate_loop_scheduled(&params, |_| w0, input, &zeros, 5.0, 1e-3).unwrap();
    let mut loop_gap = 0.0f64;
    for i in 0..frozen.len() {
        for j in 0..6 {
            loop_gap = loop_gap.max((frozen.sample(i)[j] - scheduled.sample(i)[j]).abs());
        }
    }

    // Grid fit recovers planted parameters exactly.
    let base = LoopParams::default_global();
    let k4_grid = [2.0, 8.307, 32.0];
    let zeta_grid = [0.1, 0.34, 0.7];
    let planted = base.with_oscillator(8.307, 0.34);
    let g = imptrack::closed_loop::loop_frequency_response(&planted, TWO_PI * 0.55).unwrap();
    let target = FrequencyResponsePoint::new(0.55, g.norm(), g.arg()).unwrap();
    let (k4, zeta, loss) = fit_frequency_point(&target, &base, &k4_grid, &zeta_grid).unwrap();
    let fit_exact = k4 == 8.307 && zeta == 0.34 && loss < 1e-20;

    report(
        9,
        "numerical-oracles",
        ratios_ok && loop_gap <= 1e-12 && fit_exact,
        &format!(
            "RK4 ratios {ratios:.2?} (in [14, 18]); frozen-vs-scheduled gap {loop_gap:.2e} (<= 1e-12); fit recovered ({k4}, {zeta}) loss {loss:.2e}"
        ),
    );
}
