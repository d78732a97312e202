//! Frequency-response extraction from simulated trajectories, Bode sweeps
//! across stimulus frequencies, and per-frequency fitting of the resonator
//! parameters (k4, zeta) to gain/phase targets.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;

use crate::closed_loop::{loop_frequency_response, simulate_coupled, FrequencyTable, LoopParams};
use crate::error::{Error, Result};
use crate::identifier::{settling_time_of, IdentifierConfig, IdentifierState};
use crate::numcore::{Trajectory, Vector};
use crate::reference::ReferenceSpec;

/// Wrap an angle into (-pi, pi].
pub fn wrap_phase(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y - two_pi
    } else {
        y
    }
}

/// Truncate a decay trace at the first sample that falls below `floor`
/// after the trace's peak.
///
/// Fixed-step integration leaves a forced-error plateau (h^4-scaled) under
/// every converged trajectory; cutting the trace a few decades above it
/// keeps the plateau out of log-linear rate fits.
pub fn truncate_at_floor(data: &[(f64, f64)], floor: f64) -> Vec<(f64, f64)> {
    let peak = data
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map_or(0, |(i, _)| i);
    let mut out: Vec<(f64, f64)> = data[..peak].to_vec();
    for &(t, v) in &data[peak..] {
        if v < floor {
            break;
        }
        out.push((t, v));
    }
    out
}

/// Default truncation floor for rate fits: three decades above the worst
/// integration-noise plateau seen at h = 1e-3 on the systems simulated
/// here.
pub const RATE_FIT_FLOOR: f64 = 1e-9;

/// One gain/phase measurement at a stimulus frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyResponsePoint {
    pub freq_hz: f64,
    pub gain: f64,
    /// Wrapped to (-pi, pi].
    pub phase: f64,
}

impl FrequencyResponsePoint {
    pub fn new(freq_hz: f64, gain: f64, phase: f64) -> Result<Self> {
        if !gain.is_finite() || gain < 0.0 {
            return Err(Error::InvalidParams(format!(
                "gain must be finite and >= 0, got {gain}"
            )));
        }
        if freq_hz <= 0.0 || !freq_hz.is_finite() {
            return Err(Error::InvalidParams(format!(
                "freq_hz must be > 0, got {freq_hz}"
            )));
        }
        if !phase.is_finite() {
            return Err(Error::NonFinite {
                context: "response phase".into(),
            });
        }
        Ok(FrequencyResponsePoint {
            freq_hz,
            gain,
            phase: wrap_phase(phase),
        })
    }
}

/// Where a dataset came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceTag {
    Simulated,
    ExperimentalImport,
}

/// Ordered collection of response points.
#[derive(Clone, Debug)]
pub struct BodeDataset {
    points: Vec<FrequencyResponsePoint>,
    source: SourceTag,
}

impl BodeDataset {
    pub fn new(points: Vec<FrequencyResponsePoint>, source: SourceTag) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].freq_hz <= w[0].freq_hz {
                return Err(Error::InvalidParams(format!(
                    "dataset frequencies must be strictly increasing ({} after {})",
                    w[1].freq_hz, w[0].freq_hz
                )));
            }
        }
        Ok(BodeDataset { points, source })
    }

    pub fn points(&self) -> &[FrequencyResponsePoint] {
        &self.points
    }

    pub fn source(&self) -> SourceTag {
        self.source
    }

    /// Parse `freq_hz,gain,phase_rad` CSV; `#` starts a comment line.
    /// Errors carry 1-based line numbers.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut header_seen = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols.len() < 3
                    || cols[0] != "freq_hz"
                    || cols[1] != "gain"
                    || cols[2] != "phase_rad"
                {
                    return Err(Error::InvalidParams(format!(
                        "line {}: expected header 'freq_hz,gain,phase_rad', got '{line}'",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 3 {
                return Err(Error::InvalidParams(format!(
                    "line {}: expected 3 columns, got {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str, name: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidParams(format!("line {}: cannot parse {name} '{s}'", lineno + 1))
                })
            };
            let freq = parse(cols[0], "freq_hz")?;
            let gain = parse(cols[1], "gain")?;
            let phase = parse(cols[2], "phase_rad")?;
            points.push(
                FrequencyResponsePoint::new(freq, gain, phase)
                    .map_err(|e| Error::InvalidParams(format!("line {}: {e}", lineno + 1)))?,
            );
        }
        if !header_seen {
            return Err(Error::InvalidParams("empty CSV: missing header".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidParams("CSV contains no data rows".into()));
        }
        BodeDataset::new(points, SourceTag::ExperimentalImport)
    }
}

/// Single-bin Fourier projection of output/input channels at `freq_hz`
/// over a window of `measure_cycles` whole periods starting after
/// `discard_cycles` periods of transient.
///
/// Both channels are projected onto e^(-j 2 pi f t) with trapezoid
/// weights; over whole periods the projection of the conjugate-frequency
/// component cancels, so the coefficient ratio is the transfer estimate.
/// Window endpoints snap to the sample grid.
#[allow(clippy::needless_range_loop)]
pub fn extract_response(
    traj: &Trajectory,
    input_channel: &str,
    output_channel: &str,
    freq_hz: f64,
    discard_cycles: u32,
    measure_cycles: u32,
) -> Result<FrequencyResponsePoint> {
    if freq_hz <= 0.0 || !freq_hz.is_finite() {
        return Err(Error::InvalidParams(format!(
            "freq_hz must be > 0, got {freq_hz}"
        )));
    }
    if measure_cycles == 0 {
        return Err(Error::InvalidParams("measure_cycles must be >= 1".into()));
    }
    let in_idx = traj
        .channel_index(input_channel)
        .ok_or_else(|| Error::InvalidParams(format!("unknown channel '{input_channel}'")))?;
    let out_idx = traj
        .channel_index(output_channel)
        .ok_or_else(|| Error::InvalidParams(format!("unknown channel '{output_channel}'")))?;

    let period = 1.0 / freq_hz;
    let t0 = traj.time(0);
    let need = (discard_cycles + measure_cycles) as f64 * period;
    let have = traj.duration();
    if have + 1e-9 < need {
        return Err(Error::WindowTooShort {
            need_s: need,
            have_s: have,
        });
    }

    let t_start = t0 + discard_cycles as f64 * period;
    let t_end = t_start + measure_cycles as f64 * period;
    let times = traj.times();
    let k0 = times.partition_point(|&t| t < t_start - 1e-12);
    let k1 = times
        .partition_point(|&t| t < t_end - 1e-12)
        .min(traj.len() - 1);
    if k1 <= k0 + 2 {
        return Err(Error::WindowTooShort {
            need_s: need,
            have_s: have,
        });
    }

    let omega = 2.0 * std::f64::consts::PI * freq_hz;
    let mut c_in = Complex64::new(0.0, 0.0);
    let mut c_out = Complex64::new(0.0, 0.0);
    let mut prev_w: Option<(Complex64, Complex64, f64)> = None;
    for k in k0..=k1 {
        let t = times[k];
        let e = Complex64::from_polar(1.0, -omega * t);
        let wi = e * traj.sample(k)[in_idx];
        let wo = e * traj.sample(k)[out_idx];
        if let Some((pi, po, pt)) = prev_w {
            let dt = t - pt;
            c_in += (pi + wi) * (0.5 * dt);
            c_out += (po + wo) * (0.5 * dt);
        }
        prev_w = Some((wi, wo, t));
    }

    if c_in.norm() < 1e-12 {
        return Err(Error::ZeroInput);
    }
    let ratio = c_out / c_in;
    FrequencyResponsePoint::new(freq_hz, ratio.norm(), ratio.arg())
}

/// Simulation settings for Bode sweeps.
#[derive(Clone, Copy, Debug)]
pub struct SweepSettings {
    /// Integration step.
    pub h: f64,
    /// Whole periods measured after the transient discard.
    pub measure_cycles: u32,
    /// Lower bound on the discarded transient, in stimulus periods.
    pub min_discard_cycles: u32,
    /// The discard window is at least this multiple of the measured
    /// identifier settling time.
    pub settle_factor: f64,
    /// Initial frequency estimate as a fraction of the true frequency.
    pub omega_hat0_ratio: f64,
    /// Worker-thread cap; 0 means available parallelism.
    pub threads: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            h: 1e-3,
            measure_cycles: 5,
            min_discard_cycles: 3,
            settle_factor: 3.0,
            omega_hat0_ratio: 0.5,
            threads: 0,
        }
    }
}

/// Outcome for one sweep frequency.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub freq_hz: f64,
    pub point: std::result::Result<FrequencyResponsePoint, Error>,
    pub k4: f64,
    pub zeta: f64,
    /// Discarded transient, in cycles, actually used.
    pub discard_cycles: u32,
    /// Measured identifier settling time, when it settled.
    pub settle_s: Option<f64>,
}

/// Full sweep result: per-frequency rows (sorted by frequency) plus any
/// table-fallback warnings.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

impl SweepResult {
    /// Successful points as a dataset; errors are skipped.
    pub fn dataset(&self) -> Result<BodeDataset> {
        let points: Vec<FrequencyResponsePoint> = self
            .rows
            .iter()
            .filter_map(|r| r.point.as_ref().ok().copied())
            .collect();
        BodeDataset::new(points, SourceTag::Simulated)
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.point.is_ok())
    }
}

fn sweep_one(
    freq_hz: f64,
    template: &ReferenceSpec,
    id_cfg: &IdentifierConfig,
    global: &LoopParams,
    table: &FrequencyTable,
    s: &SweepSettings,
) -> (SweepRow, Option<String>) {
    let (entry, exact) = table.lookup(freq_hz);
    let warning = if exact {
        None
    } else {
        Some(format!(
            "no table entry at {freq_hz} Hz; using nearest entry at {} Hz",
            entry.freq_hz
        ))
    };
    let params = global.with_oscillator(entry.k4, entry.zeta);
    let mut row = SweepRow {
        freq_hz,
        point: Err(Error::InvalidParams("not run".into())),
        k4: entry.k4,
        zeta: entry.zeta,
        discard_cycles: s.min_discard_cycles,
        settle_s: None,
    };

    let result = (|| -> Result<FrequencyResponsePoint> {
        let spec = ReferenceSpec::from_freq_hz(template.amplitude(), freq_hz, template.phase())?;
        let period = spec.period();
        let init = IdentifierState::detuned(spec.omega0() * s.omega_hat0_ratio)?;
        let x0 = Vector::zeros(6);

        let mut discard = s.min_discard_cycles;
        // Two passes at most: measure the settle on the first run, then
        // extend the horizon if 3x settle needs a longer discard.
        for _pass in 0..2 {
            let t_end = (discard + s.measure_cycles) as f64 * period;
            let run = simulate_coupled(&spec, id_cfg, &init, &params, &x0, &x0, t_end, s.h)?;
            let settle = settling_time_of(&run.trajectory, spec.omega0(), 0.01);
            row.settle_s = settle;
            let needed_cycles = match settle {
                Some(ts) => {
                    ((s.settle_factor * ts / period).ceil() as u32).max(s.min_discard_cycles)
                }
                // Never settled within this horizon: stretch the discard.
                None => discard.max(s.min_discard_cycles) * 2,
            };
            if needed_cycles <= discard {
                row.discard_cycles = discard;
                return extract_response(
                    &run.trajectory,
                    "r1",
                    "y",
                    freq_hz,
                    discard,
                    s.measure_cycles,
                );
            }
            discard = needed_cycles;
        }
        // Final attempt with the stretched discard.
        let t_end = (discard + s.measure_cycles) as f64 * period;
        let run = simulate_coupled(&spec, id_cfg, &init, &params, &x0, &x0, t_end, s.h)?;
        row.settle_s = settling_time_of(&run.trajectory, spec.omega0(), 0.01);
        row.discard_cycles = discard;
        extract_response(
            &run.trajectory,
            "r1",
            "y",
            freq_hz,
            discard,
            s.measure_cycles,
        )
    })();

    row.point = result;
    (row, warning)
}

/// Run the coupled simulation at each frequency and extract the
/// stimulus -> plant-output response. Frequencies are processed
/// concurrently (bounded by `settings.threads`); results are ordered by
/// frequency regardless of scheduling.
pub fn bode_sweep(
    freqs_hz: &[f64],
    template: &ReferenceSpec,
    id_cfg: &IdentifierConfig,
    global: &LoopParams,
    table: &FrequencyTable,
    settings: &SweepSettings,
) -> Result<SweepResult> {
    if freqs_hz.is_empty() {
        return Err(Error::InvalidParams(
            "bode sweep needs at least one frequency".into(),
        ));
    }
    if freqs_hz.iter().any(|f| *f <= 0.0 || !f.is_finite()) {
        return Err(Error::InvalidParams("sweep frequencies must be > 0".into()));
    }
    let mut sorted: Vec<f64> = freqs_hz.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let n = sorted.len();
    let workers = if settings.threads == 0 {
        std::thread::available_parallelism().map_or(1, |p| p.get())
    } else {
        settings.threads
    }
    .min(n)
    .max(1);

    type Slot = Option<(SweepRow, Option<String>)>;
    let slots: Mutex<Vec<Slot>> = Mutex::new(vec![None; n]);
    let cursor = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = sweep_one(sorted[i], template, id_cfg, global, table, settings);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });

    let mut rows = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for slot in slots.into_inner().unwrap() {
        let (row, warning) = slot.expect("all sweep slots filled");
        rows.push(row);
        warnings.extend(warning);
    }
    Ok(SweepResult { rows, warnings })
}

/// Default 25-point log-spaced k4 grid.
pub fn default_k4_grid() -> Vec<f64> {
    let (lo, hi) = (0.1f64, 100.0f64);
    let n = 25;
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default 25-point linear zeta grid in [0, 0.9].
pub fn default_zeta_grid() -> Vec<f64> {
    let n = 25;
    (0..n).map(|i| 0.9 * i as f64 / (n - 1) as f64).collect()
}

/// Exhaustive grid search for the resonator parameters best matching a
/// target gain/phase at its frequency.
///
/// Loss is (ln gain_model - ln gain_target)^2 + (phase delta)^2 with the
/// phase difference wrapped; the model response comes from the analytic
/// perfect-information loop. Ties break toward smaller zeta, then
/// smaller k4.
pub fn fit_frequency_point(
    target: &FrequencyResponsePoint,
    base: &LoopParams,
    k4_grid: &[f64],
    zeta_grid: &[f64],
) -> Result<(f64, f64, f64)> {
    if k4_grid.is_empty() || zeta_grid.is_empty() {
        return Err(Error::InvalidParams("fit grids must not be empty".into()));
    }
    if target.gain <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "target gain must be > 0 for log-gain fitting, got {}",
            target.gain
        )));
    }
    let omega = 2.0 * std::f64::consts::PI * target.freq_hz;
    let ln_gain_target = target.gain.ln();

    let mut best: Option<(f64, f64, f64)> = None; // (loss, zeta, k4)
    for &zeta in zeta_grid {
        for &k4 in k4_grid {
            let params = base.with_oscillator(k4, zeta);
            if params.validate().is_err() {
                continue;
            }
            let g = match loop_frequency_response(&params, omega) {
                Ok(g) => g,
                Err(Error::NotHurwitz { .. }) => continue,
                Err(e) => return Err(e),
            };
            let gain = g.norm();
            if gain <= 0.0 {
                continue;
            }
            let dg = gain.ln() - ln_gain_target;
            let dp = wrap_phase(g.arg() - target.phase);
            let loss = dg * dg + dp * dp;
            let candidate = (loss, zeta, k4);
            let better = match &best {
                None => true,
                Some(b) => (candidate.0, candidate.1, candidate.2) < (b.0, b.1, b.2),
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    match best {
        Some((loss, zeta, k4)) => Ok((k4, zeta, loss)),
        None => Err(Error::NoFeasiblePoint),
    }
}
