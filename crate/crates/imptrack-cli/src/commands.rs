//! The five subcommands: identify, track, bode, verify, fit.

use std::fs;
use std::path::Path;

use serde_json::json;

use imptrack::analysis::{
    bode_sweep, fit_frequency_point, truncate_at_floor, wrap_phase, BodeDataset,
    FrequencyResponsePoint, SweepSettings, RATE_FIT_FLOOR,
};
use imptrack::closed_loop::{ideal_tracking_response, simulate_coupled};
use imptrack::identifier::{simulate_identifier, IdentifierConfig};
use imptrack::numcore::fit_exponential_rate;
use imptrack::verify::{run_suite, CheckResult, VerifyInputs};
use imptrack::Error;

use crate::config::RunConfig;
use crate::emit::{csv_text, fmt_sig, round_sig, CsvField};

/// Command failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: msg.into(),
        }
    }

    pub fn from_lib(e: Error) -> Self {
        CliError {
            code: exit_class(&e),
            message: e.to_string(),
        }
    }
}

/// Exit-code contract: 0 ok, 2 config, 3 divergence, 4 stability
/// hypothesis violation, 1 anything else.
pub fn exit_class(e: &Error) -> u8 {
    match e {
        Error::InvalidParams(_) | Error::DimensionMismatch { .. } => 2,
        Error::IntegrationDiverged { .. } | Error::NonFinite { .. } => 3,
        Error::NotHurwitz { .. } | Error::NoFeasiblePoint => 4,
        _ => 1,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn json_pretty(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------
// identify
// ---------------------------------------------------------------------

pub fn cmd_identify(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let run = simulate_identifier(&cfg.spec, &cfg.id_cfg, &cfg.id_init, cfg.t_end, cfg.h).map_err(
        |e| {
            let err = CliError::from_lib(e.clone());
            if let Error::IntegrationDiverged { t } = e {
                let diag = json!({ "error": "IntegrationDiverged", "t": round_sig(t) });
                let _ = write_file(&out.join("identify_diagnostic.json"), &json_pretty(&diag));
            }
            err
        },
    )?;
    let traj = &run.trajectory;

    let channels = ["r1", "r2", "r1_hat", "r2_hat", "omega_hat", "v", "err_norm"];
    let idx: Vec<usize> = channels
        .iter()
        .map(|c| traj.channel_index(c).expect("identifier channel"))
        .collect();
    let rows: Vec<Vec<CsvField>> = (0..traj.len())
        .map(|i| {
            let mut row = vec![CsvField::Num(traj.time(i))];
            row.extend(idx.iter().map(|&j| CsvField::Num(traj.sample(i)[j])));
            row
        })
        .collect();
    let csv = csv_text(
        &[],
        &[
            "t",
            "r1",
            "r2",
            "r1_hat",
            "r2_hat",
            "omega_hat",
            "V",
            "norm_err",
        ],
        &rows,
    );
    write_file(&out.join("identify.csv"), &csv)?;

    let omega0 = cfg.spec.omega0();
    let period = cfg.spec.period();
    let settle = run.settling_time(omega0, 0.01);

    let mut warning: Option<String> = None;
    let mut rate_note: Option<String> = None;
    let mut rate = None;
    let mut r2 = None;
    if cfg.t_end < period {
        warning = Some(format!(
            "WindowTooShort: t_end = {} s is below one stimulus period ({} s); no rate fit",
            fmt_sig(cfg.t_end),
            fmt_sig(period)
        ));
    } else {
        let err = traj.channel("err_norm").map_err(CliError::from_lib)?;
        let data = truncate_at_floor(&err, RATE_FIT_FLOOR);
        match fit_exponential_rate(&data, period) {
            Ok((fitted, fitted_r2)) => {
                rate = Some(round_sig(fitted));
                r2 = Some(round_sig(fitted_r2));
            }
            Err(Error::TooFewSamples { .. }) => {
                rate_note =
                    Some("not applicable: error already at the numerical floor".to_string());
            }
            Err(e) => return Err(CliError::from_lib(e)),
        }
    }

    let summary = json!({
        "stimulus_freq_hz": round_sig(cfg.spec.freq_hz()),
        "settling_time_s": settle.map(round_sig),
        "settling_band": "1% of omega0",
        "fitted_rate_per_s": rate,
        "fit_r_squared": r2,
        "rate_note": rate_note,
        "projection_events": run.projection_events.len(),
        "warning": warning,
    });
    write_file(&out.join("identify_summary.json"), &json_pretty(&summary))?;

    println!(
        "identify: settling {} s, {} projection events -> {}",
        settle.map_or("n/a".to_string(), fmt_sig),
        run.projection_events.len(),
        out.join("identify.csv").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// track
// ---------------------------------------------------------------------

pub fn cmd_track(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.params_at_spec_freq();
    let run = simulate_coupled(
        &cfg.spec,
        &cfg.id_cfg,
        &cfg.id_init,
        &params,
        &cfg.x0,
        &cfg.xc0,
        cfg.t_end,
        cfg.h,
    )
    .map_err(|e| match e {
        Error::NotHurwitz { margin } => CliError {
            code: 4,
            message: format!(
                "stability hypothesis violated: max eigenvalue real part {} >= 0",
                fmt_sig(margin)
            ),
        },
        other => CliError::from_lib(other),
    })?;
    let traj = &run.trajectory;

    let channels = [
        "r1",
        "r1_hat",
        "y",
        "y_c",
        "e",
        "e_c",
        "l_norm",
        "omega_hat",
    ];
    let idx: Vec<usize> = channels
        .iter()
        .map(|c| traj.channel_index(c).expect("coupled channel"))
        .collect();
    let rows: Vec<Vec<CsvField>> = (0..traj.len())
        .map(|i| {
            let mut row = vec![CsvField::Num(traj.time(i))];
            row.extend(idx.iter().map(|&j| CsvField::Num(traj.sample(i)[j])));
            row
        })
        .collect();
    let csv = csv_text(
        &[],
        &[
            "t",
            "r1",
            "r1_hat",
            "y",
            "y_c",
            "e",
            "e_c",
            "l_norm",
            "omega_hat",
        ],
        &rows,
    );
    write_file(&out.join("track.csv"), &csv)?;

    let l = traj.channel("l_norm").map_err(CliError::from_lib)?;
    let data = truncate_at_floor(&l, RATE_FIT_FLOOR);
    let fit = fit_exponential_rate(&data, cfg.spec.period()).ok();
    let e_ch = traj.channel("e").map_err(CliError::from_lib)?;
    let ec_ch = traj.channel("e_c").map_err(CliError::from_lib)?;
    let terminal_gap = (e_ch.last().expect("samples").1 - ec_ch.last().expect("samples").1).abs();

    let summary = json!({
        "stimulus_freq_hz": round_sig(cfg.spec.freq_hz()),
        "k4": round_sig(params.k4),
        "zeta": round_sig(params.zeta),
        "hurwitz_margin": round_sig(run.hurwitz_margin),
        "l_norm_rate_per_s": fit.map(|(r, _)| round_sig(r)),
        "l_norm_fit_r_squared": fit.map(|(_, r2)| round_sig(r2)),
        "terminal_error_gap": round_sig(terminal_gap),
        "projection_events": run.projection_events.len(),
    });
    write_file(&out.join("track_summary.json"), &json_pretty(&summary))?;

    println!(
        "track: margin {}, |e - e_c|({} s) = {} -> {}",
        fmt_sig(run.hurwitz_margin),
        fmt_sig(cfg.t_end),
        fmt_sig(terminal_gap),
        out.join("track.csv").display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// bode
// ---------------------------------------------------------------------

struct BodeRender {
    csv: String,
    failures: Vec<(f64, Error)>,
}

fn render_bode(
    cfg: &RunConfig,
    settings: &SweepSettings,
    experimental: Option<&BodeDataset>,
) -> Result<BodeRender, CliError> {
    let sweep = bode_sweep(
        &cfg.bode_freqs_hz,
        &cfg.spec,
        &cfg.id_cfg,
        &cfg.global,
        &cfg.table,
        settings,
    )
    .map_err(CliError::from_lib)?;

    let mut header = vec![
        "freq_hz",
        "gain",
        "phase_rad",
        "gain_db",
        "phase_deg",
        "status",
    ];
    if experimental.is_some() {
        header.push("residual");
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for row in &sweep.rows {
        match &row.point {
            Ok(p) => {
                let mut cells = vec![
                    CsvField::Num(p.freq_hz),
                    CsvField::Num(p.gain),
                    CsvField::Num(p.phase),
                    CsvField::Num(20.0 * p.gain.log10()),
                    CsvField::Num(p.phase.to_degrees()),
                    CsvField::Text("ok".into()),
                ];
                if let Some(exp) = experimental {
                    let matched = exp
                        .points()
                        .iter()
                        .find(|q| (q.freq_hz - p.freq_hz).abs() <= 1e-6 * p.freq_hz);
                    cells.push(match matched {
                        Some(q) if q.gain > 0.0 && p.gain > 0.0 => {
                            let dg = p.gain.ln() - q.gain.ln();
                            let dp = wrap_phase(p.phase - q.phase);
                            CsvField::Num((dg * dg + dp * dp).sqrt())
                        }
                        _ => CsvField::Empty,
                    });
                }
                rows.push(cells);
            }
            Err(e) => {
                let mut cells = vec![
                    CsvField::Num(row.freq_hz),
                    CsvField::Empty,
                    CsvField::Empty,
                    CsvField::Empty,
                    CsvField::Empty,
                    CsvField::Text(format!("failed: {}", e.to_string().replace(',', ";"))),
                ];
                if experimental.is_some() {
                    cells.push(CsvField::Empty);
                }
                rows.push(cells);
                failures.push((row.freq_hz, e.clone()));
            }
        }
    }
    let comments: Vec<String> = sweep
        .warnings
        .iter()
        .map(|w| format!("warning: {w}"))
        .collect();
    Ok(BodeRender {
        csv: csv_text(&comments, &header, &rows),
        failures,
    })
}

fn sweep_threads() -> Result<usize, CliError> {
    match std::env::var("IMPTRACK_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v.parse::<usize>().map_err(|_| {
            CliError::config(format!("IMPTRACK_THREADS: expected an integer, got '{v}'"))
        }),
    }
}

pub fn cmd_bode(cfg: &RunConfig, out: &Path, data: Option<&Path>) -> Result<(), CliError> {
    let experimental = match data {
        None => None,
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            Some(BodeDataset::from_csv_str(&text).map_err(|e| CliError::config(e.to_string()))?)
        }
    };
    let settings = SweepSettings {
        threads: sweep_threads()?,
        ..cfg.sweep
    };
    let render = render_bode(cfg, &settings, experimental.as_ref())?;
    write_file(&out.join("bode.csv"), &render.csv)?;
    println!(
        "bode: {} frequencies, {} failed -> {}",
        cfg.bode_freqs_hz.len(),
        render.failures.len(),
        out.join("bode.csv").display()
    );
    if render.failures.is_empty() {
        Ok(())
    } else {
        let code = render
            .failures
            .iter()
            .map(|(_, e)| exit_class(e))
            .max()
            .unwrap_or(1);
        let detail: Vec<String> = render
            .failures
            .iter()
            .map(|(f, e)| format!("{f} Hz: {e}"))
            .collect();
        Err(CliError {
            code,
            message: detail.join("; "),
        })
    }
}

// ---------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------

fn check_csv_roundtrip_fit(cfg: &RunConfig) -> CheckResult {
    let start = std::time::Instant::now();
    let (passed, measured) = (|| -> Result<(bool, String), Error> {
        let (entry, _) = cfg.table.lookup(0.55);
        let params = cfg.global.with_oscillator(entry.k4, entry.zeta);
        let (gain, phase) = ideal_tracking_response(
            &imptrack::reference::ReferenceSpec::from_freq_hz(1.0, 0.55, 0.0)?,
            &params,
        )?;
        let csv = csv_text(
            &[],
            &["freq_hz", "gain", "phase_rad"],
            &[vec![
                CsvField::Num(0.55),
                CsvField::Num(gain),
                CsvField::Num(phase),
            ]],
        );
        let parsed = BodeDataset::from_csv_str(&csv)?;
        let target = parsed.points()[0];
        let k4_grid = [entry.k4 / 2.0, entry.k4, entry.k4 * 2.0];
        let zeta_grid = [0.0, entry.zeta, 0.8];
        let (k4, zeta, loss) = fit_frequency_point(&target, &cfg.global, &k4_grid, &zeta_grid)?;
        let ok = k4 == entry.k4 && zeta == entry.zeta && loss < 1e-20;
        Ok((
            ok,
            format!("recovered (k4, zeta) = ({k4}, {zeta}), loss {loss:.2e}"),
        ))
    })()
    .unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: "cli-csv-roundtrip-fit".into(),
        passed,
        informational: false,
        measured,
        threshold: "emitted CSV refits to its generating grid point with ~zero loss".into(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn check_output_determinism(cfg: &RunConfig) -> CheckResult {
    let start = std::time::Instant::now();
    let (passed, measured) = (|| -> Result<(bool, String), CliError> {
        // Two-frequency sweep rendered twice on two worker threads.
        let mut small = cfg.clone();
        small.bode_freqs_hz = vec![0.55, 1.0];
        let settings = SweepSettings {
            threads: 2,
            measure_cycles: 3,
            min_discard_cycles: 2,
            ..cfg.sweep
        };
        let a = render_bode(&small, &settings, None)?;
        let b = render_bode(&small, &settings, None)?;
        let ok = a.csv == b.csv && a.failures.len() == b.failures.len();
        Ok((
            ok,
            format!("two renders of {} bytes, byte-identical: {ok}", a.csv.len()),
        ))
    })()
    .unwrap_or_else(|e| (false, format!("error: {}", e.message)));
    CheckResult {
        name: "cli-output-determinism".into(),
        passed,
        informational: false,
        measured,
        threshold: "repeated runs emit byte-identical CSV".into(),
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn junit_xml(results: &[CheckResult]) -> String {
    let failures = results
        .iter()
        .filter(|r| !r.passed && !r.informational)
        .count();
    let mut xml = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    xml.push_str(&format!(
        "<testsuite name=\"imptrack-verify\" tests=\"{}\" failures=\"{failures}\">\n",
        results.len()
    ));
    let escape = |s: &str| {
        s.replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;")
            .replace('"', "&quot;")
    };
    for r in results {
        xml.push_str(&format!(
            "  <testcase name=\"{}\" time=\"{}\"",
            escape(&r.name),
            fmt_sig(r.seconds)
        ));
        if r.passed || r.informational {
            xml.push_str("/>\n");
        } else {
            xml.push_str(&format!(
                ">\n    <failure message=\"{}; want: {}\"/>\n  </testcase>\n",
                escape(&r.measured),
                escape(&r.threshold)
            ));
        }
    }
    xml.push_str("</testsuite>\n");
    xml
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path, filter: Option<&str>) -> Result<(), CliError> {
    let inputs = VerifyInputs {
        id_cfg: cfg.id_cfg.clone(),
        rate_cfg: IdentifierConfig::rate_measurement(),
        global: cfg.global,
        table: cfg.table.clone(),
        amplitude: cfg.spec.amplitude(),
        seed: cfg.seed,
        h: cfg.h,
    };
    let mut results = run_suite(&inputs, filter);
    for extra in [check_csv_roundtrip_fit(cfg), check_output_determinism(cfg)] {
        if filter.is_none_or(|f| extra.name.contains(f)) {
            results.push(extra);
        }
    }
    if results.is_empty() {
        return Err(CliError::config(format!(
            "verify filter '{}' matches no checks",
            filter.unwrap_or("")
        )));
    }

    for r in &results {
        let tag = if r.passed {
            if r.informational {
                "INFO"
            } else {
                "PASS"
            }
        } else {
            "FAIL"
        };
        println!("{tag} {} | {} | want: {}", r.name, r.measured, r.threshold);
    }

    let report = json!({
        "seed": cfg.seed,
        "checks": results.iter().map(|r| json!({
            "name": r.name,
            "passed": r.passed,
            "informational": r.informational,
            "measured": r.measured,
            "threshold": r.threshold,
            "seconds": round_sig(r.seconds),
        })).collect::<Vec<_>>(),
    });
    write_file(&out.join("verify_report.json"), &json_pretty(&report))?;
    write_file(&out.join("verify_report.xml"), &junit_xml(&results))?;

    let failed: Vec<&CheckResult> = results
        .iter()
        .filter(|r| !r.passed && !r.informational)
        .collect();
    if failed.is_empty() {
        println!("verify: all {} checks passed", results.len());
        Ok(())
    } else {
        Err(CliError {
            code: 1,
            message: format!(
                "{} of {} checks failed: {}",
                failed.len(),
                results.len(),
                failed
                    .iter()
                    .map(|r| r.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        })
    }
}

// ---------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------

pub fn cmd_fit(cfg: &RunConfig, out: &Path, data: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(data)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", data.display())))?;
    let dataset = BodeDataset::from_csv_str(&text).map_err(|e| CliError::config(e.to_string()))?;

    let mut points = serde_json::Map::new();
    let mut failures = Vec::new();
    for target in dataset.points() {
        let key = fmt_sig(target.freq_hz);
        match fit_point(cfg, target) {
            Ok((k4, zeta, loss)) => {
                points.insert(
                    key,
                    json!({
                        "k4": round_sig(k4),
                        "zeta": round_sig(zeta),
                        "loss": round_sig(loss),
                    }),
                );
            }
            Err(e) => {
                points.insert(key, json!({ "error": e.to_string() }));
                failures.push((target.freq_hz, e));
            }
        }
    }

    let table = json!({
        "global": {
            "k1": round_sig(cfg.global.k1),
            "k2": round_sig(cfg.global.k2),
            "k3": round_sig(cfg.global.k3),
            "tau": round_sig(cfg.global.tau),
        },
        "points": serde_json::Value::Object(points),
    });
    write_file(&out.join("fit_table.json"), &json_pretty(&table))?;
    println!(
        "fit: {} frequencies, {} infeasible -> {}",
        dataset.points().len(),
        failures.len(),
        out.join("fit_table.json").display()
    );

    if failures.is_empty() {
        Ok(())
    } else {
        let code = failures
            .iter()
            .map(|(_, e)| exit_class(e))
            .max()
            .unwrap_or(1);
        let detail: Vec<String> = failures
            .iter()
            .map(|(f, e)| format!("{f} Hz: {e}"))
            .collect();
        Err(CliError {
            code,
            message: detail.join("; "),
        })
    }
}

fn fit_point(cfg: &RunConfig, target: &FrequencyResponsePoint) -> Result<(f64, f64, f64), Error> {
    fit_frequency_point(target, &cfg.global, &cfg.k4_grid, &cfg.zeta_grid)
}
