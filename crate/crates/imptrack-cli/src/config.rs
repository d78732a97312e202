//! Run configuration: a TOML (or JSON) file with nested sections, fully
//! validated before any simulation starts. Every field has a frozen
//! default, so all commands run without a config file.

use std::path::Path;

use serde::Deserialize;

use imptrack::analysis::SweepSettings;
use imptrack::closed_loop::{FrequencyTable, LoopParams, OscillatorEntry};
use imptrack::identifier::{IdentifierConfig, IdentifierState};
use imptrack::numcore::{Mat, Vector};
use imptrack::reference::ReferenceSpec;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub reference: RawReference,
    #[serde(default)]
    pub identifier: RawIdentifier,
    #[serde(default, rename = "loop")]
    pub loop_section: RawLoop,
    #[serde(default)]
    pub simulation: RawSimulation,
    #[serde(default)]
    pub fit: RawFit,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawReference {
    pub amplitude: Option<f64>,
    pub freq_hz: Option<f64>,
    pub omega0: Option<f64>,
    pub phase: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawIdentifier {
    pub a_m: Option<[[f64; 2]; 2]>,
    pub q: Option<[[f64; 2]; 2]>,
    pub gamma: Option<f64>,
    pub theta_cap: Option<f64>,
    pub omega_hat0_hz: Option<f64>,
    pub r_hat0: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawLoop {
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub k3: Option<f64>,
    pub k4: Option<f64>,
    pub zeta: Option<f64>,
    pub tau: Option<f64>,
    pub table: Option<Vec<RawTableEntry>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTableEntry {
    pub freq_hz: f64,
    pub k4: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawSimulation {
    pub h: Option<f64>,
    pub t_end: Option<f64>,
    pub measure_cycles: Option<u32>,
    pub min_discard_cycles: Option<u32>,
    pub settle_factor: Option<f64>,
    pub omega_hat0_ratio: Option<f64>,
    pub bode_freqs_hz: Option<Vec<f64>>,
    pub x0: Option<[f64; 6]>,
    pub xc0: Option<[f64; 6]>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawFit {
    pub k4_grid: Option<Vec<f64>>,
    pub zeta_grid: Option<Vec<f64>>,
}

/// Fully validated configuration, in library types.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub spec: ReferenceSpec,
    pub id_cfg: IdentifierConfig,
    pub id_init: IdentifierState,
    pub global: LoopParams,
    pub table: FrequencyTable,
    pub h: f64,
    pub t_end: f64,
    pub sweep: SweepSettings,
    pub bode_freqs_hz: Vec<f64>,
    pub x0: Vector,
    pub xc0: Vector,
    pub k4_grid: Vec<f64>,
    pub zeta_grid: Vec<f64>,
}

fn field<T>(r: imptrack::Result<T>, path: &str) -> Result<T, ConfigError> {
    r.map_err(|e| ConfigError(format!("{path}: {e}")))
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let amplitude = raw.reference.amplitude.unwrap_or(1.0);
        let phase = raw.reference.phase.unwrap_or(0.0);
        let spec = match (raw.reference.freq_hz, raw.reference.omega0) {
            (Some(_), Some(_)) => {
                return Err(ConfigError(
                    "reference: set either freq_hz or omega0, not both".into(),
                ))
            }
            (None, Some(w)) => field(ReferenceSpec::new(amplitude, w, phase), "reference")?,
            (f, None) => field(
                ReferenceSpec::from_freq_hz(amplitude, f.unwrap_or(0.55), phase),
                "reference",
            )?,
        };

        let id_default = IdentifierConfig::default();
        let a_m = match raw.identifier.a_m {
            Some(rows) => field(Mat::from_rows(&[&rows[0], &rows[1]]), "identifier.a_m")?,
            None => id_default.a_m().clone(),
        };
        let q = match raw.identifier.q {
            Some(rows) => field(Mat::from_rows(&[&rows[0], &rows[1]]), "identifier.q")?,
            None => id_default.q().clone(),
        };
        let gamma = raw.identifier.gamma.unwrap_or(id_default.gamma());
        let theta_cap = raw.identifier.theta_cap.unwrap_or(id_default.theta_cap());
        let id_cfg = field(
            IdentifierConfig::new(a_m, q, gamma, theta_cap),
            "identifier",
        )?;

        let omega_hat0_hz = raw.identifier.omega_hat0_hz.unwrap_or(0.30);
        let r_hat0 = raw.identifier.r_hat0.unwrap_or([0.0, 0.0]);
        let mut id_init = field(
            IdentifierState::detuned(2.0 * std::f64::consts::PI * omega_hat0_hz),
            "identifier.omega_hat0_hz",
        )?;
        id_init.r_hat = field(Vector::from_slice(&r_hat0), "identifier.r_hat0")?;

        let dg = LoopParams::default_global();
        let global = LoopParams {
            k1: raw.loop_section.k1.unwrap_or(dg.k1),
            k2: raw.loop_section.k2.unwrap_or(dg.k2),
            k3: raw.loop_section.k3.unwrap_or(dg.k3),
            k4: raw.loop_section.k4.unwrap_or(dg.k4),
            zeta: raw.loop_section.zeta.unwrap_or(dg.zeta),
            tau: raw.loop_section.tau.unwrap_or(dg.tau),
        };
        field(global.validate(), "loop")?;

        let table = match &raw.loop_section.table {
            Some(entries) => {
                let entries: Vec<OscillatorEntry> = entries
                    .iter()
                    .map(|e| OscillatorEntry {
                        freq_hz: e.freq_hz,
                        k4: e.k4,
                        zeta: e.zeta,
                    })
                    .collect();
                field(FrequencyTable::new(entries), "loop.table")?
            }
            None => FrequencyTable::default(),
        };

        let h = raw.simulation.h.unwrap_or(1e-3);
        if !(h > 0.0 && h.is_finite()) {
            return Err(ConfigError(format!("simulation.h: must be > 0, got {h}")));
        }
        let t_end = raw.simulation.t_end.unwrap_or(20.0);
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(ConfigError(format!(
                "simulation.t_end: must be > 0, got {t_end}"
            )));
        }
        let defaults = SweepSettings::default();
        let sweep = SweepSettings {
            h,
            measure_cycles: raw
                .simulation
                .measure_cycles
                .unwrap_or(defaults.measure_cycles),
            min_discard_cycles: raw
                .simulation
                .min_discard_cycles
                .unwrap_or(defaults.min_discard_cycles),
            settle_factor: raw
                .simulation
                .settle_factor
                .unwrap_or(defaults.settle_factor),
            omega_hat0_ratio: raw
                .simulation
                .omega_hat0_ratio
                .unwrap_or(defaults.omega_hat0_ratio),
            threads: 0,
        };
        if sweep.measure_cycles == 0 {
            return Err(ConfigError(
                "simulation.measure_cycles: must be >= 1".into(),
            ));
        }
        if sweep.settle_factor.is_nan() || sweep.settle_factor <= 0.0 {
            return Err(ConfigError(format!(
                "simulation.settle_factor: must be > 0, got {}",
                sweep.settle_factor
            )));
        }
        if sweep.omega_hat0_ratio.is_nan() || sweep.omega_hat0_ratio <= 0.0 {
            return Err(ConfigError(format!(
                "simulation.omega_hat0_ratio: must be > 0, got {}",
                sweep.omega_hat0_ratio
            )));
        }

        let bode_freqs_hz = raw
            .simulation
            .bode_freqs_hz
            .clone()
            .unwrap_or_else(|| table.entries().iter().map(|e| e.freq_hz).collect());
        if bode_freqs_hz.iter().any(|f| *f <= 0.0 || !f.is_finite()) {
            return Err(ConfigError(
                "simulation.bode_freqs_hz: must all be > 0".into(),
            ));
        }

        let x0 = Vector::from(raw.simulation.x0.unwrap_or([0.0; 6]).to_vec());
        let xc0 = Vector::from(raw.simulation.xc0.unwrap_or([0.0; 6]).to_vec());
        if !x0.is_finite() || !xc0.is_finite() {
            return Err(ConfigError("simulation.x0/xc0: must be finite".into()));
        }

        let k4_grid = raw
            .fit
            .k4_grid
            .clone()
            .unwrap_or_else(imptrack::analysis::default_k4_grid);
        let zeta_grid = raw
            .fit
            .zeta_grid
            .clone()
            .unwrap_or_else(imptrack::analysis::default_zeta_grid);
        if k4_grid.is_empty() || zeta_grid.is_empty() {
            return Err(ConfigError(
                "fit.k4_grid / fit.zeta_grid: must not be empty".into(),
            ));
        }

        Ok(RunConfig {
            seed: raw.seed.unwrap_or(42),
            spec,
            id_cfg,
            id_init,
            global,
            table,
            h,
            t_end,
            sweep,
            bode_freqs_hz,
            x0,
            xc0,
            k4_grid,
            zeta_grid,
        })
    }

    /// Load from a TOML file (JSON accepted when the content starts
    /// with `{` or the extension is .json); absent path means defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let raw = match path {
            None => RawConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
                let is_json = p.extension().is_some_and(|e| e == "json")
                    || text.trim_start().starts_with('{');
                if is_json {
                    serde_json::from_str(&text)
                        .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
                } else {
                    toml::from_str(&text)
                        .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
                }
            }
        };
        RunConfig::from_raw(&raw)
    }

    /// Oscillator parameters for the configured stimulus frequency.
    pub fn params_at_spec_freq(&self) -> LoopParams {
        let (entry, _) = self.table.lookup(self.spec.freq_hz());
        self.global.with_oscillator(entry.k4, entry.zeta)
    }
}
