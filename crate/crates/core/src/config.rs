//! TOML run configuration.
//!
//! Every section is optional and every key falls back to the reference cell:
//!
//! ```toml
//! output_dir = "out"
//!
//! [scenario]
//! population = 30000
//! alpha = 3.0
//! beta = 4.0
//! activation_span_ms = 10000.0
//! rach_period_ms = 5
//! collision_backoff_window_ms = 20
//! preamble_count = 54
//! mean_rach_time_ms = 24.0
//! collision_realization_ms = 5.0
//! mean_collision_backoff_ms = 10.0
//!
//! [energy]
//! bandwidth_mhz = 5.0
//! mcs_rate = 0.93
//! data_symbols_per_prb = 120
//! prb_per_subframe = 25
//! rar_window_subframes = 5
//! fixed_power_w = 170.0
//! prb_transmit_power_w = 0.8
//! pa_efficiency = 0.3
//! success_rounding = "real"        # or "nearest"
//!
//! [eab]
//! settings = [[0.5, 16000], [0.7, 8000], [0.9, 4000], [0.08, 500]]
//! evaluation = "recurrence"        # or "literal"
//! q_indexing = "claim"             # or "algorithm"; literal evaluation only
//! residual_tolerance = 0.5
//! slot_cap = 2000000
//!
//! [grid]
//! barring_factor_step = 0.01
//! barring_factor_min = 0.01
//! barring_factor_max = 1.0
//! backoff_min_ms = 100
//! backoff_max_ms = 20000
//! backoff_step_ms = 100
//!
//! [sim]
//! replications = 500
//! master_seed = 1
//! rar_truncation = false
//! contention_timing = "mean"       # or "sampled"
//! slot_cap = 2000000
//!
//! [constraints]
//! p_min = [0.0, 0.01, ..., 1.0]    # default: 0 to 1 in steps of 0.01
//! t_max_ms = 50000.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{AttemptEvaluation, BarringSetting, QIndexing, RecursionOptions, Scenario};
use crate::arrival::ActivationProfile;
use crate::energy::{EnergyConfig, SuccessRounding};
use crate::error::{Error, Result};
use crate::optimizer::{ConstraintSpec, GridSpec};
use crate::sim::{ContentionTiming, SimOptions};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<PathBuf>,
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    energy: RawEnergy,
    #[serde(default)]
    eab: RawEab,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    constraints: RawConstraints,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    population: Option<u32>,
    alpha: Option<f64>,
    beta: Option<f64>,
    activation_span_ms: Option<f64>,
    rach_period_ms: Option<u32>,
    collision_backoff_window_ms: Option<u32>,
    preamble_count: Option<u32>,
    mean_rach_time_ms: Option<f64>,
    collision_realization_ms: Option<f64>,
    mean_collision_backoff_ms: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    bandwidth_mhz: Option<f64>,
    mcs_rate: Option<f64>,
    data_symbols_per_prb: Option<u32>,
    prb_per_subframe: Option<u32>,
    rar_window_subframes: Option<u32>,
    fixed_power_w: Option<f64>,
    prb_transmit_power_w: Option<f64>,
    pa_efficiency: Option<f64>,
    success_rounding: Option<SuccessRounding>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EvaluationMode {
    Recurrence,
    Literal,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEab {
    settings: Option<Vec<(f64, u32)>>,
    evaluation: Option<EvaluationMode>,
    q_indexing: Option<QIndexing>,
    residual_tolerance: Option<f64>,
    slot_cap: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    barring_factor_step: Option<f64>,
    barring_factor_min: Option<f64>,
    barring_factor_max: Option<f64>,
    backoff_min_ms: Option<u32>,
    backoff_max_ms: Option<u32>,
    backoff_step_ms: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    replications: Option<usize>,
    master_seed: Option<u64>,
    rar_truncation: Option<bool>,
    contention_timing: Option<ContentionTiming>,
    slot_cap: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    p_min: Option<Vec<f64>>,
    t_max_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub replications: usize,
    pub master_seed: u64,
    pub options: SimOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub energy: EnergyConfig,
    pub settings: Vec<BarringSetting>,
    pub recursion: RecursionOptions,
    pub grid: GridSpec,
    pub p_min_values: Vec<f64>,
    pub max_delay_ms: f64,
    pub sim: SimConfig,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

/// Success-probability floors 0.00, 0.01, ..., 1.00.
pub fn default_p_min_values() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

/// The four settings compared against simulation.
pub fn default_settings() -> Vec<BarringSetting> {
    [(0.5, 16_000), (0.7, 8_000), (0.9, 4_000), (0.08, 500)]
        .into_iter()
        .map(|(p, t)| BarringSetting {
            barring_factor: p,
            backoff_ms: t,
        })
        .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        parse_config("").expect("defaults are valid")
    }
}

fn in_section(section: &str, e: Error) -> Error {
    match e {
        Error::Domain { field, reason } if !field.contains('.') => Error::Domain {
            field: format!("{section}.{}", if field == "beta_shape" { "beta" } else { &field }),
            reason,
        },
        other => other,
    }
}

/// Parses and validates a TOML document; missing keys take reference values.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;

    let s = raw.scenario;
    let base = Scenario::reference();
    let bp = base.profile;
    let scenario = Scenario {
        profile: ActivationProfile {
            alpha: s.alpha.unwrap_or(bp.alpha),
            beta_shape: s.beta.unwrap_or(bp.beta_shape),
            activation_span_ms: s.activation_span_ms.unwrap_or(bp.activation_span_ms),
            population: s.population.unwrap_or(bp.population),
        },
        rach_period_ms: s.rach_period_ms.unwrap_or(base.rach_period_ms),
        collision_backoff_window_ms: s.collision_backoff_window_ms.unwrap_or(base.collision_backoff_window_ms),
        preamble_count: s.preamble_count.unwrap_or(base.preamble_count),
        mean_rach_time_ms: s.mean_rach_time_ms.unwrap_or(base.mean_rach_time_ms),
        collision_realization_ms: s.collision_realization_ms.unwrap_or(base.collision_realization_ms),
        mean_collision_backoff_ms: s.mean_collision_backoff_ms.unwrap_or(base.mean_collision_backoff_ms),
    };
    scenario.validate().map_err(|e| in_section("scenario", e))?;

    let en = raw.energy;
    let base = EnergyConfig::reference();
    let energy = EnergyConfig {
        bandwidth_mhz: en.bandwidth_mhz.unwrap_or(base.bandwidth_mhz),
        mcs_rate: en.mcs_rate.unwrap_or(base.mcs_rate),
        data_symbols_per_prb: en.data_symbols_per_prb.unwrap_or(base.data_symbols_per_prb),
        prb_per_subframe: en.prb_per_subframe.unwrap_or(base.prb_per_subframe),
        rar_window_subframes: en.rar_window_subframes.unwrap_or(base.rar_window_subframes),
        fixed_power_w: en.fixed_power_w.unwrap_or(base.fixed_power_w),
        prb_transmit_power_w: en.prb_transmit_power_w.unwrap_or(base.prb_transmit_power_w),
        pa_efficiency: en.pa_efficiency.unwrap_or(base.pa_efficiency),
        success_rounding: en.success_rounding.unwrap_or(base.success_rounding),
    };
    energy.validate().map_err(|e| in_section("energy", e))?;

    let eab = raw.eab;
    let settings = match eab.settings {
        Some(list) => list
            .into_iter()
            .map(|(p, t)| BarringSetting {
                barring_factor: p,
                backoff_ms: t,
            })
            .collect(),
        None => default_settings(),
    };
    if settings.is_empty() {
        return Err(Error::domain("eab.settings", "at least one setting is required"));
    }
    for (k, setting) in settings.iter().enumerate() {
        let check = setting.validate().and_then(|_| scenario.backoff_slots(setting).map(|_| ()));
        check.map_err(|e| in_section(&format!("eab.settings[{k}]"), e))?;
    }
    let defaults = RecursionOptions::default();
    let evaluation = match eab.evaluation.unwrap_or(EvaluationMode::Recurrence) {
        EvaluationMode::Recurrence => {
            if eab.q_indexing.is_some() {
                return Err(Error::domain("eab.q_indexing", "only applies with evaluation = \"literal\""));
            }
            AttemptEvaluation::Recurrence
        }
        EvaluationMode::Literal => AttemptEvaluation::Literal(eab.q_indexing.unwrap_or_default()),
    };
    let recursion = RecursionOptions {
        evaluation,
        residual_tolerance: eab.residual_tolerance.unwrap_or(defaults.residual_tolerance),
        slot_cap: eab.slot_cap.unwrap_or(defaults.slot_cap),
    };
    if !(recursion.residual_tolerance > 0.0 && recursion.residual_tolerance.is_finite()) {
        return Err(Error::domain("eab.residual_tolerance", "must be positive"));
    }
    if recursion.slot_cap == 0 {
        return Err(Error::domain("eab.slot_cap", "must be positive"));
    }

    let g = raw.grid;
    let base = GridSpec::reference();
    let grid = GridSpec {
        barring_factor_step: g.barring_factor_step.unwrap_or(base.barring_factor_step),
        barring_factor_range: [
            g.barring_factor_min.unwrap_or(base.barring_factor_range[0]),
            g.barring_factor_max.unwrap_or(base.barring_factor_range[1]),
        ],
        backoff_min_ms: g.backoff_min_ms.unwrap_or(base.backoff_min_ms),
        backoff_max_ms: g.backoff_max_ms.unwrap_or(base.backoff_max_ms),
        backoff_step_ms: g.backoff_step_ms.unwrap_or(base.backoff_step_ms),
    };
    grid.validate(&scenario)?;
    if grid.settings().is_empty() {
        return Err(Error::domain("grid.barring_factor_min", "grid contains no barring factor above 0"));
    }

    let sim_defaults = SimOptions::default();
    let sim = SimConfig {
        replications: raw.sim.replications.unwrap_or(500),
        master_seed: raw.sim.master_seed.unwrap_or(1),
        options: SimOptions {
            rar_window_truncation: raw.sim.rar_truncation.unwrap_or(sim_defaults.rar_window_truncation),
            contention_timing: raw.sim.contention_timing.unwrap_or(sim_defaults.contention_timing),
            slot_cap: raw.sim.slot_cap.unwrap_or(sim_defaults.slot_cap),
        },
    };
    if sim.replications == 0 {
        return Err(Error::domain("sim.replications", "must be at least 1"));
    }
    if sim.options.slot_cap == 0 {
        return Err(Error::domain("sim.slot_cap", "must be positive"));
    }

    let p_min_values = raw.constraints.p_min.unwrap_or_else(default_p_min_values);
    let max_delay_ms = raw.constraints.t_max_ms.unwrap_or(50_000.0);
    if p_min_values.is_empty() {
        return Err(Error::domain("constraints.p_min", "at least one value is required"));
    }
    if p_min_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("constraints.p_min", "values must be sorted ascending"));
    }
    for &p in &p_min_values {
        ConstraintSpec::new(p, max_delay_ms).map_err(|e| match e {
            Error::Domain { field, reason } => Error::Domain {
                field: if field == "max_delay_ms" { "constraints.t_max_ms".into() } else { "constraints.p_min".into() },
                reason,
            },
            other => other,
        })?;
    }

    Ok(RunConfig {
        scenario,
        energy,
        settings,
        recursion,
        grid,
        p_min_values,
        max_delay_ms,
        sim,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

impl RunConfig {
    pub fn constraints(&self) -> Vec<ConstraintSpec> {
        self.p_min_values
            .iter()
            .map(|&p| ConstraintSpec {
                min_success_probability: p,
                max_delay_ms: self.max_delay_ms,
            })
            .collect()
    }

    /// SHA-256 of the resolved configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).unwrap_or_else(|_| format!("{self:?}"));
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Creates the output directory, failing if it cannot be used.
    pub fn prepare_output_dir(&self) -> Result<()> {
        let dir = &self.output_dir;
        if dir.exists() && !dir.is_dir() {
            return Err(Error::Io(format!("{}: output path exists and is not a directory", dir.display())));
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
    }
}
