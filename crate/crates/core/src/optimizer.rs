//! Exhaustive grid search over barring settings for minimum RAR energy under
//! success-probability and access-delay constraints.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    mean_access_delay, mean_attempts, ratio_success, recurse_with, success_probability, BarringSetting, MetricsReport,
    RecursionOptions, Scenario, SlotTrace,
};
use crate::energy::{cycle_energy, slot_energy, EnergyConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub barring_factor_step: f64,
    pub barring_factor_range: [f64; 2],
    pub backoff_min_ms: u32,
    pub backoff_max_ms: u32,
    pub backoff_step_ms: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::reference()
    }
}

impl GridSpec {
    /// Barring factor 0.01 to 1 in steps of 0.01, backoff 100 ms to 20 s in
    /// steps of 100 ms.
    pub fn reference() -> Self {
        Self {
            barring_factor_step: 0.01,
            barring_factor_range: [0.01, 1.0],
            backoff_min_ms: 100,
            backoff_max_ms: 20_000,
            backoff_step_ms: 100,
        }
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let [lo, hi] = self.barring_factor_range;
        if !(self.barring_factor_step > 0.0 && self.barring_factor_step.is_finite()) {
            return Err(Error::domain("grid.barring_factor_step", "must be positive"));
        }
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::domain(
                "grid.barring_factor_range",
                format!("[{lo}, {hi}] must be a non-empty sub-range of [0, 1]"),
            ));
        }
        if self.backoff_step_ms == 0 {
            return Err(Error::domain("grid.backoff_step_ms", "must be positive"));
        }
        if self.backoff_min_ms == 0 || self.backoff_min_ms > self.backoff_max_ms {
            return Err(Error::domain(
                "grid.backoff_min_ms",
                format!(
                    "range [{}, {}] must be non-empty and start above 0",
                    self.backoff_min_ms, self.backoff_max_ms
                ),
            ));
        }
        let rp = scenario.rach_period_ms;
        for (field, v) in [
            ("grid.backoff_min_ms", self.backoff_min_ms),
            ("grid.backoff_step_ms", self.backoff_step_ms),
        ] {
            if !v.is_multiple_of(rp) {
                return Err(Error::domain(
                    field,
                    format!("{v} is not a multiple of rach_period_ms ({rp})"),
                ));
            }
        }
        Ok(())
    }

    /// Barring factors on the grid, rounded to 12 decimals and without 0.
    pub fn barring_factors(&self) -> Vec<f64> {
        let [lo, hi] = self.barring_factor_range;
        let step = self.barring_factor_step;
        let first = (lo / step - 1e-9).ceil() as i64;
        let last = (hi / step + 1e-9).floor() as i64;
        (first..=last)
            .map(|k| ((k as f64 * step) * 1e12).round() / 1e12)
            .filter(|&p| p > 0.0 && p <= 1.0)
            .collect()
    }

    pub fn backoffs_ms(&self) -> Vec<u32> {
        (self.backoff_min_ms..=self.backoff_max_ms)
            .step_by(self.backoff_step_ms as usize)
            .collect()
    }

    /// Grid points in barring-factor-major, backoff-minor order.
    pub fn settings(&self) -> Vec<BarringSetting> {
        let backoffs = self.backoffs_ms();
        self.barring_factors()
            .into_iter()
            .flat_map(|p| {
                backoffs.iter().map(move |&t| BarringSetting {
                    barring_factor: p,
                    backoff_ms: t,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub min_success_probability: f64,
    pub max_delay_ms: f64,
}

impl ConstraintSpec {
    pub fn new(min_success_probability: f64, max_delay_ms: f64) -> Result<Self> {
        let c = Self {
            min_success_probability,
            max_delay_ms,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_success_probability) {
            return Err(Error::domain(
                "min_success_probability",
                format!("must lie in [0, 1], got {}", self.min_success_probability),
            ));
        }
        if self.max_delay_ms.is_nan() || self.max_delay_ms <= 0.0 {
            return Err(Error::domain(
                "max_delay_ms",
                format!("must be positive, got {}", self.max_delay_ms),
            ));
        }
        Ok(())
    }

    pub fn admits(&self, report: &MetricsReport) -> bool {
        report.success_probability >= self.min_success_probability && report.mean_access_delay_ms <= self.max_delay_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimumRecord {
    pub barring_factor_hat: f64,
    pub backoff_hat_ms: u32,
    pub min_energy_j: f64,
    pub max_success_probability: f64,
    pub min_delay_ms: f64,
    pub constraint: ConstraintSpec,
    pub feasible: bool,
}

/// One sweep row; `metrics` holds the failure when the point did not evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub setting: BarringSetting,
    pub metrics: Result<MetricsReport>,
}

/// Analytic metrics of one setting: P_S, mean delay and cycle RAR energy.
/// Streams the recursion, so no slot trace is kept.
pub fn evaluate_setting(setting: &BarringSetting, scenario: &Scenario, energy: &EnergyConfig) -> Result<MetricsReport> {
    let arrivals = scenario.arrivals()?;
    evaluate_with_arrivals(setting, scenario, energy, &arrivals, &RecursionOptions::default())
}

pub fn evaluate_with_arrivals(
    setting: &BarringSetting,
    scenario: &Scenario,
    energy: &EnergyConfig,
    arrivals: &[f64],
    options: &RecursionOptions,
) -> Result<MetricsReport> {
    energy.validate()?;
    let mut total_attempts = 0.0;
    let mut total_collisions = 0.0;
    let mut cycle_energy = 0.0;
    let slot_count = recurse_with(setting, scenario, arrivals, options, |row| {
        total_attempts += row.expected_attempts;
        total_collisions += row.expected_collisions;
        cycle_energy += slot_energy(row.expected_successes, energy);
    })?;
    let success_probability = ratio_success(total_attempts, total_collisions)?;
    let attempts = mean_attempts(success_probability)?;
    Ok(MetricsReport {
        success_probability,
        collision_probability: 1.0 - success_probability,
        mean_attempts: attempts,
        mean_access_delay_ms: mean_access_delay(setting, scenario, attempts)?,
        mean_cycle_energy_j: cycle_energy,
        slot_count,
    })
}

/// Metrics of an already computed trace; identical to [`evaluate_setting`]
/// for the trace it would have produced.
pub fn metrics_from_trace(
    setting: &BarringSetting,
    scenario: &Scenario,
    energy: &EnergyConfig,
    trace: &SlotTrace,
) -> Result<MetricsReport> {
    energy.validate()?;
    let success_probability = success_probability(trace)?;
    let attempts = mean_attempts(success_probability)?;
    Ok(MetricsReport {
        success_probability,
        collision_probability: 1.0 - success_probability,
        mean_attempts: attempts,
        mean_access_delay_ms: mean_access_delay(setting, scenario, attempts)?,
        mean_cycle_energy_j: cycle_energy(trace, energy),
        slot_count: trace.len(),
    })
}

type CacheKey = (u64, u32, String);

/// Memoizes [`evaluate_setting`] by the exact bits of its inputs.
#[derive(Debug, Default)]
pub struct EvaluationCache {
    entries: Mutex<HashMap<CacheKey, Result<MetricsReport>>>,
}

impl EvaluationCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(setting: &BarringSetting, scenario: &Scenario, energy: &EnergyConfig) -> CacheKey {
        // Debug output of f64 round-trips, so it identifies the bits.
        (
            setting.barring_factor.to_bits(),
            setting.backoff_ms,
            format!("{scenario:?}|{energy:?}"),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn evaluate(&self, setting: &BarringSetting, scenario: &Scenario, energy: &EnergyConfig) -> Result<MetricsReport> {
        let key = Self::key(setting, scenario, energy);
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let value = evaluate_setting(setting, scenario, energy);
        self.entries.lock().expect("cache lock").insert(key, value.clone());
        value
    }
}

/// Evaluates every grid point in parallel; rows come back in grid order.
pub fn sweep_grid(grid: &GridSpec, scenario: &Scenario, energy: &EnergyConfig) -> Result<Vec<SweepRow>> {
    sweep_grid_with(grid, scenario, energy, &RecursionOptions::default())
}

pub fn sweep_grid_with(
    grid: &GridSpec,
    scenario: &Scenario,
    energy: &EnergyConfig,
    options: &RecursionOptions,
) -> Result<Vec<SweepRow>> {
    grid.validate(scenario)?;
    scenario.validate()?;
    energy.validate()?;
    let arrivals = scenario.arrivals()?;
    Ok(grid
        .settings()
        .into_par_iter()
        .map(|setting| SweepRow {
            setting,
            metrics: evaluate_with_arrivals(&setting, scenario, energy, &arrivals, options),
        })
        .collect())
}

fn record(setting: &BarringSetting, m: &MetricsReport, constraint: ConstraintSpec, feasible: bool) -> OptimumRecord {
    OptimumRecord {
        barring_factor_hat: setting.barring_factor,
        backoff_hat_ms: setting.backoff_ms,
        min_energy_j: m.mean_cycle_energy_j,
        max_success_probability: m.success_probability,
        min_delay_ms: m.mean_access_delay_ms,
        constraint,
        feasible,
    }
}

/// Minimum-energy row satisfying `constraint`. Ties go to higher P_S, then
/// lower delay, then smaller backoff, then smaller barring factor. With no
/// feasible row, returns the highest-P_S row (among rows meeting the delay
/// bound when any do) flagged infeasible.
pub fn minimize_energy(table: &[SweepRow], constraint: &ConstraintSpec) -> Result<OptimumRecord> {
    constraint.validate()?;
    let rows: Vec<(&BarringSetting, &MetricsReport)> =
        table.iter().filter_map(|r| r.metrics.as_ref().ok().map(|m| (&r.setting, m))).collect();
    if rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let best = rows.iter().filter(|(_, m)| constraint.admits(m)).min_by(|(sa, a), (sb, b)| {
        a.mean_cycle_energy_j
            .total_cmp(&b.mean_cycle_energy_j)
            .then(b.success_probability.total_cmp(&a.success_probability))
            .then(a.mean_access_delay_ms.total_cmp(&b.mean_access_delay_ms))
            .then(sa.backoff_ms.cmp(&sb.backoff_ms))
            .then(sa.barring_factor.total_cmp(&sb.barring_factor))
    });
    if let Some((s, m)) = best {
        return Ok(record(s, m, *constraint, true));
    }
    let within_delay: Vec<_> = rows
        .iter()
        .filter(|(_, m)| m.mean_access_delay_ms <= constraint.max_delay_ms)
        .collect();
    let pool: Vec<_> = if within_delay.is_empty() { rows.iter().collect() } else { within_delay };
    let (s, m) = pool
        .into_iter()
        .min_by(|(sa, a), (sb, b)| {
            b.success_probability
                .total_cmp(&a.success_probability)
                .then(a.mean_cycle_energy_j.total_cmp(&b.mean_cycle_energy_j))
                .then(a.mean_access_delay_ms.total_cmp(&b.mean_access_delay_ms))
                .then(sa.backoff_ms.cmp(&sb.backoff_ms))
                .then(sa.barring_factor.total_cmp(&sb.barring_factor))
        })
        .expect("non-empty pool");
    Ok(record(s, m, *constraint, false))
}

/// One [`minimize_energy`] record per success-probability floor.
pub fn tradeoff_curve(table: &[SweepRow], p_min_values: &[f64], max_delay_ms: f64) -> Result<Vec<OptimumRecord>> {
    if p_min_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("p_min", "values must be sorted ascending"));
    }
    p_min_values
        .iter()
        .map(|&p| minimize_energy(table, &ConstraintSpec::new(p, max_delay_ms)?))
        .collect()
}

/// The three 3GPP reference settings: EAB(0.5,16 s), EAB(0.7,8 s), EAB(0.9,4 s).
pub fn standard_baselines() -> [BarringSetting; 3] {
    [
        BarringSetting {
            barring_factor: 0.5,
            backoff_ms: 16_000,
        },
        BarringSetting {
            barring_factor: 0.7,
            backoff_ms: 8_000,
        },
        BarringSetting {
            barring_factor: 0.9,
            backoff_ms: 4_000,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub min_success_probability: f64,
    pub baseline: BarringSetting,
    pub success_probability_gain: f64,
    pub energy_gain: f64,
    pub delay_gain: f64,
    pub feasible: bool,
}

/// Relative gains of each record over each baseline.
pub fn gains_vs_baseline(records: &[OptimumRecord], baselines: &[(BarringSetting, MetricsReport)]) -> Vec<GainRow> {
    records
        .iter()
        .flat_map(|r| {
            baselines.iter().map(move |(setting, base)| GainRow {
                min_success_probability: r.constraint.min_success_probability,
                baseline: *setting,
                success_probability_gain: (r.max_success_probability - base.success_probability)
                    / base.success_probability,
                energy_gain: (base.mean_cycle_energy_j - r.min_energy_j) / base.mean_cycle_energy_j,
                delay_gain: (base.mean_access_delay_ms - r.min_delay_ms) / base.mean_access_delay_ms,
                feasible: r.feasible,
            })
        })
        .collect()
}
