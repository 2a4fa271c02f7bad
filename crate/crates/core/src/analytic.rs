//! Expected-value slot recursion for barring-factor EAB and the QoS metrics
//! derived from it.
//!
//! Per slot `i` the engine tracks expected preamble attempts `E[A_i]`,
//! expected collided devices `E[C_i]`, expected successes
//! `E[S_i] = E[A_i] - E[C_i]` and the running total of successes `E[Υ_i]`.

use serde::{Deserialize, Serialize};

use crate::arrival::{access_intensities, ActivationProfile};
use crate::error::{Error, Result};

/// EAB-BF parameter pair: barring factor and fixed EAB backoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarringSetting {
    pub barring_factor: f64,
    pub backoff_ms: u32,
}

impl BarringSetting {
    pub fn new(barring_factor: f64, backoff_ms: u32) -> Result<Self> {
        let setting = Self {
            barring_factor,
            backoff_ms,
        };
        setting.validate()?;
        Ok(setting)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.barring_factor > 0.0 && self.barring_factor <= 1.0) {
            return Err(Error::domain(
                "barring_factor",
                format!("must lie in (0, 1], got {}", self.barring_factor),
            ));
        }
        if self.backoff_ms == 0 {
            return Err(Error::domain("backoff_ms", "must be positive"));
        }
        Ok(())
    }

    /// Short label such as `EAB(0.7,8000ms)`.
    pub fn label(&self) -> String {
        format!("EAB({},{}ms)", self.barring_factor, self.backoff_ms)
    }
}

impl std::fmt::Display for BarringSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Cell and RACH timing parameters shared by every setting under study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub profile: ActivationProfile,
    pub rach_period_ms: u32,
    pub collision_backoff_window_ms: u32,
    pub preamble_count: u32,
    pub mean_rach_time_ms: f64,
    pub collision_realization_ms: f64,
    pub mean_collision_backoff_ms: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::reference()
    }
}

impl Scenario {
    /// The reference cell: 30000 beta-activated devices, 54 preambles,
    /// 5 ms RACH period, 20 ms collision backoff window, 24 ms mean
    /// contention resolution and a 5 ms RAR-window wait to detect collisions.
    pub fn reference() -> Self {
        Self {
            profile: ActivationProfile::beta_traffic_model(),
            rach_period_ms: 5,
            collision_backoff_window_ms: 20,
            preamble_count: 54,
            mean_rach_time_ms: 24.0,
            collision_realization_ms: 5.0,
            mean_collision_backoff_ms: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if self.rach_period_ms == 0 {
            return Err(Error::domain("rach_period_ms", "must be positive"));
        }
        if self.collision_backoff_window_ms == 0 || !self.collision_backoff_window_ms.is_multiple_of(self.rach_period_ms) {
            return Err(Error::domain(
                "collision_backoff_window_ms",
                format!(
                    "{} is not a positive multiple of rach_period_ms ({})",
                    self.collision_backoff_window_ms, self.rach_period_ms
                ),
            ));
        }
        if self.preamble_count == 0 {
            return Err(Error::domain("preamble_count", "must be at least 1"));
        }
        for (field, v) in [
            ("mean_rach_time_ms", self.mean_rach_time_ms),
            ("collision_realization_ms", self.collision_realization_ms),
            ("mean_collision_backoff_ms", self.mean_collision_backoff_ms),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(field, format!("must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// EAB backoff expressed in RACH slots (`q`).
    pub fn backoff_slots(&self, setting: &BarringSetting) -> Result<usize> {
        if setting.backoff_ms == 0 || !setting.backoff_ms.is_multiple_of(self.rach_period_ms) {
            return Err(Error::domain(
                "backoff_ms",
                format!(
                    "{} is not a positive multiple of rach_period_ms ({})",
                    setting.backoff_ms, self.rach_period_ms
                ),
            ));
        }
        Ok((setting.backoff_ms / self.rach_period_ms) as usize)
    }

    /// Collision backoff window expressed in RACH slots.
    pub fn window_slots(&self) -> usize {
        (self.collision_backoff_window_ms / self.rach_period_ms) as usize
    }

    pub fn arrivals(&self) -> Result<Vec<f64>> {
        access_intensities(&self.profile, self.rach_period_ms as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRow {
    pub slot_index: usize,
    pub expected_attempts: f64,
    pub expected_collisions: f64,
    pub expected_successes: f64,
    pub cumulative_successes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTrace {
    pub population: u32,
    pub rows: Vec<SlotRow>,
}

impl SlotTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn total_attempts(&self) -> f64 {
        self.rows.iter().map(|r| r.expected_attempts).sum()
    }

    pub fn total_collisions(&self) -> f64 {
        self.rows.iter().map(|r| r.expected_collisions).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub success_probability: f64,
    pub collision_probability: f64,
    pub mean_attempts: f64,
    pub mean_access_delay_ms: f64,
    pub mean_cycle_energy_j: f64,
    pub slot_count: usize,
}

/// How the number of EAB retry generations `Q` is chosen for slot `i`.
///
/// `Claim` uses `Q = floor((i - 1) / q)` so that `Qq + 1 <= i <= (Q + 1)q`;
/// `Algorithm` uses `Q = floor(i / q)`. With an empty pre-history the extra
/// generation `Algorithm` adds at `i = Qq` only touches slot 0 and earlier,
/// so both give the same value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QIndexing {
    #[default]
    Claim,
    Algorithm,
}

impl QIndexing {
    fn generations(self, slot_index: usize, q: usize) -> usize {
        match self {
            QIndexing::Claim => (slot_index - 1) / q,
            QIndexing::Algorithm => slot_index / q,
        }
    }
}

/// How `E[A_i]` is evaluated inside [`run_recursion`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttemptEvaluation {
    /// O(1) per slot: keeps the expected backlog `E[Γ_i]` of devices taking
    /// the EAB test, `E[Γ_i] = F_i + B_i + (1 - P) E[Γ_{i-q}]`, and sets
    /// `E[A_i] = P E[Γ_i]`. Unrolling it gives the closed-form sum.
    #[default]
    Recurrence,
    /// Direct evaluation of the closed-form sum over EAB retry generations.
    /// O(i / q) per slot; for sensitivity checks only.
    Literal(QIndexing),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionOptions {
    pub evaluation: AttemptEvaluation,
    /// Stop once fewer than this many devices remain outstanding.
    pub residual_tolerance: f64,
    pub slot_cap: usize,
}

impl Default for RecursionOptions {
    fn default() -> Self {
        Self {
            evaluation: AttemptEvaluation::Recurrence,
            residual_tolerance: 0.5,
            slot_cap: 2_000_000,
        }
    }
}

fn at(values: &[f64], slot: isize) -> f64 {
    if slot < 1 {
        0.0
    } else {
        values.get(slot as usize - 1).copied().unwrap_or(0.0)
    }
}

/// Expected number of devices passing the EAB test and sending a preamble in
/// slot `slot_index`, evaluated as the closed-form sum over EAB retry
/// generations.
///
/// `arrivals[k]` and `collision_history[k]` hold `λ_{k+1}` and `E[C_{k+1}]`;
/// missing entries (slot 0 and earlier, or beyond the slices) count as zero.
pub fn expected_attempts(
    slot_index: usize,
    arrivals: &[f64],
    collision_history: &[f64],
    setting: &BarringSetting,
    scenario: &Scenario,
) -> Result<f64> {
    expected_attempts_with(slot_index, arrivals, collision_history, setting, scenario, QIndexing::Claim)
}

pub fn expected_attempts_with(
    slot_index: usize,
    arrivals: &[f64],
    collision_history: &[f64],
    setting: &BarringSetting,
    scenario: &Scenario,
    indexing: QIndexing,
) -> Result<f64> {
    if slot_index == 0 {
        return Err(Error::domain("slot_index", "slots are numbered from 1"));
    }
    scenario.validate()?;
    let q = scenario.backoff_slots(setting)?;
    let w = scenario.window_slots() as isize;
    let share = scenario.rach_period_ms as f64 / scenario.collision_backoff_window_ms as f64;
    let p = setting.barring_factor;
    let i = slot_index as isize;

    let mut total = 0.0;
    let mut weight = p;
    for j in 0..=indexing.generations(slot_index, q) {
        let base = i - (j * q) as isize;
        let returning: f64 = ((base - w)..base).map(|l| at(collision_history, l)).sum();
        total += weight * (at(arrivals, base) + share * returning);
        weight *= 1.0 - p;
    }
    Ok(total)
}

/// Expected collided devices among `expected_attempts` devices choosing
/// uniformly among `preamble_count` preambles, `a - a (1 - 1/K)^(a - 1)`,
/// clamped to `[0, a]`.
pub fn expected_collisions(expected_attempts: f64, preamble_count: u32) -> f64 {
    let a = expected_attempts;
    // The formula is non-positive for a <= 1.
    if a <= 1.0 || preamble_count == 0 {
        return 0.0;
    }
    if preamble_count == 1 {
        return a;
    }
    let keep = 1.0 - 1.0 / preamble_count as f64;
    (a - a * keep.powf(a - 1.0)).clamp(0.0, a)
}

/// Runs the recursion, handing each slot to `visit` as it is produced.
/// Returns the number of slots visited.
pub fn recurse_with<F>(
    setting: &BarringSetting,
    scenario: &Scenario,
    arrivals: &[f64],
    options: &RecursionOptions,
    mut visit: F,
) -> Result<usize>
where
    F: FnMut(&SlotRow),
{
    setting.validate()?;
    scenario.validate()?;
    let q = scenario.backoff_slots(setting)?;
    let w = scenario.window_slots();
    let share = scenario.rach_period_ms as f64 / scenario.collision_backoff_window_ms as f64;
    let p = setting.barring_factor;
    let k = scenario.preamble_count;
    let population = scenario.profile.population as f64;

    // Ring buffers indexed by slot modulo their length.
    let mut backlog = vec![0.0_f64; q];
    let mut recent_collisions = vec![0.0_f64; w];
    // Full collision history is kept only for the literal evaluation.
    let mut history = Vec::new();

    let mut cumulative = 0.0_f64;
    for i in 1..=options.slot_cap {
        let attempts = match options.evaluation {
            AttemptEvaluation::Recurrence => {
                let slot = i % q;
                let returning = share * recent_collisions.iter().sum::<f64>();
                let gamma = at(arrivals, i as isize) + returning + (1.0 - p) * backlog[slot];
                backlog[slot] = gamma;
                p * gamma
            }
            AttemptEvaluation::Literal(indexing) => {
                expected_attempts_with(i, arrivals, &history, setting, scenario, indexing)?
            }
        };
        let collisions = expected_collisions(attempts, k);
        let successes = attempts - collisions;
        cumulative += successes;

        recent_collisions[i % w] = collisions;
        if matches!(options.evaluation, AttemptEvaluation::Literal(_)) {
            history.push(collisions);
        }

        visit(&SlotRow {
            slot_index: i,
            expected_attempts: attempts,
            expected_collisions: collisions,
            expected_successes: successes,
            cumulative_successes: cumulative,
        });
        if population - cumulative < options.residual_tolerance {
            return Ok(i);
        }
    }
    Err(Error::NonConvergence {
        slots: options.slot_cap,
        residual: population - cumulative,
    })
}

/// Full slot trace for `setting` under `scenario` with default options.
pub fn run_recursion(setting: &BarringSetting, scenario: &Scenario) -> Result<SlotTrace> {
    run_recursion_with(setting, scenario, &RecursionOptions::default())
}

pub fn run_recursion_with(setting: &BarringSetting, scenario: &Scenario, options: &RecursionOptions) -> Result<SlotTrace> {
    let arrivals = scenario.arrivals()?;
    run_recursion_from_arrivals(setting, scenario, &arrivals, options)
}

/// Like [`run_recursion_with`] but with caller-supplied new-arrival
/// intensities (`arrivals[k]` is slot `k + 1`).
pub fn run_recursion_from_arrivals(
    setting: &BarringSetting,
    scenario: &Scenario,
    arrivals: &[f64],
    options: &RecursionOptions,
) -> Result<SlotTrace> {
    let mut rows = Vec::new();
    recurse_with(setting, scenario, arrivals, options, |row| rows.push(*row))?;
    Ok(SlotTrace {
        population: scenario.profile.population,
        rows,
    })
}

/// `1 - ΣE[C_i] / ΣE[A_i]` over the whole trace.
pub fn success_probability(trace: &SlotTrace) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    ratio_success(trace.total_attempts(), trace.total_collisions())
}

pub(crate) fn ratio_success(total_attempts: f64, total_collisions: f64) -> Result<f64> {
    if total_attempts <= 0.0 {
        return Err(Error::ZeroAttempts);
    }
    Ok((1.0 - total_collisions / total_attempts).clamp(0.0, 1.0))
}

/// Mean number of preamble transmissions per device, `1 / P_S`.
pub fn mean_attempts(success_probability: f64) -> Result<f64> {
    if !(success_probability > 0.0 && success_probability <= 1.0) {
        return Err(Error::domain(
            "success_probability",
            format!("must lie in (0, 1], got {success_probability}"),
        ));
    }
    Ok(1.0 / success_probability)
}

/// Mean activation-to-completion delay in milliseconds:
/// contention resolution, `(1 - P)/P` EAB backoffs per attempt, and a
/// detection wait plus mean collision backoff for every failed attempt.
pub fn mean_access_delay(setting: &BarringSetting, scenario: &Scenario, mean_attempts: f64) -> Result<f64> {
    setting.validate()?;
    if !(mean_attempts >= 1.0 && mean_attempts.is_finite()) {
        return Err(Error::domain(
            "mean_attempts",
            format!("must be at least 1, got {mean_attempts}"),
        ));
    }
    let p = setting.barring_factor;
    let eab_wait = (1.0 - p) / p * setting.backoff_ms as f64 * mean_attempts;
    let retries = (mean_attempts - 1.0) * (scenario.collision_realization_ms + scenario.mean_collision_backoff_ms);
    Ok(scenario.mean_rach_time_ms + eab_wait + retries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setting(p: f64, t: u32) -> BarringSetting {
        BarringSetting::new(p, t).unwrap()
    }

    /// Exact expected number of collided devices when `n` devices pick among
    /// `k` preambles, by enumerating all `k^n` choice vectors.
    fn enumerate_collided(n: u32, k: u32) -> f64 {
        let total = (k as u64).pow(n);
        let mut collided = 0u64;
        let mut counts = vec![0u32; k as usize];
        let mut choice = vec![0u32; n as usize];
        for code in 0..total {
            let mut c = code;
            counts.iter_mut().for_each(|x| *x = 0);
            for slot in choice.iter_mut() {
                *slot = (c % k as u64) as u32;
                c /= k as u64;
                counts[*slot as usize] += 1;
            }
            collided += choice.iter().filter(|&&p| counts[p as usize] > 1).count() as u64;
        }
        collided as f64 / total as f64
    }

    #[test]
    fn collisions_trivial_cases() {
        assert_eq!(expected_collisions(0.0, 54), 0.0);
        assert_eq!(expected_collisions(1.0, 54), 0.0);
        assert_eq!(expected_collisions(0.4, 54), 0.0);
        assert_eq!(expected_collisions(3.0, 1), 3.0);
    }

    #[test]
    fn two_devices_two_preambles_match_enumeration() {
        let oracle = enumerate_collided(2, 2);
        assert_relative_eq!(oracle, 1.0);
        assert_relative_eq!(expected_collisions(2.0, 2), oracle, max_relative = 1e-15);
    }

    #[test]
    fn collisions_are_bounded_and_monotone() {
        let mut prev = 0.0;
        for step in 0..2000 {
            let a = 1.0 + step as f64 * 0.1;
            let c = expected_collisions(a, 54);
            assert!((0.0..=a).contains(&c));
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn first_slot_is_barring_factor_times_arrivals() {
        let sc = Scenario::reference();
        let lam = [3.0, 5.0];
        let a1 = expected_attempts(1, &lam, &[], &setting(0.7, 8000), &sc).unwrap();
        assert_relative_eq!(a1, 2.1, max_relative = 1e-15);
    }

    #[test]
    fn full_barring_factor_drops_retry_generations() {
        let sc = Scenario::reference();
        let lam: Vec<f64> = (0..50).map(|i| 1.0 + i as f64).collect();
        let hist: Vec<f64> = (0..49).map(|i| 0.5 * i as f64).collect();
        let s = setting(1.0, 20);
        for i in [1usize, 4, 5, 9, 30, 50] {
            let got = expected_attempts(i, &lam, &hist, &s, &sc).unwrap();
            let returning: f64 = (i.saturating_sub(4).max(1)..i).map(|l| hist[l - 1]).sum();
            assert_relative_eq!(got, lam[i - 1] + 0.25 * returning, max_relative = 1e-14);
        }
    }

    #[test]
    fn attempts_reject_backoff_off_the_slot_grid() {
        let sc = Scenario::reference();
        let s = BarringSetting { barring_factor: 0.5, backoff_ms: 7 };
        assert!(expected_attempts(3, &[1.0], &[], &s, &sc).is_err());
        let bad = Scenario { collision_backoff_window_ms: 12, ..sc };
        assert!(expected_attempts(3, &[1.0], &[], &setting(0.5, 10), &bad).is_err());
    }

    #[test]
    fn q_indexing_variants_agree() {
        let sc = Scenario::reference();
        let lam = sc.arrivals().unwrap();
        let hist: Vec<f64> = (0..900).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let s = setting(0.4, 100);
        for i in [1usize, 19, 20, 21, 40, 41, 400, 900] {
            let a = expected_attempts_with(i, &lam, &hist, &s, &sc, QIndexing::Claim).unwrap();
            let b = expected_attempts_with(i, &lam, &hist, &s, &sc, QIndexing::Algorithm).unwrap();
            assert_eq!(a, b, "slot {i}");
        }
    }

    #[test]
    fn recurrence_matches_literal_sum() {
        let sc = Scenario::reference();
        let s = setting(0.3, 200);
        let fast = run_recursion(&s, &sc).unwrap();
        for indexing in [QIndexing::Claim, QIndexing::Algorithm] {
            let opts = RecursionOptions {
                evaluation: AttemptEvaluation::Literal(indexing),
                ..Default::default()
            };
            let slow = run_recursion_with(&s, &sc, &opts).unwrap();
            assert_eq!(fast.len(), slow.len());
            for (x, y) in fast.rows.iter().zip(&slow.rows) {
                assert_relative_eq!(x.expected_attempts, y.expected_attempts, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn single_device_single_slot_trace() {
        let sc = Scenario {
            profile: ActivationProfile::new(1.0, 1.0, 5.0, 1).unwrap(),
            ..Scenario::reference()
        };
        let trace = run_recursion(&setting(1.0, 5), &sc).unwrap();
        assert_eq!(trace.len(), 1);
        let row = trace.rows[0];
        assert_relative_eq!(row.expected_attempts, 1.0, max_relative = 1e-12);
        assert_eq!(row.expected_collisions, 0.0);
        assert_relative_eq!(row.cumulative_successes, 1.0, max_relative = 1e-12);
        assert_eq!(success_probability(&trace).unwrap(), 1.0);
    }

    #[test]
    fn explicit_arrivals_trace() {
        let sc = Scenario {
            profile: ActivationProfile::new(1.0, 1.0, 5.0, 1).unwrap(),
            ..Scenario::reference()
        };
        let trace =
            run_recursion_from_arrivals(&setting(1.0, 4000), &sc, &[1.0, 0.0, 0.0], &RecursionOptions::default()).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.rows[0].expected_collisions, 0.0);
    }

    #[test]
    fn slot_cap_reports_non_convergence() {
        let sc = Scenario::reference();
        let opts = RecursionOptions {
            slot_cap: 500,
            ..Default::default()
        };
        match run_recursion_with(&setting(0.5, 1000), &sc, &opts) {
            Err(Error::NonConvergence { slots, residual }) => {
                assert_eq!(slots, 500);
                assert!(residual > 0.5);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn success_probability_errors() {
        let empty = SlotTrace { population: 1, rows: vec![] };
        assert_eq!(success_probability(&empty), Err(Error::EmptyTrace));
        let zero = SlotTrace {
            population: 1,
            rows: vec![SlotRow {
                slot_index: 1,
                expected_attempts: 0.0,
                expected_collisions: 0.0,
                expected_successes: 0.0,
                cumulative_successes: 0.0,
            }],
        };
        assert_eq!(success_probability(&zero), Err(Error::ZeroAttempts));
    }

    #[test]
    fn mean_attempts_values() {
        assert_eq!(mean_attempts(1.0).unwrap(), 1.0);
        assert_eq!(mean_attempts(0.5).unwrap(), 2.0);
        assert_relative_eq!(mean_attempts(0.75).unwrap(), 4.0 / 3.0);
        assert!(mean_attempts(0.0).is_err());
    }

    #[test]
    fn delay_without_barring_or_retries_is_contention_time() {
        let sc = Scenario::reference();
        assert_eq!(mean_access_delay(&setting(1.0, 4000), &sc, 1.0).unwrap(), 24.0);
        // 24 + (0.3/0.7)·8000·2 + 1·15
        assert_relative_eq!(
            mean_access_delay(&setting(0.7, 8000), &sc, 2.0).unwrap(),
            24.0 + 0.3 / 0.7 * 16_000.0 + 15.0,
            max_relative = 1e-14
        );
        let zero = BarringSetting { barring_factor: 0.0, backoff_ms: 100 };
        assert!(mean_access_delay(&zero, &sc, 1.0).is_err());
    }

    #[test]
    fn barring_setting_validation() {
        assert!(BarringSetting::new(0.0, 100).is_err());
        assert!(BarringSetting::new(1.2, 100).is_err());
        assert!(BarringSetting::new(0.5, 0).is_err());
        assert!(BarringSetting::new(1.0, 5).is_ok());
    }
}
