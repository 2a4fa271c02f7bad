//! Monte Carlo simulation of EAB-BF gated random access.
//!
//! One access cycle draws every device's activation instant from the beta
//! profile and then steps RACH slot by slot. A device due in a slot takes the
//! EAB test; on failure it waits exactly `T_eab`, on success it sends a
//! uniformly chosen preamble. A preamble picked by a single device succeeds;
//! every device on a shared preamble backs off uniformly over `[0, W - 1]` ms
//! and takes the EAB test again at the slot boundary reached after the
//! backoff. The cycle ends once every device has succeeded.
//!
//! Randomness is split per device: replication `r` gets a seed derived from
//! the master seed, and device `d` draws from ChaCha stream `d + 1` of that
//! seed. Stream 0 serves cycle-level draws (RAR window truncation).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{BarringSetting, Scenario};
use crate::energy::{max_rars_per_subframe, rar_burst_energy, EnergyConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceState {
    PendingActivation,
    EabBackoff,
    CollisionBackoff,
    Ready,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRecord {
    pub activation_time_ms: f64,
    pub state: DeviceState,
    pub next_action_slot: u64,
    pub attempt_count: u32,
    pub eab_failures: u32,
    pub completion_time_ms: Option<f64>,
}

impl DeviceRecord {
    fn new(activation_time_ms: f64, first_slot: u64) -> Self {
        Self {
            activation_time_ms,
            state: DeviceState::PendingActivation,
            next_action_slot: first_slot,
            attempt_count: 0,
            eab_failures: 0,
            completion_time_ms: None,
        }
    }
}

/// How the contention-resolution time of the successful attempt is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentionTiming {
    /// Fixed at the scenario mean.
    #[default]
    Mean,
    /// Uniform over `[0, 2 * mean)`.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Demote successes beyond the RAR window capacity to collision backoff.
    pub rar_window_truncation: bool,
    pub contention_timing: ContentionTiming,
    pub slot_cap: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            rar_window_truncation: false,
            contention_timing: ContentionTiming::Mean,
            slot_cap: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub seed: u64,
    /// Per-slot counts; index `k` is slot `k + 1`.
    pub attempts: Vec<u32>,
    pub collisions: Vec<u32>,
    pub successes: Vec<u32>,
    /// Activation-to-completion delay of each device, by device index.
    pub delays_ms: Vec<f64>,
    pub total_attempts: u64,
    pub total_collisions: u64,
    /// Successful preambles pushed back because the RAR window was full.
    pub total_demoted: u64,
    pub eab_draws: u64,
    pub eab_passes: u64,
    /// Collision backoff draws, one bin per millisecond of the window.
    pub backoff_histogram: Vec<u64>,
    pub energy_j: f64,
}

impl CycleOutcome {
    pub fn slot_count(&self) -> usize {
        self.attempts.len()
    }

    pub fn total_successes(&self) -> u64 {
        self.successes.iter().map(|&s| s as u64).sum()
    }

    /// Fraction of preamble transmissions that succeeded.
    pub fn success_probability(&self) -> f64 {
        if self.total_attempts == 0 {
            return 0.0;
        }
        self.total_successes() as f64 / self.total_attempts as f64
    }

    pub fn mean_delay_ms(&self) -> f64 {
        if self.delays_ms.is_empty() {
            return 0.0;
        }
        self.delays_ms.iter().sum::<f64>() / self.delays_ms.len() as f64
    }
}

/// Seed of replication `index` under `master_seed`.
pub fn replication_seed(master_seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng.random()
}

fn device_rng(base: &ChaCha8Rng, device: usize) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(device as u64 + 1);
    rng
}

/// Simulates one access cycle.
pub fn run_cycle(
    setting: &BarringSetting,
    scenario: &Scenario,
    energy: &EnergyConfig,
    options: &SimOptions,
    seed: u64,
) -> Result<CycleOutcome> {
    setting.validate()?;
    scenario.validate()?;
    energy.validate()?;
    let q = scenario.backoff_slots(setting)? as u64;
    let period = scenario.rach_period_ms as f64;
    let window_ms = scenario.collision_backoff_window_ms;
    let preambles = scenario.preamble_count as usize;
    let profile = &scenario.profile;
    let population = profile.population as usize;
    let p_eab = setting.barring_factor;
    let rar_capacity = (energy.rar_window_subframes * max_rars_per_subframe(energy)) as usize;

    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut cycle_rng = base.clone();
    cycle_rng.set_stream(0);
    let activation = Beta::new(profile.alpha, profile.beta_shape)
        .map_err(|e| Error::domain("activation profile", e.to_string()))?;

    let mut rngs: Vec<ChaCha8Rng> = (0..population).map(|d| device_rng(&base, d)).collect();
    let mut devices: Vec<DeviceRecord> = rngs
        .iter_mut()
        .map(|rng| {
            let t = activation.sample(rng) * profile.activation_span_ms;
            let slot = ((t / period).ceil() as u64).max(1);
            DeviceRecord::new(t, slot)
        })
        .collect();

    // Every pending action lies fewer than `ring_len` slots ahead.
    let first_slots = devices.iter().map(|d| d.next_action_slot).max().unwrap_or(1);
    let window_slots = (window_ms as u64).div_ceil(scenario.rach_period_ms as u64);
    let ring_len = (first_slots.max(q).max(window_slots) + 1) as usize;
    let mut calendar: Vec<Vec<u32>> = vec![Vec::new(); ring_len];
    for (d, dev) in devices.iter().enumerate() {
        calendar[dev.next_action_slot as usize % ring_len].push(d as u32);
    }

    let mut out = CycleOutcome {
        seed,
        attempts: Vec::new(),
        collisions: Vec::new(),
        successes: Vec::new(),
        delays_ms: vec![0.0; population],
        total_attempts: 0,
        total_collisions: 0,
        total_demoted: 0,
        eab_draws: 0,
        eab_passes: 0,
        backoff_histogram: vec![0; window_ms as usize],
        energy_j: 0.0,
    };

    let mut preamble_load = vec![0u32; preambles];
    let mut senders: Vec<(u32, usize)> = Vec::new();
    let mut winners: Vec<u32> = Vec::new();
    let mut losers: Vec<u32> = Vec::new();
    let mut done = 0usize;
    let mut slot = 0u64;

    while done < population {
        slot += 1;
        if slot > options.slot_cap {
            return Err(Error::SlotCapReached {
                seed,
                slots: options.slot_cap,
                pending: (population - done) as u32,
            });
        }
        let bucket_idx = slot as usize % ring_len;
        let mut due = std::mem::take(&mut calendar[bucket_idx]);
        due.sort_unstable();

        senders.clear();
        for &d in &due {
            let dev = &mut devices[d as usize];
            debug_assert_eq!(dev.next_action_slot, slot);
            dev.state = DeviceState::Ready;
            let rng = &mut rngs[d as usize];
            out.eab_draws += 1;
            if rng.random::<f64>() < p_eab {
                out.eab_passes += 1;
                let preamble = rng.random_range(0..preambles);
                senders.push((d, preamble));
            } else {
                dev.eab_failures += 1;
                dev.state = DeviceState::EabBackoff;
                dev.next_action_slot = slot + q;
                calendar[(slot + q) as usize % ring_len].push(d);
            }
        }

        for &(_, p) in &senders {
            preamble_load[p] += 1;
        }
        winners.clear();
        losers.clear();
        for &(d, p) in &senders {
            devices[d as usize].attempt_count += 1;
            if preamble_load[p] == 1 {
                winners.push(d);
            } else {
                losers.push(d);
            }
        }
        for &(_, p) in &senders {
            preamble_load[p] = 0;
        }
        let collided = losers.len();

        if options.rar_window_truncation && winners.len() > rar_capacity {
            winners.shuffle(&mut cycle_rng);
            let excess = winners.split_off(rar_capacity);
            out.total_demoted += excess.len() as u64;
            losers.extend(excess);
            winners.sort_unstable();
        }

        for &d in &losers {
            let rng = &mut rngs[d as usize];
            let backoff_ms = rng.random_range(0..window_ms);
            out.backoff_histogram[backoff_ms as usize] += 1;
            let next = slot + 1 + (backoff_ms / scenario.rach_period_ms) as u64;
            let dev = &mut devices[d as usize];
            dev.state = DeviceState::CollisionBackoff;
            dev.next_action_slot = next;
            calendar[next as usize % ring_len].push(d);
        }

        let slot_time = slot as f64 * period;
        for &d in &winners {
            let contention = match options.contention_timing {
                ContentionTiming::Mean => scenario.mean_rach_time_ms,
                ContentionTiming::Sampled => rngs[d as usize].random::<f64>() * 2.0 * scenario.mean_rach_time_ms,
            };
            let dev = &mut devices[d as usize];
            let completion = slot_time + contention;
            dev.state = DeviceState::Done;
            dev.completion_time_ms = Some(completion);
            out.delays_ms[d as usize] = completion - dev.activation_time_ms;
        }
        done += winners.len();

        out.attempts.push(senders.len() as u32);
        out.collisions.push(collided as u32);
        out.successes.push(winners.len() as u32);
        out.total_attempts += senders.len() as u64;
        out.total_collisions += collided as u64;
        out.energy_j += rar_burst_energy(winners.len() as f64, energy);

        due.clear();
        calendar[bucket_idx] = due;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub slot: usize,
    pub mean_attempts: f64,
    pub mean_collisions: f64,
    pub mean_successes: f64,
    pub se_attempts: f64,
    pub se_collisions: f64,
    pub se_successes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub setting: BarringSetting,
    pub replications: usize,
    pub master_seed: u64,
    pub curve: Vec<CurvePoint>,
    pub success_probability: Estimate,
    pub mean_access_delay_ms: Estimate,
    pub cycle_energy_j: Estimate,
    pub total_attempts: u64,
    pub total_collisions: u64,
    pub total_demoted: u64,
    pub eab_draws: u64,
    pub eab_passes: u64,
    pub backoff_histogram: Vec<u64>,
}

#[derive(Default)]
struct Moments {
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn estimate(&self, n: usize) -> Estimate {
        let nf = n as f64;
        let mean = self.sum / nf;
        let std_error = if n > 1 {
            let var = ((self.sum_sq - self.sum * self.sum / nf) / (nf - 1.0)).max(0.0);
            (var / nf).sqrt()
        } else {
            0.0
        };
        Estimate { mean, std_error }
    }
}

#[derive(Default)]
struct Aggregate {
    attempts: Vec<Moments>,
    collisions: Vec<Moments>,
    successes: Vec<Moments>,
    success_probability: Moments,
    delay: Moments,
    energy: Moments,
    total_attempts: u64,
    total_collisions: u64,
    total_demoted: u64,
    eab_draws: u64,
    eab_passes: u64,
    backoff_histogram: Vec<u64>,
}

impl Aggregate {
    fn absorb(&mut self, o: &CycleOutcome) {
        let n = o.slot_count();
        if self.attempts.len() < n {
            self.attempts.resize_with(n, Moments::default);
            self.collisions.resize_with(n, Moments::default);
            self.successes.resize_with(n, Moments::default);
        }
        for k in 0..n {
            self.attempts[k].push(o.attempts[k] as f64);
            self.collisions[k].push(o.collisions[k] as f64);
            self.successes[k].push(o.successes[k] as f64);
        }
        self.success_probability.push(o.success_probability());
        self.delay.push(o.mean_delay_ms());
        self.energy.push(o.energy_j);
        self.total_attempts += o.total_attempts;
        self.total_collisions += o.total_collisions;
        self.total_demoted += o.total_demoted;
        self.eab_draws += o.eab_draws;
        self.eab_passes += o.eab_passes;
        if self.backoff_histogram.len() < o.backoff_histogram.len() {
            self.backoff_histogram.resize(o.backoff_histogram.len(), 0);
        }
        for (acc, &c) in self.backoff_histogram.iter_mut().zip(&o.backoff_histogram) {
            *acc += c;
        }
    }
}

/// Runs `replications` independent cycles and aggregates them in replication
/// order, so the report does not depend on how many threads ran them.
pub fn run_monte_carlo(
    setting: &BarringSetting,
    scenario: &Scenario,
    energy: &EnergyConfig,
    options: &SimOptions,
    replications: usize,
    master_seed: u64,
) -> Result<MonteCarloReport> {
    if replications == 0 {
        return Err(Error::domain("replications", "must be at least 1"));
    }
    let mut agg = Aggregate::default();
    let batch = (rayon::current_num_threads() * 4).max(1);
    let mut start = 0;
    while start < replications {
        let end = (start + batch).min(replications);
        let outcomes: Vec<Result<CycleOutcome>> = (start..end)
            .into_par_iter()
            .map(|r| run_cycle(setting, scenario, energy, options, replication_seed(master_seed, r as u64)))
            .collect();
        for outcome in outcomes {
            agg.absorb(&outcome?);
        }
        start = end;
    }

    let curve = (0..agg.attempts.len())
        .map(|k| {
            let a = agg.attempts[k].estimate(replications);
            let c = agg.collisions[k].estimate(replications);
            let s = agg.successes[k].estimate(replications);
            CurvePoint {
                slot: k + 1,
                mean_attempts: a.mean,
                mean_collisions: c.mean,
                mean_successes: s.mean,
                se_attempts: a.std_error,
                se_collisions: c.std_error,
                se_successes: s.std_error,
            }
        })
        .collect();

    Ok(MonteCarloReport {
        setting: *setting,
        replications,
        master_seed,
        curve,
        success_probability: agg.success_probability.estimate(replications),
        mean_access_delay_ms: agg.delay.estimate(replications),
        cycle_energy_j: agg.energy.estimate(replications),
        total_attempts: agg.total_attempts,
        total_collisions: agg.total_collisions,
        total_demoted: agg.total_demoted,
        eab_draws: agg.eab_draws,
        eab_passes: agg.eab_passes,
        backoff_histogram: agg.backoff_histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::ActivationProfile;

    fn small(population: u32) -> Scenario {
        Scenario {
            profile: ActivationProfile::new(3.0, 4.0, 1000.0, population).unwrap(),
            ..Scenario::reference()
        }
    }

    #[test]
    fn single_device_without_barring() {
        let sc = Scenario {
            profile: ActivationProfile::new(3.0, 4.0, 10_000.0, 1).unwrap(),
            ..Scenario::reference()
        };
        let s = BarringSetting::new(1.0, 4000).unwrap();
        let out = run_cycle(&s, &sc, &EnergyConfig::reference(), &SimOptions::default(), 9).unwrap();
        assert_eq!(out.total_attempts, 1);
        assert_eq!(out.total_collisions, 0);
        assert_eq!(out.total_successes(), 1);
        assert_eq!(out.successes.iter().rposition(|&x| x == 1), Some(out.slot_count() - 1));
        // Activation-to-slot offset stays below one RACH period.
        let d = out.delays_ms[0];
        assert!((24.0..29.0).contains(&d), "delay {d}");
    }

    #[test]
    fn single_preamble_forces_collisions() {
        let sc = Scenario {
            preamble_count: 1,
            ..small(2)
        };
        let s = BarringSetting::new(1.0, 100).unwrap();
        for seed in 0..20 {
            let out = run_cycle(&s, &sc, &EnergyConfig::reference(), &SimOptions::default(), seed).unwrap();
            assert_eq!(out.total_successes(), 2);
            for k in 0..out.slot_count() {
                assert!(out.successes[k] <= 1);
                if out.attempts[k] == 2 {
                    assert_eq!(out.collisions[k], 2);
                }
            }
        }
    }

    #[test]
    fn slot_counts_balance_without_truncation() {
        let s = BarringSetting::new(0.5, 50).unwrap();
        let out = run_cycle(&s, &small(3000), &EnergyConfig::reference(), &SimOptions::default(), 3).unwrap();
        for k in 0..out.slot_count() {
            assert_eq!(out.successes[k] + out.collisions[k], out.attempts[k]);
        }
        assert_eq!(out.total_successes(), 3000);
        assert_eq!(out.total_attempts, 3000 + out.total_collisions);
        assert_eq!(out.backoff_histogram.iter().sum::<u64>(), out.total_collisions);
        assert!(out.delays_ms.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn truncation_caps_successes_per_slot() {
        // A burst large enough to overflow the 195-RAR window.
        let sc = Scenario {
            profile: ActivationProfile::new(1.0, 1.0, 5.0, 2000).unwrap(),
            preamble_count: 4000,
            ..Scenario::reference()
        };
        let s = BarringSetting::new(1.0, 100).unwrap();
        let opts = SimOptions {
            rar_window_truncation: true,
            ..Default::default()
        };
        let out = run_cycle(&s, &sc, &EnergyConfig::reference(), &opts, 1).unwrap();
        assert!(out.successes.iter().all(|&x| x <= 195));
        assert!(out.total_demoted > 0);
        assert_eq!(out.total_successes(), 2000);
        assert_eq!(
            out.total_attempts,
            out.total_successes() + out.total_collisions + out.total_demoted
        );
    }

    #[test]
    fn slot_cap_reports_seed() {
        let s = BarringSetting::new(0.01, 5000).unwrap();
        let opts = SimOptions {
            slot_cap: 100,
            ..Default::default()
        };
        match run_cycle(&s, &small(100), &EnergyConfig::reference(), &opts, 77) {
            Err(Error::SlotCapReached { seed, slots, .. }) => {
                assert_eq!(seed, 77);
                assert_eq!(slots, 100);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_replication_matches_cycle() {
        let s = BarringSetting::new(0.6, 200).unwrap();
        let sc = small(500);
        let e = EnergyConfig::reference();
        let rep = run_monte_carlo(&s, &sc, &e, &SimOptions::default(), 1, 11).unwrap();
        let cyc = run_cycle(&s, &sc, &e, &SimOptions::default(), replication_seed(11, 0)).unwrap();
        assert_eq!(rep.curve.len(), cyc.slot_count());
        assert_eq!(rep.success_probability.mean, cyc.success_probability());
        assert_eq!(rep.mean_access_delay_ms.mean, cyc.mean_delay_ms());
        assert_eq!(rep.cycle_energy_j.mean, cyc.energy_j);
        assert_eq!(rep.success_probability.std_error, 0.0);
        for (pt, k) in rep.curve.iter().zip(0..) {
            assert_eq!(pt.mean_attempts, cyc.attempts[k] as f64);
        }
    }

    #[test]
    fn reports_are_deterministic_across_thread_counts() {
        let s = BarringSetting::new(0.7, 100).unwrap();
        let sc = small(400);
        let e = EnergyConfig::reference();
        let a = run_monte_carlo(&s, &sc, &e, &SimOptions::default(), 9, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_monte_carlo(&s, &sc, &e, &SimOptions::default(), 9, 5).unwrap());
        assert_eq!(a, b);
        let c = run_monte_carlo(&s, &sc, &e, &SimOptions::default(), 9, 6).unwrap();
        assert_ne!(a.curve, c.curve);
    }

    #[test]
    fn zero_replications_rejected() {
        let s = BarringSetting::new(0.7, 100).unwrap();
        assert!(run_monte_carlo(&s, &small(10), &EnergyConfig::reference(), &SimOptions::default(), 0, 1).is_err());
    }
}
