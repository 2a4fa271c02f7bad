//! Per-slot deviation between the analytic trace and simulated mean curves.

use serde::{Deserialize, Serialize};

use crate::analytic::SlotTrace;
use crate::sim::MonteCarloReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotDeviation {
    pub slot: usize,
    pub analytic_attempts: f64,
    pub analytic_collisions: f64,
    pub analytic_successes: f64,
    pub sim_attempts: f64,
    pub sim_collisions: f64,
    pub sim_successes: f64,
    /// `(analytic - simulated) / standard error` per quantity.
    pub z_attempts: f64,
    pub z_collisions: f64,
    pub z_successes: f64,
}

impl SlotDeviation {
    pub fn max_abs_z(&self) -> f64 {
        self.z_attempts.abs().max(self.z_collisions.abs()).max(self.z_successes.abs())
    }
}

/// Standard error used for a z-score. When every replication saw the same
/// count the sample error is zero; the Poisson error of the analytic mean
/// (at least one event in `replications`) stands in for it.
pub fn effective_std_error(sample_se: f64, analytic_mean: f64, replications: usize) -> f64 {
    if sample_se > 0.0 {
        return sample_se;
    }
    let n = replications.max(1) as f64;
    (analytic_mean.max(1.0 / n) / n).sqrt()
}

fn z(analytic: f64, sim: f64, se: f64, replications: usize) -> f64 {
    (analytic - sim) / effective_std_error(se, analytic, replications)
}

/// Deviations over every slot either side reaches; a side that has already
/// ended contributes zeros.
pub fn compare_curves(trace: &SlotTrace, report: &MonteCarloReport) -> Vec<SlotDeviation> {
    let n = report.replications;
    let len = trace.len().max(report.curve.len());
    (0..len)
        .map(|k| {
            let (aa, ac, as_) = trace
                .rows
                .get(k)
                .map(|r| (r.expected_attempts, r.expected_collisions, r.expected_successes))
                .unwrap_or((0.0, 0.0, 0.0));
            let (sa, sc, ss, ea, ec, es) = report
                .curve
                .get(k)
                .map(|p| {
                    (
                        p.mean_attempts,
                        p.mean_collisions,
                        p.mean_successes,
                        p.se_attempts,
                        p.se_collisions,
                        p.se_successes,
                    )
                })
                .unwrap_or((0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
            SlotDeviation {
                slot: k + 1,
                analytic_attempts: aa,
                analytic_collisions: ac,
                analytic_successes: as_,
                sim_attempts: sa,
                sim_collisions: sc,
                sim_successes: ss,
                z_attempts: z(aa, sa, ea, n),
                z_collisions: z(ac, sc, ec, n),
                z_successes: z(as_, ss, es, n),
            }
        })
        .collect()
}

/// Fractions of slots whose attempts, collisions and successes each lie
/// within `k` standard errors.
pub fn fraction_within(deviations: &[SlotDeviation], k: f64) -> [f64; 3] {
    if deviations.is_empty() {
        return [1.0; 3];
    }
    let n = deviations.len() as f64;
    let count = |f: fn(&SlotDeviation) -> f64| deviations.iter().filter(|d| f(d).abs() <= k).count() as f64 / n;
    [count(|d| d.z_attempts), count(|d| d.z_collisions), count(|d| d.z_successes)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_applies_only_to_degenerate_slots() {
        assert_eq!(effective_std_error(0.3, 5.0, 100), 0.3);
        assert_eq!(effective_std_error(0.0, 4.0, 100), 0.2);
        assert_eq!(effective_std_error(0.0, 0.0, 100), 0.01);
    }

    #[test]
    fn empty_comparison_passes() {
        assert_eq!(fraction_within(&[], 3.0), [1.0; 3]);
    }
}
