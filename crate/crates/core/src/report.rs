//! CSV artifacts. Each file starts with a comment line carrying the resolved
//! configuration hash and master seed, followed by a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::analytic::{BarringSetting, MetricsReport, SlotTrace};
use crate::compare::SlotDeviation;
use crate::error::Result;
use crate::optimizer::{GainRow, OptimumRecord, SweepRow};
use crate::sim::MonteCarloReport;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_sha256: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!("# eabf config_sha256={} master_seed={}", self.config_sha256, self.master_seed)
    }
}

/// File-name fragment for a setting, e.g. `p0.7_t8000ms`.
pub fn setting_tag(setting: &BarringSetting) -> String {
    format!("p{}_t{}ms", setting.barring_factor, setting.backoff_ms)
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn write_table<I>(path: &Path, provenance: &Provenance, columns: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", provenance.line())?;
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(columns)?;
    for row in rows {
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub const TRACE_COLUMNS: [&str; 5] = [
    "slot",
    "expected_attempts",
    "expected_collisions",
    "expected_successes",
    "cumulative_successes",
];

pub fn write_trace(path: &Path, provenance: &Provenance, trace: &SlotTrace) -> Result<()> {
    write_table(
        path,
        provenance,
        &TRACE_COLUMNS,
        trace.rows.iter().map(|r| {
            vec![
                r.slot_index.to_string(),
                num(r.expected_attempts),
                num(r.expected_collisions),
                num(r.expected_successes),
                num(r.cumulative_successes),
            ]
        }),
    )
}

pub const ANALYSIS_COLUMNS: [&str; 10] = [
    "p_eab",
    "t_eab_ms",
    "p_s",
    "collision_probability",
    "mean_attempts",
    "delay_ms",
    "energy_j",
    "slots",
    "status",
    "error",
];

fn status_cells<T>(r: &Result<T>) -> [String; 2] {
    match r {
        Ok(_) => ["ok".into(), String::new()],
        Err(e) => ["failed".into(), e.to_string()],
    }
}

pub fn write_analysis_summary(
    path: &Path,
    provenance: &Provenance,
    rows: &[(BarringSetting, Result<MetricsReport>)],
) -> Result<()> {
    write_table(
        path,
        provenance,
        &ANALYSIS_COLUMNS,
        rows.iter().map(|(s, m)| {
            let mut row = vec![num(s.barring_factor), s.backoff_ms.to_string()];
            match m {
                Ok(m) => row.extend([
                    num(m.success_probability),
                    num(m.collision_probability),
                    num(m.mean_attempts),
                    num(m.mean_access_delay_ms),
                    num(m.mean_cycle_energy_j),
                    m.slot_count.to_string(),
                ]),
                Err(_) => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            row.extend(status_cells(m));
            row
        }),
    )
}

pub const CURVE_COLUMNS: [&str; 7] = [
    "slot",
    "mean_attempts",
    "mean_collisions",
    "mean_successes",
    "se_attempts",
    "se_collisions",
    "se_successes",
];

pub fn write_sim_curve(path: &Path, provenance: &Provenance, report: &MonteCarloReport) -> Result<()> {
    write_table(
        path,
        provenance,
        &CURVE_COLUMNS,
        report.curve.iter().map(|p| {
            vec![
                p.slot.to_string(),
                num(p.mean_attempts),
                num(p.mean_collisions),
                num(p.mean_successes),
                num(p.se_attempts),
                num(p.se_collisions),
                num(p.se_successes),
            ]
        }),
    )
}

pub const SIM_SUMMARY_COLUMNS: [&str; 12] = [
    "setting",
    "p_s",
    "p_s_se",
    "delay_ms",
    "delay_se",
    "energy_j",
    "energy_se",
    "replications",
    "master_seed",
    "demoted",
    "status",
    "error",
];

pub fn write_sim_summary(
    path: &Path,
    provenance: &Provenance,
    rows: &[(BarringSetting, Result<MonteCarloReport>)],
    replications: usize,
) -> Result<()> {
    write_table(
        path,
        provenance,
        &SIM_SUMMARY_COLUMNS,
        rows.iter().map(|(s, r)| {
            let mut row = vec![s.label()];
            match r {
                Ok(r) => row.extend([
                    num(r.success_probability.mean),
                    num(r.success_probability.std_error),
                    num(r.mean_access_delay_ms.mean),
                    num(r.mean_access_delay_ms.std_error),
                    num(r.cycle_energy_j.mean),
                    num(r.cycle_energy_j.std_error),
                    r.replications.to_string(),
                    r.master_seed.to_string(),
                    r.total_demoted.to_string(),
                ]),
                Err(_) => {
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.extend([replications.to_string(), provenance.master_seed.to_string(), String::new()]);
                }
            }
            row.extend(status_cells(r));
            row
        }),
    )
}

pub const SWEEP_COLUMNS: [&str; 6] = ["p_eab", "t_eab_ms", "p_s", "delay_ms", "energy_j", "feasible"];

/// `feasible` is false for points whose evaluation failed; their metric
/// cells are empty.
pub fn write_sweep(path: &Path, provenance: &Provenance, table: &[SweepRow]) -> Result<()> {
    write_table(
        path,
        provenance,
        &SWEEP_COLUMNS,
        table.iter().map(|r| {
            let mut row = vec![num(r.setting.barring_factor), r.setting.backoff_ms.to_string()];
            match &r.metrics {
                Ok(m) => row.extend([
                    num(m.success_probability),
                    num(m.mean_access_delay_ms),
                    num(m.mean_cycle_energy_j),
                    "true".into(),
                ]),
                Err(_) => row.extend([String::new(), String::new(), String::new(), "false".into()]),
            }
            row
        }),
    )
}

pub const TRADEOFF_COLUMNS: [&str; 8] = [
    "p_min",
    "t_max_ms",
    "p_s_max",
    "delay_min_ms",
    "energy_min_j",
    "p_hat",
    "t_hat_ms",
    "feasible",
];

pub fn write_tradeoff(path: &Path, provenance: &Provenance, records: &[OptimumRecord]) -> Result<()> {
    write_table(
        path,
        provenance,
        &TRADEOFF_COLUMNS,
        records.iter().map(|r| {
            vec![
                num(r.constraint.min_success_probability),
                num(r.constraint.max_delay_ms),
                num(r.max_success_probability),
                num(r.min_delay_ms),
                num(r.min_energy_j),
                num(r.barring_factor_hat),
                r.backoff_hat_ms.to_string(),
                r.feasible.to_string(),
            ]
        }),
    )
}

pub const GAIN_COLUMNS: [&str; 6] = [
    "p_min",
    "baseline",
    "p_s_gain",
    "energy_gain",
    "delay_gain",
    "feasible",
];

pub fn write_gains(path: &Path, provenance: &Provenance, gains: &[GainRow]) -> Result<()> {
    write_table(
        path,
        provenance,
        &GAIN_COLUMNS,
        gains.iter().map(|g| {
            vec![
                num(g.min_success_probability),
                g.baseline.label(),
                num(g.success_probability_gain),
                num(g.energy_gain),
                num(g.delay_gain),
                g.feasible.to_string(),
            ]
        }),
    )
}

pub const COMPARE_COLUMNS: [&str; 10] = [
    "slot",
    "analytic_attempts",
    "sim_attempts",
    "z_attempts",
    "analytic_collisions",
    "sim_collisions",
    "z_collisions",
    "analytic_successes",
    "sim_successes",
    "z_successes",
];

pub fn write_compare(path: &Path, provenance: &Provenance, deviations: &[SlotDeviation]) -> Result<()> {
    write_table(
        path,
        provenance,
        &COMPARE_COLUMNS,
        deviations.iter().map(|d| {
            vec![
                d.slot.to_string(),
                num(d.analytic_attempts),
                num(d.sim_attempts),
                num(d.z_attempts),
                num(d.analytic_collisions),
                num(d.sim_collisions),
                num(d.z_collisions),
                num(d.analytic_successes),
                num(d.sim_successes),
                num(d.z_successes),
            ]
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummaryRow {
    pub setting: BarringSetting,
    pub analytic: MetricsReport,
    pub simulated: MonteCarloReport,
    pub within_3se: [f64; 3],
}

pub const COMPARE_SUMMARY_COLUMNS: [&str; 12] = [
    "setting",
    "p_s_analytic",
    "p_s_sim",
    "p_s_delta",
    "delay_analytic_ms",
    "delay_sim_ms",
    "delay_delta_ms",
    "energy_analytic_j",
    "energy_sim_j",
    "within_3se_attempts",
    "within_3se_collisions",
    "within_3se_successes",
];

pub fn write_compare_summary(path: &Path, provenance: &Provenance, rows: &[CompareSummaryRow]) -> Result<()> {
    write_table(
        path,
        provenance,
        &COMPARE_SUMMARY_COLUMNS,
        rows.iter().map(|r| {
            let a = &r.analytic;
            let s = &r.simulated;
            vec![
                r.setting.label(),
                num(a.success_probability),
                num(s.success_probability.mean),
                num(a.success_probability - s.success_probability.mean),
                num(a.mean_access_delay_ms),
                num(s.mean_access_delay_ms.mean),
                num(a.mean_access_delay_ms - s.mean_access_delay_ms.mean),
                num(a.mean_cycle_energy_j),
                num(s.cycle_energy_j.mean),
                num(r.within_3se[0]),
                num(r.within_3se[1]),
                num(r.within_3se[2]),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::ConstraintSpec;

    fn prov() -> Provenance {
        Provenance {
            config_sha256: "ab".repeat(32),
            master_seed: 7,
        }
    }

    #[test]
    fn sweep_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let ok = SweepRow {
            setting: BarringSetting::new(0.5, 100).unwrap(),
            metrics: Ok(MetricsReport {
                success_probability: 0.25,
                collision_probability: 0.75,
                mean_attempts: 4.0,
                mean_access_delay_ms: 1500.5,
                mean_cycle_energy_j: 12.0,
                slot_count: 3,
            }),
        };
        let failed = SweepRow {
            setting: BarringSetting::new(0.01, 20_000).unwrap(),
            metrics: Err(crate::Error::NonConvergence {
                slots: 1,
                residual: 2.0,
            }),
        };
        write_sweep(&path, &prov(), &[ok, failed]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], format!("# eabf config_sha256={} master_seed=7", "ab".repeat(32)));
        assert_eq!(lines[1], "p_eab,t_eab_ms,p_s,delay_ms,energy_j,feasible");
        assert_eq!(lines[2], "0.5,100,0.25,1500.5,12,true");
        assert_eq!(lines[3], "0.01,20000,,,,false");
    }

    #[test]
    fn tradeoff_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tradeoff.csv");
        let rec = OptimumRecord {
            barring_factor_hat: 0.17,
            backoff_hat_ms: 100,
            min_energy_j: 450.0,
            max_success_probability: 0.3384,
            min_delay_ms: 1490.0,
            constraint: ConstraintSpec::new(0.05, 50_000.0).unwrap(),
            feasible: true,
        };
        write_tradeoff(&path, &prov(), &[rec]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(2), Some("0.05,50000,0.3384,1490,450,0.17,100,true"));
    }

    #[test]
    fn tags_are_file_safe() {
        assert_eq!(setting_tag(&BarringSetting::new(0.08, 500).unwrap()), "p0.08_t500ms");
    }
}
