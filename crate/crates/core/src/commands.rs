//! Batch commands behind the `eabf` binary. Each writes its CSV files into the
//! configured output directory and reports the per-setting failures it met;
//! I/O problems abort the command.

use std::path::PathBuf;

use crate::analytic::{run_recursion_with, BarringSetting, MetricsReport, SlotTrace};
use crate::compare::{compare_curves, fraction_within};
use crate::config::RunConfig;
use crate::error::Result;
use crate::optimizer::{
    evaluate_with_arrivals, gains_vs_baseline, metrics_from_trace, standard_baselines, sweep_grid_with,
    tradeoff_curve,
};
use crate::report::{self, CompareSummaryRow, Provenance};
use crate::sim::{run_monte_carlo, MonteCarloReport};

#[derive(Debug, Default, Clone, PartialEq)]
pub struct CommandOutcome {
    pub written: Vec<PathBuf>,
    /// Human-readable console lines (kJ and s).
    pub summary: Vec<String>,
    pub failures: Vec<String>,
}

impl CommandOutcome {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

fn provenance(config: &RunConfig) -> Provenance {
    Provenance {
        config_sha256: config.hash(),
        master_seed: config.sim.master_seed,
    }
}

fn analyze_one(config: &RunConfig, setting: &BarringSetting) -> Result<(SlotTrace, MetricsReport)> {
    let trace = run_recursion_with(setting, &config.scenario, &config.recursion)?;
    let metrics = metrics_from_trace(setting, &config.scenario, &config.energy, &trace)?;
    Ok((trace, metrics))
}

fn metrics_line(setting: &BarringSetting, m: &MetricsReport) -> String {
    format!(
        "{setting}: P_S {:.4}, delay {:.2} s, energy {:.2} kJ, {} slots",
        m.success_probability,
        m.mean_access_delay_ms / 1e3,
        m.mean_cycle_energy_j / 1e3,
        m.slot_count
    )
}

fn sim_line(setting: &BarringSetting, r: &MonteCarloReport) -> String {
    format!(
        "{setting}: P_S {:.4} ± {:.4}, delay {:.2} ± {:.2} s, energy {:.2} ± {:.2} kJ ({} replications)",
        r.success_probability.mean,
        r.success_probability.std_error,
        r.mean_access_delay_ms.mean / 1e3,
        r.mean_access_delay_ms.std_error / 1e3,
        r.cycle_energy_j.mean / 1e3,
        r.cycle_energy_j.std_error / 1e3,
        r.replications
    )
}

/// Per-slot traces and a metrics summary for every configured setting.
pub fn cmd_analyze(config: &RunConfig) -> Result<CommandOutcome> {
    config.prepare_output_dir()?;
    let prov = provenance(config);
    let mut out = CommandOutcome::default();
    let mut rows = Vec::new();
    for setting in &config.settings {
        match analyze_one(config, setting) {
            Ok((trace, metrics)) => {
                let path = config.output_dir.join(format!("trace_{}.csv", report::setting_tag(setting)));
                report::write_trace(&path, &prov, &trace)?;
                out.written.push(path);
                out.summary.push(metrics_line(setting, &metrics));
                rows.push((*setting, Ok(metrics)));
            }
            Err(e) => {
                out.failures.push(format!("{setting}: {e}"));
                rows.push((*setting, Err(e)));
            }
        }
    }
    let path = config.output_dir.join("analysis_summary.csv");
    report::write_analysis_summary(&path, &prov, &rows)?;
    out.written.push(path);
    Ok(out)
}

/// Monte Carlo curves and a summary for every configured setting.
pub fn cmd_simulate(config: &RunConfig) -> Result<CommandOutcome> {
    config.prepare_output_dir()?;
    let prov = provenance(config);
    let mut out = CommandOutcome::default();
    let mut rows = Vec::new();
    for setting in &config.settings {
        let result = run_monte_carlo(
            setting,
            &config.scenario,
            &config.energy,
            &config.sim.options,
            config.sim.replications,
            config.sim.master_seed,
        );
        match &result {
            Ok(r) => {
                let path = config.output_dir.join(format!("sim_curve_{}.csv", report::setting_tag(setting)));
                report::write_sim_curve(&path, &prov, r)?;
                out.written.push(path);
                out.summary.push(sim_line(setting, r));
            }
            Err(e) => out.failures.push(format!("{setting}: {e}")),
        }
        rows.push((*setting, result));
    }
    let path = config.output_dir.join("sim_summary.csv");
    report::write_sim_summary(&path, &prov, &rows, config.sim.replications)?;
    out.written.push(path);
    Ok(out)
}

/// Grid sweep, energy/QoS trade-off curve and gains over the 3GPP settings.
/// Grid points that fail to evaluate are recorded in the sweep file and do
/// not fail the command.
pub fn cmd_optimize(config: &RunConfig) -> Result<CommandOutcome> {
    config.prepare_output_dir()?;
    let prov = provenance(config);
    let mut out = CommandOutcome::default();

    let table = sweep_grid_with(&config.grid, &config.scenario, &config.energy, &config.recursion)?;
    let failed = table.iter().filter(|r| r.metrics.is_err()).count();
    let path = config.output_dir.join("sweep.csv");
    report::write_sweep(&path, &prov, &table)?;
    out.written.push(path);
    out.summary.push(format!(
        "swept {} grid points ({failed} did not evaluate)",
        table.len()
    ));

    let records = match tradeoff_curve(&table, &config.p_min_values, config.max_delay_ms) {
        Ok(records) => records,
        Err(e) => {
            out.failures.push(format!("trade-off: {e}"));
            return Ok(out);
        }
    };
    let path = config.output_dir.join("tradeoff.csv");
    report::write_tradeoff(&path, &prov, &records)?;
    out.written.push(path);
    for r in &records {
        out.summary.push(format!(
            "P_min {:.2}: P_S {:.4}, delay {:.2} s, energy {:.2} kJ at EAB({},{}ms){}",
            r.constraint.min_success_probability,
            r.max_success_probability,
            r.min_delay_ms / 1e3,
            r.min_energy_j / 1e3,
            r.barring_factor_hat,
            r.backoff_hat_ms,
            if r.feasible { "" } else { " [infeasible]" }
        ));
    }

    let arrivals = config.scenario.arrivals()?;
    let mut baselines = Vec::new();
    for setting in standard_baselines() {
        match evaluate_with_arrivals(&setting, &config.scenario, &config.energy, &arrivals, &config.recursion) {
            Ok(m) => baselines.push((setting, m)),
            Err(e) => out.failures.push(format!("baseline {setting}: {e}")),
        }
    }
    let gains = gains_vs_baseline(&records, &baselines);
    let path = config.output_dir.join("gains.csv");
    report::write_gains(&path, &prov, &gains)?;
    out.written.push(path);
    Ok(out)
}

/// Analytic trace against simulated means, slot by slot, in standard-error
/// units, plus summary deltas.
pub fn cmd_compare(config: &RunConfig) -> Result<CommandOutcome> {
    config.prepare_output_dir()?;
    let prov = provenance(config);
    let mut out = CommandOutcome::default();
    let mut rows = Vec::new();
    for setting in &config.settings {
        let analytic = match analyze_one(config, setting) {
            Ok(a) => a,
            Err(e) => {
                out.failures.push(format!("{setting} analysis: {e}"));
                continue;
            }
        };
        let simulated = match run_monte_carlo(
            setting,
            &config.scenario,
            &config.energy,
            &config.sim.options,
            config.sim.replications,
            config.sim.master_seed,
        ) {
            Ok(s) => s,
            Err(e) => {
                out.failures.push(format!("{setting} simulation: {e}"));
                continue;
            }
        };
        let deviations = compare_curves(&analytic.0, &simulated);
        let path = config.output_dir.join(format!("compare_{}.csv", report::setting_tag(setting)));
        report::write_compare(&path, &prov, &deviations)?;
        out.written.push(path);
        let within = fraction_within(&deviations, 3.0);
        out.summary.push(format!(
            "{setting}: P_S {:.4} vs {:.4}, delay {:.2} vs {:.2} s; within 3 SE: attempts {:.1}%, collisions {:.1}%, successes {:.1}%",
            analytic.1.success_probability,
            simulated.success_probability.mean,
            analytic.1.mean_access_delay_ms / 1e3,
            simulated.mean_access_delay_ms.mean / 1e3,
            within[0] * 100.0,
            within[1] * 100.0,
            within[2] * 100.0
        ));
        rows.push(CompareSummaryRow {
            setting: *setting,
            analytic: analytic.1,
            simulated,
            within_3se: within,
        });
    }
    let path = config.output_dir.join("compare_summary.csv");
    report::write_compare_summary(&path, &prov, &rows)?;
    out.written.push(path);
    Ok(out)
}
