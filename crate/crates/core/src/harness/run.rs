//! Scenario execution and summaries.

use std::fmt;

use crate::error::Result;
use crate::harness::scenario::{Mode, ScenarioConfig};
use crate::harness::trace::{to_csv, TraceRecord};
use crate::model::simulate;
use crate::observer::centralized::run_algorithm2;
use crate::observer::distributed::{run_algorithm1, run_dsse};
use crate::observer::{RunOutcome, Termination};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub name: String,
    pub mode: Mode,
    pub termination: Termination,
    /// Trace rows: time steps, or rounds in static mode.
    pub records: usize,
    pub final_max_error: f64,
    pub final_consensus_error: f64,
    pub total_inner_rounds: usize,
    pub mean_inner_rounds: f64,
    pub messages: usize,
    pub unconverged_solves: usize,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario: {}", self.name)?;
        writeln!(f, "mode: {}", self.mode.as_str())?;
        writeln!(f, "termination: {}", self.termination.as_str())?;
        writeln!(f, "records: {}", self.records)?;
        writeln!(f, "final max state error: {:.6e}", self.final_max_error)?;
        writeln!(f, "final consensus error: {:.6e}", self.final_consensus_error)?;
        writeln!(f, "inner rounds: {} total, {:.2} per record", self.total_inner_rounds, self.mean_inner_rounds)?;
        writeln!(f, "messages: {}", self.messages)?;
        write!(f, "unconverged subproblem solves: {}", self.unconverged_solves)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub outcome: RunOutcome,
    pub nodes: usize,
    pub summary: RunSummary,
}

impl ScenarioRun {
    pub fn records(&self) -> &[TraceRecord] {
        &self.outcome.records
    }

    pub fn trace_csv(&self) -> String {
        to_csv(&self.outcome.records, self.nodes)
    }
}

/// Simulates the plant and runs the configured algorithm. The config is
/// assumed validated.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioRun> {
    let plant = cfg.plant_model()?;
    let topology = cfg.topology()?;
    let traj = simulate(&plant, &cfg.initial_state(), &cfg.attack_model()?, cfg.steps)?;
    let (outcome, nodes) = match cfg.mode {
        Mode::Distributed => (run_algorithm1(&plant, &topology, cfg.depth, &traj, cfg.admm, cfg.inner)?, plant.observer_count()),
        Mode::Dsse => (run_dsse(&plant, &topology, cfg.depth, &traj, cfg.admm, cfg.inner)?, plant.observer_count()),
        Mode::Centralized => (run_algorithm2(&plant, cfg.depth, &traj, cfg.admm, cfg.block_descent)?, 1),
    };
    let last = outcome.records.last();
    let summary = RunSummary {
        name: cfg.name.clone(),
        mode: cfg.mode,
        termination: outcome.termination,
        records: outcome.records.len(),
        final_max_error: last.map_or(f64::NAN, TraceRecord::max_state_error),
        final_consensus_error: last.map_or(f64::NAN, TraceRecord::max_consensus_error),
        total_inner_rounds: outcome.total_inner_rounds,
        mean_inner_rounds: outcome.mean_inner_rounds(),
        messages: outcome.records.iter().map(|r| r.messages).sum(),
        unconverged_solves: outcome.unconverged_solves,
    };
    Ok(ScenarioRun { outcome, nodes, summary })
}

/// Gnuplot script drawing the error, consensus and residual columns of a trace.
pub fn plot_script(csv_path: &str, nodes: usize) -> String {
    let series = |first_col: usize, label: &str| {
        (0..nodes)
            .map(|i| format!("'{csv_path}' using 1:{} with lines title '{label} {}'", first_col + i, i + 1))
            .collect::<Vec<_>>()
            .join(", \\\n     ")
    };
    let err = 2;
    let cons = err + nodes;
    let r = cons + nodes;
    let s = r + nodes;
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set logscale y\n\
         set xlabel 't'\n\
         set multiplot layout 2,2\n\
         set title 'state error'\n\
         plot {}\n\
         set title 'consensus error'\n\
         plot {}\n\
         set title 'primal residual'\n\
         plot {}\n\
         set title 'dual residual'\n\
         plot {}\n\
         unset multiplot\n",
        series(err, "node"),
        series(cons, "node"),
        series(r, "node"),
        series(s, "node"),
    )
}
