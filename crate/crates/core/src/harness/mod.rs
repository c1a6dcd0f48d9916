//! Scenario files, experiment runs and trace output.

pub mod run;
pub mod scenario;
pub mod trace;

pub use run::{plot_script, run_scenario, RunSummary, ScenarioRun};
pub use scenario::{load_scenario, Mode, ScenarioConfig};
pub use trace::{write_trace, TraceRecord};
