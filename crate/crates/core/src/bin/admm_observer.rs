//! Command-line front end.
//!
//!   admm-observer run <scenario.toml> [--out DIR] [--seed N] [--mode distributed|dsse|centralized]
//!   admm-observer verify <scenario.toml>
//!   admm-observer plot <trace.csv>
//!
//! Exit codes: 0 converged, 2 capped, 3 invalid scenario, 1 any other failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use admm_observer::error::Error;
use admm_observer::harness::trace::from_csv;
use admm_observer::harness::{load_scenario, plot_script, run_scenario, Mode, ScenarioConfig};
use admm_observer::model::simulate;
use admm_observer::oracle::{check_condition8, verify_equivalence, EquivalenceSetup, FalsifierConfig};
use admm_observer::observer::distributed::AdmmConfig;
use admm_observer::stacked::build_global;

#[derive(Parser)]
#[command(name = "admm-observer", version, about = "Distributed resilient state estimation under sparse sensor attacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and run the selected observer.
    Run {
        scenario: PathBuf,
        /// Directory for the trace CSV (overrides output.trace's directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Attack generator seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Cross-check the observers against the exhaustive decoder.
    Verify {
        scenario: PathBuf,
        /// Agreement tolerance on state estimates.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Print a gnuplot script for a trace file.
    Plot { trace: PathBuf },
}

const EXIT_CAPPED: u8 = 2;
const EXIT_INVALID: u8 = 3;

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Validation(_) | Error::Parse(_) => ExitCode::from(EXIT_INVALID),
        _ => ExitCode::FAILURE,
    }
}

fn load(path: &Path, overrides: impl FnOnce(&mut ScenarioConfig)) -> Result<ScenarioConfig, Error> {
    let (mut cfg, _) = load_scenario(path)?;
    overrides(&mut cfg);
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn trace_path(cfg: &ScenarioConfig, out: Option<&Path>) -> Option<PathBuf> {
    let file_name = cfg
        .output
        .trace
        .as_ref()
        .and_then(|p| p.file_name().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.name)));
    match out {
        Some(dir) => Some(dir.join(file_name)),
        None => cfg.output.trace.clone(),
    }
}

fn run(scenario: &Path, out: Option<&Path>, seed: Option<u64>, mode: Option<Mode>) -> Result<ExitCode, Error> {
    let cfg = load(scenario, |cfg| {
        if let Some(seed) = seed {
            cfg.attack.seed = seed;
        }
        if let Some(mode) = mode {
            cfg.mode = mode;
        }
    })?;
    let result = run_scenario(&cfg)?;
    if let Some(path) = trace_path(&cfg, out) {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, result.trace_csv())?;
        println!("trace: {}", path.display());
    }
    println!("{}", result.summary);
    Ok(if result.summary.termination.is_converged() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CAPPED)
    })
}

fn verify(scenario: &Path, tol: f64) -> Result<ExitCode, Error> {
    let cfg = load(scenario, |_| {})?;
    let plant = cfg.plant_model()?;
    let topology = cfg.topology()?;
    let traj = simulate(&plant, &cfg.initial_state(), &cfg.attack_model()?, cfg.steps)?;

    let global = build_global(&plant, cfg.depth)?;
    let condition = check_condition8(global.observability(), cfg.depth, cfg.attack.budget, &FalsifierConfig::default());
    println!("l1 recovery condition: {condition:?}");

    let tight = AdmmConfig {
        alpha: 1e-8,
        beta: 1e-8,
        max_inner_rounds: 20_000,
        ..cfg.admm
    };
    let setup = EquivalenceSetup {
        plant: &plant,
        topology: &topology,
        depth: cfg.depth,
        budget: cfg.attack.budget,
        dsse: tight,
        centralized: tight,
        inner: cfg.inner,
        block_descent: cfg.block_descent,
    };
    let report = verify_equivalence(&setup, &traj)?;
    let sensors = |s: &std::collections::BTreeSet<usize>| s.iter().map(|j| j + 1).collect::<Vec<_>>();
    println!("true support: {:?}", sensors(&report.true_support));
    println!("decoded support (first window): {:?}", sensors(&report.l0_first.support));
    println!("decoded support (final window): {:?}", sensors(&report.l0_final.support));
    println!("static vs exhaustive: {:.3e}", report.dsse_vs_l0);
    println!("centralized vs exhaustive: {:.3e}", report.centralized_vs_l0);
    println!("static vs centralized: {:.3e}", report.dsse_vs_centralized);
    println!("static converged: {}, centralized converged: {}", report.dsse_converged, report.centralized_converged);
    println!("agreement within {tol:e}: {}", if report.agrees(tol) { "yes" } else { "NO" });
    Ok(ExitCode::SUCCESS)
}

fn plot(trace: &Path) -> Result<ExitCode, Error> {
    let text = fs::read_to_string(trace)?;
    let (nodes, _) = from_csv(&text)?;
    print!("{}", plot_script(&trace.display().to_string(), nodes));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out, seed, mode } => run(&scenario, out.as_deref(), seed, mode),
        Command::Verify { scenario, tol } => verify(&scenario, tol),
        Command::Plot { trace } => plot(&trace),
    };
    result.unwrap_or_else(fail)
}
