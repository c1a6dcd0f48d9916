//! Bundled scenario files and the command-line front end.

mod common;

use std::fs;
use std::process::Command;

use admm_observer::harness::{load_scenario, Mode, ScenarioConfig};
use admm_observer::observer::distributed::MultiplierForm;
use admm_observer::Error;
use common::*;

const BUNDLED: [&str; 4] = [
    "three_inertia_distributed",
    "three_inertia_dsse",
    "three_inertia_centralized",
    "random_small",
];

#[test]
fn bundled_scenarios_load() {
    for name in BUNDLED {
        let (cfg, _) = load_scenario(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(cfg.name, name);
    }
}

#[test]
fn distributed_benchmark_parameters() {
    let cfg = bundled("three_inertia_distributed");
    assert_eq!(cfg.mode, Mode::Distributed);
    assert_eq!(cfg.depth, 3);
    assert_eq!(cfg.x0, vec![0.0, 0.0, 0.0, 0.0, 0.9644, 0.0]);
    assert_eq!(cfg.attack.sensors, vec![3, 4]);
    assert_eq!(cfg.network.partition, vec![2, 2, 2]);
    assert_eq!(cfg.admm.rho_init, 1.0);
    assert_eq!(cfg.admm.penalty_factor, 10.0);
    assert_eq!(cfg.admm.mu1, 2.5);
    assert_eq!(cfg.admm.mu2, 1.1);
    assert_eq!((cfg.admm.alpha, cfg.admm.beta), (0.1, 0.1));
    assert_eq!(cfg.admm.multiplier_form, MultiplierForm::LagrangianConsistent);
    assert_eq!(cfg.plant_model().unwrap().a(), benchmark_plant().a());

    let dsse = bundled("three_inertia_dsse");
    assert_eq!((dsse.admm.mu1, dsse.admm.mu2, dsse.admm.max_inner_rounds), (2.0, 2.0, 1000));
    assert_eq!(dsse.attack.sensors, vec![3, 6]);
    let central = bundled("three_inertia_centralized");
    assert_eq!(central.admm.alpha, 1e-5);
}

#[test]
fn benchmark_needs_the_observability_waiver() {
    let text = fs::read_to_string(scenario_path("three_inertia_distributed")).unwrap();
    let mut cfg = ScenarioConfig::from_toml(&text).unwrap();
    cfg.validation.waive_sparse_observability = false;
    match cfg.validate() {
        Err(Error::Validation(issues)) => assert!(issues.iter().any(|i| i.contains("Assumption 1.2"))),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_admm-observer"))
}

#[test]
fn cli_run_writes_trace_and_reports_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli()
        .args(["run", scenario_path("three_inertia_centralized").to_str().unwrap(), "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("termination: converged"));
    let trace = dir.path().join("three_inertia_centralized.csv");
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 11);

    let plot = cli().args(["plot", trace.to_str().unwrap()]).output().unwrap();
    assert_eq!(plot.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&plot.stdout).contains("multiplot"));
}

#[test]
fn cli_capped_run_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli()
        .args(["run", scenario_path("three_inertia_dsse").to_str().unwrap(), "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cli_rejects_invalid_scenarios_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = bundled("random_small");
    cfg.network.adjacency = vec![vec![0; 3]; 3];
    let path = dir.path().join("bad.toml");
    cfg.save(&path).unwrap();
    let out = cli().args(["run", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Assumption 1.1"));

    fs::write(&path, "name = ").unwrap();
    let out = cli().args(["verify", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn cli_verify_agrees_on_random_instance() {
    let out = cli()
        .args(["verify", scenario_path("random_small").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("agreement within 1e-3: yes"), "{stdout}");
}
