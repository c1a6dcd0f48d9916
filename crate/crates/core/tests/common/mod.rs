//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use admm_observer::graph::Topology;
use admm_observer::harness::{load_scenario, ScenarioConfig};
use admm_observer::model::{check_s_sparse_observable, discretize, random_plant, three_inertia, Discretization, PlantModel};
use admm_observer::oracle::{check_condition8, FalsifierConfig};
use admm_observer::stacked::build_global;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

pub fn bundled(name: &str) -> ScenarioConfig {
    load_scenario(&scenario_path(name)).expect("bundled scenario loads").0
}

/// Three-inertia benchmark at h = 0.1 split into three observers of two sensors.
pub fn benchmark_plant() -> PlantModel {
    discretize(&three_inertia(Default::default()), 0.1, Discretization::ExactZoh)
        .unwrap()
        .with_partition(vec![2, 2, 2])
        .unwrap()
}

/// Node 0 in the middle, nodes 1 and 2 attached to it.
pub fn benchmark_star() -> Topology {
    Topology::from_adjacency(&[vec![0, 1, 1], vec![1, 0, 0], vec![1, 0, 0]]).unwrap()
}

/// A random stable plant with n = 4, p = 5 over three observers, and an
/// initial state drawn from its own stream.
pub struct RandomInstance {
    pub seed: u64,
    pub plant: PlantModel,
    pub x0: DVector<f64>,
    pub rng: ChaCha8Rng,
}

fn instance(seed: u64) -> RandomInstance {
    let plant = random_plant(4, 5, vec![2, 2, 1], seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let x0 = DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0));
    RandomInstance { seed, plant, x0, rng }
}

/// The first `count` seeds (from 1) whose plant is observable.
pub fn observable_instances(count: usize) -> Vec<RandomInstance> {
    (1..)
        .map(instance)
        .filter(|inst| check_s_sparse_observable(&inst.plant, 0))
        .take(count)
        .collect()
}

/// The first `count` seeds (from 1) whose plant is 2-sparse observable and
/// whose window-4 observability matrix survives the recovery-condition
/// falsifier for single-sensor attacks. Also returns the rejected seeds.
pub fn recoverable_instances(count: usize) -> (Vec<RandomInstance>, Vec<u64>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    let mut seed = 0;
    while accepted.len() < count {
        seed += 1;
        let inst = instance(seed);
        if !check_s_sparse_observable(&inst.plant, 2) {
            rejected.push(seed);
            continue;
        }
        let g = build_global(&inst.plant, 4).unwrap();
        if check_condition8(g.observability(), 4, 1, &FalsifierConfig::default()).is_violated() {
            rejected.push(seed);
            continue;
        }
        accepted.push(inst);
    }
    (accepted, rejected)
}

/// Minimizes `-c'b + sum_k (w_k/2) ||x_k - b||^2` by gradient descent with a
/// safe fixed step, using only the objective's gradient.
pub fn numeric_b_argmin(xs: &[(DVector<f64>, f64)], c: &DVector<f64>) -> DVector<f64> {
    let total: f64 = xs.iter().map(|(_, w)| w).sum();
    let step = 0.5 / total;
    let mut b = DVector::zeros(c.len());
    for _ in 0..10_000 {
        let mut grad = -c;
        for (x, w) in xs {
            grad += (&b - x) * *w;
        }
        if grad.amax() < 1e-14 * (1.0 + total) {
            break;
        }
        b -= grad * step;
    }
    b
}

/// Checks the componentwise characterization of soft thresholding:
/// zero inside `[-kappa, kappa]`, otherwise shrunk by exactly `kappa` toward
/// zero with the sign kept. Returns the worst deviation.
pub fn soft_threshold_defect(v: &DVector<f64>, out: &DVector<f64>, kappa: f64) -> f64 {
    v.iter()
        .zip(out.iter())
        .map(|(&vi, &oi)| {
            if vi.abs() <= kappa {
                oi.abs()
            } else {
                (oi - (vi - kappa * vi.signum())).abs()
            }
        })
        .fold(0.0, f64::max)
}
