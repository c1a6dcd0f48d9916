//! Brute-force reference decoders and recovery-condition checks.

use std::collections::BTreeSet;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::l1solver::InnerSolverConfig;
use crate::model::{numerical_rank, PlantModel, PlantTrajectory};
use crate::observer::centralized::{run_algorithm2, BlockDescentConfig};
use crate::observer::distributed::{run_dsse, AdmmConfig};
use crate::stacked::build_global;

/// Residual below which a candidate support is accepted.
pub const CONSISTENCY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct L0Solution {
    pub x: DVector<f64>,
    pub e: DVector<f64>,
    /// Sensors (0-based) whose blocks of `e` may be nonzero.
    pub support: BTreeSet<usize>,
    /// Least-squares residual on the unattacked rows.
    pub residual: f64,
}

fn block_rows(blocks: &[usize], block: usize) -> Vec<usize> {
    blocks.iter().flat_map(|&j| j * block..(j + 1) * block).collect()
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    m.select_rows(rows.iter())
}

/// Exact sparse decoding by enumeration.
///
/// `o` is the stacked observability matrix with `block` consecutive rows per
/// sensor. Candidate supports are tried by increasing size, then
/// lexicographically; the first one whose complement explains `y` to within
/// [`CONSISTENCY_TOLERANCE`] wins. Candidates whose complement does not
/// determine `x` are skipped.
pub fn l0_decode(y: &DVector<f64>, o: &DMatrix<f64>, block: usize, budget: usize) -> Result<L0Solution> {
    if block == 0 || !o.nrows().is_multiple_of(block) {
        return Err(Error::InvalidParameter(format!(
            "{} rows do not split into sensor blocks of {block}",
            o.nrows()
        )));
    }
    if y.len() != o.nrows() {
        return Err(Error::Dimension {
            context: "stacked measurements",
            expected: o.nrows(),
            actual: y.len(),
        });
    }
    let p = o.nrows() / block;
    let n = o.ncols();
    let mut best_residual = f64::INFINITY;
    for size in 0..=budget.min(p) {
        for gamma in (0..p).combinations(size) {
            let kept: Vec<usize> = (0..p).filter(|j| !gamma.contains(j)).collect();
            let rows = block_rows(&kept, block);
            let o_kept = select_rows(o, &rows);
            if numerical_rank(&o_kept) < n {
                continue;
            }
            let y_kept = DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r]));
            let x = o_kept
                .clone()
                .svd(true, true)
                .solve(&y_kept, 0.0)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let residual = (&o_kept * &x - &y_kept).norm();
            best_residual = best_residual.min(residual);
            if residual < CONSISTENCY_TOLERANCE {
                let mut e = y - o * &x;
                for r in block_rows(&kept, block) {
                    e[r] = 0.0;
                }
                return Ok(L0Solution {
                    x,
                    e,
                    support: gamma.into_iter().collect(),
                    residual,
                });
            }
        }
    }
    Err(Error::InconsistentData {
        budget,
        best_residual,
    })
}

/// `sum_{rows not in gamma} |(O x)_i| - sum_{rows in gamma} |(O x)_i|`, with
/// `gamma` a set of sensors.
pub fn condition8_value(o: &DMatrix<f64>, block: usize, gamma: &[usize], x: &DVector<f64>) -> f64 {
    let ox = o * x;
    ox.iter()
        .enumerate()
        .map(|(r, v)| if gamma.contains(&(r / block)) { -v.abs() } else { v.abs() })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition8 {
    /// No counterexample found. `margin` is the smallest value of the
    /// condition function seen on the unit sphere. This is not a proof.
    NotFalsified { margin: f64 },
    Violated {
        gamma: Vec<usize>,
        witness: DVector<f64>,
        value: f64,
    },
}

impl Condition8 {
    pub fn is_violated(&self) -> bool {
        matches!(self, Condition8::Violated { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalsifierConfig {
    pub restarts: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for FalsifierConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            steps: 2000,
            seed: 0,
        }
    }
}

/// Projected subgradient descent of [`condition8_value`] on the unit sphere
/// from `start`; returns the best point seen and its value.
fn descend(o: &DMatrix<f64>, block: usize, gamma: &[usize], start: DVector<f64>, steps: usize) -> (DVector<f64>, f64) {
    let mut x = start.normalize();
    let mut best = (x.clone(), condition8_value(o, block, gamma, &x));
    for k in 1..=steps {
        let ox = o * &x;
        let signs = DVector::from_iterator(
            ox.len(),
            ox.iter().enumerate().map(|(r, v)| {
                let s = if *v > 0.0 { 1.0 } else if *v < 0.0 { -1.0 } else { 0.0 };
                if gamma.contains(&(r / block)) { -s } else { s }
            }),
        );
        let g = o.transpose() * signs;
        // Only the tangential part moves along the sphere.
        let g = &g - &x * x.dot(&g);
        if g.norm() == 0.0 {
            break;
        }
        let next = &x - g.normalize() * (0.5 / (k as f64).sqrt());
        if next.norm() == 0.0 {
            break;
        }
        x = next.normalize();
        let f = condition8_value(o, block, gamma, &x);
        if f < best.1 {
            best = (x.clone(), f);
        }
    }
    best
}

/// Sampling falsifier for the l1 recovery condition over all sensor sets of
/// size `budget`. Each set is searched from the right singular vectors of the
/// rows outside it plus `restarts` random points.
pub fn check_condition8(o: &DMatrix<f64>, block: usize, budget: usize, cfg: &FalsifierConfig) -> Condition8 {
    let p = o.nrows() / block.max(1);
    let n = o.ncols();
    if budget == 0 || budget >= p {
        return Condition8::NotFalsified {
            margin: f64::INFINITY,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut margin = f64::INFINITY;
    for gamma in (0..p).combinations(budget) {
        let kept: Vec<usize> = (0..p).filter(|j| !gamma.contains(j)).collect();
        let o_kept = select_rows(o, &block_rows(&kept, block));
        let mut starts: Vec<DVector<f64>> = Vec::new();
        if let Some(vt) = o_kept.svd(false, true).v_t {
            for r in 0..vt.nrows() {
                let v = vt.row(r).transpose();
                starts.push(-&v);
                starts.push(v);
            }
        }
        for _ in 0..cfg.restarts {
            starts.push(DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)));
        }
        for start in starts {
            if start.norm() == 0.0 {
                continue;
            }
            let (x, f) = descend(o, block, &gamma, start, cfg.steps);
            if f <= 0.0 {
                let value = condition8_value(o, block, &gamma, &x);
                if value <= 0.0 {
                    return Condition8::Violated {
                        gamma,
                        witness: x,
                        value,
                    };
                }
            }
            margin = margin.min(f);
        }
    }
    Condition8::NotFalsified { margin }
}

/// Data and solver settings for [`verify_equivalence`].
#[derive(Debug, Clone)]
pub struct EquivalenceSetup<'a> {
    pub plant: &'a PlantModel,
    pub topology: &'a Topology,
    pub depth: usize,
    pub budget: usize,
    pub dsse: AdmmConfig,
    pub centralized: AdmmConfig,
    pub inner: InnerSolverConfig,
    pub block_descent: BlockDescentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// Exhaustive decoding of the first window (estimates `x[0]`).
    pub l0_first: L0Solution,
    /// Exhaustive decoding of the window the centralized observer stopped on.
    pub l0_final: L0Solution,
    pub dsse_estimates: Vec<DVector<f64>>,
    pub centralized_estimate: DVector<f64>,
    /// Time index of the centralized estimate.
    pub centralized_time: usize,
    /// Worst node distance between the static estimate and `l0_first`.
    pub dsse_vs_l0: f64,
    pub centralized_vs_l0: f64,
    /// Static estimates propagated to `centralized_time` vs the centralized estimate.
    pub dsse_vs_centralized: f64,
    pub true_support: BTreeSet<usize>,
    pub support_recovered: bool,
    pub dsse_converged: bool,
    pub centralized_converged: bool,
}

impl EquivalenceReport {
    pub fn max_distance(&self) -> f64 {
        self.dsse_vs_l0.max(self.centralized_vs_l0).max(self.dsse_vs_centralized)
    }

    pub fn agrees(&self, tol: f64) -> bool {
        self.max_distance() < tol && self.support_recovered
    }
}

/// Runs the exhaustive decoder, the static distributed estimator and the
/// centralized observer on the same trajectory and compares their estimates.
pub fn verify_equivalence(setup: &EquivalenceSetup<'_>, traj: &PlantTrajectory) -> Result<EquivalenceReport> {
    let depth = setup.depth;
    let global = build_global(setup.plant, depth)?;
    let o = global.observability();
    let l0_first = l0_decode(&global.stacked_outputs(traj, depth - 1)?, o, depth, setup.budget)?;

    let dsse = run_dsse(setup.plant, setup.topology, depth, traj, setup.dsse, setup.inner)?;
    let central = run_algorithm2(setup.plant, depth, traj, setup.centralized, setup.block_descent)?;
    let t_final = central.estimate_time;
    let l0_final = l0_decode(&global.stacked_outputs(traj, t_final + depth - 1)?, o, depth, setup.budget)?;

    let a_pow = setup.plant.a().pow(t_final as u32);
    let centralized_estimate = central.estimates[0].clone();
    let dist = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm();
    let dsse_vs_l0 = dsse.estimates.iter().map(|x| dist(x, &l0_first.x)).fold(0.0, f64::max);
    let dsse_vs_centralized = dsse
        .estimates
        .iter()
        .map(|x| dist(&(&a_pow * x), &centralized_estimate))
        .fold(0.0, f64::max);

    let true_support: BTreeSet<usize> = (0..setup.plant.sensor_count())
        .filter(|&j| traj.attacks.iter().any(|a| a[j] != 0.0))
        .collect();
    Ok(EquivalenceReport {
        support_recovered: l0_first.support == true_support && l0_final.support == true_support,
        centralized_vs_l0: dist(&centralized_estimate, &l0_final.x),
        l0_first,
        l0_final,
        dsse_estimates: dsse.estimates,
        centralized_estimate,
        centralized_time: t_final,
        dsse_vs_l0,
        dsse_vs_centralized,
        true_support,
        dsse_converged: dsse.termination.is_converged(),
        centralized_converged: central.termination.is_converged(),
    })
}
