//! Centralized observer: ADMM with the full output constraint `Q z = Ȳ` dualized.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::harness::trace::TraceRecord;
use crate::l1solver::soft_threshold;
use crate::model::{numerical_rank, PlantModel, PlantTrajectory};
use crate::observer::distributed::AdmmConfig;
use crate::observer::{RunOutcome, Termination};
use crate::stacked::{build_global, MeasurementWindow, StackedGlobalModel};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BlockDescentConfig {
    /// Stop when the sup-norm change of a sweep drops below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for BlockDescentConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_sweeps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralState {
    pub x: DVector<f64>,
    pub e: DVector<f64>,
    pub lambda: DVector<f64>,
    pub rho: f64,
    pub primal_residual: f64,
}

impl CentralState {
    pub fn zeros(model: &StackedGlobalModel, rho: f64) -> Self {
        Self {
            x: DVector::zeros(model.state_dim()),
            e: DVector::zeros(model.window_dim()),
            lambda: DVector::zeros(model.window_dim()),
            rho,
            primal_residual: f64::INFINITY,
        }
    }
}

/// Least-squares solver for `O x ≈ v` backed by a thin QR factorization.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    q_t: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LeastSquares {
    pub fn new(o: &DMatrix<f64>) -> Result<Self> {
        let rank = numerical_rank(o);
        if o.nrows() < o.ncols() || rank < o.ncols() {
            return Err(Error::RankDeficient {
                context: "stacked observability matrix",
                rank,
                cols: o.ncols(),
            });
        }
        let qr = o.clone().qr();
        Ok(Self {
            q_t: qr.q().transpose(),
            r: qr.r(),
        })
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.r
            .solve_upper_triangular(&(&self.q_t * v))
            .expect("R is nonsingular for a full-rank O")
    }
}

/// Minimizes `||E||_1 + (rho/2) ||O x + E - Ȳ + lambda/rho||^2` by
/// alternating exact block minimizations, starting from `(x0, E0)`.
/// Returns the minimizer and the number of sweeps.
pub fn central_z_update(
    o: &DMatrix<f64>,
    solver: &LeastSquares,
    x0: &DVector<f64>,
    y: &DVector<f64>,
    lambda: &DVector<f64>,
    rho: f64,
    cfg: &BlockDescentConfig,
) -> (DVector<f64>, DVector<f64>, usize) {
    let target = y - lambda / rho;
    let mut x = x0.clone();
    let mut e = soft_threshold(&(&target - o * &x), 1.0 / rho);
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let x_new = solver.solve(&(&target - &e));
        let e_new = soft_threshold(&(&target - o * &x_new), 1.0 / rho);
        let change = (&x_new - &x).amax().max((&e_new - &e).amax());
        x = x_new;
        e = e_new;
        if change < cfg.tolerance {
            break;
        }
    }
    (x, e, sweeps)
}

/// Value of the scaled z-update objective.
pub fn central_objective(o: &DMatrix<f64>, y: &DVector<f64>, lambda: &DVector<f64>, rho: f64, x: &DVector<f64>, e: &DVector<f64>) -> f64 {
    e.lp_norm(1) + 0.5 * rho * (o * x + e - y + lambda / rho).norm_squared()
}

/// Recursive centralized observer. Mirrors the distributed driver: time
/// update, then rounds of z-update and multiplier ascent until
/// `r < (1 - eta) r_prev` or `r < alpha`; stops when a time step ends with
/// `r < alpha`. There is no dual residual.
pub fn run_algorithm2(plant: &PlantModel, depth: usize, traj: &PlantTrajectory, admm: AdmmConfig, bcd: BlockDescentConfig) -> Result<RunOutcome> {
    admm.validate()?;
    let model = build_global(plant, depth)?;
    let mut state = CentralState::zeros(&model, admm.rho_init);
    run_algorithm2_with(&model, &mut state, traj, admm, bcd)
}

pub fn run_algorithm2_with(
    model: &StackedGlobalModel,
    state: &mut CentralState,
    traj: &PlantTrajectory,
    admm: AdmmConfig,
    bcd: BlockDescentConfig,
) -> Result<RunOutcome> {
    let depth = model.depth();
    if traj.len() <= depth {
        return Err(Error::InvalidParameter(format!(
            "trajectory of {} samples is too short for window length {depth}",
            traj.len()
        )));
    }
    let o = model.observability();
    let solver = LeastSquares::new(o)?;
    let mut window = MeasurementWindow::for_model(model);
    for t in 0..depth {
        window.push(&traj.outputs[t])?;
    }

    let mut z = model.join(&state.x, &state.e);
    let mut prev_r = state.primal_residual;
    let mut records = Vec::new();
    let mut total_rounds = 0;
    let mut estimate_time = 0;
    let mut t = depth;
    let termination = loop {
        if prev_r < admm.alpha {
            break Termination::Converged;
        }
        if records.len() >= admm.max_time_steps || t >= traj.len() {
            break Termination::Capped;
        }
        window.push(&traj.outputs[t])?;
        let y = window.stacked()?;
        let z_t = model.time_update(&z, &traj.outputs[t])?;
        let (x_t, _) = model.split(&z_t);
        state.x = x_t;

        let mut rounds = 0;
        loop {
            let (x, e, _) = central_z_update(o, &solver, &state.x, &y, &state.lambda, state.rho, &bcd);
            let gap = o * &x + &e - &y;
            state.lambda += &gap * state.rho;
            state.primal_residual = gap.norm();
            state.x = x;
            state.e = e;
            rounds += 1;
            let r = state.primal_residual;
            if r < (1.0 - admm.eta) * prev_r || r < admm.alpha || rounds >= admm.max_inner_rounds {
                break;
            }
        }
        total_rounds += rounds;
        z = model.join(&state.x, &state.e);
        prev_r = state.primal_residual;
        estimate_time = t + 1 - depth;
        records.push(TraceRecord {
            step: t,
            state_error: vec![(&state.x - &traj.states[estimate_time]).norm()],
            consensus_error: vec![0.0],
            primal_residual: vec![state.primal_residual],
            dual_residual: vec![0.0],
            rho: vec![state.rho],
            inner_rounds: rounds,
            messages: 0,
        });
        t += 1;
    };
    Ok(RunOutcome {
        records,
        termination,
        estimates: vec![state.x.clone()],
        attack_windows: vec![state.e.clone()],
        estimate_time,
        total_inner_rounds: total_rounds,
        unconverged_solves: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_fit_without_attack() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let o = DMatrix::from_fn(10, 3, |_, _| rng.gen_range(-1.0..1.0));
        let x_star = DVector::from_row_slice(&[0.4, -1.0, 2.0]);
        let y = &o * &x_star;
        let ls = LeastSquares::new(&o).unwrap();
        let (x, e, _) = central_z_update(&o, &ls, &DVector::zeros(3), &y, &DVector::zeros(10), 1.0, &Default::default());
        assert!((x - x_star).amax() < 1e-8);
        assert!(e.amax() < 1e-8);
    }

    #[test]
    fn single_sweep_e_block_is_soft_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let o = DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(6, |_, _| rng.gen_range(-3.0..3.0));
        let lambda = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        let x0 = DVector::from_row_slice(&[0.3, 0.1]);
        let ls = LeastSquares::new(&o).unwrap();
        let cfg = BlockDescentConfig {
            max_sweeps: 0,
            ..Default::default()
        };
        let rho = 2.0;
        let (x, e, sweeps) = central_z_update(&o, &ls, &x0, &y, &lambda, rho, &cfg);
        assert_eq!(sweeps, 0);
        assert_eq!(x, x0);
        assert_eq!(e, soft_threshold(&(&y - &lambda / rho - &o * &x0), 1.0 / rho));
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let o = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        assert!(matches!(LeastSquares::new(&o), Err(Error::RankDeficient { .. })));
    }
}
