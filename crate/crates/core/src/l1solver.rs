//! Node-level l1 subproblem.
//!
//! Each observer update minimizes, over its lifted estimate `(x, E)`,
//!
//! ```text
//! ||E||_1 + c'x + (rho/2) * sum_b ||x - b||^2   s.t.  O x + E = Y
//! ```
//!
//! Substituting `E = Y - O x` leaves a strongly convex problem in `x` alone,
//! which is solved by an inner ADMM splitting `w = Y - O x`. The x-step
//! system matrix `rho*m*I + sigma*O'O` is factorized once and reused until
//! `rho` or the number of anchors changes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::stacked::StackedLocalModel;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct InnerSolverConfig {
    /// Inner penalty.
    pub sigma: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Start from the previous splitting variables instead of a cold start.
    pub warm_start: bool,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            tolerance: 1e-8,
            max_iterations: 2000,
            warm_start: true,
        }
    }
}

impl InnerSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidParameter(format!(
                "inner solver needs sigma > 0, tolerance > 0, max_iterations >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Componentwise `sign(v) * max(|v| - kappa, 0)`.
pub fn soft_threshold(v: &DVector<f64>, kappa: f64) -> DVector<f64> {
    v.map(|vi| shrink(vi, kappa))
}

#[inline]
fn shrink(v: f64, kappa: f64) -> f64 {
    if v > kappa {
        v - kappa
    } else if v < -kappa {
        v + kappa
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSolution {
    pub x: DVector<f64>,
    /// Attack window estimate, always exactly `Y - O x`.
    pub e: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Objective of the node subproblem after eliminating `E`.
pub fn node_objective(
    observability: &DMatrix<f64>,
    y: &DVector<f64>,
    anchors: &[DVector<f64>],
    lambda_lin: &DVector<f64>,
    rho: f64,
    x: &DVector<f64>,
) -> f64 {
    let l1 = (y - observability * x).lp_norm(1);
    let quad: f64 = anchors.iter().map(|b| (x - b).norm_squared()).sum();
    l1 + lambda_lin.dot(x) + 0.5 * rho * quad
}

/// Per-node solver with a cached factorization and warm-start state.
#[derive(Debug, Clone)]
pub struct NodeSubproblem {
    observability: DMatrix<f64>,
    gram: DMatrix<f64>,
    factor: Option<(f64, f64, Cholesky<f64, Dyn>)>,
    w: Option<DVector<f64>>,
    u: Option<DVector<f64>>,
    factorizations: usize,
}

impl NodeSubproblem {
    pub fn new(observability: DMatrix<f64>) -> Self {
        let gram = observability.transpose() * &observability;
        Self {
            observability,
            gram,
            factor: None,
            w: None,
            u: None,
            factorizations: 0,
        }
    }

    pub fn for_model(local: &StackedLocalModel) -> Self {
        Self::new(local.observability().clone())
    }

    /// Number of factorizations performed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    /// Drops warm-start state; the factorization cache is kept.
    pub fn reset(&mut self) {
        self.w = None;
        self.u = None;
    }

    fn factor(&mut self, weight: f64, sigma: f64) -> Result<&Cholesky<f64, Dyn>> {
        let stale = match &self.factor {
            Some((w, s, _)) => *w != weight || *s != sigma,
            None => true,
        };
        if stale {
            let n = self.gram.nrows();
            let k = DMatrix::identity(n, n) * weight + &self.gram * sigma;
            let chol = Cholesky::new(k).ok_or(Error::RankDeficient {
                context: "inner x-step system",
                rank: 0,
                cols: n,
            })?;
            self.factor = Some((weight, sigma, chol));
            self.factorizations += 1;
        }
        Ok(&self.factor.as_ref().expect("factor was just set").2)
    }

    /// Minimizes the node objective over `x`; `anchors` are the `b` values of
    /// the closed neighborhood.
    pub fn solve(
        &mut self,
        y: &DVector<f64>,
        anchors: &[DVector<f64>],
        lambda_lin: &DVector<f64>,
        rho: f64,
        cfg: &InnerSolverConfig,
    ) -> Result<NodeSolution> {
        cfg.validate()?;
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("penalty must be positive, got {rho}")));
        }
        if anchors.is_empty() {
            return Err(Error::InvalidParameter("node subproblem needs at least one anchor".into()));
        }
        let n = self.observability.ncols();
        let rows = self.observability.nrows();
        if y.len() != rows {
            return Err(Error::Dimension {
                context: "node measurement window",
                expected: rows,
                actual: y.len(),
            });
        }
        for v in anchors.iter().chain(std::iter::once(lambda_lin)) {
            if v.len() != n {
                return Err(Error::Dimension {
                    context: "node anchor or multiplier",
                    expected: n,
                    actual: v.len(),
                });
            }
        }

        let weight = rho * anchors.len() as f64;
        let sigma = cfg.sigma;
        let mut center = DVector::zeros(n);
        for b in anchors {
            center += b;
        }
        center /= anchors.len() as f64;
        center -= lambda_lin / weight;
        let prox_rhs = &center * weight;

        let (mut w, mut u) = match (cfg.warm_start, &self.w, &self.u) {
            (true, Some(w), Some(u)) if w.len() == rows => (w.clone(), u.clone()),
            _ => (y - &self.observability * &center, DVector::zeros(rows)),
        };
        let o = self.observability.clone();
        let ot = o.transpose();
        let chol = self.factor(weight, sigma)?.clone();

        let mut x = center.clone();
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut converged = false;
        let mut iterations = 0;
        for it in 1..=cfg.max_iterations {
            iterations = it;
            let rhs = &prox_rhs + &ot * (y - &w + &u) * sigma;
            x = chol.solve(&rhs);
            let ox = &o * &x;
            let w_prev = std::mem::replace(&mut w, (y - &ox + &u).map(|v| shrink(v, 1.0 / sigma)));
            let primal = y - &ox - &w;
            u += &primal;
            let primal_norm = primal.norm();
            let dual_norm = sigma * (&ot * (&w - &w_prev)).norm();
            if primal_norm < cfg.tolerance && dual_norm < cfg.tolerance {
                converged = true;
                break;
            }
            let score = primal_norm.max(dual_norm);
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, x.clone()));
            }
        }
        if !converged {
            if let Some((_, bx)) = best {
                x = bx;
            }
        }
        self.w = Some(w);
        self.u = Some(u);
        let e = y - &o * &x;
        Ok(NodeSolution {
            x,
            e,
            iterations,
            converged,
        })
    }
}

/// Stateless convenience wrapper around [`NodeSubproblem::solve`].
pub fn solve_node_subproblem(
    local: &StackedLocalModel,
    anchors: &[DVector<f64>],
    lambda_lin: &DVector<f64>,
    rho: f64,
    y: &DVector<f64>,
    cfg: &InnerSolverConfig,
) -> Result<NodeSolution> {
    NodeSubproblem::for_model(local).solve(y, anchors, lambda_lin, rho, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&DVector::zeros(3), 1.0), DVector::zeros(3));
        let v = DVector::from_row_slice(&[5.0, -0.5]);
        assert_eq!(soft_threshold(&v, 1.0).as_slice(), &[4.0, 0.0]);
        let w = DVector::from_row_slice(&[1.5, -2.0, 0.0]);
        assert_eq!(soft_threshold(&w, 0.0), w);
    }

    proptest! {
        #[test]
        fn soft_threshold_is_nonexpansive(
            u in proptest::collection::vec(-10.0f64..10.0, 6),
            v in proptest::collection::vec(-10.0f64..10.0, 6),
            kappa in 0.0f64..5.0,
        ) {
            let u = DVector::from_vec(u);
            let v = DVector::from_vec(v);
            let du = soft_threshold(&u, kappa) - soft_threshold(&v, kappa);
            prop_assert!(du.norm() <= (u - v).norm() + 1e-12);
        }
    }

    #[test]
    fn consistent_anchor_is_exact_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let o = random_matrix(&mut rng, 6, 4);
        let b0 = random_vector(&mut rng, 4);
        let y = &o * &b0;
        let anchors = vec![b0.clone(); 3];
        let mut solver = NodeSubproblem::new(o.clone());
        let sol = solver
            .solve(&y, &anchors, &DVector::zeros(4), 1.0, &InnerSolverConfig::default())
            .unwrap();
        assert!(sol.converged);
        assert!((&sol.x - &b0).amax() < 1e-8);
        assert!(sol.e.amax() < 1e-8);
        assert_eq!(sol.e, &y - &o * &sol.x);
    }

    #[test]
    fn constraint_holds_by_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let o = random_matrix(&mut rng, 6, 4);
        let y = random_vector(&mut rng, 6);
        let anchors = vec![random_vector(&mut rng, 4), random_vector(&mut rng, 4)];
        let lam = random_vector(&mut rng, 4);
        let sol = NodeSubproblem::new(o.clone())
            .solve(&y, &anchors, &lam, 0.7, &InnerSolverConfig::default())
            .unwrap();
        assert_eq!(sol.e, &y - &o * &sol.x);
    }

    #[test]
    fn rejects_bad_penalty_and_dimensions() {
        let o = DMatrix::identity(3, 3);
        let mut s = NodeSubproblem::new(o);
        let cfg = InnerSolverConfig::default();
        let z = DVector::zeros(3);
        assert!(s.solve(&z, std::slice::from_ref(&z), &z, 0.0, &cfg).is_err());
        assert!(s.solve(&z, std::slice::from_ref(&z), &z, -1.0, &cfg).is_err());
        assert!(s.solve(&DVector::zeros(2), std::slice::from_ref(&z), &z, 1.0, &cfg).is_err());
        assert!(s.solve(&z, &[], &z, 1.0, &cfg).is_err());
    }

    #[test]
    fn factorization_is_cached_until_penalty_changes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let o = random_matrix(&mut rng, 6, 4);
        let y = random_vector(&mut rng, 6);
        let anchors = vec![random_vector(&mut rng, 4); 2];
        let lam = DVector::zeros(4);
        let cfg = InnerSolverConfig::default();
        let mut s = NodeSubproblem::new(o);
        s.solve(&y, &anchors, &lam, 1.0, &cfg).unwrap();
        s.solve(&y, &anchors, &lam, 1.0, &cfg).unwrap();
        assert_eq!(s.factorizations(), 1);
        s.solve(&y, &anchors, &lam, 10.0, &cfg).unwrap();
        assert_eq!(s.factorizations(), 2);
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let o = random_matrix(&mut rng, 6, 4);
        let y = random_vector(&mut rng, 6) * 5.0;
        let cfg = InnerSolverConfig {
            max_iterations: 2,
            ..Default::default()
        };
        let sol = NodeSubproblem::new(o.clone())
            .solve(&y, &[DVector::zeros(4)], &DVector::zeros(4), 1.0, &cfg)
            .unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert_eq!(sol.e, &y - &o * &sol.x);
    }
}
