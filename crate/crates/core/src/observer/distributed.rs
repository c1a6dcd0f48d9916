//! Distributed consensus-ADMM observer.
//!
//! Every node `i` keeps a local estimate `x_i` of the delayed state, an
//! auxiliary consensus variable `b_i`, one multiplier per consensus
//! constraint (`x_i = b_i` and `x_i = b_j` for each neighbor `j`) and its own
//! penalty `rho_i`. One ADMM round is three synchronous phases separated by
//! barriers:
//!
//! 1. z-phase: solve the node l1 subproblem, broadcast `x_i`;
//! 2. b-phase: update `b_i` from the neighborhood estimates, broadcast `b_i`;
//! 3. dual-phase: multiplier ascent, residuals, penalty adaptation.
//!
//! Nodes only ever read payloads from their neighbors.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::harness::trace::TraceRecord;
use crate::l1solver::{InnerSolverConfig, NodeSubproblem};
use crate::model::{PlantModel, PlantTrajectory};
use crate::observer::{consensus_errors, RunOutcome, Termination};
use crate::stacked::{build_local, MeasurementWindow, StackedLocalModel};

/// How the node multipliers enter the z- and b-updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierForm {
    /// `sum_{j in N_i} (lambda_ij + lambda_ii)` in both updates.
    #[default]
    PaperLiteral,
    /// Terms derived from the augmented Lagrangian: the z-update uses the
    /// node's own multipliers `lambda_ii + sum_j lambda_ij`, the b-update the
    /// multipliers of the constraints containing `b_i`, i.e.
    /// `lambda_ii + sum_j lambda_ji`, weighted by their owners' penalties.
    LagrangianConsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    pub rho_init: f64,
    /// Penalty scale factor `nu > 1`.
    pub penalty_factor: f64,
    /// Increase `rho` when `r > mu1 * s`.
    pub mu1: f64,
    /// Decrease `rho` when `s > mu2 * r`.
    pub mu2: f64,
    /// Primal residual tolerance.
    pub alpha: f64,
    /// Dual residual tolerance.
    pub beta: f64,
    /// Required per-time-step residual contraction, in (0, 1).
    pub eta: f64,
    pub adaptive_penalty: bool,
    pub multiplier_form: MultiplierForm,
    pub max_inner_rounds: usize,
    pub max_time_steps: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho_init: 1.0,
            penalty_factor: 10.0,
            mu1: 2.5,
            mu2: 1.1,
            alpha: 0.1,
            beta: 0.1,
            eta: 0.1,
            adaptive_penalty: true,
            multiplier_form: MultiplierForm::PaperLiteral,
            max_inner_rounds: 1000,
            max_time_steps: 1000,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.rho_init > 0.0) {
            issues.push(format!("rho_init must be > 0 (got {})", self.rho_init));
        }
        if !(self.penalty_factor > 1.0) {
            issues.push(format!("penalty_factor must be > 1 (got {})", self.penalty_factor));
        }
        if !(self.mu1 > 1.0 && self.mu2 > 1.0) {
            issues.push(format!("mu1 and mu2 must be > 1 (got {}, {})", self.mu1, self.mu2));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            issues.push(format!("eta must lie in (0, 1) (got {})", self.eta));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            issues.push(format!("alpha and beta must be > 0 (got {}, {})", self.alpha, self.beta));
        }
        if self.max_inner_rounds == 0 || self.max_time_steps == 0 {
            issues.push("iteration caps must be >= 1".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(issues.join("; ")))
        }
    }
}

/// Linear coefficient of `x_i` in the z-update.
pub fn linear_term(
    lambda_self: &DVector<f64>,
    lambda_edges: &[DVector<f64>],
    form: MultiplierForm,
) -> DVector<f64> {
    let mut out = DVector::zeros(lambda_self.len());
    match form {
        MultiplierForm::PaperLiteral => {
            for l in lambda_edges {
                out += l;
                out += lambda_self;
            }
        }
        MultiplierForm::LagrangianConsistent => {
            out += lambda_self;
            for l in lambda_edges {
                out += l;
            }
        }
    }
    out
}

/// Minimizer of `-c'b + (rho/2) sum_k ||x_k - b||^2`: `mean(x) + c / (rho m)`.
pub fn b_update(x_closed: &[DVector<f64>], lambda_lin: &DVector<f64>, rho: f64) -> DVector<f64> {
    let m = x_closed.len() as f64;
    let mut mean = DVector::zeros(lambda_lin.len());
    for x in x_closed {
        mean += x;
    }
    mean /= m;
    mean + lambda_lin / (rho * m)
}

/// Minimizer of `-c'b + sum_k (w_k/2) ||x_k - b||^2`.
pub fn b_update_weighted(x_closed: &[(DVector<f64>, f64)], lambda_lin: &DVector<f64>) -> DVector<f64> {
    let mut acc = lambda_lin.clone();
    let mut total = 0.0;
    for (x, w) in x_closed {
        acc += x * *w;
        total += w;
    }
    acc / total
}

/// Multiplier ascent on the closed neighborhood:
/// `lambda_ij += rho (x - b_j)` and `lambda_ii += rho (x - b_i)`.
pub fn dual_update(
    lambda_self: &mut DVector<f64>,
    lambda_edges: &mut [DVector<f64>],
    x: &DVector<f64>,
    b_self: &DVector<f64>,
    b_neighbors: &[DVector<f64>],
    rho: f64,
) -> Result<()> {
    if lambda_edges.len() != b_neighbors.len() {
        return Err(Error::MissingPayload(b_neighbors.len()));
    }
    for (l, bj) in lambda_edges.iter_mut().zip(b_neighbors) {
        *l += (x - bj) * rho;
    }
    *lambda_self += (x - b_self) * rho;
    Ok(())
}

/// `(r, s)`: consensus disagreement over the closed neighborhood, and the
/// scaled change of `b_i`.
pub fn residuals(
    x: &DVector<f64>,
    b_self: &DVector<f64>,
    b_neighbors: &[DVector<f64>],
    b_prev: &DVector<f64>,
    rho: f64,
) -> (f64, f64) {
    let r = (x - b_self).norm() + b_neighbors.iter().map(|b| (x - b).norm()).sum::<f64>();
    let s = rho * (b_self - b_prev).norm();
    (r, s)
}

/// Residual-balancing penalty adaptation.
pub fn penalty_update(rho: f64, r: f64, s: f64, cfg: &AdmmConfig) -> f64 {
    if r > cfg.mu1 * s {
        rho * cfg.penalty_factor
    } else if s > cfg.mu2 * r {
        rho / cfg.penalty_factor
    } else {
        rho
    }
}

/// Broadcast of the z-phase: the new estimate plus, for the b-update of the
/// receiver, the sender's multiplier on the edge constraint `x_from = b_to`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePayload {
    pub from: usize,
    pub x: DVector<f64>,
    pub rho: f64,
    pub edge_multipliers: BTreeMap<usize, DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorPayload {
    pub from: usize,
    pub b: DVector<f64>,
}

/// Per-receiver inboxes for one round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundMessages {
    pub states: Vec<Vec<StatePayload>>,
    pub anchors: Vec<Vec<AnchorPayload>>,
    pub sent: usize,
}

/// One observer node.
#[derive(Debug, Clone)]
pub struct ObserverNodeState {
    pub index: usize,
    pub neighbors: Vec<usize>,
    pub local: StackedLocalModel,
    pub window: MeasurementWindow,
    /// Lifted estimate `(x, E)` from the last completed time step.
    pub z: DVector<f64>,
    pub x: DVector<f64>,
    pub e: DVector<f64>,
    pub b: DVector<f64>,
    pub b_prev: DVector<f64>,
    /// Latest `b_j` received from each neighbor, aligned with `neighbors`.
    pub neighbor_b: Vec<DVector<f64>>,
    pub lambda_self: DVector<f64>,
    /// `lambda_ij`, aligned with `neighbors`.
    pub lambda_edges: Vec<DVector<f64>>,
    pub rho: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub unconverged_solves: usize,
    solver: NodeSubproblem,
}

impl ObserverNodeState {
    pub fn new(local: StackedLocalModel, neighbors: Vec<usize>, rho: f64) -> Self {
        let n = local.state_dim();
        let window = MeasurementWindow::for_model(&local);
        let solver = NodeSubproblem::for_model(&local);
        let zero = DVector::zeros(n);
        Self {
            index: local.node().unwrap_or(0),
            neighbor_b: vec![zero.clone(); neighbors.len()],
            lambda_edges: vec![zero.clone(); neighbors.len()],
            neighbors,
            z: DVector::zeros(local.lifted_dim()),
            e: DVector::zeros(local.window_dim()),
            window,
            local,
            x: zero.clone(),
            b: zero.clone(),
            b_prev: zero.clone(),
            lambda_self: zero,
            rho,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            unconverged_solves: 0,
            solver,
        }
    }

    fn neighbor_slot(&self, j: usize) -> Option<usize> {
        self.neighbors.iter().position(|&k| k == j)
    }

    /// z-update followed by the state broadcast.
    pub fn z_phase(&mut self, form: MultiplierForm, inner: &InnerSolverConfig) -> Result<StatePayload> {
        let y = self.window.stacked()?;
        let lambda_lin = linear_term(&self.lambda_self, &self.lambda_edges, form);
        let mut anchors = Vec::with_capacity(self.neighbors.len() + 1);
        anchors.push(self.b.clone());
        anchors.extend(self.neighbor_b.iter().cloned());
        let sol = self.solver.solve(&y, &anchors, &lambda_lin, self.rho, inner)?;
        if !sol.converged {
            self.unconverged_solves += 1;
        }
        self.x = sol.x;
        self.e = sol.e;
        let edge_multipliers = self
            .neighbors
            .iter()
            .zip(&self.lambda_edges)
            .map(|(&j, l)| (j, l.clone()))
            .collect();
        Ok(StatePayload {
            from: self.index,
            x: self.x.clone(),
            rho: self.rho,
            edge_multipliers,
        })
    }

    /// b-update from the neighborhood estimates, followed by the anchor broadcast.
    pub fn b_phase(&mut self, inbox: &[StatePayload], form: MultiplierForm) -> Result<AnchorPayload> {
        let mut received: Vec<Option<&StatePayload>> = vec![None; self.neighbors.len()];
        for msg in inbox {
            if let Some(slot) = self.neighbor_slot(msg.from) {
                received[slot] = Some(msg);
            }
        }
        let mut payloads = Vec::with_capacity(self.neighbors.len());
        for (slot, msg) in received.into_iter().enumerate() {
            payloads.push(msg.ok_or(Error::MissingPayload(self.neighbors[slot]))?);
        }

        self.b_prev = self.b.clone();
        self.b = match form {
            MultiplierForm::PaperLiteral => {
                let lambda_lin = linear_term(&self.lambda_self, &self.lambda_edges, form);
                let mut closed = Vec::with_capacity(payloads.len() + 1);
                closed.push(self.x.clone());
                closed.extend(payloads.iter().map(|m| m.x.clone()));
                b_update(&closed, &lambda_lin, self.rho)
            }
            MultiplierForm::LagrangianConsistent => {
                let mut lambda_lin = self.lambda_self.clone();
                let mut closed = Vec::with_capacity(payloads.len() + 1);
                closed.push((self.x.clone(), self.rho));
                for m in &payloads {
                    let l = m
                        .edge_multipliers
                        .get(&self.index)
                        .ok_or(Error::MissingPayload(m.from))?;
                    lambda_lin += l;
                    closed.push((m.x.clone(), m.rho));
                }
                b_update_weighted(&closed, &lambda_lin)
            }
        };
        Ok(AnchorPayload {
            from: self.index,
            b: self.b.clone(),
        })
    }

    /// Multiplier ascent, residuals and penalty adaptation.
    pub fn dual_phase(&mut self, inbox: &[AnchorPayload], cfg: &AdmmConfig) -> Result<()> {
        let mut fresh: Vec<Option<DVector<f64>>> = vec![None; self.neighbors.len()];
        for msg in inbox {
            if let Some(slot) = self.neighbor_slot(msg.from) {
                fresh[slot] = Some(msg.b.clone());
            }
        }
        for (slot, b) in fresh.into_iter().enumerate() {
            self.neighbor_b[slot] = b.ok_or(Error::MissingPayload(self.neighbors[slot]))?;
        }
        dual_update(
            &mut self.lambda_self,
            &mut self.lambda_edges,
            &self.x,
            &self.b,
            &self.neighbor_b,
            self.rho,
        )?;
        let (r, s) = residuals(&self.x, &self.b, &self.neighbor_b, &self.b_prev, self.rho);
        self.primal_residual = r;
        self.dual_residual = s;
        if cfg.adaptive_penalty {
            self.rho = penalty_update(self.rho, r, s, cfg);
        }
        Ok(())
    }

    /// Time update of the lifted estimate with the newest local measurement,
    /// after which `x` and `b` restart from the propagated state.
    pub fn time_update(&mut self, y: &DVector<f64>) -> Result<()> {
        self.window.push(y)?;
        let z_t = self.local.time_update(&self.z, y)?;
        let (x, e) = self.local.split(&z_t);
        self.x = x.clone();
        self.e = e;
        self.b = x.clone();
        self.b_prev = x;
        Ok(())
    }

    /// Commits the current iterate as the lifted estimate for this time step.
    pub fn commit(&mut self) {
        self.z = self.local.join(&self.x, &self.e);
    }

    /// `||O_i x + E - Y_i||_inf` for the current iterate.
    pub fn constraint_violation(&self) -> Result<f64> {
        let y = self.window.stacked()?;
        Ok((self.local.observability() * &self.x + &self.e - y).amax())
    }
}

/// The network of observer nodes with a synchronous round driver.
#[derive(Debug, Clone)]
pub struct DistributedObserver {
    pub nodes: Vec<ObserverNodeState>,
    topology: Topology,
    pub admm: AdmmConfig,
    pub inner: InnerSolverConfig,
    pub messages_sent: usize,
}

impl DistributedObserver {
    pub fn new(plant: &PlantModel, topology: &Topology, depth: usize, admm: AdmmConfig, inner: InnerSolverConfig) -> Result<Self> {
        admm.validate()?;
        inner.validate()?;
        if topology.node_count() != plant.observer_count() {
            return Err(Error::Dimension {
                context: "topology nodes vs sensor partition",
                expected: plant.observer_count(),
                actual: topology.node_count(),
            });
        }
        let mut nodes = Vec::with_capacity(topology.node_count());
        for i in 0..topology.node_count() {
            let local = build_local(plant, depth, i)?;
            nodes.push(ObserverNodeState::new(local, topology.neighbors(i)?, admm.rho_init));
        }
        Ok(Self {
            nodes,
            topology: topology.clone(),
            admm,
            inner,
            messages_sent: 0,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// Feeds one full measurement vector into every node's window.
    pub fn push_measurement(&mut self, y: &DVector<f64>) -> Result<()> {
        for node in &mut self.nodes {
            let local_y = node.local.local_measurement(y);
            node.window.push(&local_y)?;
        }
        Ok(())
    }

    /// Sets every node's estimate and anchor to `x` (and exchanges anchors).
    pub fn set_estimates(&mut self, x: &DVector<f64>) {
        for node in &mut self.nodes {
            node.x = x.clone();
            node.b = x.clone();
            node.b_prev = x.clone();
            for nb in &mut node.neighbor_b {
                *nb = x.clone();
            }
        }
    }

    /// Time update at every node followed by the initial anchor exchange.
    pub fn time_update(&mut self, y: &DVector<f64>) -> Result<()> {
        for node in &mut self.nodes {
            let local_y = node.local.local_measurement(y);
            node.time_update(&local_y)?;
        }
        self.exchange_anchors();
        Ok(())
    }

    fn exchange_anchors(&mut self) {
        let anchors: Vec<DVector<f64>> = self.nodes.iter().map(|n| n.b.clone()).collect();
        for node in &mut self.nodes {
            for (slot, &j) in node.neighbors.iter().enumerate() {
                node.neighbor_b[slot] = anchors[j].clone();
            }
        }
        self.messages_sent += 2 * self.topology.edge_count();
    }

    /// One synchronous round with nodes visited in index order.
    pub fn admm_round(&mut self) -> Result<RoundMessages> {
        let order: Vec<usize> = (0..self.nodes.len()).collect();
        self.admm_round_ordered(&order)
    }

    /// One synchronous round visiting nodes in `order` within each phase.
    /// Results do not depend on `order`.
    pub fn admm_round_ordered(&mut self, order: &[usize]) -> Result<RoundMessages> {
        let n = self.nodes.len();
        let form = self.admm.multiplier_form;
        let mut messages = RoundMessages {
            states: vec![Vec::new(); n],
            anchors: vec![Vec::new(); n],
            sent: 0,
        };

        let mut states: Vec<Option<StatePayload>> = vec![None; n];
        for &i in order {
            states[i] = Some(self.nodes[i].z_phase(form, &self.inner)?);
        }
        for i in 0..n {
            for &j in &self.nodes[i].neighbors {
                let payload = states[j].clone().ok_or(Error::MissingPayload(j))?;
                messages.states[i].push(payload);
                messages.sent += 1;
            }
        }

        let mut anchors: Vec<Option<AnchorPayload>> = vec![None; n];
        for &i in order {
            anchors[i] = Some(self.nodes[i].b_phase(&messages.states[i], form)?);
        }
        for i in 0..n {
            for &j in &self.nodes[i].neighbors {
                let payload = anchors[j].clone().ok_or(Error::MissingPayload(j))?;
                messages.anchors[i].push(payload);
                messages.sent += 1;
            }
        }

        for &i in order {
            let inbox = std::mem::take(&mut messages.anchors[i]);
            self.nodes[i].dual_phase(&inbox, &self.admm)?;
            messages.anchors[i] = inbox;
        }
        self.messages_sent += messages.sent;
        Ok(messages)
    }

    pub fn estimates(&self) -> Vec<DVector<f64>> {
        self.nodes.iter().map(|n| n.x.clone()).collect()
    }

    fn residuals_within(&self, alpha: f64, beta: f64) -> bool {
        self.nodes
            .iter()
            .all(|n| n.primal_residual < alpha && n.dual_residual < beta)
    }

    fn record(&self, step: usize, truth: &DVector<f64>, inner_rounds: usize, messages: usize) -> TraceRecord {
        let estimates = self.estimates();
        TraceRecord {
            step,
            state_error: estimates.iter().map(|x| (x - truth).norm()).collect(),
            consensus_error: consensus_errors(&estimates),
            primal_residual: self.nodes.iter().map(|n| n.primal_residual).collect(),
            dual_residual: self.nodes.iter().map(|n| n.dual_residual).collect(),
            rho: self.nodes.iter().map(|n| n.rho).collect(),
            inner_rounds,
            messages,
        }
    }

    fn outcome(&self, records: Vec<TraceRecord>, termination: Termination, estimate_time: usize, total_inner_rounds: usize) -> RunOutcome {
        RunOutcome {
            records,
            termination,
            estimates: self.estimates(),
            attack_windows: self.nodes.iter().map(|n| n.e.clone()).collect(),
            estimate_time,
            total_inner_rounds,
            unconverged_solves: self.nodes.iter().map(|n| n.unconverged_solves).sum(),
        }
    }
}

/// Recursive distributed observer.
///
/// The first `depth` samples of `traj` prime the windows; from then on every
/// time step performs a time update followed by ADMM rounds until each node's
/// residuals have contracted by the factor `1 - eta` relative to the previous
/// time step (or already satisfy the final tolerances). The run stops once
/// every node ends a time step with `r < alpha` and `s < beta`.
pub fn run_algorithm1(plant: &PlantModel, topology: &Topology, depth: usize, traj: &PlantTrajectory, admm: AdmmConfig, inner: InnerSolverConfig) -> Result<RunOutcome> {
    let mut observer = DistributedObserver::new(plant, topology, depth, admm, inner)?;
    run_algorithm1_with(&mut observer, traj, None)
}

/// Like [`run_algorithm1`] on a prepared observer. With `initial` set, every
/// node starts from that lifted estimate instead of zero.
pub fn run_algorithm1_with(observer: &mut DistributedObserver, traj: &PlantTrajectory, initial: Option<&[DVector<f64>]>) -> Result<RunOutcome> {
    let depth = observer.nodes[0].local.depth();
    if traj.len() <= depth {
        return Err(Error::InvalidParameter(format!(
            "trajectory of {} samples is too short for window length {depth}",
            traj.len()
        )));
    }
    for t in 0..depth {
        observer.push_measurement(&traj.outputs[t])?;
    }
    if let Some(z0) = initial {
        for (node, z) in observer.nodes.iter_mut().zip(z0) {
            node.z = z.clone();
        }
    }
    let cfg = observer.admm;
    let mut prev_r = vec![f64::INFINITY; observer.nodes.len()];
    let mut prev_s = vec![f64::INFINITY; observer.nodes.len()];
    let mut records = Vec::new();
    let mut total_rounds = 0;
    let mut t = depth;
    let mut estimate_time = 0;

    loop {
        let done = prev_r.iter().all(|&r| r < cfg.alpha) && prev_s.iter().all(|&s| s < cfg.beta);
        if done {
            return Ok(observer.outcome(records, Termination::Converged, estimate_time, total_rounds));
        }
        if records.len() >= cfg.max_time_steps || t >= traj.len() {
            return Ok(observer.outcome(records, Termination::Capped, estimate_time, total_rounds));
        }

        let messages_before = observer.messages_sent;
        observer.time_update(&traj.outputs[t])?;
        let mut rounds = 0;
        loop {
            observer.admm_round()?;
            rounds += 1;
            let contracted = observer.nodes.iter().enumerate().all(|(i, n)| {
                n.primal_residual < (1.0 - cfg.eta) * prev_r[i] && n.dual_residual < (1.0 - cfg.eta) * prev_s[i]
            });
            if contracted || observer.residuals_within(cfg.alpha, cfg.beta) || rounds >= cfg.max_inner_rounds {
                break;
            }
        }
        total_rounds += rounds;
        for (i, node) in observer.nodes.iter_mut().enumerate() {
            node.commit();
            prev_r[i] = node.primal_residual;
            prev_s[i] = node.dual_residual;
        }
        estimate_time = t + 1 - depth;
        let truth = &traj.states[estimate_time];
        records.push(observer.record(t, truth, rounds, observer.messages_sent - messages_before));
        t += 1;
    }
}

/// Static estimator: ADMM rounds on the fixed batch `t0 .. t0+depth-1`
/// (here `t0 = 0`) until every node has `r <= alpha` and `s <= beta`, or
/// `max_inner_rounds` rounds. One trace record per round, errors against `x[0]`.
pub fn run_dsse(plant: &PlantModel, topology: &Topology, depth: usize, traj: &PlantTrajectory, admm: AdmmConfig, inner: InnerSolverConfig) -> Result<RunOutcome> {
    let mut observer = DistributedObserver::new(plant, topology, depth, admm, inner)?;
    run_dsse_with(&mut observer, traj)
}

pub fn run_dsse_with(observer: &mut DistributedObserver, traj: &PlantTrajectory) -> Result<RunOutcome> {
    let depth = observer.nodes[0].local.depth();
    if traj.len() < depth {
        return Err(Error::Unprimed {
            have: traj.len(),
            need: depth,
        });
    }
    for t in 0..depth {
        observer.push_measurement(&traj.outputs[t])?;
    }
    let cfg = observer.admm;
    let truth = &traj.states[0];
    let mut records = Vec::new();
    for round in 1..=cfg.max_inner_rounds {
        let before = observer.messages_sent;
        observer.admm_round()?;
        records.push(observer.record(round, truth, 1, observer.messages_sent - before));
        let done = observer
            .nodes
            .iter()
            .all(|n| n.primal_residual <= cfg.alpha && n.dual_residual <= cfg.beta);
        if done {
            return Ok(observer.outcome(records, Termination::Converged, 0, round));
        }
    }
    let rounds = records.len();
    Ok(observer.outcome(records, Termination::Capped, 0, rounds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn linear_term_forms() {
        let v = vec(&[1.0, -2.0]);
        let z = DVector::zeros(2);
        let one = [vec(&[0.5, 0.5])];
        assert_eq!(
            linear_term(&v, &one, MultiplierForm::PaperLiteral),
            linear_term(&v, &one, MultiplierForm::LagrangianConsistent)
        );
        let two = [z.clone(), z.clone()];
        assert_eq!(linear_term(&v, &two, MultiplierForm::PaperLiteral), &v * 2.0);
        assert_eq!(linear_term(&v, &two, MultiplierForm::LagrangianConsistent), v);
        assert_eq!(linear_term(&z, &two, MultiplierForm::PaperLiteral), z);
    }

    #[test]
    fn b_update_consensus_fixed_point() {
        let v = vec(&[0.3, -1.2, 4.0]);
        let b = b_update(&[v.clone(), v.clone(), v.clone()], &DVector::zeros(3), 2.0);
        assert!((b - v).amax() < 1e-15);
    }

    /// Gradient of `-c'b + (rho/2) sum ||x_k - b||^2` by central differences.
    fn fd_gradient(xs: &[DVector<f64>], c: &DVector<f64>, rho: f64, b: &DVector<f64>) -> DVector<f64> {
        let f = |b: &DVector<f64>| -c.dot(b) + 0.5 * rho * xs.iter().map(|x| (x - b).norm_squared()).sum::<f64>();
        let h = 1e-6;
        DVector::from_fn(b.len(), |k, _| {
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[k] += h;
            bm[k] -= h;
            (f(&bp) - f(&bm)) / (2.0 * h)
        })
    }

    #[test]
    fn b_update_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let m = rng.gen_range(1..5);
            let xs: Vec<_> = (0..m).map(|_| DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0))).collect();
            let c = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
            let rho = rng.gen_range(0.1..10.0);
            let b = b_update(&xs, &c, rho);
            let exact: DVector<f64> = -&c - xs.iter().fold(DVector::zeros(4), |acc, x| acc + (x - &b)) * rho;
            assert!(exact.norm() < 1e-10);
            assert!(fd_gradient(&xs, &c, rho, &b).norm() < 1e-6);
        }
    }

    #[test]
    fn weighted_b_update_reduces_to_uniform() {
        let xs = [vec(&[1.0, 2.0]), vec(&[3.0, -1.0])];
        let c = vec(&[0.4, 0.1]);
        let uniform = b_update(&xs, &c, 3.0);
        let weighted = b_update_weighted(&[(xs[0].clone(), 3.0), (xs[1].clone(), 3.0)], &c);
        assert!((uniform - weighted).amax() < 1e-15);
    }

    #[test]
    fn dual_update_examples() {
        let x = vec(&[1.0]);
        let mut ls = vec(&[0.0]);
        let mut le = vec![vec(&[0.0])];
        dual_update(&mut ls, &mut le, &x, &x, std::slice::from_ref(&x), 1.0).unwrap();
        assert_eq!((ls[0], le[0][0]), (0.0, 0.0));

        let b = vec(&[0.0]);
        dual_update(&mut ls, &mut le, &x, &b, std::slice::from_ref(&b), 1.0).unwrap();
        assert_eq!((ls[0], le[0][0]), (1.0, 1.0));
        dual_update(&mut ls, &mut le, &x, &b, std::slice::from_ref(&b), 1.0).unwrap();
        assert_eq!((ls[0], le[0][0]), (2.0, 2.0));
        assert!(dual_update(&mut ls, &mut le, &x, &b, &[], 1.0).is_err());
    }

    #[test]
    fn residual_examples() {
        let x = vec(&[1.0]);
        let (r, s) = residuals(&x, &vec(&[0.0]), &[vec(&[2.0])], &vec(&[0.0]), 1.0);
        assert_eq!((r, s), (2.0, 0.0));
        let (r, _) = residuals(&x, &x, &[x.clone(), x.clone()], &x, 1.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn penalty_branches() {
        let cfg = AdmmConfig::default();
        assert_eq!(penalty_update(1.0, 1.0, 0.3, &cfg), 10.0);
        assert_eq!(penalty_update(1.0, 1.0, 10.0, &cfg), 0.1);
        assert_eq!(penalty_update(1.0, 0.0, 0.0, &cfg), 1.0);
        assert_eq!(penalty_update(2.0, 1.0, 1.0, &cfg), 2.0);
    }

    #[test]
    fn config_validation() {
        assert!(AdmmConfig::default().validate().is_ok());
        let bad = AdmmConfig {
            penalty_factor: 1.0,
            eta: 1.5,
            ..Default::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("penalty_factor") && msg.contains("eta"));
    }
}
