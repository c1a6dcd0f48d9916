//! Lifted-state machinery.
//!
//! Over a window of `depth` samples the lifted state is
//! `z[t] = (x[t-depth+1], E[t])` where `E[t]` stacks, sensor by sensor, the
//! attack values `(a_j[t-depth+1], ..., a_j[t])`. It evolves as
//! `z[t] = Ā z[t-1] + N y[t]` and explains the measurement window through
//! `Ȳ[t] = Q z[t]` with `Q = [O | I]`.

use std::collections::VecDeque;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{observability_matrix, PlantModel, PlantTrajectory};

/// Stacked matrices for a contiguous set of sensors. With every sensor this
/// is the global model; with one node's sensors it is that node's local model.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedModel {
    node: Option<usize>,
    sensors: Range<usize>,
    depth: usize,
    state_dim: usize,
    observability: DMatrix<f64>,
    output_map: DMatrix<f64>,
    transition: DMatrix<f64>,
    input_map: DMatrix<f64>,
    shift: DMatrix<f64>,
    g_blocks: Vec<DMatrix<f64>>,
}

pub type StackedGlobalModel = StackedModel;
pub type StackedLocalModel = StackedModel;

/// `depth x depth` upper shift matrix (ones on the superdiagonal).
pub fn shift_matrix(depth: usize) -> DMatrix<f64> {
    DMatrix::from_fn(depth, depth, |r, c| if c == r + 1 { 1.0 } else { 0.0 })
}

fn build(plant: &PlantModel, depth: usize, sensors: Range<usize>, node: Option<usize>) -> Result<StackedModel> {
    let n = plant.state_dim();
    if depth == 0 || depth > n {
        return Err(Error::InvalidParameter(format!(
            "window length must satisfy 1 <= depth <= {n}, got {depth}"
        )));
    }
    let a = plant.a();
    let m = sensors.len();
    let lifted = n + m * depth;
    let shift = shift_matrix(depth);
    let a_pow = a.pow(depth as u32);

    let mut observability = DMatrix::zeros(m * depth, n);
    let mut transition = DMatrix::zeros(lifted, lifted);
    let mut input_map = DMatrix::zeros(lifted, m);
    let mut g_blocks = Vec::with_capacity(m);
    transition.view_mut((0, 0), (n, n)).copy_from(a);

    for (local, sensor) in sensors.clone().enumerate() {
        let row = plant.c().rows(sensor, 1).clone_owned();
        let o_j = observability_matrix(a, &row, depth)?;
        observability.rows_mut(local * depth, depth).copy_from(&o_j);

        let mut g = DMatrix::zeros(depth, n);
        g.row_mut(depth - 1).copy_from(&(-(&row * &a_pow)).row(0));

        let top = n + local * depth;
        transition.view_mut((top, 0), (depth, n)).copy_from(&g);
        transition.view_mut((top, top), (depth, depth)).copy_from(&shift);
        input_map[(top + depth - 1, local)] = 1.0;
        g_blocks.push(g);
    }

    let mut output_map = DMatrix::zeros(m * depth, lifted);
    output_map.view_mut((0, 0), (m * depth, n)).copy_from(&observability);
    output_map
        .view_mut((0, n), (m * depth, m * depth))
        .fill_with_identity();

    Ok(StackedModel {
        node,
        sensors,
        depth,
        state_dim: n,
        observability,
        output_map,
        transition,
        input_map,
        shift,
        g_blocks,
    })
}

/// Global lifted model over all `p` sensors.
pub fn build_global(plant: &PlantModel, depth: usize) -> Result<StackedGlobalModel> {
    build(plant, depth, 0..plant.sensor_count(), None)
}

/// Lifted model restricted to the sensors owned by observer `node`.
pub fn build_local(plant: &PlantModel, depth: usize, node: usize) -> Result<StackedLocalModel> {
    let range = plant.sensor_range(node)?;
    build(plant, depth, range, Some(node))
}

impl StackedModel {
    pub fn node(&self) -> Option<usize> {
        self.node
    }

    pub fn sensors(&self) -> Range<usize> {
        self.sensors.clone()
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Dimension of the stacked attack window (`sensors * depth`).
    pub fn window_dim(&self) -> usize {
        self.sensors.len() * self.depth
    }

    pub fn lifted_dim(&self) -> usize {
        self.state_dim + self.window_dim()
    }

    /// `O`: per-sensor observability blocks stacked in sensor order.
    pub fn observability(&self) -> &DMatrix<f64> {
        &self.observability
    }

    /// `Q = [O | I]`.
    pub fn output_map(&self) -> &DMatrix<f64> {
        &self.output_map
    }

    /// `Ā`.
    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    /// `N`.
    pub fn input_map(&self) -> &DMatrix<f64> {
        &self.input_map
    }

    pub fn shift(&self) -> &DMatrix<f64> {
        &self.shift
    }

    /// `G_j` for the `local`-th sensor of this model.
    pub fn g_block(&self, local: usize) -> &DMatrix<f64> {
        &self.g_blocks[local]
    }

    /// `Ā z_prev + N y`.
    pub fn time_update(&self, z_prev: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        if z_prev.len() != self.lifted_dim() {
            return Err(Error::Dimension {
                context: "time update lifted state",
                expected: self.lifted_dim(),
                actual: z_prev.len(),
            });
        }
        if y.len() != self.sensor_count() {
            return Err(Error::Dimension {
                context: "time update measurement",
                expected: self.sensor_count(),
                actual: y.len(),
            });
        }
        Ok(&self.transition * z_prev + &self.input_map * y)
    }

    /// Splits a lifted vector into its state and attack-window parts.
    pub fn split(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.state_dim;
        (z.rows(0, n).clone_owned(), z.rows(n, z.len() - n).clone_owned())
    }

    pub fn join(&self, x: &DVector<f64>, e: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(x.len() + e.len());
        z.rows_mut(0, x.len()).copy_from(x);
        z.rows_mut(x.len(), e.len()).copy_from(e);
        z
    }

    /// Extracts this model's sensors from a full measurement vector.
    pub fn local_measurement(&self, y: &DVector<f64>) -> DVector<f64> {
        y.rows(self.sensors.start, self.sensors.len()).clone_owned()
    }

    /// True lifted state `(x[t-depth+1], E[t])` from a simulated trajectory.
    pub fn true_lifted_state(&self, traj: &PlantTrajectory, t: usize) -> Result<DVector<f64>> {
        let start = self.window_start(traj, t)?;
        let mut e = DVector::zeros(self.window_dim());
        for (local, sensor) in self.sensors.clone().enumerate() {
            for k in 0..self.depth {
                e[local * self.depth + k] = traj.attacks[start + k][sensor];
            }
        }
        Ok(self.join(&traj.states[start], &e))
    }

    /// Measurement window `Ȳ[t]` built directly from a trajectory.
    pub fn stacked_outputs(&self, traj: &PlantTrajectory, t: usize) -> Result<DVector<f64>> {
        let start = self.window_start(traj, t)?;
        let mut y = DVector::zeros(self.window_dim());
        for (local, sensor) in self.sensors.clone().enumerate() {
            for k in 0..self.depth {
                y[local * self.depth + k] = traj.outputs[start + k][sensor];
            }
        }
        Ok(y)
    }

    fn window_start(&self, traj: &PlantTrajectory, t: usize) -> Result<usize> {
        if t + 1 < self.depth {
            return Err(Error::Unprimed {
                have: t + 1,
                need: self.depth,
            });
        }
        if t >= traj.len() {
            return Err(Error::OutOfRange {
                index: t,
                len: traj.len(),
            });
        }
        Ok(t + 1 - self.depth)
    }
}

/// Sliding window over the last `depth` measurement vectors of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementWindow {
    depth: usize,
    width: usize,
    samples: VecDeque<DVector<f64>>,
}

impl MeasurementWindow {
    pub fn new(depth: usize, width: usize) -> Self {
        Self {
            depth,
            width,
            samples: VecDeque::with_capacity(depth + 1),
        }
    }

    pub fn for_model(model: &StackedModel) -> Self {
        Self::new(model.depth(), model.sensor_count())
    }

    pub fn push(&mut self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.width {
            return Err(Error::Dimension {
                context: "window sample",
                expected: self.width,
                actual: y.len(),
            });
        }
        self.samples.push_back(y.clone());
        if self.samples.len() > self.depth {
            self.samples.pop_front();
        }
        Ok(())
    }

    pub fn is_primed(&self) -> bool {
        self.samples.len() == self.depth
    }

    pub fn latest(&self) -> Option<&DVector<f64>> {
        self.samples.back()
    }

    /// Stacked window, sensor-major and oldest-first within each sensor.
    pub fn stacked(&self) -> Result<DVector<f64>> {
        if !self.is_primed() {
            return Err(Error::Unprimed {
                have: self.samples.len(),
                need: self.depth,
            });
        }
        Ok(DVector::from_fn(self.width * self.depth, |row, _| {
            let (sensor, k) = (row / self.depth, row % self.depth);
            self.samples[k][sensor]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{discretize, simulate, three_inertia, AttackModel, Discretization};

    fn benchmark() -> PlantModel {
        discretize(&three_inertia(Default::default()), 0.1, Discretization::ExactZoh)
            .unwrap()
            .with_partition(vec![2, 2, 2])
            .unwrap()
    }

    fn trajectory(plant: &PlantModel) -> PlantTrajectory {
        let x0 = DVector::from_row_slice(&[0.0, 0.0, 0.0, 0.0, 0.9644, 0.0]);
        simulate(plant, &x0, &AttackModel::new([2, 3], 2, 1.0, 11).unwrap(), 40).unwrap()
    }

    #[test]
    fn shift_is_nilpotent() {
        for depth in 1..=6 {
            let s = shift_matrix(depth);
            assert_eq!(s.iter().filter(|&&v| v != 0.0).count(), depth - 1);
            assert_eq!(s.pow(depth as u32), DMatrix::zeros(depth, depth));
            if depth >= 2 {
                assert!(s.pow(depth as u32 - 1).amax() > 0.0);
            }
        }
    }

    #[test]
    fn global_dimensions() {
        let g = build_global(&benchmark(), 3).unwrap();
        assert_eq!(g.transition().shape(), (24, 24));
        assert_eq!(g.output_map().shape(), (18, 24));
        assert_eq!(g.input_map().shape(), (24, 6));
        assert_eq!(g.observability().shape(), (18, 6));
        assert!(build_global(&benchmark(), 0).is_err());
        assert!(build_global(&benchmark(), 7).is_err());
    }

    #[test]
    fn g_blocks_carry_only_last_row() {
        let plant = benchmark();
        let g = build_global(&plant, 3).unwrap();
        let a3 = plant.a().pow(3);
        for j in 0..6 {
            let block = g.g_block(j);
            assert_eq!(block.rows(0, 2).amax(), 0.0);
            let expected = -(plant.c().rows(j, 1) * &a3);
            assert_eq!(block.rows(2, 1).clone_owned(), expected);
            let n_col = g.input_map().column(j);
            assert_eq!(n_col.sum(), 1.0);
            assert_eq!(n_col[6 + 3 * j + 2], 1.0);
        }
    }

    #[test]
    fn output_identity_holds_on_trajectory() {
        let plant = benchmark();
        let traj = trajectory(&plant);
        let g = build_global(&plant, 3).unwrap();
        for t in 2..traj.len() {
            let z = g.true_lifted_state(&traj, t).unwrap();
            let y = g.stacked_outputs(&traj, t).unwrap();
            assert!((g.output_map() * &z - &y).amax() < 1e-10);
            if t >= 3 {
                let prev = g.true_lifted_state(&traj, t - 1).unwrap();
                let next = g.time_update(&prev, &traj.outputs[t]).unwrap();
                assert!((next - z).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn single_observer_local_equals_global() {
        let plant = discretize(&three_inertia(Default::default()), 0.1, Discretization::ExactZoh).unwrap();
        let g = build_global(&plant, 3).unwrap();
        let l = build_local(&plant, 3, 0).unwrap();
        assert_eq!(g.output_map(), l.output_map());
        assert_eq!(g.transition(), l.transition());
        assert_eq!(g.input_map(), l.input_map());
    }

    #[test]
    fn local_blocks_match_owned_sensors() {
        let plant = benchmark();
        let l = build_local(&plant, 3, 1).unwrap();
        assert_eq!(l.sensors(), 2..4);
        for (local, sensor) in [2usize, 3].into_iter().enumerate() {
            let o = observability_matrix(plant.a(), &plant.c().rows(sensor, 1).clone_owned(), 3).unwrap();
            assert_eq!(l.observability().rows(3 * local, 3).clone_owned(), o);
        }
        let x = DVector::from_fn(6, |i, _| (i as f64 * 0.7).sin());
        let e = DVector::from_fn(6, |i, _| (i as f64 * 1.3).cos());
        let qz = l.output_map() * l.join(&x, &e);
        assert!((qz - (l.observability() * &x + &e)).amax() < 1e-15);
    }

    #[test]
    fn local_windows_concatenate_to_global() {
        let plant = benchmark();
        let traj = trajectory(&plant);
        let g = build_global(&plant, 3).unwrap();
        let t = 10;
        let mut joined = Vec::new();
        for node in 0..3 {
            let l = build_local(&plant, 3, node).unwrap();
            joined.extend(l.stacked_outputs(&traj, t).unwrap().iter().copied());
        }
        assert_eq!(DVector::from_vec(joined), g.stacked_outputs(&traj, t).unwrap());
    }

    #[test]
    fn local_time_update_tracks_truth() {
        let plant = benchmark();
        let traj = trajectory(&plant);
        for node in 0..3 {
            let l = build_local(&plant, 3, node).unwrap();
            for t in 3..traj.len() {
                let prev = l.true_lifted_state(&traj, t - 1).unwrap();
                let next = l.time_update(&prev, &l.local_measurement(&traj.outputs[t])).unwrap();
                assert!((next - l.true_lifted_state(&traj, t).unwrap()).amax() < 1e-10);
            }
        }
        let l = build_local(&plant, 3, 0).unwrap();
        assert_eq!(l.time_update(&DVector::zeros(12), &DVector::zeros(2)).unwrap(), DVector::zeros(12));
        assert!(l.time_update(&DVector::zeros(11), &DVector::zeros(2)).is_err());
    }

    #[test]
    fn clean_time_update_keeps_zero_attack_block() {
        let plant = benchmark();
        let x0 = DVector::from_element(6, 0.2);
        let traj = simulate(&plant, &x0, &AttackModel::none(), 10).unwrap();
        let l = build_local(&plant, 3, 2).unwrap();
        let prev = l.true_lifted_state(&traj, 4).unwrap();
        let next = l.time_update(&prev, &l.local_measurement(&traj.outputs[5])).unwrap();
        let (_, e) = l.split(&next);
        assert!(e.amax() < 1e-12);
    }

    #[test]
    fn window_priming_and_order() {
        let mut w = MeasurementWindow::new(3, 2);
        assert!(matches!(w.stacked(), Err(Error::Unprimed { have: 0, need: 3 })));
        for t in 0..3 {
            w.push(&DVector::from_row_slice(&[t as f64, 10.0 + t as f64])).unwrap();
        }
        assert!(w.is_primed());
        assert_eq!(w.stacked().unwrap().as_slice(), &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        w.push(&DVector::from_row_slice(&[3.0, 13.0])).unwrap();
        assert_eq!(w.stacked().unwrap().as_slice(), &[1.0, 2.0, 3.0, 11.0, 12.0, 13.0]);
        assert!(w.push(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn window_matches_trajectory_stack() {
        let plant = benchmark();
        let traj = trajectory(&plant);
        let l = build_local(&plant, 3, 1).unwrap();
        let mut w = MeasurementWindow::for_model(&l);
        for t in 0..traj.len() {
            w.push(&l.local_measurement(&traj.outputs[t])).unwrap();
            if t >= 2 {
                assert_eq!(w.stacked().unwrap(), l.stacked_outputs(&traj, t).unwrap());
            }
        }
    }
}
