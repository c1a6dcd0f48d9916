//! Plant definitions, ground-truth simulation, attack injection and
//! observability diagnostics.
//!
//! A plant is a discrete-time autonomous LTI system `x[t+1] = A x[t]` whose
//! `p` scalar sensors read `y[t] = C x[t] + a[t]`. The sensors are split
//! contiguously among the observer nodes: node `i` owns rows
//! `offset_i .. offset_i + p_i` of `C`.

use std::collections::BTreeSet;
use std::ops::Range;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Continuous-time plant `dx/dt = A_c x`, `y = C_c x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousPlant {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl ContinuousPlant {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        check_square(&a, "continuous A")?;
        if c.ncols() != a.nrows() {
            return Err(Error::Dimension {
                context: "continuous C columns",
                expected: a.nrows(),
                actual: c.ncols(),
            });
        }
        check_finite(&a, "continuous A")?;
        check_finite(&c, "continuous C")?;
        Ok(Self { a, c })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn sensor_count(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    #[default]
    ExactZoh,
    ForwardEuler,
}

/// Discrete-time plant with its sensor partition across observers.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    partition: Vec<usize>,
    /// Sampling period in seconds; metadata only.
    pub h: f64,
}

impl PlantModel {
    /// Builds a plant. `partition[i]` is the number of sensors owned by node `i`.
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, partition: Vec<usize>, h: f64) -> Result<Self> {
        check_square(&a, "A")?;
        if c.ncols() != a.nrows() {
            return Err(Error::Dimension {
                context: "C columns",
                expected: a.nrows(),
                actual: c.ncols(),
            });
        }
        check_finite(&a, "A")?;
        check_finite(&c, "C")?;
        validate_partition(&partition, c.nrows())?;
        Ok(Self { a, c, partition, h })
    }

    /// Same plant with every sensor owned by a single observer.
    pub fn single_observer(a: DMatrix<f64>, c: DMatrix<f64>, h: f64) -> Result<Self> {
        let p = c.nrows();
        Self::new(a, c, vec![p], h)
    }

    pub fn with_partition(mut self, partition: Vec<usize>) -> Result<Self> {
        validate_partition(&partition, self.c.nrows())?;
        self.partition = partition;
        Ok(self)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn sensor_count(&self) -> usize {
        self.c.nrows()
    }

    pub fn observer_count(&self) -> usize {
        self.partition.len()
    }

    /// Rows of `C` owned by observer `node`.
    pub fn sensor_range(&self, node: usize) -> Result<Range<usize>> {
        if node >= self.partition.len() {
            return Err(Error::OutOfRange {
                index: node,
                len: self.partition.len(),
            });
        }
        let start: usize = self.partition[..node].iter().sum();
        Ok(start..start + self.partition[node])
    }

    /// Observer owning sensor `sensor`.
    pub fn owner_of(&self, sensor: usize) -> Option<usize> {
        let mut start = 0;
        for (node, &count) in self.partition.iter().enumerate() {
            if sensor < start + count {
                return Some(node);
            }
            start += count;
        }
        None
    }

    pub fn rows_of(&self, sensors: &[usize]) -> DMatrix<f64> {
        self.c.select_rows(sensors)
    }
}

fn validate_partition(partition: &[usize], p: usize) -> Result<()> {
    if partition.is_empty() || partition.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "partition {partition:?} must be non-empty with every entry >= 1"
        )));
    }
    let total: usize = partition.iter().sum();
    if total != p {
        return Err(Error::Dimension {
            context: "sensor partition total",
            expected: p,
            actual: total,
        });
    }
    Ok(())
}

fn check_square(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension {
            context,
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    Ok(())
}

fn check_finite(m: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

/// Converts a continuous plant into a discrete one with sampling period `h`.
/// The result has a single observer; use [`PlantModel::with_partition`] to split sensors.
pub fn discretize(plant: &ContinuousPlant, h: f64, method: Discretization) -> Result<PlantModel> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sampling period must be positive, got {h}"
        )));
    }
    check_finite(&plant.a, "continuous A")?;
    let n = plant.state_dim();
    let a = match method {
        Discretization::ExactZoh => expm(&(&plant.a * h)),
        Discretization::ForwardEuler => DMatrix::identity(n, n) + &plant.a * h,
    };
    PlantModel::single_observer(a, plant.c.clone(), h)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled until its 1-norm is at most 1/2; twenty Taylor terms
/// then leave a truncation error below 1e-25 relative to the scaled exponential.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scaled = m / 2f64.powi(squarings as i32);

    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=20 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.amax() < 1e-18 * result.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Fixed-support sparse attack with a seeded uniform signal generator.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackModel {
    support: BTreeSet<usize>,
    budget: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl AttackModel {
    /// `support` holds zero-based sensor indices; `budget` is the sparsity bound `s`.
    pub fn new(support: impl IntoIterator<Item = usize>, budget: usize, amplitude: f64, seed: u64) -> Result<Self> {
        let support: BTreeSet<usize> = support.into_iter().collect();
        if support.len() > budget {
            return Err(Error::InvalidParameter(format!(
                "attack support {:?} exceeds sparsity budget {budget}",
                support
            )));
        }
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "attack amplitude must be positive, got {amplitude}"
            )));
        }
        Ok(Self {
            support,
            budget,
            amplitude,
            seed,
        })
    }

    pub fn none() -> Self {
        Self {
            support: BTreeSet::new(),
            budget: 0,
            amplitude: 1.0,
            seed: 0,
        }
    }

    pub fn support(&self) -> &BTreeSet<usize> {
        &self.support
    }

    pub fn budget(&self) -> usize {
        self.budget
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantTrajectory {
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub attacks: Vec<DVector<f64>>,
}

impl PlantTrajectory {
    /// Number of recorded samples (`T + 1`).
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Simulates `steps` transitions from `x0`, recording samples `t = 0..=steps`.
///
/// Attack values on supported sensors are i.i.d. uniform on
/// `[-amplitude, amplitude]`, drawn per step in ascending sensor order.
pub fn simulate(plant: &PlantModel, x0: &DVector<f64>, attack: &AttackModel, steps: usize) -> Result<PlantTrajectory> {
    let n = plant.state_dim();
    let p = plant.sensor_count();
    if x0.len() != n {
        return Err(Error::Dimension {
            context: "initial state",
            expected: n,
            actual: x0.len(),
        });
    }
    if let Some(&bad) = attack.support.iter().find(|&&j| j >= p) {
        return Err(Error::OutOfRange { index: bad, len: p });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(attack.seed);
    let mut traj = PlantTrajectory {
        states: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        attacks: Vec::with_capacity(steps + 1),
    };
    let mut x = x0.clone();
    for t in 0..=steps {
        let mut a = DVector::zeros(p);
        for &j in &attack.support {
            a[j] = rng.gen_range(-attack.amplitude..=attack.amplitude);
        }
        let y = plant.c() * &x + &a;
        traj.states.push(x.clone());
        traj.outputs.push(y);
        traj.attacks.push(a);
        if t < steps {
            x = plant.a() * &x;
        }
    }
    Ok(traj)
}

/// Vertical stack `[C; C A; ...; C A^(depth-1)]`.
pub fn observability_matrix(a: &DMatrix<f64>, c_rows: &DMatrix<f64>, depth: usize) -> Result<DMatrix<f64>> {
    if depth == 0 {
        return Err(Error::InvalidParameter("observability depth must be >= 1".into()));
    }
    if c_rows.ncols() != a.nrows() {
        return Err(Error::Dimension {
            context: "observability rows",
            expected: a.nrows(),
            actual: c_rows.ncols(),
        });
    }
    let m = c_rows.nrows();
    let mut out = DMatrix::zeros(m * depth, a.ncols());
    let mut block = c_rows.clone();
    for k in 0..depth {
        out.rows_mut(k * m, m).copy_from(&block);
        block = &block * a;
    }
    Ok(out)
}

/// Numerical rank using singular values with tolerance `max_dim * eps * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    let tol = m.nrows().max(m.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// True iff `(A, C)` remains observable after deleting any `s` sensors.
pub fn check_s_sparse_observable(plant: &PlantModel, s: usize) -> bool {
    let n = plant.state_dim();
    let p = plant.sensor_count();
    if s >= p {
        return false;
    }
    (0..p).combinations(s).all(|removed| {
        let kept: Vec<usize> = (0..p).filter(|j| !removed.contains(j)).collect();
        let rows = plant.rows_of(&kept);
        observability_matrix(plant.a(), &rows, n)
            .map(|o| numerical_rank(&o) == n)
            .unwrap_or(false)
    })
}

/// Random plant for desk-scale experiments: `A` has i.i.d. uniform[-1, 1]
/// entries rescaled to spectral radius 1, `C` has i.i.d. uniform[-1, 1] entries.
pub fn random_plant(n: usize, p: usize, partition: Vec<usize>, seed: u64) -> Result<PlantModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let radius = a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if radius == 0.0 {
        return Err(Error::InvalidParameter("random A is nilpotent".into()));
    }
    let a = a / radius;
    let c = DMatrix::from_fn(p, n, |_, _| rng.gen_range(-1.0..1.0));
    PlantModel::new(a, c, partition, 1.0)
}

/// Physical constants of the three-inertia drive benchmark.
#[derive(Debug, Clone, Copy)]
pub struct ThreeInertiaParams {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub k1: f64,
    pub k2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Default for ThreeInertiaParams {
    fn default() -> Self {
        Self {
            j1: 0.01,
            j2: 0.02,
            j3: 0.03,
            k1: 1.4,
            k2: 1.4,
            b1: 0.005,
            b2: 0.005,
        }
    }
}

/// Three-inertia drive: state `[θ1, ω1, θ2, ω2, θ3, ω3]`, sensors measuring
/// the three absolute angles and the relative angles θ1−θ2, θ1−θ3, θ2−θ3.
pub fn three_inertia(params: ThreeInertiaParams) -> ContinuousPlant {
    let ThreeInertiaParams { j1, j2, j3, k1, k2, b1, b2 } = params;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(6, 6, &[
        0.0,      1.0,      0.0,             0.0,      0.0,      0.0,
        -k1 / j1, -b1 / j1, k1 / j1,         0.0,      0.0,      0.0,
        0.0,      0.0,      0.0,             1.0,      0.0,      0.0,
        k1 / j2,  0.0,      -(k1 + k2) / j2, -b2 / j2, k2 / j2,  0.0,
        0.0,      0.0,      0.0,             0.0,      0.0,      1.0,
        0.0,      0.0,      k2 / j3,         0.0,      -k2 / j3, -b2 / j3,
    ]);
    #[rustfmt::skip]
    let c = DMatrix::from_row_slice(6, 6, &[
        1.0, 0.0, 0.0,  0.0, 0.0,  0.0,
        0.0, 0.0, 1.0,  0.0, 0.0,  0.0,
        0.0, 0.0, 0.0,  0.0, 1.0,  0.0,
        1.0, 0.0, -1.0, 0.0, 0.0,  0.0,
        1.0, 0.0, 0.0,  0.0, -1.0, 0.0,
        0.0, 0.0, 1.0,  0.0, -1.0, 0.0,
    ]);
    ContinuousPlant { a, c }
}
