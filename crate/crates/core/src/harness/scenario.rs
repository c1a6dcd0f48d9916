//! Scenario files.
//!
//! A scenario is a TOML document describing the plant, the observer network,
//! the attack and the algorithm settings. Sensor indices in the file are
//! 1-based, the way sensors are usually numbered by hand; the library API is
//! 0-based.
//!
//! ```toml
//! name = "example"
//! mode = "distributed"        # distributed | dsse | centralized
//! depth = 3                   # window length tau
//! steps = 400                 # simulated transitions
//! x0 = [0.0, 0.0, 0.0, 0.0, 0.9644, 0.0]
//!
//! [plant]
//! time = "continuous"         # or "discrete" (then h is metadata only)
//! h = 0.1
//! method = "exact-zoh"        # or "forward-euler"
//! a = [[...], ...]
//! c = [[...], ...]
//!
//! [network]
//! partition = [2, 2, 2]
//! adjacency = [[0, 1, 1], [1, 0, 0], [1, 0, 0]]
//!
//! [attack]
//! sensors = [3, 4]
//! budget = 2
//! amplitude = 1.0
//! seed = 0
//! ```
//!
//! Optional tables: `[admm]`, `[inner]`, `[block_descent]`, `[validation]`
//! (`waive_sparse_observability`) and `[output]` (`trace`).

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::l1solver::InnerSolverConfig;
use crate::model::{check_s_sparse_observable, discretize, AttackModel, ContinuousPlant, Discretization, PlantModel};
use crate::observer::centralized::BlockDescentConfig;
use crate::observer::distributed::AdmmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Distributed,
    Dsse,
    Centralized,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Distributed => "distributed",
            Mode::Dsse => "dsse",
            Mode::Centralized => "centralized",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distributed" => Ok(Mode::Distributed),
            "dsse" => Ok(Mode::Dsse),
            "centralized" => Ok(Mode::Centralized),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub time: TimeDomain,
    /// Sampling period; used for discretization of continuous plants.
    pub h: f64,
    #[serde(default)]
    pub method: Discretization,
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub partition: Vec<usize>,
    pub adjacency: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Attacked sensors, 1-based.
    pub sensors: Vec<usize>,
    pub budget: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationSpec {
    /// Accept plants that fail the sparse observability check. Intended for
    /// benchmarks whose published setup does not meet it; a warning is kept.
    pub waive_sparse_observability: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    pub depth: usize,
    pub steps: usize,
    pub x0: Vec<f64>,
    pub plant: PlantSpec,
    pub network: NetworkSpec,
    pub attack: AttackSpec,
    #[serde(default)]
    pub admm: AdmmConfig,
    #[serde(default)]
    pub inner: InnerSolverConfig,
    #[serde(default)]
    pub block_descent: BlockDescentConfig,
    #[serde(default)]
    pub validation: ValidationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn matrix(rows: &[Vec<f64>], what: &str, issues: &mut Vec<String>) -> Option<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        issues.push(format!("{what} is empty"));
        return None;
    }
    if rows.iter().any(|row| row.len() != c) {
        issues.push(format!("{what} has rows of different lengths"));
        return None;
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        issues.push(format!("{what} has non-finite entries"));
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Discrete plant with the scenario's sensor partition.
    pub fn plant_model(&self) -> Result<PlantModel> {
        self.base_plant()?.with_partition(self.network.partition.clone())
    }

    /// The plant with every sensor on a single observer.
    fn base_plant(&self) -> Result<PlantModel> {
        let spec = &self.plant;
        let mut issues = Vec::new();
        let a = matrix(&spec.a, "plant.a", &mut issues);
        let c = matrix(&spec.c, "plant.c", &mut issues);
        let (Some(a), Some(c)) = (a, c) else {
            return Err(Error::Validation(issues));
        };
        let plant = match spec.time {
            TimeDomain::Continuous => discretize(&ContinuousPlant::new(a, c)?, spec.h, spec.method)?,
            TimeDomain::Discrete => PlantModel::single_observer(a, c, spec.h)?,
        };
        Ok(plant)
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::from_adjacency(&self.network.adjacency)
    }

    pub fn attack_model(&self) -> Result<AttackModel> {
        if let Some(&bad) = self.attack.sensors.iter().find(|&&j| j == 0) {
            return Err(Error::OutOfRange { index: bad, len: 0 });
        }
        AttackModel::new(
            self.attack.sensors.iter().map(|j| j - 1),
            self.attack.budget,
            self.attack.amplitude,
            self.attack.seed,
        )
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.x0)
    }

    /// Checks every constraint and returns the warnings of a valid scenario,
    /// or all failures at once.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut issues = Vec::new();
        let mut warnings = Vec::new();

        let plant = match self.base_plant() {
            Ok(p) => Some(p),
            Err(Error::Validation(v)) => {
                issues.extend(v);
                None
            }
            Err(e) => {
                issues.push(format!("plant: {e}"));
                None
            }
        };
        let n = plant.as_ref().map(PlantModel::state_dim);
        let p = plant.as_ref().map(PlantModel::sensor_count);

        if self.network.partition.contains(&0) {
            issues.push("network.partition entries must be >= 1".into());
        }
        if let Some(p) = p {
            let total: usize = self.network.partition.iter().sum();
            if total != p {
                issues.push(format!("network.partition sums to {total} but the plant has {p} sensors"));
            }
        }
        match self.topology() {
            Ok(topo) => {
                if topo.node_count() != self.network.partition.len() {
                    issues.push(format!(
                        "adjacency has {} nodes but the partition lists {} observers",
                        topo.node_count(),
                        self.network.partition.len()
                    ));
                }
                if !topo.is_connected() {
                    issues.push("Assumption 1.1: the communication graph is not connected".into());
                }
            }
            Err(e) => issues.push(format!("network.adjacency: {e}")),
        }

        if let Some(n) = n {
            if self.depth == 0 || self.depth > n {
                issues.push(format!("depth must satisfy 1 <= depth <= {n}, got {}", self.depth));
            }
            if self.x0.len() != n {
                issues.push(format!("x0 has {} entries, expected {n}", self.x0.len()));
            }
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            issues.push("x0 has non-finite entries".into());
        }
        if self.steps < self.depth {
            issues.push(format!("steps ({}) must be at least depth ({})", self.steps, self.depth));
        }

        let s = self.attack.budget;
        let mut sensors = self.attack.sensors.clone();
        sensors.sort_unstable();
        sensors.dedup();
        if sensors.len() != self.attack.sensors.len() {
            issues.push("attack.sensors lists a sensor twice".into());
        }
        if let Some(p) = p {
            if let Some(bad) = sensors.iter().find(|&&j| j == 0 || j > p) {
                issues.push(format!("attack sensor {bad} is outside 1..={p}"));
            }
            if 2 * s >= p {
                issues.push(format!("Assumption 1.3: sparsity budget s = {s} must satisfy s < p/2 = {}", p as f64 / 2.0));
            }
        }
        if sensors.len() > s {
            issues.push(format!(
                "Assumption 1.3: {} attacked sensors exceed the sparsity budget s = {s}",
                sensors.len()
            ));
        }
        if !(self.attack.amplitude > 0.0 && self.attack.amplitude.is_finite()) {
            issues.push(format!("attack.amplitude must be positive, got {}", self.attack.amplitude));
        }
        if let Some(plant) = &plant {
            if p.is_some_and(|p| 2 * s < p) && !check_s_sparse_observable(plant, 2 * s) {
                let msg = format!("Assumption 1.2: the plant is not {}-sparse observable", 2 * s);
                if self.validation.waive_sparse_observability {
                    warnings.push(format!("{msg} (waived by validation.waive_sparse_observability)"));
                } else {
                    issues.push(msg);
                }
            }
        }

        if let Err(e) = self.admm.validate() {
            issues.push(format!("admm: {e}"));
        }
        if let Err(e) = self.inner.validate() {
            issues.push(format!("inner: {e}"));
        }
        if !(self.block_descent.tolerance > 0.0) {
            issues.push("block_descent.tolerance must be > 0".into());
        }

        if issues.is_empty() {
            Ok(warnings)
        } else {
            Err(Error::Validation(issues))
        }
    }
}

/// Reads and validates a scenario file. Returns the config and any warnings.
pub fn load_scenario(path: &Path) -> Result<(ScenarioConfig, Vec<String>)> {
    let text = fs::read_to_string(path)?;
    let cfg = ScenarioConfig::from_toml(&text)?;
    let warnings = cfg.validate()?;
    Ok((cfg, warnings))
}
