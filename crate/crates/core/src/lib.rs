//! Resilient state estimation for linear plants under sparse sensor attacks,
//! using consensus ADMM over a network of observer nodes.

pub mod error;
pub mod graph;
pub mod harness;
pub mod l1solver;
pub mod model;
pub mod observer;
pub mod oracle;
pub mod stacked;

pub use error::{Error, Result};
pub use graph::Topology;
pub use model::{discretize, simulate, AttackModel, ContinuousPlant, Discretization, PlantModel, PlantTrajectory};
pub use observer::{RunOutcome, Termination};
pub use stacked::{build_global, build_local, MeasurementWindow, StackedGlobalModel, StackedLocalModel};
