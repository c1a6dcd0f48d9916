//! Recursive observers: the distributed consensus-ADMM observer, its static
//! (batch) variant, and the centralized observer.

pub mod centralized;
pub mod distributed;

use nalgebra::DVector;

use crate::harness::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    Capped,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::Capped => "capped",
        }
    }

    pub fn is_converged(self) -> bool {
        self == Termination::Converged
    }
}

/// Result of one observer run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    /// Final state estimate of every node (one entry for the centralized observer).
    pub estimates: Vec<DVector<f64>>,
    /// Final attack-window estimate of every node.
    pub attack_windows: Vec<DVector<f64>>,
    /// Time index whose delayed state the final estimates refer to.
    pub estimate_time: usize,
    pub total_inner_rounds: usize,
    /// Inner subproblem solves that hit their iteration cap.
    pub unconverged_solves: usize,
}

impl RunOutcome {
    pub fn mean_inner_rounds(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.total_inner_rounds as f64 / self.records.len() as f64
        }
    }
}

/// Per-node deviation from the instantaneous mean estimate.
pub fn consensus_errors(estimates: &[DVector<f64>]) -> Vec<f64> {
    if estimates.is_empty() {
        return Vec::new();
    }
    let mut mean = DVector::zeros(estimates[0].len());
    for x in estimates {
        mean += x;
    }
    mean /= estimates.len() as f64;
    estimates.iter().map(|x| (x - &mean).norm()).collect()
}
