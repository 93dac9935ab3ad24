//! Primal and dual solvers, strategy recovery and optimality certificates.

pub mod approx;
pub mod certificate;
pub mod complete;
pub mod dual;
mod linalg;
pub mod primal;
pub mod recover;

use serde::{Deserialize, Serialize};

use crate::market::PolytopeOptions;

pub use approx::{approx_sequence, approx_sequence_sample, ApproxReport, ApproxRow};
pub use certificate::{duality_certificate, solve_instance, DualityCertificate, Instance};
pub use complete::{solve_complete, CompleteSolution};
pub use dual::{solve_dual, solve_dual_warm, DualSolution, DualStart};
pub use primal::{solve_primal, PrimalMethod, PrimalSolution};
pub use recover::{recover_strategy, Recovery};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub value_abs: f64,
    pub value_rel: f64,
    pub feasibility: f64,
    pub gap_rel: f64,
    pub gradient: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { value_abs: 1e-8, value_rel: 1e-8, feasibility: 1e-10, gap_rel: 1e-6, gradient: 1e-10 }
    }
}

impl Tolerances {
    /// `|a - b| <= value_abs + value_rel * max(|a|, |b|)`.
    pub fn values_agree(&self, a: f64, b: f64) -> bool {
        if a == b {
            return true;
        }
        (a - b).abs() <= self.value_abs + self.value_rel * a.abs().max(b.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol: Tolerances,
    pub max_iter: usize,
    pub polytope: PolytopeOptions,
    /// Seed for the random mixtures probed by the certificate.
    pub seed: u64,
    pub mixtures: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: Tolerances::default(), max_iter: 500, polytope: PolytopeOptions::default(), seed: 42, mixtures: 16 }
    }
}
