//! Optimality certificates for a primal/dual pair.

use serde::Serialize;

use super::dual::{solve_dual, solve_dual_warm, DualSolution};
use super::primal::{solve_primal, PrimalSolution};
use super::recover::recover_strategy;
use super::SolverOptions;
use crate::error::Result;
use crate::market::{martingale_polytope, wealth_process, MartingalePolytope, ScenarioTree};
use crate::numeric::mul0;
use crate::utility::UtilityFunction;
use crate::verify::{check_satiation_set, check_supermartingale, quantifier_measures, CheckReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityCertificate {
    /// Dual value minus primal value.
    pub gap: f64,
    /// `max |V(Z) - U(f) + f Z|` over terminal nodes with positive mass.
    pub fenchel_residual: f64,
    /// `E_Q_hat[f] - x`.
    pub budget_residual: f64,
    /// `x - E_Q[f]` for every vertex, then for each random mixture.
    pub vertex_slacks: Vec<f64>,
    pub mixture_slacks: Vec<f64>,
    /// Largest `E_Q[X_{t+1} | n] - X_t` over vertices and mixtures.
    pub supermartingale_residual: f64,
    /// Distance of `Z` from the supergradient interval of `U` at `f`.
    pub supergradient_distance: f64,
    /// Hedging error when replicating `f` under `Q_hat`.
    pub recovery_residual: f64,
    /// Difference between the warm- and cold-started dual values.
    pub dual_agreement: f64,
    pub satiation: CheckReport,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Evaluates every certificate field for a candidate pair.
#[allow(clippy::too_many_arguments)]
pub fn duality_certificate(
    tree: &ScenarioTree,
    poly: &MartingalePolytope,
    u: &UtilityFunction,
    x: f64,
    primal: &PrimalSolution,
    dual: &DualSolution,
    cold_value: Option<f64>,
    opts: &SolverOptions,
) -> DualityCertificate {
    let tol = &opts.tol;
    let p = poly.leaf_probs();
    let f = &primal.terminal_wealth;
    let primal_value: f64 = p.iter().zip(f).map(|(&pp, &v)| mul0(pp, u.value(v))).sum();
    let gap = dual.value - primal_value;
    let mut fenchel = 0.0_f64;
    let mut superg = 0.0_f64;
    for w in 0..p.len() {
        if p[w] <= 0.0 {
            continue;
        }
        let (fw, zw) = (f[w], dual.z[w]);
        let r = (u.conjugate(zw) - u.value(fw) + mul0(fw, zw)).abs();
        fenchel = fenchel.max(if r.is_nan() { f64::INFINITY } else { r });
        let dist = if fw.is_finite() {
            u.subdifferential(fw).map_or(f64::INFINITY, |s| s.distance(zw))
        } else {
            zw.abs()
        };
        superg = superg.max(dist);
    }
    let budget_residual = dual.q_hat.expectation(f) - x;
    let measures = quantifier_measures(poly, opts.seed, opts.mixtures);
    let nvert = poly.vertices().map_or(0, |v| v.len());
    let slacks: Vec<f64> = measures.iter().map(|q| x - q.expectation(f)).collect();
    let (vertex_slacks, mixture_slacks) = if nvert > 0 {
        (slacks[..nvert].to_vec(), slacks[nvert..].to_vec())
    } else {
        (Vec::new(), slacks.clone())
    };
    let wealth = wealth_process(tree, &primal.strategy, x);
    let sm = check_supermartingale(tree, &wealth, &measures, tol.value_abs);
    let recovery_residual = recover_strategy(tree, &dual.q_hat, f, x, f64::INFINITY).map_or(f64::INFINITY, |r| r.residual);
    let dual_agreement = cold_value.map_or(0.0, |c| if c == dual.value { 0.0 } else { (c - dual.value).abs() });
    let satiation = check_satiation_set(primal, dual, u);

    let mut failures = Vec::new();
    let gap_limit = tol.gap_rel * (1.0 + primal_value.abs());
    if !(gap.abs() <= gap_limit) {
        failures.push(format!("duality gap {gap:e} exceeds {gap_limit:e}"));
    }
    if !(fenchel <= tol.value_abs) {
        failures.push(format!("Fenchel residual {fenchel:e}"));
    }
    if !(budget_residual.abs() <= tol.value_abs) {
        failures.push(format!("budget residual {budget_residual:e}"));
    }
    if let Some(worst) = slacks.iter().copied().reduce(f64::min) {
        if !(worst >= -tol.value_abs) {
            failures.push(format!("budget violated under a martingale measure by {:e}", -worst));
        }
    }
    if !sm.pass {
        failures.push(format!("supermartingale residual {:e}", sm.worst()));
    }
    if !(recovery_residual <= tol.value_abs * (1.0 + x.abs())) {
        failures.push(format!("replication residual {recovery_residual:e}"));
    }
    if !(dual_agreement <= tol.value_abs + tol.value_rel * dual.value.abs()) {
        failures.push(format!("warm and cold dual values differ by {dual_agreement:e}"));
    }
    if !satiation.pass {
        failures.push("satiation set identity violated".into());
    }
    DualityCertificate {
        gap,
        fenchel_residual: fenchel,
        budget_residual,
        vertex_slacks,
        mixture_slacks,
        supermartingale_residual: sm.worst(),
        supergradient_distance: superg,
        recovery_residual,
        dual_agreement,
        satiation,
        passed: failures.is_empty(),
        failures,
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub polytope: MartingalePolytope,
    pub primal: PrimalSolution,
    pub dual: DualSolution,
    pub cold_dual: DualSolution,
    pub certificate: DualityCertificate,
}

/// Primal solve, warm- and cold-started dual solves, and the certificate.
pub fn solve_instance(tree: &ScenarioTree, u: &UtilityFunction, x: f64, opts: &SolverOptions) -> Result<Instance> {
    let polytope = martingale_polytope(tree, &opts.polytope)?;
    let primal = solve_primal(tree, &polytope, u, x, opts)?;
    let dual = solve_dual_warm(&polytope, u, x, &primal, opts)?;
    let cold_dual = solve_dual(&polytope, u, x, opts)?;
    let certificate = duality_certificate(tree, &polytope, u, x, &primal, &dual, Some(cold_dual.value), opts);
    Ok(Instance { polytope, primal, dual, cold_dual, certificate })
}
