//! Replicating strategy for a terminal claim under a martingale measure.

use nalgebra::{DMatrix, DVector};

use super::linalg::lstsq;
use crate::error::{Error, Result};
use crate::market::{MeasureQ, ScenarioTree, Strategy};

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub strategy: Strategy,
    /// `E_Q[f | node]` on nodes with non-zero `Q`-mass, `NaN` elsewhere.
    pub conditional: Vec<f64>,
    /// Largest hedging error `|H . dS - dX|` over children charged by `Q`.
    pub residual: f64,
    pub attainable: bool,
}

/// Backward induction `X(n) = E_Q[f | n]` followed by a per-node least-squares
/// hedge on the children charged by `Q`. Nodes off the support of `Q` hold
/// nothing.
pub fn recover_strategy(tree: &ScenarioTree, q: &MeasureQ, f: &[f64], x: f64, tol: f64) -> Result<Recovery> {
    if f.len() != tree.leaf_count() || q.len() != f.len() {
        return Err(Error::InvalidMarket(format!(
            "claim has {} entries, measure {} and tree {} terminal nodes",
            f.len(),
            q.len(),
            tree.leaf_count()
        )));
    }
    let budget = q.expectation(f);
    if !((budget - x).abs() <= tol * (1.0 + x.abs())) {
        return Err(Error::Domain(format!("E_Q[f] = {budget} does not match the initial wealth {x}")));
    }
    let probs = q.probs();
    let weighted: Vec<f64> = probs.iter().zip(f).map(|(&a, &b)| crate::numeric::mul0(a, b)).collect();
    let mass = tree.aggregate(&probs);
    let value = tree.aggregate(&weighted);
    let scale = probs.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let charged = |n: usize| mass[n].abs() > 1e-14 * scale;
    let conditional: Vec<f64> =
        (0..tree.len()).map(|n| if charged(n) { value[n] / mass[n] } else { f64::NAN }).collect();
    let mut strategy = Strategy::zeros(tree);
    let mut residual = 0.0_f64;
    let d = tree.assets();
    for &n in tree.decision_nodes() {
        if !charged(n) {
            continue;
        }
        let kids: Vec<usize> = tree.node(n).children.iter().copied().filter(|&c| charged(c)).collect();
        let a = DMatrix::from_fn(kids.len(), d, |r, k| tree.increment(kids[r])[k]);
        let b = DVector::from_iterator(kids.len(), kids.iter().map(|&c| conditional[c] - conditional[n]));
        let h = lstsq(&a, &b);
        let err = (&a * &h - &b).amax();
        residual = residual.max(if err.is_nan() { f64::INFINITY } else { err });
        strategy.set(n, h.iter().copied().collect());
    }
    let scale_f = f.iter().filter(|v| v.is_finite()).fold(1.0_f64, |a, b| a.max(b.abs()));
    Ok(Recovery { attainable: residual <= tol * scale_f, strategy, conditional, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{martingale_polytope, wealth_process, PolytopeOptions};
    use crate::solvers::{solve_dual, solve_primal, SolverOptions};
    use approx::assert_abs_diff_eq;

    #[test]
    fn binomial_exponential_claim() {
        let t = ScenarioTree::one_period(&[1.0], &[(0.5, vec![2.0]), (0.5, vec![0.5])]).unwrap();
        let q = MeasureQ::from_probs(&t.leaf_probs(), &[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let h = 2.0_f64.ln() / 1.5;
        let r = recover_strategy(&t, &q, &[h, -0.5 * h], 0.0, 1e-10).unwrap();
        assert_abs_diff_eq!(r.strategy.at(0)[0], h, epsilon = 1e-14);
        assert!(r.residual < 1e-15 && r.attainable);
    }

    #[test]
    fn cash_claim_needs_no_trading() {
        let t = ScenarioTree::binomial(1.0, 1.2, 0.9, 0.5, 3).unwrap();
        let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
        let q = poly.interior().unwrap().clone();
        let r = recover_strategy(&t, &q, &vec![0.7; t.leaf_count()], 0.7, 1e-12).unwrap();
        assert_eq!(r.strategy.max_abs(), 0.0);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn trinomial_round_trip() {
        let t = ScenarioTree::one_period(&[1.0], &[(1.0 / 3.0, vec![2.0]), (1.0 / 3.0, vec![1.0]), (1.0 / 3.0, vec![0.5])])
            .unwrap();
        let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
        let u = "exp:gamma=1".parse().unwrap();
        let opts = SolverOptions::default();
        let p = solve_primal(&t, &poly, &u, 0.0, &opts).unwrap();
        let d = solve_dual(&poly, &u, 0.0, &opts).unwrap();
        let r = recover_strategy(&t, &d.q_hat, &p.terminal_wealth, 0.0, 1e-8).unwrap();
        assert_abs_diff_eq!(r.strategy.at(0)[0], p.strategy.at(0)[0], epsilon = 1e-8);
        assert!(r.attainable);
    }

    #[test]
    fn multi_period_claim_is_replicated() {
        let t = ScenarioTree::binomial(1.0, 1.5, 0.75, 0.4, 3).unwrap();
        let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
        let q = poly.vertices().unwrap()[0].clone();
        let dims = t.strategy_dim();
        let h = Strategy::from_flat(&t, &(0..dims).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>());
        let f = wealth_process(&t, &h, 0.25).terminal(&t);
        let r = recover_strategy(&t, &q, &f, 0.25, 1e-10).unwrap();
        for (a, b) in r.strategy.to_flat(&t).iter().zip(h.to_flat(&t)) {
            assert_abs_diff_eq!(a, &b, epsilon = 1e-10);
        }
        // the conditional values form the wealth process
        let w = wealth_process(&t, &h, 0.25);
        for n in 0..t.len() {
            assert_abs_diff_eq!(r.conditional[n], w.at(n), epsilon = 1e-12);
        }
    }

    #[test]
    fn budget_mismatch_is_rejected() {
        let t = ScenarioTree::one_period(&[1.0], &[(0.5, vec![2.0]), (0.5, vec![0.5])]).unwrap();
        let q = MeasureQ::from_probs(&t.leaf_probs(), &[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(recover_strategy(&t, &q, &[1.0, 1.0], 0.0, 1e-10).is_err());
    }
}
