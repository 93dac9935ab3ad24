//! Primal problem: maximise `E_P[U(x + H . S_T)]` over strategies.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::{from_rows, lstsq, row_space};
use super::SolverOptions;
use crate::error::{Error, Result};
use crate::market::{MartingalePolytope, ScenarioTree, Strategy};
use crate::utility::{PiecewiseLinear, UtilityFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimalMethod {
    Newton,
    LinearProgram,
    /// `x` at or above the satiation point: hold cash.
    Satiated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub strategy: Strategy,
    /// Terminal wealth `x + H . S_T` in leaf order.
    pub terminal_wealth: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Final gradient sup-norm (zero for the LP route).
    pub grad_norm: f64,
    pub method: PrimalMethod,
}

impl PrimalSolution {
    pub fn satiated(&self) -> bool {
        self.method == PrimalMethod::Satiated
    }
}

/// Objective, gradient and Hessian of `h -> E_P[U(x + A h)]`.
pub struct PrimalObjective<'a> {
    pub u: &'a UtilityFunction,
    pub x: f64,
    pub p: Vec<f64>,
    pub a: Vec<Vec<f64>>,
}

impl<'a> PrimalObjective<'a> {
    pub fn new(tree: &ScenarioTree, u: &'a UtilityFunction, x: f64) -> Self {
        PrimalObjective { u, x, p: tree.leaf_probs(), a: tree.gains_matrix() }
    }

    pub fn wealth(&self, h: &[f64]) -> Vec<f64> {
        self.a.iter().map(|row| self.x + row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()).collect()
    }

    pub fn value(&self, h: &[f64]) -> f64 {
        self.wealth(h).iter().zip(&self.p).map(|(&w, &p)| p * self.u.value(w)).sum()
    }

    /// `sum_w p_w |U'(w)| max_k |A_wk|`: the magnitude of the summands
    /// entering the gradient, which sets its round-off floor.
    pub fn gradient_scale(&self, h: &[f64]) -> f64 {
        let w = self.wealth(h);
        self.a
            .iter()
            .zip(w.iter().zip(&self.p))
            .map(|(row, (&wi, &pi))| pi * self.u.derivative(wi).abs() * row.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .sum()
    }

    pub fn gradient(&self, h: &[f64]) -> Vec<f64> {
        let w = self.wealth(h);
        let mut g = vec![0.0; h.len()];
        for (row, (&wi, &pi)) in self.a.iter().zip(w.iter().zip(&self.p)) {
            let d = pi * self.u.derivative(wi);
            for (gk, ak) in g.iter_mut().zip(row) {
                *gk += d * ak;
            }
        }
        g
    }

    fn hessian(&self, h: &[f64]) -> DMatrix<f64> {
        let w = self.wealth(h);
        let n = h.len();
        let mut m = DMatrix::zeros(n, n);
        for (row, (&wi, &pi)) in self.a.iter().zip(w.iter().zip(&self.p)) {
            let c = pi * self.u.second_derivative(wi);
            for i in 0..n {
                if row[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    m[(i, j)] += c * row[i] * row[j];
                }
            }
        }
        m
    }
}

/// Solves the primal problem; the polytope must be non-empty.
pub fn solve_primal(
    tree: &ScenarioTree,
    poly: &MartingalePolytope,
    u: &UtilityFunction,
    x: f64,
    opts: &SolverOptions,
) -> Result<PrimalSolution> {
    if !(x > u.domain_inf()) || x.is_nan() {
        return Err(Error::Domain(format!("initial wealth {x} is not above the domain infimum {}", u.domain_inf())));
    }
    if poly.is_empty() {
        return Err(Error::Arbitrage("the martingale polytope is empty".into()));
    }
    let obj = PrimalObjective::new(tree, u, x);
    let dim = tree.strategy_dim();
    if u.is_monotone() && x >= u.bliss() {
        let h = vec![0.0; dim];
        return Ok(PrimalSolution {
            strategy: Strategy::from_flat(tree, &h),
            terminal_wealth: obj.wealth(&h),
            value: obj.value(&h),
            iterations: 0,
            grad_norm: 0.0,
            method: PrimalMethod::Satiated,
        });
    }
    let (h, iterations, grad_norm, method) = match u.as_piecewise() {
        Some(pw) => (lp_primal(&obj, pw)?, 1, 0.0, PrimalMethod::LinearProgram),
        None => {
            let (h, it, g) = newton(&obj, dim, opts)?;
            (h, it, g, PrimalMethod::Newton)
        }
    };
    Ok(PrimalSolution {
        strategy: Strategy::from_flat(tree, &h),
        terminal_wealth: obj.wealth(&h),
        value: obj.value(&h),
        iterations,
        grad_norm,
        method,
    })
}

fn newton(obj: &PrimalObjective, dim: usize, opts: &SolverOptions) -> Result<(Vec<f64>, usize, f64)> {
    let mut h = vec![0.0; dim];
    let mut f = obj.value(&h);
    // directions outside the row space of A leave the wealth unchanged
    let basis = row_space(&from_rows(&obj.a, dim));
    let gtol = opts.tol.gradient;
    for it in 0..opts.max_iter {
        let g = obj.gradient(&h);
        let gnorm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        // relative to the summands once they exceed one in magnitude
        if gnorm <= gtol * obj.gradient_scale(&h).max(1.0) {
            return Ok((h, it, gnorm));
        }
        let neg_hess = basis.transpose() * -obj.hessian(&h) * &basis;
        let gr = basis.transpose() * DVector::from_vec(g.clone());
        let mut dir: Vec<f64> = (&basis * lstsq(&neg_hess, &gr)).iter().copied().collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) {
            dir = g.clone();
            slope = g.iter().map(|v| v * v).sum();
        }
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = h.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let fc = obj.value(&cand);
            // once the predicted gain is below the resolution of f, judge
            // steps by the gradient instead
            let flat = (fc - f).abs() <= 8.0 * f64::EPSILON * (1.0 + f.abs());
            let better = flat && obj.gradient(&cand).iter().fold(0.0_f64, |m, v| m.max(v.abs())) < 0.5 * gnorm;
            if fc.is_finite() && (fc >= f + 1e-4 * t * slope && !flat || better) {
                h = cand;
                f = fc;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                // no ascent possible at machine precision: accept if the gradient is tiny
                if gnorm <= 1e3 * gtol {
                    return Ok((h, it, gnorm));
                }
                return Err(Error::LineSearch(format!("no ascent along the Newton direction (gradient {gnorm:.3e})")));
            }
        }
        let hn = h.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if hn > 1e12 {
            return Err(Error::Unbounded {
                reason: "strategy diverges; the supremum is not attained".into(),
                ray: Some(dir),
            });
        }
    }
    Err(Error::NonConvergence { what: "primal Newton iteration".into(), iterations: opts.max_iter })
}

/// `max sum p w` subject to `w <= c_k + s_k (x + A h)` for every piece `k`.
fn lp_primal(obj: &PrimalObjective, pw: &PiecewiseLinear) -> Result<Vec<f64>> {
    let dim = obj.a.first().map_or(0, |r| r.len());
    // positions that leave every payoff unchanged would be free LP
    // variables; optimise over the row space of the gains matrix instead
    let basis = row_space(&from_rows(&obj.a, dim));
    let reduced = from_rows(&obj.a, dim) * &basis;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let cv: Vec<_> = (0..basis.ncols()).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let wv: Vec<_> = obj.p.iter().map(|&p| lp.add_var(p, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    for (r, &w) in wv.iter().enumerate() {
        for (c, s) in pw.pieces() {
            let mut terms = vec![(w, 1.0)];
            for (k, &v) in cv.iter().enumerate() {
                let a = reduced[(r, k)];
                if a != 0.0 && s != 0.0 {
                    terms.push((v, -s * a));
                }
            }
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, c + s * obj.x);
        }
    }
    let sol = match lp.solve() {
        Ok(sol) => sol,
        Err(minilp::Error::Unbounded) => {
            return Err(Error::Unbounded { reason: "expected utility is unbounded above".into(), ray: improving_ray(obj, pw) })
        }
        Err(e) => return Err(Error::Lp(e.to_string())),
    };
    let coords = DVector::from_iterator(cv.len(), cv.iter().map(|v| sol[*v]));
    let h: Vec<f64> = (&basis * coords).iter().copied().collect();
    // minilp may report an unbounded free variable as an infinite value
    if !sol.objective().is_finite() || h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Unbounded { reason: "expected utility is unbounded above".into(), ray: improving_ray(obj, pw) });
    }
    Ok(polish_primal(obj, pw, h))
}

/// Snaps terminal wealth lying within LP tolerance of a knot onto the knot.
fn polish_primal(obj: &PrimalObjective, pw: &PiecewiseLinear, h: Vec<f64>) -> Vec<f64> {
    let w = obj.wealth(&h);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (row, &wi) in obj.a.iter().zip(&w) {
        if let Some(&k) = pw.knots().iter().find(|&&k| (wi - k).abs() <= 1e-7 * (1.0 + k.abs())) {
            rows.push(row.clone());
            rhs.push(k - wi);
        }
    }
    if rows.is_empty() {
        return h;
    }
    let a = from_rows(&rows, h.len());
    let delta = lstsq(&a, &DVector::from_vec(rhs.clone()));
    let cand: Vec<f64> = h.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
    let fit = (&a * &delta - DVector::from_vec(rhs)).amax();
    if fit <= 1e-12 && obj.value(&cand) >= obj.value(&h) - 1e-12 {
        cand
    } else {
        h
    }
}

/// Box-bounded recession direction `d` maximising `E_P[min_k s_k (A d)]`.
fn improving_ray(obj: &PrimalObjective, pw: &PiecewiseLinear) -> Option<Vec<f64>> {
    let dim = obj.a.first().map_or(0, |r| r.len());
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let dv: Vec<_> = (0..dim).map(|_| lp.add_var(0.0, (-1.0, 1.0))).collect();
    let rv: Vec<_> = obj.p.iter().map(|&p| lp.add_var(p, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    for (row, &r) in obj.a.iter().zip(&rv) {
        for &s in pw.slopes() {
            let mut terms = vec![(r, 1.0)];
            for (k, &a) in row.iter().enumerate() {
                if a != 0.0 && s != 0.0 {
                    terms.push((dv[k], -s * a));
                }
            }
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, 0.0);
        }
    }
    lp.solve().ok().map(|sol| dv.iter().map(|v| sol[*v]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{martingale_polytope, PolytopeOptions};
    use approx::assert_abs_diff_eq;

    fn solve(tree: &ScenarioTree, spec: &str, x: f64) -> Result<PrimalSolution> {
        let poly = martingale_polytope(tree, &PolytopeOptions::default()).unwrap();
        solve_primal(tree, &poly, &spec.parse().unwrap(), x, &SolverOptions::default())
    }

    fn binomial() -> ScenarioTree {
        ScenarioTree::one_period(&[1.0], &[(0.5, vec![2.0]), (0.5, vec![0.5])]).unwrap()
    }

    #[test]
    fn binomial_exponential() {
        let s = solve(&binomial(), "exp:gamma=1", 0.0).unwrap();
        let h = s.strategy.at(0)[0];
        assert_abs_diff_eq!(h, 2f64.ln() / 1.5, epsilon = 1e-10);
        // grid-search oracle on the one-dimensional objective
        let f = |h: f64| 0.5 * (1.0 - (-h).exp()) + 0.5 * (1.0 - (0.5 * h).exp());
        let best = (0..=100_000).map(|i| i as f64 * 1e-5).fold((0.0, f64::NEG_INFINITY), |b, h| {
            if f(h) > b.1 {
                (h, f(h))
            } else {
                b
            }
        });
        assert!((h - best.0).abs() < 2e-5);
        assert_abs_diff_eq!(s.value, 0.055059, epsilon = 5e-7);
    }

    #[test]
    fn trinomial_exponential() {
        let t = ScenarioTree::one_period(&[1.0], &[(1.0 / 3.0, vec![2.0]), (1.0 / 3.0, vec![1.0]), (1.0 / 3.0, vec![0.5])])
            .unwrap();
        let s = solve(&t, "exp:gamma=1", 0.0).unwrap();
        assert_abs_diff_eq!(s.strategy.at(0)[0], 2f64.ln() / 1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(s.value, 0.036706, epsilon = 5e-7);
    }

    #[test]
    fn quadratic_binomial() {
        let s = solve(&binomial(), "quad", 0.0).unwrap();
        // E[dS] / E[dS^2]
        let (m1, m2) = (0.5 * 1.0 + 0.5 * -0.5, 0.5 * 1.0 + 0.5 * 0.25);
        assert_abs_diff_eq!(s.strategy.at(0)[0], m1 / m2, epsilon = 1e-12);
        assert_abs_diff_eq!(s.strategy.at(0)[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(s.value, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn truncated_linear_uses_lp() {
        let s = solve(&binomial(), "trunclin:bliss=1", 0.0).unwrap();
        assert_eq!(s.method, PrimalMethod::LinearProgram);
        // complete market: same value as the single-measure problem
        assert_abs_diff_eq!(s.value, 0.25, epsilon = 1e-9);
    }

    #[test]
    fn satiated_and_domain_cases() {
        let s = solve(&binomial(), "trunclin:bliss=1", 2.0).unwrap();
        assert!(s.satiated());
        assert_eq!(s.value, 1.0);
        assert!(matches!(solve(&binomial(), "log", -1.0), Err(Error::Domain(_))));
        let arb = ScenarioTree::one_period(&[1.0], &[(0.5, vec![1.5]), (0.5, vec![2.0])]).unwrap();
        assert!(matches!(solve(&arb, "exp", 0.0), Err(Error::Arbitrage(_))));
    }

    #[test]
    fn linear_utility_is_unbounded_off_martingale() {
        match solve(&binomial(), "linear", 0.0) {
            Err(Error::Unbounded { ray: Some(d), .. }) => assert!(d[0] > 0.0),
            other => panic!("{other:?}"),
        }
    }
}
