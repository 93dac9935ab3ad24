//! Dual problem in the unnormalised variable `Z = y dQ/dP`:
//! minimise `E_P[x Z + V(Z)]` over the cone cut out by the martingale
//! constraints. Then `y_hat = E_P[Z]` and `dQ_hat/dP = Z / y_hat`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::linalg::{lstsq, null_space};
use super::primal::PrimalSolution;
use super::SolverOptions;
use crate::error::{Error, Result};
use crate::market::{MartingalePolytope, MeasureQ};
use crate::utility::{PiecewiseLinear, UtilityFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualStart {
    /// Initialised from the primal optimum through `Z = U'(f_hat)`.
    Warm,
    /// Initialised at the centroid of the polytope (or its LP interior point).
    Cold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub y_hat: f64,
    pub q_hat: MeasureQ,
    /// `Z = y_hat dQ_hat/dP` per terminal node.
    pub z: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub start: DualStart,
    /// Set for the quadratic family, whose conjugate is finite on negatives:
    /// the optimal dual measure may then be signed.
    pub signed: bool,
}

struct DualProblem<'a> {
    u: &'a UtilityFunction,
    x: f64,
    p: &'a [f64],
    /// Martingale constraints in `Z` coordinates.
    b: DMatrix<f64>,
}

impl DualProblem<'_> {
    fn objective(&self, z: &[f64]) -> f64 {
        self.p.iter().zip(z).map(|(&p, &zz)| p * (self.x * zz + self.u.conjugate(zz))).sum()
    }
}

fn constraint_matrix(poly: &MartingalePolytope) -> DMatrix<f64> {
    let p = poly.leaf_probs();
    let rows = &poly.constraints;
    DMatrix::from_fn(rows.len(), p.len(), |r, w| rows[r].coeffs[w] * p[w])
}

/// Cold-started dual solve.
pub fn solve_dual(
    poly: &MartingalePolytope,
    u: &UtilityFunction,
    x: f64,
    opts: &SolverOptions,
) -> Result<DualSolution> {
    solve(poly, u, x, None, opts)
}

/// Dual solve initialised from a primal solution.
pub fn solve_dual_warm(
    poly: &MartingalePolytope,
    u: &UtilityFunction,
    x: f64,
    primal: &PrimalSolution,
    opts: &SolverOptions,
) -> Result<DualSolution> {
    solve(poly, u, x, Some(primal), opts)
}

fn solve(
    poly: &MartingalePolytope,
    u: &UtilityFunction,
    x: f64,
    warm: Option<&PrimalSolution>,
    opts: &SolverOptions,
) -> Result<DualSolution> {
    if !(x > u.domain_inf()) || x.is_nan() {
        return Err(Error::Domain(format!("initial wealth {x} is not above the domain infimum {}", u.domain_inf())));
    }
    let interior = poly.interior().ok_or_else(|| Error::Arbitrage("the martingale polytope is empty".into()))?;
    let p = poly.leaf_probs();
    let prob = DualProblem { u, x, p, b: constraint_matrix(poly) };
    if u.is_monotone() && x >= u.bliss() {
        let z = vec![0.0; p.len()];
        return Ok(DualSolution {
            y_hat: 0.0,
            q_hat: interior.clone(),
            value: prob.objective(&z),
            z,
            iterations: 0,
            start: DualStart::Cold,
            signed: false,
        });
    }
    let (z, iterations, start) = match u.as_piecewise() {
        Some(pw) => {
            let bounds = warm.map(|s| supergradient_bounds(u, &s.terminal_wealth));
            let z = lp_dual(&prob, pw, bounds.as_deref())?;
            (z, 1, if warm.is_some() { DualStart::Warm } else { DualStart::Cold })
        }
        None => newton_dual(&prob, poly, interior, warm, opts)?,
    };
    let y_hat: f64 = p.iter().zip(&z).map(|(a, b)| a * b).sum();
    if !(y_hat > 0.0) {
        return Err(Error::Unbounded { reason: "dual optimum has zero scaling below the satiation point".into(), ray: None });
    }
    let density: Vec<f64> = z.iter().map(|v| v / y_hat).collect();
    let signed = !u.is_monotone();
    let q_hat = if signed { MeasureQ::signed(p, density)? } else { MeasureQ::from_density(p, density)? };
    Ok(DualSolution { y_hat, q_hat, value: prob.objective(&z), z, iterations, start, signed })
}

fn newton_dual(
    prob: &DualProblem,
    poly: &MartingalePolytope,
    interior: &MeasureQ,
    warm: Option<&PrimalSolution>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, usize, DualStart)> {
    let u = prob.u;
    let m = prob.p.len();
    // Families with V = +inf on negatives keep Z >= 0, and Z = 0 on nodes no
    // martingale measure charges. The quadratic family works on the full space.
    let barrier = u.is_monotone();
    let live: Vec<usize> = (0..m).filter(|&w| !barrier || poly.live()[w]).collect();
    if barrier && live.len() < m && u.conjugate(0.0) == f64::INFINITY {
        return Err(Error::NoFiniteEntropy("every martingale measure vanishes on a node where V(0) is infinite".into()));
    }
    let b_live = DMatrix::from_fn(prob.b.nrows(), live.len(), |r, c| prob.b[(r, live[c])]);
    let n = null_space(&b_live);
    let mut z = vec![0.0; m];
    let cold: Vec<f64> = interior.density().to_vec();
    let mut start = DualStart::Cold;
    if let Some(s) = warm {
        let g = DVector::from_iterator(live.len(), live.iter().map(|&w| u.derivative(s.terminal_wealth[w])));
        let proj = &n * (n.transpose() * g);
        if proj.iter().all(|v| v.is_finite()) && (!barrier || proj.iter().all(|&v| v > 0.0)) {
            for (c, &w) in live.iter().enumerate() {
                z[w] = proj[c];
            }
            start = DualStart::Warm;
        }
    }
    if start == DualStart::Cold {
        for &w in &live {
            z[w] = cold[w];
        }
    }
    let mut f = prob.objective(&z);
    if !f.is_finite() {
        return Err(Error::NoFiniteEntropy("dual objective is infinite at the starting point".into()));
    }
    let reduced_gradient = |z: &[f64]| -> (DVector<f64>, f64) {
        let g = DVector::from_iterator(live.len(), live.iter().map(|&w| prob.p[w] * (prob.x + u.conjugate_derivative(z[w]))));
        let scale: f64 = live.iter().map(|&w| prob.p[w] * (prob.x.abs() + u.conjugate_derivative(z[w]).abs())).sum();
        (n.transpose() * g, scale)
    };
    for it in 0..opts.max_iter {
        let (gw, scale) = reduced_gradient(&z);
        let gnorm = gw.amax();
        if gnorm <= opts.tol.gradient * scale.max(1.0) {
            return Ok((z, it, start));
        }
        let hd: Vec<f64> = live.iter().map(|&w| prob.p[w] * u.conjugate_second_derivative(z[w])).collect();
        let hw = DMatrix::from_fn(n.ncols(), n.ncols(), |i, j| {
            (0..live.len()).map(|k| n[(k, i)] * hd[k] * n[(k, j)]).sum::<f64>()
        });
        let step_w = -lstsq(&hw, &gw);
        let decrement = -gw.dot(&step_w);
        if !(decrement > 0.0) {
            return Ok((z, it, start));
        }
        let step = &n * step_w;
        let mut t = 1.0;
        loop {
            let mut cand = z.clone();
            for (c, &w) in live.iter().enumerate() {
                cand[w] += t * step[c];
            }
            let feasible = !barrier || live.iter().all(|&w| cand[w] > 0.0);
            if feasible {
                let fc = prob.objective(&cand);
                // below the resolution of f, judge steps by the gradient
                let flat = (fc - f).abs() <= 8.0 * f64::EPSILON * (1.0 + f.abs());
                let better = flat && reduced_gradient(&cand).0.amax() < 0.5 * gnorm;
                if fc.is_finite() && (fc <= f - 1e-4 * t * decrement && !flat || better) {
                    z = cand;
                    f = fc;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-20 {
                if decrement <= 1e-14 * (1.0 + f.abs()) {
                    return Ok((z, it, start));
                }
                return Err(Error::LineSearch(format!("dual Newton step rejected (decrement {decrement:.3e})")));
            }
        }
    }
    Err(Error::NonConvergence { what: "dual Newton iteration".into(), iterations: opts.max_iter })
}

/// Supergradient intervals of `U` at the primal terminal wealth, widened to
/// the full kink interval when the wealth sits within LP tolerance of a knot.
fn supergradient_bounds(u: &UtilityFunction, wealth: &[f64]) -> Vec<(f64, f64)> {
    let pw = u.as_piecewise().expect("piecewise family");
    wealth
        .iter()
        .map(|&w| {
            let near = pw.knots().iter().find(|&&k| (w - k).abs() <= 1e-7 * (1.0 + k.abs())).copied();
            let s = u.subdifferential(near.unwrap_or(w)).expect("finite wealth");
            (s.lower, s.upper)
        })
        .collect()
}

/// `min sum p (x Z + v)` with `v >= U(k) - k Z` over knots `k` (and `k = 0`),
/// `Z` within the slope range (or the given bounds) and `B Z = 0`.
fn lp_dual(prob: &DualProblem, pw: &PiecewiseLinear, bounds: Option<&[(f64, f64)]>) -> Result<Vec<f64>> {
    let m = prob.p.len();
    let smin = *pw.slopes().last().unwrap();
    let smax = pw.slopes()[0];
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let zv: Vec<_> = (0..m)
        .map(|w| {
            let (lo, hi) = bounds.map_or((smin, smax), |b| b[w]);
            lp.add_var(prob.p[w] * prob.x, (lo, hi))
        })
        .collect();
    let vv: Vec<_> = (0..m).map(|w| lp.add_var(prob.p[w], (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let mut knots: Vec<f64> = pw.knots().to_vec();
    knots.push(0.0);
    for w in 0..m {
        for &k in &knots {
            let uk = prob.u.value(k);
            lp.add_constraint(&[(vv[w], 1.0), (zv[w], k)][..], ComparisonOp::Ge, uk);
        }
    }
    for r in 0..prob.b.nrows() {
        let terms: Vec<_> = (0..m).filter(|&w| prob.b[(r, w)] != 0.0).map(|w| (zv[w], prob.b[(r, w)])).collect();
        if !terms.is_empty() {
            lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, 0.0);
        }
    }
    let sol = match lp.solve() {
        Ok(s) => s,
        Err(minilp::Error::Infeasible) => return Err(Error::Lp("dual linear program is infeasible".into())),
        Err(minilp::Error::Unbounded) => {
            return Err(Error::Unbounded { reason: "dual is unbounded below; the primal is ill-posed".into(), ray: None })
        }
    };
    let z: Vec<f64> = zv.iter().map(|v| sol[*v]).collect();
    Ok(polish_dual(prob, pw, z, bounds))
}

/// Snaps `Z` onto nearby slopes and restores `B Z = 0` exactly on the rest.
fn polish_dual(prob: &DualProblem, pw: &PiecewiseLinear, z: Vec<f64>, bounds: Option<&[(f64, f64)]>) -> Vec<f64> {
    let m = z.len();
    let mut snapped = z.clone();
    let mut free = Vec::new();
    for w in 0..m {
        match pw.slopes().iter().find(|&&s| (z[w] - s).abs() <= 1e-7 * (1.0 + s.abs())) {
            Some(&s) => snapped[w] = s,
            None => free.push(w),
        }
    }
    let resid = -(&prob.b * DVector::from_vec(snapped.clone()));
    let cand = if free.is_empty() {
        snapped
    } else {
        let bf = DMatrix::from_fn(prob.b.nrows(), free.len(), |r, c| prob.b[(r, free[c])]);
        let delta = lstsq(&bf, &resid);
        let mut c = snapped;
        for (k, &w) in free.iter().enumerate() {
            c[w] += delta[k];
        }
        c
    };
    let smin = *pw.slopes().last().unwrap();
    let smax = pw.slopes()[0];
    let in_bounds = cand.iter().enumerate().all(|(w, &v)| {
        let (lo, hi) = bounds.map_or((smin, smax), |b| b[w]);
        v >= lo && v <= hi
    });
    let feasible = (&prob.b * DVector::from_vec(cand.clone())).amax() <= 1e-13;
    if in_bounds && feasible && prob.objective(&cand) <= prob.objective(&z) + 1e-12 {
        cand
    } else {
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{martingale_polytope, PolytopeOptions, ScenarioTree};
    use crate::solvers::primal::solve_primal;
    use approx::assert_abs_diff_eq;

    fn poly(t: &ScenarioTree) -> MartingalePolytope {
        martingale_polytope(t, &PolytopeOptions::default()).unwrap()
    }

    #[test]
    fn binomial_exponential_dual() {
        let t = ScenarioTree::one_period(&[1.0], &[(0.5, vec![2.0]), (0.5, vec![0.5])]).unwrap();
        let u = UtilityFunction::exponential(1.0).unwrap();
        let d = solve_dual(&poly(&t), &u, 0.0, &SolverOptions::default()).unwrap();
        let kl = (1.0 / 3.0) * (2.0_f64 / 3.0).ln() + (2.0 / 3.0) * (4.0_f64 / 3.0).ln();
        assert_abs_diff_eq!(d.y_hat, (-kl).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(d.q_hat.probs()[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.value, 0.055059, epsilon = 5e-7);
    }

    #[test]
    fn warm_and_cold_agree() {
        let t = ScenarioTree::one_period(&[1.0], &[(0.3, vec![2.0]), (0.3, vec![1.1]), (0.4, vec![0.5])]).unwrap();
        let pl = poly(&t);
        let opts = SolverOptions::default();
        for spec in ["exp:gamma=1", "log", "power:gamma=3,shift=1", "quad", "trunclin:bliss=1", "pwl:knots=-1/0.5,slopes=2/1/0"] {
            let u: UtilityFunction = spec.parse().unwrap();
            let pr = solve_primal(&t, &pl, &u, 0.0, &opts).unwrap();
            let cold = solve_dual(&pl, &u, 0.0, &opts).unwrap();
            let warm = solve_dual_warm(&pl, &u, 0.0, &pr, &opts).unwrap();
            assert_abs_diff_eq!(cold.value, warm.value, epsilon = 1e-8);
            assert!((cold.value - pr.value).abs() <= 1e-6 * (1.0 + pr.value.abs()), "{spec}");
        }
    }

    #[test]
    fn unique_measure_is_returned_for_every_utility() {
        let t = ScenarioTree::binomial(1.0, 1.5, 0.75, 0.4, 2).unwrap();
        let pl = poly(&t);
        let q = pl.vertices().unwrap()[0].clone();
        for spec in ["exp:gamma=2", "log", "trunclin:bliss=2"] {
            let d = solve_dual(&pl, &spec.parse().unwrap(), 0.0, &SolverOptions::default()).unwrap();
            for (a, b) in d.q_hat.density().iter().zip(q.density()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }
}
