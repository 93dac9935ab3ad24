//! Property checkers. Each consumes solutions or market data and returns a
//! total [`CheckReport`]; failures are data, never errors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::market::{entropy, MartingalePolytope, MeasureQ, ScenarioTree, WealthProcess};
use crate::solvers::{solve_complete, solve_primal, DualSolution, PrimalSolution, SolverOptions};
use crate::utility::UtilityFunction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub location: String,
    /// Violation measure: positive means the property fails by that much.
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub rows: Vec<CheckRow>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn new(name: &str, tolerance: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            pass: true,
            worst_residual: f64::NEG_INFINITY,
            tolerance,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, location: impl Into<String>, residual: f64) {
        let pass = residual <= self.tolerance;
        if residual > self.worst_residual || residual.is_nan() {
            self.worst_residual = residual;
        }
        self.pass &= pass;
        self.rows.push(CheckRow { location: location.into(), residual, pass });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Worst residual, or 0 for a report without rows.
    pub fn worst(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.worst_residual
        }
    }

    /// Flat `(check, location, residual, pass)` records.
    pub fn csv_rows(&self) -> Vec<[String; 4]> {
        self.rows
            .iter()
            .map(|r| [self.name.clone(), r.location.clone(), format!("{:e}", r.residual), r.pass.to_string()])
            .collect()
    }
}

/// Vertices of the polytope followed by `mixtures` seeded random convex
/// combinations of them. Beyond the vertex cap only the interior point is
/// available.
pub fn quantifier_measures(poly: &MartingalePolytope, seed: u64, mixtures: usize) -> Vec<MeasureQ> {
    let Some(verts) = poly.vertices() else {
        return poly.interior().into_iter().cloned().collect();
    };
    let mut out = verts.to_vec();
    if verts.len() < 2 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..mixtures {
        let w: Vec<f64> = (0..verts.len()).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        let p = poly.leaf_probs();
        let density: Vec<f64> = (0..p.len())
            .map(|i| verts.iter().zip(&w).map(|(v, wi)| wi / total * v.density()[i]).sum())
            .collect();
        out.push(MeasureQ::from_density(p, density).expect("mixture of densities"));
    }
    out
}

/// `u(x) <= u_Q(x)` for every vertex `Q`.
pub fn check_value_chain(
    tree: &ScenarioTree,
    poly: &MartingalePolytope,
    u: &UtilityFunction,
    x: f64,
    opts: &SolverOptions,
) -> CheckReport {
    let mut rep = CheckReport::new("value-chain", opts.tol.value_abs);
    let primal = match solve_primal(tree, poly, u, x, opts) {
        Ok(p) => p,
        Err(e) => {
            rep.note(format!("primal solve failed: {e}"));
            rep.push("primal", f64::INFINITY);
            return rep;
        }
    };
    chain_rows(&mut rep, poly, u, x, primal.value);
    rep
}

/// Value-chain rows for an already computed primal value.
pub fn chain_rows(rep: &mut CheckReport, poly: &MartingalePolytope, u: &UtilityFunction, x: f64, value: f64) {
    for (i, q) in poly.vertices().unwrap_or(&[]).iter().enumerate() {
        match solve_complete(q, u, x) {
            Ok(c) => rep.push(format!("vertex {i}"), value - c.value),
            Err(crate::Error::NoFiniteEntropy(_)) => {
                rep.note(format!("vertex {i}: v_Q is infinite, u_Q = +inf"));
                rep.push(format!("vertex {i}"), f64::NEG_INFINITY);
            }
            Err(e) => {
                rep.note(format!("vertex {i}: {e}"));
                rep.push(format!("vertex {i}"), f64::INFINITY);
            }
        }
    }
}

/// `E_Q[X_{t+1} | n] - X_t <= tol` for every measure and every node with
/// non-zero `Q`-mass.
pub fn check_supermartingale(tree: &ScenarioTree, wealth: &WealthProcess, measures: &[MeasureQ], tol: f64) -> CheckReport {
    let mut rep = CheckReport::new("supermartingale", tol);
    for (k, q) in measures.iter().enumerate() {
        let probs = q.probs();
        let mass = tree.aggregate(&probs);
        for &n in tree.decision_nodes() {
            if mass[n].abs() <= 1e-15 {
                continue;
            }
            let next: f64 = tree.node(n).children.iter().map(|&c| crate::numeric::mul0(mass[c], wealth.at(c))).sum();
            rep.push(format!("measure {k} node {}", tree.node(n).id), next / mass[n] - wealth.at(n));
        }
    }
    rep
}

/// Growth of `u_Q(x)/x` along `x = x0 2^k`, cross-checked against finiteness
/// of `v_Q(y)` for `y = 2^-k`.
pub fn check_inada_growth(q: &MeasureQ, u: &UtilityFunction, x0: f64, doublings: usize) -> CheckReport {
    let mut rep = CheckReport::new("inada-growth", 1e-12);
    if !(x0 > 0.0) {
        rep.note("starting wealth must be positive");
        rep.push("x0", f64::INFINITY);
        return rep;
    }
    let mut ratios = Vec::new();
    for k in 0..=doublings {
        let x = x0 * 2f64.powi(k as i32);
        match solve_complete(q, u, x) {
            Ok(c) => ratios.push((x, c.value / x)),
            Err(e) => {
                rep.note(format!("x = {x}: {e}"));
                rep.push(format!("x = {x}"), f64::INFINITY);
                return rep;
            }
        }
    }
    for w in ratios.windows(2) {
        let slack = 1e-12 * (1.0 + w[0].1.abs());
        rep.push(format!("ratio at x = {}", w[1].0), w[1].1 - w[0].1 - slack);
    }
    let first = ratios[0].1;
    let last = ratios[ratios.len() - 1].1;
    let decays = last <= 0.5 * first.abs() || last <= 0.0;
    rep.push("decay", if decays { 0.0 } else { last - 0.5 * first.abs() });
    let finite = (0..=doublings).all(|k| entropy(q, u, 2f64.powi(-(k as i32))).is_finite());
    rep.note(format!("v_Q finite on the y-grid: {finite}"));
    rep.push("entropy agreement", if finite == decays { 0.0 } else { f64::INFINITY });
    rep
}

/// `u_Q(x) < U(+inf)` exactly when `x` is below the satiation point.
pub fn check_satiation_gap(q: &MeasureQ, u: &UtilityFunction, x_grid: &[f64]) -> CheckReport {
    let sup = u.sup_value();
    let bliss = u.bliss();
    let tol = 1e-8 * (1.0 + if bliss.is_finite() { bliss.abs() } else { 0.0 });
    let mut rep = CheckReport::new("satiation-gap", tol);
    for &x in x_grid {
        let c = match solve_complete(q, u, x) {
            Ok(c) => c,
            Err(e) => {
                rep.note(format!("x = {x}: {e}"));
                rep.push(format!("x = {x}"), f64::INFINITY);
                continue;
            }
        };
        let margin = sup - c.value;
        rep.note(format!("x = {x}: U(+inf) - u_Q(x) = {margin:e}"));
        let residual = if x < bliss {
            if margin > 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            margin.abs()
        };
        rep.push(format!("x = {x}"), residual);
    }
    rep
}

/// Convexity of `(Q, y) -> v_Q(y)` along the mixing path.
#[allow(clippy::too_many_arguments)]
pub fn check_entropy_mixture(
    u: &UtilityFunction,
    q1: &MeasureQ,
    q2: &MeasureQ,
    y1: f64,
    y2: f64,
    lambda: f64,
    tol: f64,
) -> CheckReport {
    let mut rep = CheckReport::new("entropy-mixture", tol);
    let y = 1.0 / (lambda / y1 + (1.0 - lambda) / y2);
    let alpha = y * lambda / y1;
    let lhs = entropy(&q1.mix(q2, lambda), u, y);
    let v1 = entropy(q1, u, y1);
    let v2 = entropy(q2, u, y2);
    let rhs = crate::numeric::mul0(alpha, v1) + crate::numeric::mul0(1.0 - alpha, v2);
    rep.note(format!("mixed y = {y}, alpha = {alpha}, lhs = {lhs:e}, rhs = {rhs:e}"));
    let residual = if rhs == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        lhs - rhs
    };
    rep.push("mixture", residual);
    rep
}

/// The set identity `{f >= bliss} = {dQ/dP = 0}` as two strict one-sided
/// inclusions; mass on the boundary `f = bliss` with positive density is
/// reported but not failed.
pub fn check_satiation_set(primal: &PrimalSolution, dual: &DualSolution, u: &UtilityFunction) -> CheckReport {
    let bliss = u.bliss();
    let tol = 1e-8 * (1.0 + if bliss.is_finite() { bliss.abs() } else { 0.0 });
    let mut rep = CheckReport::new("satiation-set", tol);
    if primal.satiated() {
        // y_hat = 0: the dual measure is arbitrary and the identity is vacuous
        rep.note(format!("SATIATED: wealth at or above the bliss point {bliss}, cash is optimal"));
        return rep;
    }
    let p = dual.q_hat.p();
    let density = dual.q_hat.density();
    let mut boundary = 0.0;
    for (w, (&f, &z)) in primal.terminal_wealth.iter().zip(density).enumerate() {
        if p[w] <= 0.0 {
            continue;
        }
        let above = f > bliss + tol;
        let null = z.abs() <= tol;
        let mut r = 0.0_f64;
        if above && !null {
            r = r.max(z.abs());
        }
        if null && f < bliss - tol {
            r = r.max(bliss - f);
        }
        if (f - bliss).abs() <= tol && !null {
            boundary += p[w];
        }
        rep.push(format!("leaf {w}"), r);
    }
    if boundary > 0.0 {
        rep.note(format!("boundary mass P{{f = bliss, dQ/dP > 0}} = {boundary}"));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{martingale_polytope, wealth_process, PolytopeOptions, Strategy};
    use crate::solvers::solve_dual;

    fn binomial() -> ScenarioTree {
        ScenarioTree::one_period(&[1.0], &[(0.5, vec![2.0]), (0.5, vec![0.5])]).unwrap()
    }

    fn trinomial() -> ScenarioTree {
        ScenarioTree::one_period(&[1.0], &[(1.0 / 3.0, vec![2.0]), (1.0 / 3.0, vec![1.0]), (1.0 / 3.0, vec![0.5])])
            .unwrap()
    }

    fn q13() -> MeasureQ {
        MeasureQ::from_probs(&[0.5, 0.5], &[1.0 / 3.0, 2.0 / 3.0]).unwrap()
    }

    #[test]
    fn value_chain_examples() {
        let opts = SolverOptions::default();
        let u: UtilityFunction = "exp:gamma=1".parse().unwrap();
        for t in [binomial(), trinomial()] {
            let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
            let r = check_value_chain(&t, &poly, &u, 0.0, &opts);
            assert!(r.pass, "{r:?}");
        }
        let t = binomial();
        let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
        let r = check_value_chain(&t, &poly, &u, 0.0, &opts);
        assert!(r.worst().abs() < 1e-10);
        let mut zero = CheckReport::new("zero", 1e-8);
        chain_rows(&mut zero, &poly, &u, 0.0, u.value(0.0));
        assert!(zero.pass);
    }

    #[test]
    fn supermartingale_detects_inflated_wealth() {
        let t = ScenarioTree::binomial(1.0, 1.5, 0.75, 0.4, 2).unwrap();
        let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
        let measures = quantifier_measures(&poly, 42, 16);
        let h = Strategy::constant(&t, &[0.8]);
        let mut w = wealth_process(&t, &h, 0.0);
        assert!(check_supermartingale(&t, &w, &measures, 1e-10).pass);
        let leaf = t.leaf_nodes()[0];
        w.values[leaf] += 1.0;
        let r = check_supermartingale(&t, &w, &measures, 1e-10);
        assert!(!r.pass);
    }

    #[test]
    fn inada_examples() {
        let q = q13();
        assert!(check_inada_growth(&q, &"exp:gamma=1".parse().unwrap(), 1.0, 12).pass);
        assert!(check_inada_growth(&q, &"log:shift=1".parse().unwrap(), 1.0, 12).pass);
        let p = MeasureQ::reference(&[0.5, 0.5]);
        assert!(!check_inada_growth(&p, &UtilityFunction::linear(), 1.0, 12).pass);
    }

    #[test]
    fn satiation_gap_examples() {
        let u = UtilityFunction::truncated_linear(1.0).unwrap();
        let r = check_satiation_gap(&q13(), &u, &[0.0, 1.0, 2.0]);
        assert!(r.pass, "{r:?}");
        let e = UtilityFunction::exponential(1.0).unwrap();
        assert!(check_satiation_gap(&q13(), &e, &[-1.0, 0.0, 3.0]).pass);
    }

    #[test]
    fn mixture_examples() {
        let u: UtilityFunction = "exp:gamma=1".parse().unwrap();
        let q = q13();
        let r = check_entropy_mixture(&u, &q, &q, 0.7, 0.7, 0.4, 1e-10);
        assert!(r.pass && r.worst().abs() < 1e-14);
        let q2 = MeasureQ::from_probs(&[0.5, 0.5], &[0.8, 0.2]).unwrap();
        let r = check_entropy_mixture(&u, &q, &q2, 0.5, 2.0, 0.3, 1e-10);
        assert!(r.pass && r.worst() < 0.0);
    }

    #[test]
    fn satiation_set_boundary_mass() {
        let t = binomial();
        let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
        let u = UtilityFunction::truncated_linear(1.0).unwrap();
        let opts = SolverOptions::default();
        let p = solve_primal(&t, &poly, &u, 0.0, &opts).unwrap();
        let d = solve_dual(&poly, &u, 0.0, &opts).unwrap();
        let r = check_satiation_set(&p, &d, &u);
        assert!(r.pass);
        assert!(r.notes.iter().any(|n| n.contains("boundary mass")));
    }
}
