//! The polytope of martingale measures on a scenario tree.
//!
//! Measures are parametrised by their terminal probabilities `q`. Each
//! decision node and asset contributes one linear equality; together with
//! `q >= 0` and `sum q = 1` these describe the polytope exactly. Vertices are
//! enumerated by the double-description method on the cone `{q >= 0, Aq = 0}`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::measure::MeasureQ;
use super::tree::ScenarioTree;
use crate::error::{Error, Result};

/// `sum_w coeffs[w] q_w = 0` for one (node, asset) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleConstraint {
    pub node: u64,
    #[serde(skip)]
    pub node_index: usize,
    pub asset: usize,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolytopeOptions {
    /// Vertices are enumerated only up to this many terminal nodes.
    pub vertex_cap: usize,
    /// Trees with more terminal nodes are rejected outright.
    pub leaf_limit: usize,
}

impl Default for PolytopeOptions {
    fn default() -> Self {
        PolytopeOptions { vertex_cap: 64, leaf_limit: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePolytope {
    pub constraints: Vec<MartingaleConstraint>,
    leaf_probs: Vec<f64>,
    /// `None` when the tree exceeds the vertex cap.
    vertices: Option<Vec<MeasureQ>>,
    /// A point in the relative interior, if the polytope is non-empty.
    interior: Option<MeasureQ>,
    /// Terminal nodes charged by some martingale measure.
    live: Vec<bool>,
}

impl MartingalePolytope {
    pub fn is_empty(&self) -> bool {
        self.interior.is_none()
    }

    pub fn vertices(&self) -> Option<&[MeasureQ]> {
        self.vertices.as_deref()
    }

    pub fn interior(&self) -> Option<&MeasureQ> {
        self.interior.as_ref()
    }

    pub fn live(&self) -> &[bool] {
        &self.live
    }

    pub fn leaf_probs(&self) -> &[f64] {
        &self.leaf_probs
    }

    /// Whether some martingale measure charges every terminal node.
    pub fn has_equivalent(&self) -> bool {
        !self.is_empty() && self.live.iter().all(|&l| l)
    }

    /// Largest absolute constraint residual of the probabilities `q`.
    pub fn residual(&self, q: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.coeffs.iter().zip(q).map(|(a, b)| a * b).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

/// Builds the constraint system and, within the cap, the vertex list.
pub fn martingale_polytope(tree: &ScenarioTree, opts: &PolytopeOptions) -> Result<MartingalePolytope> {
    let m = tree.leaf_count();
    if m > opts.leaf_limit {
        return Err(Error::DimensionOverflow { leaves: m, limit: opts.leaf_limit });
    }
    let constraints = constraints(tree);
    let p = tree.leaf_probs();
    if m <= opts.vertex_cap {
        let rows: Vec<&[f64]> = constraints.iter().map(|c| c.coeffs.as_slice()).collect();
        let verts = enumerate_vertices(&rows, m);
        let measures: Vec<MeasureQ> = verts
            .iter()
            .map(|q| MeasureQ::from_probs(&p, q))
            .collect::<Result<_>>()?;
        let mut live = vec![false; m];
        for q in &verts {
            for (l, &v) in live.iter_mut().zip(q) {
                *l |= v > 0.0;
            }
        }
        let interior = if verts.is_empty() {
            None
        } else {
            let k = verts.len() as f64;
            let c: Vec<f64> = (0..m).map(|w| verts.iter().map(|q| q[w]).sum::<f64>() / k).collect();
            Some(MeasureQ::from_probs(&p, &c)?)
        };
        return Ok(MartingalePolytope { constraints, leaf_probs: p, vertices: Some(measures), interior, live });
    }
    let (interior, live) = lp_interior(&constraints, m)?;
    let interior = interior.map(|q| MeasureQ::from_probs(&p, &q)).transpose()?;
    Ok(MartingalePolytope { constraints, leaf_probs: p, vertices: None, interior, live })
}

fn constraints(tree: &ScenarioTree) -> Vec<MartingaleConstraint> {
    let m = tree.leaf_count();
    let mut out = Vec::new();
    for &n in tree.decision_nodes() {
        let node = tree.node(n);
        for i in 0..tree.assets() {
            let mut coeffs = vec![0.0; m];
            for &c in &node.children {
                let inc = tree.node(c).prices[i] - node.prices[i];
                for leaf in tree.node(c).leaves.clone() {
                    coeffs[leaf] = inc;
                }
            }
            out.push(MartingaleConstraint { node: node.id, node_index: n, asset: i, coeffs });
        }
    }
    out
}

/// Fixed-width bit set over terminal nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Support(Vec<u64>);

impl Support {
    fn single(m: usize, i: usize) -> Self {
        let mut w = vec![0u64; m.div_ceil(64)];
        w[i / 64] |= 1 << (i % 64);
        Support(w)
    }

    fn union(&self, o: &Support) -> Support {
        Support(self.0.iter().zip(&o.0).map(|(a, b)| a | b).collect())
    }

    fn subset_of(&self, o: &Support) -> bool {
        self.0.iter().zip(&o.0).all(|(a, b)| a & !b == 0)
    }
}

struct Ray {
    v: Vec<f64>,
    support: Support,
}

/// Extreme rays of `{q >= 0 : a.q = 0 for every row}`, normalised to sum one.
pub(crate) fn enumerate_vertices(rows: &[&[f64]], m: usize) -> Vec<Vec<f64>> {
    let mut rays: Vec<Ray> = (0..m)
        .map(|i| {
            let mut v = vec![0.0; m];
            v[i] = 1.0;
            Ray { v, support: Support::single(m, i) }
        })
        .collect();
    // deepest constraints first keeps intermediate ray sets small
    for row in rows.iter().rev() {
        let vals: Vec<f64> = rays
            .iter()
            .map(|r| {
                let s: f64 = row.iter().zip(&r.v).map(|(a, b)| a * b).sum();
                let scale: f64 = row.iter().zip(&r.v).map(|(a, b)| (a * b).abs()).sum();
                if s.abs() <= 1e-12 * scale {
                    0.0
                } else {
                    s
                }
            })
            .collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&k| vals[k] > 0.0).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&k| vals[k] < 0.0).collect();
        let mut next: Vec<Ray> = Vec::new();
        for (k, r) in rays.iter().enumerate() {
            if vals[k] == 0.0 {
                next.push(Ray { v: r.v.clone(), support: r.support.clone() });
            }
        }
        for &i in &pos {
            for &j in &neg {
                let u = rays[i].support.union(&rays[j].support);
                let adjacent =
                    (0..rays.len()).all(|k| k == i || k == j || !rays[k].support.subset_of(&u));
                if !adjacent {
                    continue;
                }
                let (a, b) = (vals[i], -vals[j]);
                let mut v: Vec<f64> = rays[i].v.iter().zip(&rays[j].v).map(|(x, y)| b * x + a * y).collect();
                let s: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= s);
                next.push(Ray { v, support: u });
            }
        }
        rays = next;
        if rays.is_empty() {
            break;
        }
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for r in rays {
        if !seen.insert(r.support.clone()) {
            continue;
        }
        out.push(polish(rows, &r.v));
    }
    out
}

/// Re-solves `A_S q_S = 0, sum q_S = 1` on the support of `q` to remove drift.
fn polish(rows: &[&[f64]], q: &[f64]) -> Vec<f64> {
    let supp: Vec<usize> = (0..q.len()).filter(|&w| q[w] > 0.0).collect();
    let k = supp.len();
    let mut a = DMatrix::<f64>::zeros(rows.len() + 1, k);
    for (r, row) in rows.iter().enumerate() {
        for (c, &w) in supp.iter().enumerate() {
            a[(r, c)] = row[w];
        }
    }
    for c in 0..k {
        a[(rows.len(), c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(rows.len() + 1);
    b[rows.len()] = 1.0;
    let svd = a.svd(true, true);
    let mut out = vec![0.0; q.len()];
    match svd.solve(&b, 1e-13) {
        Ok(sol) if sol.iter().all(|&v| v > 0.0) => {
            for (c, &w) in supp.iter().enumerate() {
                out[w] = sol[c];
            }
        }
        _ => out.copy_from_slice(q),
    }
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    out
}

/// Feasibility and a relative-interior point by linear programming, used
/// beyond the vertex cap. One LP per terminal node finds the live set.
fn lp_interior(constraints: &[MartingaleConstraint], m: usize) -> Result<(Option<Vec<f64>>, Vec<bool>)> {
    let mut live = vec![false; m];
    let mut acc = vec![0.0; m];
    let mut count = 0usize;
    for w in 0..m {
        if live[w] {
            continue;
        }
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..m).map(|k| lp.add_var(if k == w { 1.0 } else { 0.0 }, (0.0, 1.0))).collect();
        for c in constraints {
            let terms: Vec<_> = vars.iter().zip(&c.coeffs).filter(|(_, a)| **a != 0.0).map(|(v, a)| (*v, *a)).collect();
            if !terms.is_empty() {
                lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, 0.0);
            }
        }
        let ones: Vec<_> = vars.iter().map(|v| (*v, 1.0)).collect();
        lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
        match lp.solve() {
            Ok(sol) => {
                let q: Vec<f64> = vars.iter().map(|v| sol[*v].max(0.0)).collect();
                if q[w] <= 1e-9 {
                    continue;
                }
                for k in 0..m {
                    if q[k] > 1e-9 {
                        live[k] = true;
                    }
                    acc[k] += q[k];
                }
                count += 1;
            }
            Err(minilp::Error::Infeasible) => return Ok((None, live)),
            Err(e) => return Err(Error::Lp(e.to_string())),
        }
    }
    if count == 0 {
        return Ok((None, live));
    }
    let q: Vec<f64> = acc.iter().map(|v| v / count as f64).collect();
    // project back onto the affine hull on the live set
    let rows: Vec<&[f64]> = constraints.iter().map(|c| c.coeffs.as_slice()).collect();
    let polished = project_affine(&rows, &q, &live);
    Ok((Some(polished), live))
}

/// Least-change correction so that `A q = 0`, `sum q = 1` hold on the live set.
fn project_affine(rows: &[&[f64]], q: &[f64], live: &[bool]) -> Vec<f64> {
    let idx: Vec<usize> = (0..q.len()).filter(|&w| live[w]).collect();
    let k = idx.len();
    let mut a = DMatrix::<f64>::zeros(rows.len() + 1, k);
    let mut r = DVector::<f64>::zeros(rows.len() + 1);
    for (i, row) in rows.iter().enumerate() {
        for (c, &w) in idx.iter().enumerate() {
            a[(i, c)] = row[w];
        }
        r[i] = -idx.iter().map(|&w| row[w] * q[w]).sum::<f64>();
    }
    for c in 0..k {
        a[(rows.len(), c)] = 1.0;
    }
    r[rows.len()] = 1.0 - idx.iter().map(|&w| q[w]).sum::<f64>();
    let mut out = q.to_vec();
    if let Ok(delta) = a.svd(true, true).solve(&r, 1e-13) {
        for (c, &w) in idx.iter().enumerate() {
            out[w] += delta[c];
        }
    }
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::measure::is_martingale_measure;
    use crate::market::tree::RandomTreeConfig;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn binomial_has_unique_measure() {
        let t = ScenarioTree::one_period(&[1.0], &[(0.5, vec![2.0]), (0.5, vec![0.5])]).unwrap();
        let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
        let v = poly.vertices().unwrap();
        assert_eq!(v.len(), 1);
        assert_abs_diff_eq!(v[0].probs()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert!(poly.has_equivalent());
    }

    #[test]
    fn trinomial_vertices() {
        let t = ScenarioTree::one_period(&[1.0], &[(1.0 / 3.0, vec![2.0]), (1.0 / 3.0, vec![1.0]), (1.0 / 3.0, vec![0.5])])
            .unwrap();
        let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
        let mut v: Vec<Vec<f64>> = poly.vertices().unwrap().iter().map(|q| q.probs()).collect();
        v.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(v.len(), 2);
        assert_abs_diff_eq!(v[0].as_slice(), [0.0, 1.0, 0.0].as_slice(), epsilon = 1e-15);
        assert_abs_diff_eq!(v[1].as_slice(), [1.0 / 3.0, 0.0, 2.0 / 3.0].as_slice(), epsilon = 1e-15);
    }

    #[test]
    fn increasing_prices_have_no_measure() {
        let t = ScenarioTree::one_period(&[1.0], &[(0.5, vec![1.5]), (0.5, vec![2.0])]).unwrap();
        let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
        assert!(poly.is_empty());
        assert!(poly.vertices().unwrap().is_empty());
    }

    #[test]
    fn vertices_are_martingale_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let t = ScenarioTree::random(&mut rng, &RandomTreeConfig::default());
            let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
            assert!(poly.has_equivalent());
            for q in poly.vertices().unwrap() {
                let c = is_martingale_measure(&t, q, 1e-10);
                assert!(c.is_martingale, "{}", c.max_residual);
            }
            assert!(is_martingale_measure(&t, poly.interior().unwrap(), 1e-10).is_martingale);
        }
    }

    #[test]
    fn lp_route_agrees_with_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let t = ScenarioTree::random(&mut rng, &RandomTreeConfig::default());
            let full = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
            let lp = martingale_polytope(&t, &PolytopeOptions { vertex_cap: 0, ..Default::default() }).unwrap();
            assert!(lp.vertices().is_none());
            assert_eq!(lp.live(), full.live());
            let q = lp.interior().unwrap();
            assert!(is_martingale_measure(&t, q, 1e-10).is_martingale);
        }
        let t = ScenarioTree::one_period(&[1.0], &[(0.5, vec![1.5]), (0.5, vec![2.0])]).unwrap();
        let lp = martingale_polytope(&t, &PolytopeOptions { vertex_cap: 0, ..Default::default() }).unwrap();
        assert!(lp.is_empty());
    }

    #[test]
    fn leaf_limit_is_enforced() {
        let t = ScenarioTree::binomial(1.0, 2.0, 0.5, 0.5, 3).unwrap();
        let err = martingale_polytope(&t, &PolytopeOptions { vertex_cap: 64, leaf_limit: 4 }).unwrap_err();
        assert!(matches!(err, Error::DimensionOverflow { leaves: 8, limit: 4 }));
    }
}
