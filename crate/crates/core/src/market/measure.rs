//! Measures on the terminal nodes, martingale checks and generalized entropy.

use serde::Serialize;

use super::tree::{wealth_process, ScenarioTree, Strategy};
use crate::error::{Error, Result};
use crate::numeric::{dot0, mul0};
use crate::utility::{ConjugateFunction, UtilityFunction};

/// A measure `Q` given by its density `dQ/dP` on the terminal nodes.
///
/// The reference probabilities travel with the density so the measure can be
/// used without the tree (complete-market computations).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureQ {
    p: Vec<f64>,
    density: Vec<f64>,
}

const MASS_TOL: f64 = 1e-9;

impl MeasureQ {
    /// Validates `E_P[density] = 1` and non-negativity.
    pub fn from_density(p: &[f64], density: Vec<f64>) -> Result<Self> {
        let q = Self::signed(p, density)?;
        if let Some(i) = q.density.iter().position(|&z| z < 0.0) {
            return Err(Error::Domain(format!("density is negative at terminal node {i}")));
        }
        Ok(q)
    }

    /// Like [`MeasureQ::from_density`] but allows negative densities.
    pub fn signed(p: &[f64], density: Vec<f64>) -> Result<Self> {
        if p.len() != density.len() {
            return Err(Error::Domain(format!("density has {} entries, expected {}", density.len(), p.len())));
        }
        if density.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("density must be finite".into()));
        }
        let mass = dot0(p, &density);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Domain(format!("density integrates to {mass}, expected 1")));
        }
        Ok(MeasureQ { p: p.to_vec(), density })
    }

    /// From terminal probabilities `q` under `Q`.
    pub fn from_probs(p: &[f64], q: &[f64]) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::Domain(format!("got {} probabilities, expected {}", q.len(), p.len())));
        }
        Self::from_density(p, q.iter().zip(p).map(|(q, p)| q / p).collect())
    }

    /// `Q = P`.
    pub fn reference(p: &[f64]) -> Self {
        MeasureQ { p: p.to_vec(), density: vec![1.0; p.len()] }
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Terminal probabilities under `Q`.
    pub fn probs(&self) -> Vec<f64> {
        self.p.iter().zip(&self.density).map(|(p, z)| p * z).collect()
    }

    /// `E_Q[f]` with the convention `0 * inf = 0`.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.probs().iter().zip(f).map(|(&q, &v)| mul0(q, v)).sum()
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn is_equivalent(&self) -> bool {
        self.density.iter().all(|&z| z > 0.0)
    }

    /// `lambda Q1 + (1 - lambda) Q2`.
    pub fn mix(&self, other: &MeasureQ, lambda: f64) -> MeasureQ {
        let density = self.density.iter().zip(&other.density).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        MeasureQ { p: self.p.clone(), density }
    }
}

/// One martingale condition, `E_Q[1_node (S^i_{t+1} - S^i_t)] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeResidual {
    pub node: u64,
    pub asset: usize,
    pub residual: f64,
}

/// Output of [`is_martingale_measure`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleCheck {
    pub is_martingale: bool,
    /// Conditional residuals `E_Q[dS | node]`, for nodes with positive Q-mass.
    pub conditional: Vec<NodeResidual>,
    /// Residuals from pricing unit strategies, `E_Q[(e_{node,i} . S)_T]`.
    pub pricing: Vec<NodeResidual>,
    pub max_residual: f64,
    pub routes_agree: bool,
}

/// Checks the martingale property by node masses and, independently, by
/// pricing the simple strategies that hold one unit of one asset at one node.
pub fn is_martingale_measure(tree: &ScenarioTree, q: &MeasureQ, tol: f64) -> MartingaleCheck {
    let probs = q.probs();
    let mass = tree.aggregate(&probs);
    let d = tree.assets();
    let mut conditional = Vec::new();
    let mut pricing = Vec::new();
    let mut agree = true;
    let mut max_residual = 0.0_f64;
    for &n in tree.decision_nodes() {
        let node = tree.node(n);
        for i in 0..d {
            let by_mass: f64 = node.children.iter().map(|&c| mass[c] * (tree.node(c).prices[i] - node.prices[i])).sum();
            let mut unit = vec![0.0; d];
            unit[i] = 1.0;
            let mut h = Strategy::zeros(tree);
            h.set(n, unit);
            let gains = wealth_process(tree, &h, 0.0).terminal(tree);
            let priced: f64 = probs.iter().zip(&gains).map(|(a, b)| a * b).sum();
            let scale = node.children.iter().map(|&c| mass[c].abs() * tree.node(c).prices[i].abs()).sum::<f64>()
                + mass[n].abs() * node.prices[i].abs();
            agree &= (by_mass - priced).abs() <= 1e-12 * (1.0 + scale);
            max_residual = max_residual.max(priced.abs());
            if mass[n] > 0.0 {
                conditional.push(NodeResidual { node: node.id, asset: i, residual: by_mass / mass[n] });
            }
            pricing.push(NodeResidual { node: node.id, asset: i, residual: priced });
        }
    }
    MartingaleCheck { is_martingale: max_residual <= tol, conditional, pricing, max_residual, routes_agree: agree }
}

/// `E_Q[X_{t+1} | node] - X_t` for the wealth of `h` started at `x`, at every
/// decision node with positive Q-mass.
pub fn check_simple_martingale(tree: &ScenarioTree, q: &MeasureQ, h: &Strategy, x: f64) -> Vec<NodeResidual> {
    let mass = tree.aggregate(&q.probs());
    let w = wealth_process(tree, h, x);
    let mut out = Vec::new();
    for &n in tree.decision_nodes() {
        if mass[n] <= 0.0 {
            continue;
        }
        let node = tree.node(n);
        let next: f64 = node.children.iter().map(|&c| mass[c] * w.at(c)).sum::<f64>() / mass[n];
        out.push(NodeResidual { node: node.id, asset: 0, residual: next - w.at(n) });
    }
    out
}

/// `v_Q(y) = E_P[V(y dQ/dP)]` with the closed-form conjugate.
///
/// States with zero density contribute `V(0) P(state)`, which is `+inf`
/// when `V(0) = +inf`.
pub fn entropy(q: &MeasureQ, u: &UtilityFunction, y: f64) -> f64 {
    if y.is_nan() {
        return f64::NAN;
    }
    q.p.iter().zip(&q.density).map(|(&p, &z)| p * u.conjugate(mul0(y, z))).sum()
}

/// `v_Q(y)` through a [`ConjugateFunction`], which may be numeric.
pub fn generalized_entropy(q: &MeasureQ, v: &ConjugateFunction, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::Domain(format!("scaling y must be positive, got {y}")));
    }
    let mut total = 0.0;
    for (&p, &z) in q.p.iter().zip(&q.density) {
        total += p * v.eval(mul0(y, z))?;
    }
    Ok(total)
}

/// `E_P[Z ln Z]` with `Z = dQ/dP`.
pub fn kl_divergence(q: &MeasureQ) -> f64 {
    q.p.iter().zip(&q.density).map(|(&p, &z)| if z > 0.0 { p * z * z.ln() } else { 0.0 }).sum()
}
