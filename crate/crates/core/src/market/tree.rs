//! Scenario trees, strategies and wealth processes.

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One node as it appears in a market file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u64,
    pub parent: Option<u64>,
    pub t: usize,
    pub p_cond: f64,
    pub prices: Vec<f64>,
}

/// On-disk market description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub assets: usize,
    pub horizon: usize,
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Identifier from the market file.
    pub id: u64,
    pub parent: Option<usize>,
    pub t: usize,
    pub p_cond: f64,
    /// Unconditional probability of reaching the node.
    pub prob: f64,
    pub prices: Vec<f64>,
    pub children: Vec<usize>,
    /// Terminal nodes below this one, as a range of leaf indices.
    pub leaves: Range<usize>,
}

/// A finite filtration: rooted tree with prices and conditional probabilities.
///
/// Nodes are stored in depth-first preorder, so the leaves below any node
/// form a contiguous range and every parent precedes its children.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    assets: usize,
    horizon: usize,
    nodes: Vec<Node>,
    leaf_nodes: Vec<usize>,
    decision_nodes: Vec<usize>,
}

const PROB_TOL: f64 = 1e-9;

impl ScenarioTree {
    pub fn from_spec(spec: &MarketSpec) -> Result<Self> {
        let bad = |msg: String| Error::InvalidMarket(msg);
        if spec.assets == 0 {
            return Err(bad("`assets` must be at least 1".into()));
        }
        if spec.nodes.is_empty() {
            return Err(bad("no nodes".into()));
        }
        let mut index: HashMap<u64, usize> = HashMap::new();
        for (i, n) in spec.nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(bad(format!("node {}: duplicate id", n.id)));
            }
        }
        let mut roots = Vec::new();
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); spec.nodes.len()];
        for (i, n) in spec.nodes.iter().enumerate() {
            if n.prices.len() != spec.assets {
                return Err(bad(format!("node {}: expected {} prices, found {}", n.id, spec.assets, n.prices.len())));
            }
            if let Some(j) = n.prices.iter().position(|p| !p.is_finite()) {
                return Err(bad(format!("node {}: price {} is not finite", n.id, j)));
            }
            match n.parent {
                None => roots.push(i),
                Some(pid) => {
                    let &p = index.get(&pid).ok_or_else(|| bad(format!("node {}: unknown parent {}", n.id, pid)))?;
                    if spec.nodes[p].t + 1 != n.t {
                        return Err(bad(format!(
                            "node {}: time {} does not follow parent {} at time {}",
                            n.id, n.t, pid, spec.nodes[p].t
                        )));
                    }
                    kids[p].push(i);
                }
            }
            if n.parent.is_some() && !(n.p_cond > 0.0 && n.p_cond <= 1.0 + PROB_TOL) {
                return Err(bad(format!("node {}: conditional probability {} must lie in (0, 1]", n.id, n.p_cond)));
            }
        }
        if roots.len() != 1 {
            return Err(bad(format!("expected exactly one root, found {}", roots.len())));
        }
        let root = roots[0];
        if spec.nodes[root].t != 0 {
            return Err(bad(format!("node {}: root must be at time 0", spec.nodes[root].id)));
        }
        for (i, ks) in kids.iter().enumerate() {
            let n = &spec.nodes[i];
            if ks.is_empty() {
                if n.t != spec.horizon {
                    return Err(bad(format!("node {}: terminal node at time {} but horizon is {}", n.id, n.t, spec.horizon)));
                }
            } else {
                if n.t >= spec.horizon {
                    return Err(bad(format!("node {}: has children beyond the horizon {}", n.id, spec.horizon)));
                }
                let s: f64 = ks.iter().map(|&k| spec.nodes[k].p_cond).sum();
                if (s - 1.0).abs() > PROB_TOL {
                    return Err(bad(format!("node {}: children's conditional probabilities sum to {s}, expected 1", n.id)));
                }
            }
        }
        // preorder traversal; unreachable nodes would indicate a cycle
        let mut order = Vec::with_capacity(spec.nodes.len());
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            order.push(i);
            for &k in kids[i].iter().rev() {
                stack.push(k);
            }
        }
        if order.len() != spec.nodes.len() {
            return Err(bad("some nodes are not reachable from the root".into()));
        }
        let mut new_index = vec![0usize; spec.nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let mut nodes: Vec<Node> = order
            .iter()
            .map(|&old| {
                let n = &spec.nodes[old];
                Node {
                    id: n.id,
                    parent: n.parent.map(|pid| new_index[index[&pid]]),
                    t: n.t,
                    p_cond: if n.parent.is_none() { 1.0 } else { n.p_cond },
                    prob: 0.0,
                    prices: n.prices.clone(),
                    children: kids[old].iter().map(|&k| new_index[k]).collect(),
                    leaves: 0..0,
                }
            })
            .collect();
        let mut leaf_nodes = Vec::new();
        let mut decision_nodes = Vec::new();
        for i in 0..nodes.len() {
            nodes[i].prob = match nodes[i].parent {
                None => 1.0,
                Some(p) => nodes[p].prob * nodes[i].p_cond,
            };
            if nodes[i].children.is_empty() {
                leaf_nodes.push(i);
            } else {
                decision_nodes.push(i);
            }
        }
        // leaf ranges, bottom-up (children follow parents in preorder)
        let mut leaf_pos = vec![usize::MAX; nodes.len()];
        for (k, &i) in leaf_nodes.iter().enumerate() {
            leaf_pos[i] = k;
        }
        for i in (0..nodes.len()).rev() {
            nodes[i].leaves = if nodes[i].children.is_empty() {
                leaf_pos[i]..leaf_pos[i] + 1
            } else {
                let first = nodes[i].children[0];
                let last = *nodes[i].children.last().unwrap();
                nodes[first].leaves.start..nodes[last].leaves.end
            };
        }
        Ok(ScenarioTree { assets: spec.assets, horizon: spec.horizon, nodes, leaf_nodes, decision_nodes })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MarketSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidMarket(format!("line {} column {}: {e}", e.line(), e.column())))?;
        Self::from_spec(&spec)
    }

    pub fn to_spec(&self) -> MarketSpec {
        MarketSpec {
            assets: self.assets,
            horizon: self.horizon,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSpec {
                    id: n.id,
                    parent: n.parent.map(|p| self.nodes[p].id),
                    t: n.t,
                    p_cond: n.p_cond,
                    prices: n.prices.clone(),
                })
                .collect(),
        }
    }

    /// One-period market: `outcomes` lists `(probability, prices)` per state.
    pub fn one_period(s0: &[f64], outcomes: &[(f64, Vec<f64>)]) -> Result<Self> {
        let mut nodes = vec![NodeSpec { id: 0, parent: None, t: 0, p_cond: 1.0, prices: s0.to_vec() }];
        for (k, (p, s)) in outcomes.iter().enumerate() {
            nodes.push(NodeSpec { id: k as u64 + 1, parent: Some(0), t: 1, p_cond: *p, prices: s.clone() });
        }
        Self::from_spec(&MarketSpec { assets: s0.len(), horizon: 1, nodes })
    }

    /// Recombining-free multiplicative binomial tree with one asset.
    pub fn binomial(s0: f64, up: f64, down: f64, p_up: f64, periods: usize) -> Result<Self> {
        let mut nodes = vec![NodeSpec { id: 0, parent: None, t: 0, p_cond: 1.0, prices: vec![s0] }];
        let mut frontier = vec![0usize];
        for t in 1..=periods {
            let mut next = Vec::new();
            for &i in &frontier {
                let s = nodes[i].prices[0];
                for (p, f) in [(p_up, up), (1.0 - p_up, down)] {
                    let id = nodes.len() as u64;
                    nodes.push(NodeSpec { id, parent: Some(nodes[i].id), t, p_cond: p, prices: vec![s * f] });
                    next.push(nodes.len() - 1);
                }
            }
            frontier = next;
        }
        Self::from_spec(&MarketSpec { assets: 1, horizon: periods, nodes })
    }

    /// Random tree whose price increments admit an equivalent martingale measure.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomTreeConfig) -> Self {
        let horizon = rng.gen_range(1..=cfg.max_periods);
        let assets = rng.gen_range(1..=cfg.max_assets);
        let (lo, hi) = cfg.price_range;
        let s0: Vec<f64> = (0..assets).map(|_| rng.gen_range(lo + 0.1 * (hi - lo)..=lo + 0.5 * (hi - lo))).collect();
        let mut nodes = vec![NodeSpec { id: 0, parent: None, t: 0, p_cond: 1.0, prices: s0 }];
        let mut frontier = vec![0usize];
        for t in 1..=horizon {
            let mut next = Vec::new();
            for &i in &frontier {
                let parent = nodes[i].prices.clone();
                let b = rng.gen_range(cfg.min_branches..=cfg.max_branches);
                let raw: Vec<f64> = (0..b).map(|_| rng.gen_range(0.2..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
                let children = random_children(rng, &parent, b, lo, hi);
                for (k, prices) in children.into_iter().enumerate() {
                    let id = nodes.len() as u64;
                    nodes.push(NodeSpec { id, parent: Some(nodes[i].id), t, p_cond: probs[k], prices });
                    next.push(nodes.len() - 1);
                }
            }
            frontier = next;
        }
        Self::from_spec(&MarketSpec { assets, horizon, nodes }).expect("generator produces valid trees")
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_terminal(&self, i: usize) -> bool {
        self.nodes[i].children.is_empty()
    }

    /// Terminal nodes in leaf order.
    pub fn leaf_nodes(&self) -> &[usize] {
        &self.leaf_nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_nodes.len()
    }

    /// Non-terminal nodes in preorder.
    pub fn decision_nodes(&self) -> &[usize] {
        &self.decision_nodes
    }

    /// Reference probabilities of the terminal nodes.
    pub fn leaf_probs(&self) -> Vec<f64> {
        self.leaf_nodes.iter().map(|&i| self.nodes[i].prob).collect()
    }

    /// `S(child) - S(parent)`.
    pub fn increment(&self, child: usize) -> Vec<f64> {
        let p = self.nodes[child].parent.expect("increment of the root");
        self.nodes[child].prices.iter().zip(&self.nodes[p].prices).map(|(a, b)| a - b).collect()
    }

    /// Node indices from the root to `node`, inclusive.
    pub fn path_to(&self, node: usize) -> Vec<usize> {
        let mut path = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Child of `ancestor` on the way to `leaf_node`.
    pub fn child_towards(&self, ancestor: usize, node: usize) -> Option<usize> {
        let range = &self.nodes[node].leaves;
        self.nodes[ancestor]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].leaves.start <= range.start && range.end <= self.nodes[c].leaves.end)
    }

    /// Number of strategy coordinates (decision nodes times assets).
    pub fn strategy_dim(&self) -> usize {
        self.decision_nodes.len() * self.assets
    }

    /// Leaves-by-coordinates matrix `A` with `(A h)_w = (H . S)_T(w)` for flat `h`.
    pub fn gains_matrix(&self) -> Vec<Vec<f64>> {
        let d = self.assets;
        let mut a = vec![vec![0.0; self.strategy_dim()]; self.leaf_count()];
        for (k, &n) in self.decision_nodes.iter().enumerate() {
            for &c in &self.nodes[n].children {
                let inc = self.increment(c);
                for leaf in self.nodes[c].leaves.clone() {
                    for i in 0..d {
                        a[leaf][k * d + i] = inc[i];
                    }
                }
            }
        }
        a
    }

    /// Sum of terminal values over the leaves below each node (node masses
    /// when `values` are leaf probabilities).
    pub fn aggregate(&self, leaf_values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            out[i] = if self.nodes[i].children.is_empty() {
                leaf_values[self.nodes[i].leaves.start]
            } else {
                self.nodes[i].children.iter().map(|&c| out[c]).sum()
            };
        }
        out
    }

    /// `S*_t = sum_i max_{s<=t} |S^i_s|` at every node.
    pub fn maximal_process(&self) -> Vec<f64> {
        let mut run: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        let mut out = vec![0.0; self.nodes.len()];
        for i in 0..self.nodes.len() {
            let cur: Vec<f64> = self.nodes[i].prices.iter().map(|p| p.abs()).collect();
            run[i] = match self.nodes[i].parent {
                None => cur,
                Some(p) => run[p].iter().zip(&cur).map(|(a, b)| a.max(*b)).collect(),
            };
            out[i] = run[i].iter().sum();
        }
        out
    }
}

/// Parameters of [`ScenarioTree::random`].
#[derive(Debug, Clone, Copy)]
pub struct RandomTreeConfig {
    pub max_periods: usize,
    pub min_branches: usize,
    pub max_branches: usize,
    pub max_assets: usize,
    pub price_range: (f64, f64),
}

impl Default for RandomTreeConfig {
    fn default() -> Self {
        RandomTreeConfig { max_periods: 3, min_branches: 2, max_branches: 3, max_assets: 2, price_range: (0.2, 5.0) }
    }
}

/// Child prices whose positively weighted mean is the parent price.
fn random_children<R: Rng + ?Sized>(rng: &mut R, parent: &[f64], b: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let d = parent.len();
    let mut spread = 1.0;
    loop {
        let w: Vec<f64> = (0..b).map(|_| rng.gen_range(0.2..1.0)).collect();
        let wsum: f64 = w.iter().sum();
        let mut kids = vec![vec![0.0; d]; b];
        for i in 0..d {
            let room = (parent[i] - lo).min(hi - parent[i]);
            let u: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0) * spread * room).collect();
            let mean: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / wsum;
            for k in 0..b {
                kids[k][i] = parent[i] + u[k] - mean;
            }
        }
        let separated = (0..b).all(|k| (k + 1..b).all(|j| (0..d).any(|i| (kids[k][i] - kids[j][i]).abs() > 1e-3)));
        if separated && kids.iter().flatten().all(|&p| p >= lo && p <= hi) {
            return kids;
        }
        spread *= 0.9;
    }
}

/// Trading positions `H` held over the period following each decision node.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    /// Indexed by node; empty for terminal nodes.
    positions: Vec<Vec<f64>>,
}

impl Strategy {
    pub fn zeros(tree: &ScenarioTree) -> Self {
        Self::constant(tree, &vec![0.0; tree.assets()])
    }

    pub fn constant(tree: &ScenarioTree, h: &[f64]) -> Self {
        let positions = (0..tree.len()).map(|i| if tree.is_terminal(i) { Vec::new() } else { h.to_vec() }).collect();
        Strategy { positions }
    }

    /// From coordinates laid out as decision node (preorder) by asset.
    pub fn from_flat(tree: &ScenarioTree, h: &[f64]) -> Self {
        let d = tree.assets();
        let mut positions = vec![Vec::new(); tree.len()];
        for (k, &n) in tree.decision_nodes().iter().enumerate() {
            positions[n] = h[k * d..(k + 1) * d].to_vec();
        }
        Strategy { positions }
    }

    pub fn to_flat(&self, tree: &ScenarioTree) -> Vec<f64> {
        tree.decision_nodes().iter().flat_map(|&n| self.positions[n].iter().copied()).collect()
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.positions[node]
    }

    pub fn set(&mut self, node: usize, h: Vec<f64>) {
        self.positions[node] = h;
    }

    pub fn max_abs(&self) -> f64 {
        self.positions.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Componentwise clamp to `[-n, n]`.
    pub fn clamp(&self, n: f64) -> Self {
        Strategy { positions: self.positions.iter().map(|h| h.iter().map(|v| v.clamp(-n, n)).collect()).collect() }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Strategy { positions: self.positions.iter().map(|h| h.iter().map(|v| c * v).collect()).collect() }
    }
}

/// `X = x + H . S` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthProcess {
    pub values: Vec<f64>,
}

impl WealthProcess {
    pub fn at(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Terminal wealth in leaf order.
    pub fn terminal(&self, tree: &ScenarioTree) -> Vec<f64> {
        tree.leaf_nodes().iter().map(|&i| self.values[i]).collect()
    }
}

pub fn wealth_process(tree: &ScenarioTree, h: &Strategy, x: f64) -> WealthProcess {
    let mut values = vec![0.0; tree.len()];
    for i in 0..tree.len() {
        values[i] = match tree.node(i).parent {
            None => x,
            Some(p) => {
                let inc = tree.increment(i);
                values[p] + h.at(p).iter().zip(&inc).map(|(a, b)| a * b).sum::<f64>()
            }
        };
    }
    WealthProcess { values }
}
