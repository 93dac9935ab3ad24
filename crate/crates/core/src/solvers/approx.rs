//! Bounded approximations `H^n = clamp(H, -n, n)` of a strategy and their
//! convergence in probability (wealth at every date) and in `L^1` (utility).

use serde::Serialize;

use crate::market::{wealth_process, PathSample, ScenarioTree, Strategy};
use crate::utility::UtilityFunction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproxRow {
    pub n: usize,
    /// `max_t P{|X^n_t - X_t| > eps}`.
    pub prob_gap: f64,
    /// `E|U(X^n_T) - U(X_T)|`.
    pub utility_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    pub rows: Vec<ApproxRow>,
    /// Smallest `n` from which both metrics vanish identically.
    pub zero_from: Option<usize>,
    /// Number of steps where a metric increased.
    pub non_monotone_steps: usize,
}

fn abs_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

fn finish(rows: Vec<ApproxRow>) -> ApproxReport {
    let zero_from = rows
        .iter()
        .rposition(|r| r.prob_gap != 0.0 || r.utility_gap != 0.0)
        .map_or(rows.first().map(|r| r.n), |i| rows.get(i + 1).map(|r| r.n));
    let non_monotone_steps = rows
        .windows(2)
        .map(|w| usize::from(w[1].prob_gap > w[0].prob_gap) + usize::from(w[1].utility_gap > w[0].utility_gap))
        .sum();
    ApproxReport { rows, zero_from, non_monotone_steps }
}

/// Clamp sequence on a scenario tree for `n = 1..=n_max`.
pub fn approx_sequence(
    tree: &ScenarioTree,
    h: &Strategy,
    u: &UtilityFunction,
    x: f64,
    n_max: usize,
    eps: f64,
) -> ApproxReport {
    let full = wealth_process(tree, h, x);
    let leaves = tree.leaf_nodes();
    let rows = (1..=n_max)
        .map(|n| {
            let clamped = wealth_process(tree, &h.clamp(n as f64), x);
            let mut by_time = vec![0.0; tree.horizon() + 1];
            for (i, node) in tree.nodes().iter().enumerate() {
                if abs_diff(clamped.at(i), full.at(i)) > eps {
                    by_time[node.t] += node.prob;
                }
            }
            let utility_gap = leaves
                .iter()
                .map(|&l| tree.node(l).prob * abs_diff(u.value(clamped.at(l)), u.value(full.at(l))))
                .sum();
            ApproxRow { n, prob_gap: by_time.iter().copied().fold(0.0, f64::max), utility_gap }
        })
        .collect();
    finish(rows)
}

/// Clamp sequence on a path sample. `strategy(i, t)` is the position held
/// over step `t` (from date `t - 1` to `t`) on path `i` and may only look at
/// prices up to date `t - 1`.
pub fn approx_sequence_sample<F>(
    sample: &PathSample,
    strategy: F,
    u: &UtilityFunction,
    x: f64,
    n_max: usize,
    eps: f64,
) -> ApproxReport
where
    F: Fn(usize, usize) -> Vec<f64>,
{
    let d = sample.assets();
    let steps = sample.times() - 1;
    let positions: Vec<Vec<Vec<f64>>> =
        (0..sample.len()).map(|i| (1..=steps).map(|t| strategy(i, t)).collect()).collect();
    let wealth = |i: usize, cap: f64| -> Vec<f64> {
        let mut w = vec![x; steps + 1];
        for t in 1..=steps {
            let (prev, cur) = (sample.price(i, t - 1), sample.price(i, t));
            let gain: f64 = (0..d).map(|a| positions[i][t - 1][a].clamp(-cap, cap) * (cur[a] - prev[a])).sum();
            w[t] = w[t - 1] + gain;
        }
        w
    };
    let full: Vec<Vec<f64>> = (0..sample.len()).map(|i| wealth(i, f64::INFINITY)).collect();
    let rows = (1..=n_max)
        .map(|n| {
            let mut by_time = vec![0.0; steps + 1];
            let mut utility_gap = 0.0;
            for (i, (&wt, f)) in sample.weights().iter().zip(&full).enumerate() {
                let c = wealth(i, n as f64);
                for t in 0..=steps {
                    if abs_diff(c[t], f[t]) > eps {
                        by_time[t] += wt;
                    }
                }
                utility_gap += wt * abs_diff(u.value(c[steps]), u.value(f[steps]));
            }
            ApproxRow { n, prob_gap: by_time.iter().copied().fold(0.0, f64::max), utility_gap }
        })
        .collect();
    finish(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_strategy_is_exact_from_the_start() {
        let t = ScenarioTree::binomial(1.0, 2.0, 0.5, 0.5, 2).unwrap();
        let h = Strategy::constant(&t, &[0.47]);
        let r = approx_sequence(&t, &h, &"exp".parse().unwrap(), 0.0, 5, 1e-12);
        assert_eq!(r.zero_from, Some(1));
        assert!(r.rows.iter().all(|row| row.prob_gap == 0.0 && row.utility_gap == 0.0));
    }

    #[test]
    fn threshold_scales_with_the_strategy() {
        let t = ScenarioTree::binomial(1.0, 2.0, 0.5, 0.5, 2).unwrap();
        let h = Strategy::from_flat(&t, &[0.3, -0.47, 0.2]);
        let u = "exp".parse().unwrap();
        let r1 = approx_sequence(&t, &h.scaled(10.0), &u, 0.0, 20, 1e-12);
        assert_eq!(r1.zero_from, Some(5));
        let r2 = approx_sequence(&t, &h.scaled(100.0), &u, 0.0, 60, 1e-12);
        assert_eq!(r2.zero_from, Some(47));
        assert_eq!(r1.non_monotone_steps, 0);
    }

    #[test]
    fn sample_version_agrees_with_bounded_positions() {
        let s = PathSample::new(1, 3, vec![1.0, 1.0], vec![1.0, 2.0, 1.5, 1.0, 0.5, 3.0]).unwrap();
        let r = approx_sequence_sample(&s, |_, _| vec![0.5], &"trunclin:bliss=1".parse().unwrap(), 0.0, 3, 1e-12);
        assert_eq!(r.zero_from, Some(1));
        let r = approx_sequence_sample(&s, |i, t| vec![s.price(i, t - 1)[0] * 4.0], &"quad".parse().unwrap(), 0.0, 8, 1e-12);
        assert_eq!(r.zero_from, Some(8));
    }
}
