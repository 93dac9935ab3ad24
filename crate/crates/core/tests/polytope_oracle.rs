//! Vertex enumeration against the closed-form vertex set of a one-period,
//! single-asset market: point masses on outcomes equal to the initial price,
//! and two-point measures straddling it.

use proptest::prelude::*;
use utilmax_core::market::{martingale_polytope, PolytopeOptions, ScenarioTree};

fn oracle(s0: f64, s: &[f64]) -> Vec<Vec<f64>> {
    let n = s.len();
    let mut out = Vec::new();
    for i in 0..n {
        if s[i] == s0 {
            let mut q = vec![0.0; n];
            q[i] = 1.0;
            out.push(q);
        }
        for j in 0..n {
            if s[i] > s0 && s[j] < s0 {
                let mut q = vec![0.0; n];
                q[i] = (s0 - s[j]) / (s[i] - s[j]);
                q[j] = 1.0 - q[i];
                out.push(q);
            }
        }
    }
    out
}

fn sorted(mut v: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn one_period_vertices(prices in prop::collection::vec(prop::sample::select(vec![0.25, 0.5, 0.8, 1.0, 1.25, 1.5, 2.0, 3.0]), 2..7)) {
        let outcomes: Vec<(f64, Vec<f64>)> = prices.iter().map(|&s| (1.0 / prices.len() as f64, vec![s])).collect();
        // distinct outcomes only: repeated prices make the polytope degenerate
        let mut uniq = prices.clone();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        prop_assume!(uniq.len() == prices.len());
        let tree = ScenarioTree::one_period(&[1.0], &outcomes).unwrap();
        let poly = martingale_polytope(&tree, &PolytopeOptions::default()).unwrap();
        let expected = sorted(oracle(1.0, &prices));
        let got = sorted(poly.vertices().unwrap().iter().map(|q| q.probs()).collect());
        prop_assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            for (a, b) in g.iter().zip(e) {
                prop_assert!((a - b).abs() < 1e-12, "{:?} vs {:?}", g, e);
            }
        }
        prop_assert_eq!(poly.is_empty(), expected.is_empty());
    }
}

#[test]
fn two_period_binomial_has_one_vertex() {
    let t = ScenarioTree::binomial(1.0, 2.0, 0.5, 0.3, 2).unwrap();
    let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
    let v = poly.vertices().unwrap();
    assert_eq!(v.len(), 1);
    // risk-neutral up probability 1/3 at every node
    let q = v[0].probs();
    let oracle = [1.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 4.0 / 9.0];
    for (a, b) in q.iter().zip(oracle) {
        assert!((a - b).abs() < 1e-12, "{q:?}");
    }
}
