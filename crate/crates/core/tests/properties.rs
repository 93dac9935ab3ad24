//! Randomised properties over utilities, measures, norms and solvers.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use utilmax_core::market::{
    entropy, is_martingale_measure, martingale_polytope, sigma_localize, wealth_process, CompoundPoisson,
    LocalizeOptions, MartingalePolytope, PolytopeOptions, PredictableSet, RandomTreeConfig, ScenarioTree, Strategy as Holdings,
};
use utilmax_core::orlicz::{luxemburg_norm, WeightedSample, YoungFunction};
use utilmax_core::solvers::{solve_dual, solve_primal, SolverOptions};
use utilmax_core::utility::UtilityFunction;
use utilmax_core::verify::{check_entropy_mixture, quantifier_measures};

const FAMILIES: [&str; 5] = ["exp:gamma=1.5", "log:shift=1", "power:gamma=3,shift=2", "quad:bliss=2", "trunclin:bliss=1"];

fn tree(seed: u64) -> (ScenarioTree, MartingalePolytope) {
    let cfg = RandomTreeConfig { max_periods: 2, ..RandomTreeConfig::default() };
    let t = ScenarioTree::random(&mut ChaCha8Rng::seed_from_u64(seed), &cfg);
    let poly = martingale_polytope(&t, &PolytopeOptions::default()).unwrap();
    (t, poly)
}

fn young() -> impl Strategy<Value = YoungFunction> {
    prop_oneof![
        (1.0..4.0f64).prop_map(|p| YoungFunction::power(p).unwrap()),
        Just(YoungFunction::CoshMinusOne),
        Just(YoungFunction::induce(&"exp".parse().unwrap())),
    ]
}

fn sample(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fenchel_inequality_and_equality(k in 0usize..5, x in -0.45..3.0f64, ly in -3.0..2.0f64) {
        let u: UtilityFunction = FAMILIES[k].parse().unwrap();
        let y = ly.exp();
        prop_assert!(u.conjugate(y) >= u.value(x) - x * y - 1e-12 * (1.0 + u.value(x).abs()));
        if u.is_smooth() {
            let g = u.derivative(x);
            if g > 0.0 {
                // the supremum defining V(g) is attained at x
                prop_assert!(u.fenchel_residual(x, g) <= 1e-10 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn biconjugate_recovers_utility(k in 0usize..4, x in -0.4..1.5f64) {
        let u: UtilityFunction = FAMILIES[k].parse().unwrap();
        // U(x) = inf_y V(y) + x y, scanned on a log grid around U'(x)
        let y0 = u.derivative(x);
        prop_assume!(y0 > 0.0);
        let best = (-400..=400)
            .map(|i| y0 * (i as f64 * 1e-3).exp())
            .map(|y| u.conjugate(y) + x * y)
            .fold(f64::INFINITY, f64::min);
        prop_assert!(best >= u.value(x) - 1e-12);
        prop_assert!(best - u.value(x) <= 1e-9 * (1.0 + u.value(x).abs()));
    }

    #[test]
    fn martingale_routes_agree(seed in any::<u64>(), mix_seed in any::<u64>()) {
        let (t, poly) = tree(seed);
        for q in quantifier_measures(&poly, mix_seed, 4) {
            let c = is_martingale_measure(&t, &q, 1e-9);
            prop_assert!(c.is_martingale && c.routes_agree, "{:?}", c.max_residual);
        }
    }

    #[test]
    fn entropy_mixture_on_vertices(seed in any::<u64>(), k in 0usize..5, ly1 in -2.0..1.0f64, ly2 in -2.0..1.0f64, l in 0.01..0.99f64) {
        let (_, poly) = tree(seed);
        let v = poly.vertices().unwrap();
        let u: UtilityFunction = FAMILIES[k].parse().unwrap();
        let (q1, q2) = (&v[0], &v[v.len() - 1]);
        let r = check_entropy_mixture(&u, q1, q2, ly1.exp(), ly2.exp(), l, 1e-10);
        prop_assert!(r.pass, "{:?}", r.notes);
    }

    #[test]
    fn vertices_bound_every_mixture(seed in any::<u64>(), f in sample(27)) {
        let (_, poly) = tree(seed);
        let verts = poly.vertices().unwrap();
        let f = &f[..poly.leaf_probs().len().min(27)];
        prop_assume!(f.len() == poly.leaf_probs().len());
        let vmax = verts.iter().map(|q| q.expectation(f)).fold(f64::NEG_INFINITY, f64::max);
        let vmin = verts.iter().map(|q| q.expectation(f)).fold(f64::INFINITY, f64::min);
        for q in quantifier_measures(&poly, seed ^ 1, 8) {
            let e = q.expectation(f);
            prop_assert!(e <= vmax + 1e-12 && e >= vmin - 1e-12);
        }
    }

    #[test]
    fn weak_duality(seed in any::<u64>(), k in prop::sample::select(vec![0usize, 3, 4]), x in -0.5..0.5f64, h in sample(40), ly in -2.0..1.0f64) {
        let (t, poly) = tree(seed);
        let u: UtilityFunction = FAMILIES[k].parse().unwrap();
        let h: Vec<f64> = h.iter().cycle().take(t.strategy_dim()).map(|v| v * 0.3).collect();
        let w = wealth_process(&t, &Holdings::from_flat(&t, &h), x).terminal(&t);
        let primal: f64 = t.leaf_probs().iter().zip(&w).map(|(p, f)| p * u.value(*f)).sum();
        let y = ly.exp();
        for q in quantifier_measures(&poly, seed, 4) {
            let bound = x * y + entropy(&q, &u, y);
            prop_assert!(primal <= bound + 1e-10 * (1.0 + bound.abs()), "{primal} > {bound}");
        }
    }

    #[test]
    fn luxemburg_homogeneity_and_triangle(psi in young(), a in sample(6), b in sample(6), s in -4.0..4.0f64) {
        prop_assume!(s.abs() > 1e-3);
        let na = luxemburg_norm(&psi, &WeightedSample::uniform(a.clone()).unwrap()).unwrap();
        let scaled = luxemburg_norm(&psi, &WeightedSample::uniform(a.iter().map(|v| s * v).collect()).unwrap()).unwrap();
        prop_assert!((scaled.value - s.abs() * na.value).abs() <= 1e-9 * (1.0 + scaled.value));
        prop_assert!(na.modular <= 1.0);
        let nb = luxemburg_norm(&psi, &WeightedSample::uniform(b.clone()).unwrap()).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let ns = luxemburg_norm(&psi, &WeightedSample::uniform(sum).unwrap()).unwrap();
        prop_assert!(ns.value <= (na.value + nb.value) * (1.0 + 1e-9) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn localization_bound(seed in any::<u64>(), eta in 0.6..3.0f64, level in 1.2..4.0f64) {
        let cp = CompoundPoisson { s0: 1.0, intensity: 1.0, p_up: 0.5, eta_up: eta, eta_down: eta };
        let s = cp.sample(&mut ChaCha8Rng::seed_from_u64(seed), 500, 3).unwrap();
        let sets = [PredictableSet::RunningMaxAtMost(level), PredictableSet::All];
        let l = sigma_localize(&s, &YoungFunction::CoshMinusOne, &sets, &LocalizeOptions::default()).unwrap();
        prop_assert!(l.holds);
        prop_assert!(l.phi_min > 0.0 && l.phi_max <= 1.0);
        prop_assert!(l.localized_moment <= l.series * (1.0 + 1e-12) && l.series <= l.h && l.h <= l.limit);
    }

    #[test]
    fn exponential_scale_covariance(seed in any::<u64>(), c in 0.3..4.0f64) {
        // gamma -> c gamma rescales the optimal gains by 1/c at x = 0
        // and leaves the dual measure unchanged
        let (t, poly) = tree(seed);
        let opts = SolverOptions::default();
        let u1 = UtilityFunction::exponential(1.0).unwrap();
        let uc = UtilityFunction::exponential(c).unwrap();
        let (p1, pc) = (solve_primal(&t, &poly, &u1, 0.0, &opts).unwrap(), solve_primal(&t, &poly, &uc, 0.0, &opts).unwrap());
        for (a, b) in p1.terminal_wealth.iter().zip(&pc.terminal_wealth) {
            prop_assert!((a / c - b).abs() <= 1e-7 * (1.0 + a.abs()), "{a} / {c} vs {b}");
        }
        let (d1, dc) = (solve_dual(&poly, &u1, 0.0, &opts).unwrap(), solve_dual(&poly, &uc, 0.0, &opts).unwrap());
        for (a, b) in d1.q_hat.probs().iter().zip(&dc.q_hat.probs()) {
            prop_assert!((a - b).abs() <= 1e-7);
        }
    }
}
