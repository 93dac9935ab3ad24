//! Utility maximisation against a single pricing measure.
//!
//! `u_Q(x) = sup { E_P[U(X)] : E_Q[X] <= x } = min_{y >= 0} { x y + v_Q(y) }`,
//! solved as a one-dimensional convex problem in `y`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{entropy, MeasureQ};
use crate::numeric::{golden_min, mul0};
use crate::utility::UtilityFunction;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompleteSolution {
    /// `u_Q(x)`.
    pub value: f64,
    pub y_hat: f64,
    /// Optimal claim per terminal node (`+inf` allowed on null states).
    pub wealth: Vec<f64>,
    /// `E_P[U(X)]`, which equals `value` at optimality.
    pub expected_utility: f64,
    /// `E_Q[X]`.
    pub budget: f64,
}

/// Solves the complete-market problem for the measure `q`.
pub fn solve_complete(q: &MeasureQ, u: &UtilityFunction, x: f64) -> Result<CompleteSolution> {
    if !(x > u.domain_inf()) || x.is_nan() {
        return Err(Error::Domain(format!("initial wealth {x} is not above the domain infimum {}", u.domain_inf())));
    }
    let z = q.density();
    let v0 = u.conjugate(0.0);
    if z.contains(&0.0) && v0 == f64::INFINITY {
        return Err(Error::NoFiniteEntropy("Q vanishes on a state while V(0) is infinite".into()));
    }
    let bliss = u.bliss();
    if bliss.is_finite() && x >= bliss {
        return Ok(finish(q, u, x, 0.0));
    }
    let f = |y: f64| mul0(x, y) + entropy(q, u, y);
    let y_hat = if let Some(p) = u.as_piecewise() {
        let smin = *p.slopes().last().unwrap();
        let smax = p.slopes()[0];
        let mut lo = 0.0_f64;
        let mut hi = f64::INFINITY;
        for &zz in z.iter().filter(|&&zz| zz > 0.0) {
            lo = lo.max(smin / zz);
            hi = hi.min(smax / zz);
        }
        if lo > hi || !hi.is_finite() {
            return Err(Error::NoFiniteEntropy("v_Q is infinite for every y > 0".into()));
        }
        // v_Q is piecewise linear with breakpoints at slope / density
        let mut cands = vec![lo, hi];
        for &zz in z.iter().filter(|&&zz| zz > 0.0) {
            for &s in p.slopes() {
                let y = s / zz;
                if y >= lo && y <= hi {
                    cands.push(y);
                }
            }
        }
        cands.sort_by(f64::total_cmp);
        let mut best = (f64::INFINITY, lo);
        for y in cands {
            let val = f(y);
            if val < best.0 {
                best = (val, y);
            }
        }
        best.1
    } else {
        smooth_minimiser(q, u, x, &f)?
    };
    Ok(finish(q, u, x, y_hat))
}

fn smooth_minimiser(q: &MeasureQ, u: &UtilityFunction, x: f64, f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let mut y = 1.0;
    let mut fy = f(y);
    let mut it = 0;
    while f(2.0 * y) < fy {
        y *= 2.0;
        fy = f(y);
        it += 1;
        if it > 2000 {
            return Err(Error::NonConvergence { what: "complete-market bracket".into(), iterations: it });
        }
    }
    let r = golden_min(f, 0.0, 2.0 * y, 1e-15, 400)?;
    let mut y = r.x;
    if !(y > 0.0) {
        return Ok(0.0);
    }
    // Newton polish on f'(y) = x + sum p z V'(y z)
    let (p, z) = (q.p(), q.density());
    let deriv = |y: f64| {
        let mut d1 = x;
        let mut d2 = 0.0;
        for (&pp, &zz) in p.iter().zip(z) {
            if zz != 0.0 {
                d1 += pp * zz * u.conjugate_derivative(y * zz);
                d2 += pp * zz * zz * u.conjugate_second_derivative(y * zz);
            }
        }
        (d1, d2)
    };
    for _ in 0..50 {
        let (d1, d2) = deriv(y);
        if !(d2 > 0.0) || !d1.is_finite() {
            break;
        }
        let mut step = d1 / d2;
        let mut next = y - step;
        while next <= 0.0 {
            step *= 0.5;
            next = y - step;
        }
        if f(next) > f(y) + 1e-15 * (1.0 + f(y).abs()) {
            break;
        }
        let done = (next - y).abs() <= 1e-16 * y;
        y = next;
        if done {
            break;
        }
    }
    Ok(y)
}

/// Builds the optimal claim for a given `y_hat`.
fn finish(q: &MeasureQ, u: &UtilityFunction, x: f64, y_hat: f64) -> CompleteSolution {
    let z = q.density();
    let probs = q.probs();
    let bliss = u.bliss();
    let mut lo = vec![0.0; z.len()];
    let mut hi = vec![0.0; z.len()];
    for (w, &zz) in z.iter().enumerate() {
        let (a, b) = if y_hat == 0.0 && bliss.is_finite() {
            (bliss, bliss)
        } else {
            u.argmax(mul0(y_hat, zz)).unwrap_or((f64::NAN, f64::NAN))
        };
        // null states take the satiation level when it exists
        let (a, b) = if zz == 0.0 && bliss.is_finite() { (bliss, bliss) } else { (a, b) };
        lo[w] = a;
        hi[w] = b;
    }
    let mut wealth: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(&a, &b)| if a.is_finite() { a } else if b.is_finite() { b } else { 0.0 })
        .collect();
    if y_hat > 0.0 {
        // complementary slackness: spend exactly x under Q
        let delta = x - q.expectation(&wealth);
        if delta != 0.0 {
            let up = delta > 0.0;
            let room: Vec<f64> = (0..z.len())
                .map(|w| if probs[w] <= 0.0 { 0.0 } else if up { hi[w] - wealth[w] } else { wealth[w] - lo[w] })
                .collect();
            let open: Vec<usize> = (0..z.len()).filter(|&w| room[w] == f64::INFINITY).collect();
            if !open.is_empty() {
                let mass: f64 = open.iter().map(|&w| probs[w]).sum();
                for &w in &open {
                    wealth[w] += delta / mass;
                }
            } else {
                let cap: f64 = (0..z.len()).map(|w| probs[w] * room[w]).sum();
                if cap > 0.0 {
                    let t = (delta.abs() / cap).min(1.0);
                    for w in 0..z.len() {
                        wealth[w] += if up { t * room[w] } else { -t * room[w] };
                    }
                }
            }
        }
    }
    let expected_utility = q.p().iter().zip(&wealth).map(|(&p, &v)| p * u.value(v)).sum();
    let value = if y_hat == 0.0 { u.conjugate(0.0) } else { x * y_hat + entropy(q, u, y_hat) };
    CompleteSolution { value, y_hat, budget: q.expectation(&wealth), expected_utility, wealth }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn q13() -> MeasureQ {
        MeasureQ::from_probs(&[0.5, 0.5], &[1.0 / 3.0, 2.0 / 3.0]).unwrap()
    }

    #[test]
    fn exponential_two_state() {
        let u = UtilityFunction::exponential(1.0).unwrap();
        let s = solve_complete(&q13(), &u, 0.0).unwrap();
        let kl = (1.0 / 3.0) * (2.0_f64 / 3.0).ln() + (2.0 / 3.0) * (4.0_f64 / 3.0).ln();
        assert_abs_diff_eq!(s.y_hat, (-kl).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.value, 1.0 - (-kl).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(s.value, 0.055059, epsilon = 5e-7);
        assert_abs_diff_eq!(s.expected_utility, s.value, epsilon = 1e-12);
        assert_abs_diff_eq!(s.budget, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_measure_gives_cash() {
        let p = [0.2, 0.3, 0.5];
        for spec in ["exp:gamma=2", "log:shift=1", "power:gamma=3,shift=2", "quad", "trunclin:bliss=1", "linear"] {
            let u: UtilityFunction = spec.parse().unwrap();
            for x in [-0.5, 0.0, 0.4] {
                let s = solve_complete(&MeasureQ::reference(&p), &u, x).unwrap();
                assert_abs_diff_eq!(s.value, u.value(x), epsilon = 1e-10);
                for &w in &s.wealth {
                    assert_abs_diff_eq!(w, x, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn truncated_linear_two_state() {
        let u = UtilityFunction::truncated_linear(1.0).unwrap();
        let s = solve_complete(&q13(), &u, 0.0).unwrap();
        assert_abs_diff_eq!(s.value, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.y_hat, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(s.wealth[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.wealth[1], -0.5, epsilon = 1e-15);
        // closed form (3x + 1)/4 below the satiation point
        for x in [-2.0, -0.5, 0.5, 0.9] {
            let s = solve_complete(&q13(), &u, x).unwrap();
            assert_abs_diff_eq!(s.value, (3.0 * x + 1.0) / 4.0, epsilon = 1e-14);
        }
        let s = solve_complete(&q13(), &u, 1.0).unwrap();
        assert_eq!(s.value, 1.0);
    }

    #[test]
    fn domain_and_entropy_errors() {
        let log = UtilityFunction::shifted_log(1.0).unwrap();
        assert!(matches!(solve_complete(&q13(), &log, -1.0), Err(Error::Domain(_))));
        let null = MeasureQ::from_probs(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert!(matches!(solve_complete(&null, &log, 0.0), Err(Error::NoFiniteEntropy(_))));
        assert!(matches!(solve_complete(&q13(), &UtilityFunction::linear(), 0.0), Err(Error::NoFiniteEntropy(_))));
    }

    #[test]
    fn null_state_gets_satiation_level() {
        let u = UtilityFunction::truncated_linear(1.0).unwrap();
        let q = MeasureQ::from_probs(&[0.25, 0.25, 0.5], &[0.0, 0.5, 0.5]).unwrap();
        let s = solve_complete(&q, &u, 0.0).unwrap();
        assert_eq!(s.wealth[0], 1.0);
        assert_abs_diff_eq!(s.budget, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.expected_utility, s.value, epsilon = 1e-14);
    }

    #[test]
    fn log_matches_closed_form() {
        // log utility: y_hat = 1/(x+1) and value = ln(1+x) - E_P[ln Z]
        let u = UtilityFunction::shifted_log(1.0).unwrap();
        let q = q13();
        for x in [0.0, 1.0, 7.0] {
            let s = solve_complete(&q, &u, x).unwrap();
            let elnz: f64 = q.p().iter().zip(q.density()).map(|(p, z)| p * z.ln()).sum();
            assert_abs_diff_eq!(s.y_hat, 1.0 / (1.0 + x), epsilon = 1e-12);
            assert_abs_diff_eq!(s.value, (1.0 + x).ln() - elnz, epsilon = 1e-12);
        }
    }
}
