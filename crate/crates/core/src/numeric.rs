//! Small numerical helpers shared across modules: one-dimensional searches,
//! tail integration with divergence detection, and output rounding.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Result of a golden-section search.
#[derive(Debug, Clone, Copy)]
pub struct LineOptimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
///
/// Non-finite values are tolerated (`-inf` simply loses every comparison).
/// The best point seen, endpoints included, is returned.
pub fn golden_max<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<LineOptimum> {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut best = (lo, f(lo));
    let fb = f(hi);
    if fb > best.1 || best.1.is_nan() {
        best = (hi, fb);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut it = 0;
    while hi - lo > xtol * (1.0 + lo.abs().max(hi.abs())) {
        if it >= max_iter {
            return Err(Error::NonConvergence {
                what: "golden-section search".into(),
                iterations: it,
            });
        }
        it += 1;
        if f1 >= f2 || f2.is_nan() {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 || best.1.is_nan() {
            best = (x, v);
        }
    }
    Ok(LineOptimum { x: best.0, value: best.1, iterations: it })
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
pub fn golden_min<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: usize,
) -> Result<LineOptimum> {
    let r = golden_max(|x| -f(x), a, b, xtol, max_iter)?;
    Ok(LineOptimum { value: -r.value, ..r })
}

/// Outcome of integrating over `[start, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailIntegral {
    Finite(f64),
    Divergent,
    /// Increments neither shrank below tolerance nor showed sustained growth.
    NotConverged,
}

/// Integrates a non-negative `f` over `[start, inf)` by doubling the window.
///
/// Segment `k` covers `[start + L*2^(k-1), start + L*2^k]`. Convergence is
/// declared when a segment contributes less than `rel_tol` of the running
/// total; divergence when five consecutive segments fail to shrink.
pub fn integrate_tail<F: Fn(f64) -> f64>(f: F, start: f64, first_len: f64, rel_tol: f64) -> TailIntegral {
    let seg = |a: f64, b: f64| -> f64 {
        let rough = quadrature::double_exponential::integrate(&f, a, b, 1e-6).integral;
        if !rough.is_finite() {
            return rough;
        }
        let target = (rough.abs() * 1e-13).max(1e-300);
        quadrature::double_exponential::integrate(&f, a, b, target).integral
    };
    let mut total = seg(start, start + first_len);
    if !total.is_finite() {
        return TailIntegral::Divergent;
    }
    let mut prev = total;
    let mut growth_run = 0;
    let mut len = first_len;
    for _ in 0..64 {
        let a = start + len;
        let b = start + 2.0 * len;
        len *= 2.0;
        let inc = seg(a, b);
        if !inc.is_finite() {
            return TailIntegral::Divergent;
        }
        total += inc;
        if inc <= rel_tol * total.abs() || (total == 0.0 && inc == 0.0) {
            return TailIntegral::Finite(total);
        }
        if inc >= prev && inc > 0.0 {
            growth_run += 1;
            if growth_run >= 5 {
                return TailIntegral::Divergent;
            }
        } else {
            growth_run = 0;
        }
        prev = inc;
    }
    TailIntegral::NotConverged
}

/// Rounds to 15 significant digits, the precision used for all reported numbers.
pub fn round_sig15(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.14e}", x).parse().unwrap_or(x)
}

/// `a * b` with the convention `0 * inf = 0`.
pub fn mul0(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// Sequential (fixed-order) dot product with the `0 * inf = 0` convention.
pub fn dot0(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| mul0(x, y)).sum()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
