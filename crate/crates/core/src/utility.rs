//! Utility functions, their convex conjugates and subdifferentials.
//!
//! Every family is normalised so that `U(0) = 0`. Values live in the extended
//! reals: `-inf` below the effective domain, the upper-semicontinuous limit at
//! its left endpoint, and `U(+inf)` as the limit at the right.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric;

/// Concave piecewise-linear utility anchored at `U(0) = 0`.
///
/// `slopes[i]` applies on `(knots[i-1], knots[i])`; slopes are strictly
/// decreasing and non-negative, with a positive first slope.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    knots: Vec<f64>,
    slopes: Vec<f64>,
    /// Intercepts so that piece `i` is `c[i] + slopes[i] * x`.
    intercepts: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(knots: Vec<f64>, slopes: Vec<f64>) -> std::result::Result<Self, String> {
        if slopes.len() != knots.len() + 1 {
            return Err(format!("expected {} slopes for {} knots, got {}", knots.len() + 1, knots.len(), slopes.len()));
        }
        if knots.iter().chain(&slopes).any(|v| !v.is_finite()) {
            return Err("knots and slopes must be finite".into());
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err("knots must be strictly increasing".into());
        }
        if slopes.windows(2).any(|w| w[0] <= w[1]) {
            return Err("slopes must be strictly decreasing (concavity)".into());
        }
        if slopes[0] <= 0.0 || *slopes.last().unwrap() < 0.0 {
            return Err("slopes must be non-negative with a positive first slope".into());
        }
        // piece containing 0 gets a zero intercept
        let anchor = knots.iter().take_while(|&&k| k < 0.0).count();
        let mut c = vec![0.0; slopes.len()];
        for i in anchor + 1..slopes.len() {
            c[i] = c[i - 1] + (slopes[i - 1] - slopes[i]) * knots[i - 1];
        }
        for i in (0..anchor).rev() {
            c[i] = c[i + 1] - (slopes[i] - slopes[i + 1]) * knots[i];
        }
        let pl = PiecewiseLinear { knots, slopes, intercepts: c };
        if pl.bliss() <= 0.0 {
            return Err("satiation point must be positive".into());
        }
        Ok(pl)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// `(intercept, slope)` of every affine piece; `U` is their pointwise minimum.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.intercepts.iter().copied().zip(self.slopes.iter().copied())
    }

    fn value(&self, x: f64) -> f64 {
        if x == f64::INFINITY {
            return if *self.slopes.last().unwrap() == 0.0 { *self.intercepts.last().unwrap() } else { f64::INFINITY };
        }
        if x == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let i = self.knots.iter().take_while(|&&k| k < x).count();
        self.intercepts[i] + self.slopes[i] * x
    }

    fn bliss(&self) -> f64 {
        if *self.slopes.last().unwrap() == 0.0 {
            *self.knots.last().unwrap_or(&f64::INFINITY)
        } else {
            f64::INFINITY
        }
    }

    /// Right and left derivatives at `x`.
    fn one_sided(&self, x: f64) -> (f64, f64) {
        let right = self.knots.iter().take_while(|&&k| k <= x).count();
        let left = self.knots.iter().take_while(|&&k| k < x).count();
        (self.slopes[right], self.slopes[left])
    }

    fn conjugate(&self, y: f64) -> f64 {
        let smax = self.slopes[0];
        let smin = *self.slopes.last().unwrap();
        if y.is_nan() || y > smax || y < smin {
            return f64::INFINITY;
        }
        if self.knots.is_empty() {
            return 0.0;
        }
        self.knots
            .iter()
            .map(|&k| self.value(k) - k * y)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn argmax(&self, y: f64) -> Option<(f64, f64)> {
        let n = self.slopes.len();
        for i in 0..n {
            let lo = if i == 0 { f64::NEG_INFINITY } else { self.knots[i - 1] };
            let hi = if i + 1 == n { f64::INFINITY } else { self.knots[i] };
            if y == self.slopes[i] {
                return Some((lo, hi));
            }
            if i + 1 < n && y < self.slopes[i] && y > self.slopes[i + 1] {
                return Some((hi, hi));
            }
        }
        None
    }
}

/// Parametric utility families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `1 - exp(-gamma x)`.
    Exponential { gamma: f64 },
    /// `a ln(1 + x/a)` on `(-a, inf)`.
    ShiftedLog { shift: f64 },
    /// `a/(1-gamma) ((1 + x/a)^(1-gamma) - 1)` on `(-a, inf)`; `gamma != 1`.
    Power { gamma: f64, shift: f64 },
    /// `x - x^2/(2b)`: increasing up to `b`, decreasing after. Not monotone.
    Quadratic { bliss: f64 },
    /// `min(x, b)`.
    TruncatedLinear { bliss: f64 },
    /// Arbitrary concave piecewise-linear function (includes `U(x) = x`).
    Piecewise(PiecewiseLinear),
}

/// A utility function together with its closed-form conjugate.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityFunction {
    family: Family,
    /// Piecewise view for the non-smooth families.
    pwl: Option<PiecewiseLinear>,
}

/// `[U'_+(x), U'_-(x)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubgradientInterval {
    pub lower: f64,
    pub upper: f64,
}

impl SubgradientInterval {
    pub fn contains(&self, y: f64, tol: f64) -> bool {
        y >= self.lower - tol && y <= self.upper + tol
    }

    /// Distance from `y` to the interval.
    pub fn distance(&self, y: f64) -> f64 {
        if y < self.lower {
            self.lower - y
        } else if y > self.upper {
            y - self.upper
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SatiationInfo {
    pub x_lo: f64,
    pub x_bliss: f64,
    pub u_infinity: f64,
}

impl UtilityFunction {
    pub fn new(family: Family) -> Result<Self> {
        let bad = |reason: String| Error::Domain(format!("{family:?}: {reason}"));
        let pwl = match &family {
            Family::Exponential { gamma } if !(*gamma > 0.0 && gamma.is_finite()) => {
                return Err(bad("gamma must be positive".into()))
            }
            Family::ShiftedLog { shift } | Family::Power { shift, .. } if !(*shift > 0.0 && shift.is_finite()) => {
                return Err(bad("shift must be positive".into()))
            }
            Family::Power { gamma, .. } if !(*gamma > 0.0 && gamma.is_finite()) || *gamma == 1.0 => {
                return Err(bad("gamma must be positive and different from 1 (use the log family)".into()))
            }
            Family::Quadratic { bliss } if !(*bliss > 0.0 && bliss.is_finite()) => {
                return Err(bad("bliss must be positive".into()))
            }
            Family::TruncatedLinear { bliss } => {
                if !(*bliss > 0.0 && bliss.is_finite()) {
                    return Err(bad("bliss must be positive".into()));
                }
                Some(PiecewiseLinear::new(vec![*bliss], vec![1.0, 0.0]).map_err(bad)?)
            }
            Family::Piecewise(p) => Some(p.clone()),
            _ => None,
        };
        Ok(UtilityFunction { family, pwl })
    }

    pub fn exponential(gamma: f64) -> Result<Self> {
        Self::new(Family::Exponential { gamma })
    }

    pub fn shifted_log(shift: f64) -> Result<Self> {
        Self::new(Family::ShiftedLog { shift })
    }

    pub fn power(gamma: f64, shift: f64) -> Result<Self> {
        Self::new(Family::Power { gamma, shift })
    }

    pub fn quadratic(bliss: f64) -> Result<Self> {
        Self::new(Family::Quadratic { bliss })
    }

    pub fn truncated_linear(bliss: f64) -> Result<Self> {
        Self::new(Family::TruncatedLinear { bliss })
    }

    /// `U(x) = x`.
    pub fn linear() -> Self {
        let p = PiecewiseLinear::new(vec![], vec![1.0]).expect("valid");
        UtilityFunction { family: Family::Piecewise(p.clone()), pwl: Some(p) }
    }

    pub fn piecewise(knots: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        let p = PiecewiseLinear::new(knots, slopes).map_err(Error::Domain)?;
        Self::new(Family::Piecewise(p))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Piecewise-linear representation, present exactly for the non-smooth families.
    pub fn as_piecewise(&self) -> Option<&PiecewiseLinear> {
        self.pwl.as_ref()
    }

    pub fn is_smooth(&self) -> bool {
        self.pwl.is_none()
    }

    /// Only the quadratic family decreases past its bliss point.
    pub fn is_monotone(&self) -> bool {
        !matches!(self.family, Family::Quadratic { .. })
    }

    pub fn value(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if let Some(p) = &self.pwl {
            return p.value(x);
        }
        match self.family {
            Family::Exponential { gamma } => match x {
                f64::INFINITY => 1.0,
                f64::NEG_INFINITY => f64::NEG_INFINITY,
                _ => -(-gamma * x).exp_m1(),
            },
            Family::ShiftedLog { shift: a } => {
                if x <= -a {
                    f64::NEG_INFINITY
                } else {
                    a * (x / a).ln_1p()
                }
            }
            Family::Power { gamma, shift: a } => {
                if x < -a {
                    f64::NEG_INFINITY
                } else if x == f64::INFINITY {
                    if gamma < 1.0 {
                        f64::INFINITY
                    } else {
                        a / (gamma - 1.0)
                    }
                } else if x == -a {
                    if gamma < 1.0 {
                        -a / (1.0 - gamma)
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    let e = 1.0 - gamma;
                    a / e * (e * (x / a).ln_1p()).exp_m1()
                }
            }
            Family::Quadratic { bliss: b } => {
                if x.is_infinite() {
                    f64::NEG_INFINITY
                } else {
                    x - x * x / (2.0 * b)
                }
            }
            Family::TruncatedLinear { .. } | Family::Piecewise(_) => unreachable!(),
        }
    }

    pub fn satiation_info(&self) -> SatiationInfo {
        SatiationInfo { x_lo: self.domain_inf(), x_bliss: self.bliss(), u_infinity: self.sup_value() }
    }

    /// Infimum of the effective domain.
    pub fn domain_inf(&self) -> f64 {
        match self.family {
            Family::ShiftedLog { shift } | Family::Power { shift, .. } => -shift,
            _ => f64::NEG_INFINITY,
        }
    }

    /// Satiation point: where `U` first attains its supremum.
    pub fn bliss(&self) -> f64 {
        if let Some(p) = &self.pwl {
            return p.bliss();
        }
        match self.family {
            Family::Quadratic { bliss } => bliss,
            _ => f64::INFINITY,
        }
    }

    /// `sup U`, equal to `V(0)`. For monotone families this is `U(+inf)`.
    pub fn sup_value(&self) -> f64 {
        match self.family {
            Family::Quadratic { bliss } => bliss / 2.0,
            _ => self.value(f64::INFINITY),
        }
    }

    /// Derivative of a smooth family. `U'(+inf) = 0` for monotone families.
    pub fn derivative(&self, x: f64) -> f64 {
        match self.family {
            Family::Exponential { gamma } => gamma * (-gamma * x).exp(),
            Family::ShiftedLog { shift: a } => {
                if x <= -a {
                    f64::INFINITY
                } else {
                    1.0 / (1.0 + x / a)
                }
            }
            Family::Power { gamma, shift: a } => {
                if x <= -a {
                    f64::INFINITY
                } else {
                    (-gamma * (x / a).ln_1p()).exp()
                }
            }
            Family::Quadratic { bliss } => 1.0 - x / bliss,
            _ => {
                let s = self.subdifferential_unchecked(x);
                0.5 * (s.lower + s.upper)
            }
        }
    }

    /// Second derivative of a smooth family (zero almost everywhere for piecewise ones).
    pub fn second_derivative(&self, x: f64) -> f64 {
        match self.family {
            Family::Exponential { gamma } => -gamma * gamma * (-gamma * x).exp(),
            Family::ShiftedLog { shift: a } => {
                let b = 1.0 + x / a;
                -1.0 / (a * b * b)
            }
            Family::Power { gamma, shift: a } => -gamma / a * (-(gamma + 1.0) * (x / a).ln_1p()).exp(),
            Family::Quadratic { bliss } => -1.0 / bliss,
            _ => 0.0,
        }
    }

    /// `[U'_+(x), U'_-(x)]` on the interior of the domain.
    pub fn subdifferential(&self, x: f64) -> Result<SubgradientInterval> {
        if !x.is_finite() || x <= self.domain_inf() {
            return Err(Error::Domain(format!("x = {x} is outside the interior of dom U")));
        }
        Ok(self.subdifferential_unchecked(x))
    }

    fn subdifferential_unchecked(&self, x: f64) -> SubgradientInterval {
        if let Some(p) = &self.pwl {
            let (lower, upper) = p.one_sided(x);
            return SubgradientInterval { lower, upper };
        }
        let d = self.derivative(x);
        SubgradientInterval { lower: d, upper: d }
    }

    /// Closed-form conjugate `V(y) = sup_x { U(x) - x y }`.
    ///
    /// Negative `y` gives `+inf` for monotone families. The quadratic family
    /// has a finite conjugate on all of the real line.
    pub fn conjugate(&self, y: f64) -> f64 {
        if y.is_nan() {
            return f64::NAN;
        }
        if let Some(p) = &self.pwl {
            return p.conjugate(y);
        }
        match self.family {
            Family::Quadratic { bliss: b } => {
                if y.is_infinite() {
                    f64::INFINITY
                } else {
                    0.5 * b * (1.0 - y) * (1.0 - y)
                }
            }
            _ if y < 0.0 || y == f64::INFINITY => f64::INFINITY,
            _ if y == 0.0 => self.sup_value(),
            Family::Exponential { gamma } => {
                let r = y / gamma;
                1.0 - r + r * r.ln()
            }
            Family::ShiftedLog { shift: a } => a * (y - 1.0 - y.ln()),
            Family::Power { gamma, shift: a } => {
                let e = 1.0 - 1.0 / gamma;
                a * gamma / (1.0 - gamma) * (e * y.ln()).exp() + a * y - a / (1.0 - gamma)
            }
            Family::TruncatedLinear { .. } | Family::Piecewise(_) => unreachable!(),
        }
    }

    /// `V'(y)` for smooth families; equals `-I(y)` with `I` the inverse marginal utility.
    pub fn conjugate_derivative(&self, y: f64) -> f64 {
        match self.family {
            Family::Exponential { gamma } => (y / gamma).ln() / gamma,
            Family::ShiftedLog { shift: a } => a * (1.0 - 1.0 / y),
            Family::Power { gamma, shift: a } => a - a * (-y.ln() / gamma).exp(),
            Family::Quadratic { bliss } => -bliss * (1.0 - y),
            _ => f64::NAN,
        }
    }

    /// `V''(y)` for smooth families.
    pub fn conjugate_second_derivative(&self, y: f64) -> f64 {
        match self.family {
            Family::Exponential { gamma } => 1.0 / (gamma * y),
            Family::ShiftedLog { shift: a } => a / (y * y),
            Family::Power { gamma, shift: a } => a / gamma * (-(1.0 / gamma + 1.0) * y.ln()).exp(),
            Family::Quadratic { bliss } => bliss,
            _ => f64::NAN,
        }
    }

    /// Closed interval of `y >= 0` on which `V` is finite, as `(lo, hi)`.
    /// Endpoints where `V` blows up are still reported (the interval is then open there).
    pub fn conjugate_domain(&self) -> (f64, f64) {
        if let Some(p) = &self.pwl {
            return (*p.slopes.last().unwrap(), p.slopes[0]);
        }
        (0.0, f64::INFINITY)
    }

    /// The set of maximisers of `x -> U(x) - x y`, as a closed interval.
    /// An infinite endpoint means the supremum is approached at infinity.
    pub fn argmax(&self, y: f64) -> Option<(f64, f64)> {
        if let Some(p) = &self.pwl {
            return p.argmax(y);
        }
        if let Family::Quadratic { bliss } = self.family {
            let x = bliss * (1.0 - y);
            return Some((x, x));
        }
        if y < 0.0 || y.is_nan() {
            return None;
        }
        if y == 0.0 {
            return Some((f64::INFINITY, f64::INFINITY));
        }
        let x = -self.conjugate_derivative(y);
        Some((x, x))
    }

    /// `U(x) - x y - V(y)`, which is `<= 0` by the Fenchel inequality.
    pub fn fenchel_residual(&self, x: f64, y: f64) -> f64 {
        let u = self.value(x);
        let v = self.conjugate(y);
        if v == f64::INFINITY || u == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        u - numeric::mul0(x, y) - v
    }

    /// Numeric conjugate, independent of the closed forms.
    pub fn conjugate_numeric(&self, y: f64, cfg: &NumericConjugate) -> Result<f64> {
        if y.is_nan() {
            return Ok(f64::NAN);
        }
        if y < 0.0 && self.is_monotone() {
            return Ok(f64::INFINITY);
        }
        let g = |x: f64| {
            let u = self.value(x);
            if u == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                u - x * y
            }
        };
        let mut pts = vec![(0.0, g(0.0))];
        // Each direction stops after three consecutive doublings without
        // progress (strict decreases or a numerically flat plateau); still
        // improving at the cap means the supremum is infinite.
        let sig = |v: f64, best: f64| v > best + 1e-13 * (1.0 + best.abs());
        // rightwards
        let mut x = 1.0;
        let mut best = pts[0].1;
        let mut stall = 0;
        while x <= cfg.cap {
            let v = g(x);
            if v == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            pts.push((x, v));
            if sig(v, best) {
                best = v;
                stall = 0;
            } else {
                stall += 1;
                if stall >= 3 {
                    break;
                }
            }
            x *= 2.0;
        }
        if x > cfg.cap && stall == 0 {
            return Ok(f64::INFINITY);
        }
        // leftwards, or geometrically towards a finite domain endpoint
        let lo = self.domain_inf();
        best = pts[0].1;
        stall = 0;
        let mut k = 1;
        loop {
            if lo.is_finite() && k > cfg.boundary_steps {
                pts.push((lo, g(lo)));
                break;
            }
            let x = if lo.is_finite() { lo * (1.0 - 0.5_f64.powi(k)) } else { -(2.0_f64.powi(k - 1)) };
            if !lo.is_finite() && -x > cfg.cap {
                if stall == 0 {
                    return Ok(f64::INFINITY);
                }
                break;
            }
            let v = g(x);
            if v == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            pts.push((x, v));
            if sig(v, best) {
                best = v;
                stall = 0;
            } else {
                stall += 1;
                if stall >= 3 {
                    break;
                }
            }
            k += 1;
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (j, &(_, best)) = pts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("non-empty");
        if best == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let a = pts[j.saturating_sub(1)].0;
        let b = pts[(j + 1).min(pts.len() - 1)].0;
        let r = numeric::golden_max(g, a, b, cfg.xtol, cfg.max_iter)?;
        Ok(r.value.max(best))
    }

    /// Tabulates `x U'(x) / U(x)` and returns a heuristic asymptotic verdict.
    pub fn elasticity_profile(&self, x_grid: &[f64]) -> ElasticityProfile {
        let mut rows = Vec::new();
        for &x in x_grid {
            let u = self.value(x);
            if !x.is_finite() || !u.is_finite() || u == 0.0 || x <= self.domain_inf() {
                continue;
            }
            let d = self.subdifferential_unchecked(x).lower;
            rows.push(ElasticityRow { x, ratio: x * d / u });
        }
        let mut pos: Vec<&ElasticityRow> = rows.iter().filter(|r| r.x > 0.0).collect();
        pos.sort_by(|a, b| b.x.total_cmp(&a.x));
        let plus = if pos.is_empty() {
            RaeVerdict::NotSampled
        } else {
            let est = pos.iter().take(3).map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
            if est < 1.0 - 1e-9 {
                RaeVerdict::Satisfied
            } else {
                RaeVerdict::Violated
            }
        };
        let minus = if self.domain_inf().is_finite() {
            RaeVerdict::NotApplicable
        } else {
            let mut neg: Vec<&ElasticityRow> = rows.iter().filter(|r| r.x < 0.0).collect();
            neg.sort_by(|a, b| a.x.total_cmp(&b.x));
            if neg.is_empty() {
                RaeVerdict::NotSampled
            } else {
                let est = neg.iter().take(3).map(|r| r.ratio).fold(f64::INFINITY, f64::min);
                if est > 1.0 + 1e-9 {
                    RaeVerdict::Satisfied
                } else {
                    RaeVerdict::Violated
                }
            }
        };
        ElasticityProfile { rows, plus_infinity: plus, minus_infinity: minus, heuristic: true }
    }

    /// Parses a spec string such as `exp:gamma=1`, `trunclin:bliss=1` or `quad`.
    pub fn parse(spec: &str) -> Result<Self> {
        spec.parse()
    }
}

/// Settings for [`UtilityFunction::conjugate_numeric`].
#[derive(Debug, Clone, Copy)]
pub struct NumericConjugate {
    pub xtol: f64,
    pub max_iter: usize,
    /// Largest `|x|` explored before declaring the supremum infinite.
    pub cap: f64,
    /// Geometric steps towards a finite domain endpoint.
    pub boundary_steps: i32,
}

impl Default for NumericConjugate {
    fn default() -> Self {
        NumericConjugate { xtol: 1e-12, max_iter: 500, cap: 1e300, boundary_steps: 60 }
    }
}

/// How a [`ConjugateFunction`] is evaluated.
#[derive(Debug, Clone, Copy)]
pub enum ConjugateMode {
    ClosedForm,
    Numeric(NumericConjugate),
}

/// `V` bundled with its evaluation mode.
#[derive(Debug, Clone)]
pub struct ConjugateFunction {
    pub utility: UtilityFunction,
    pub mode: ConjugateMode,
}

impl ConjugateFunction {
    pub fn closed_form(utility: UtilityFunction) -> Self {
        ConjugateFunction { utility, mode: ConjugateMode::ClosedForm }
    }

    pub fn numeric(utility: UtilityFunction) -> Self {
        ConjugateFunction { utility, mode: ConjugateMode::Numeric(NumericConjugate::default()) }
    }

    pub fn eval(&self, y: f64) -> Result<f64> {
        match self.mode {
            ConjugateMode::ClosedForm => {
                if y < 0.0 && self.utility.is_monotone() {
                    Ok(f64::INFINITY)
                } else {
                    Ok(self.utility.conjugate(y))
                }
            }
            ConjugateMode::Numeric(cfg) => self.utility.conjugate_numeric(y, &cfg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RaeVerdict {
    Satisfied,
    Violated,
    NotSampled,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElasticityRow {
    pub x: f64,
    pub ratio: f64,
}

/// Sampled elasticities. Both verdicts are heuristic: the underlying
/// condition is a limit and cannot be decided from finitely many points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElasticityProfile {
    pub rows: Vec<ElasticityRow>,
    pub plus_infinity: RaeVerdict,
    pub minus_infinity: RaeVerdict,
    pub heuristic: bool,
}

fn spec_err(spec: &str, reason: impl Into<String>) -> Error {
    Error::UtilitySpec { spec: spec.to_string(), reason: reason.into() }
}

impl FromStr for UtilityFunction {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut params: Vec<(&str, &str)> = Vec::new();
        for kv in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| spec_err(spec, format!("expected key=value, got `{kv}`")))?;
            params.push((k.trim(), v.trim()));
        }
        let allowed: &[&str] = match name {
            "exp" => &["gamma"],
            "log" => &["shift"],
            "power" => &["gamma", "shift"],
            "quad" => &["bliss"],
            "trunclin" => &["bliss"],
            "linear" => &[],
            "pwl" => &["knots", "slopes"],
            _ => return Err(spec_err(spec, format!("unknown family `{name}`"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(spec_err(spec, format!("unknown parameter `{k}` for `{name}`")));
        }
        let num = |key: &str, default: Option<f64>| -> Result<f64> {
            match params.iter().find(|(k, _)| *k == key) {
                Some((_, v)) => v.parse::<f64>().map_err(|_| spec_err(spec, format!("`{key}` is not a number: `{v}`"))),
                None => default.ok_or_else(|| spec_err(spec, format!("missing parameter `{key}`"))),
            }
        };
        let list = |key: &str| -> Result<Vec<f64>> {
            match params.iter().find(|(k, _)| *k == key) {
                None => Ok(Vec::new()),
                Some((_, "")) => Ok(Vec::new()),
                Some((_, v)) => v
                    .split('/')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| spec_err(spec, format!("bad number `{s}` in `{key}`"))))
                    .collect(),
            }
        };
        let wrap = |r: Result<UtilityFunction>| r.map_err(|e| spec_err(spec, e.to_string()));
        match name {
            "exp" => wrap(UtilityFunction::exponential(num("gamma", Some(1.0))?)),
            "log" => wrap(UtilityFunction::shifted_log(num("shift", Some(1.0))?)),
            "power" => wrap(UtilityFunction::power(num("gamma", Some(2.0))?, num("shift", Some(1.0))?)),
            "quad" => wrap(UtilityFunction::quadratic(num("bliss", Some(1.0))?)),
            "trunclin" => wrap(UtilityFunction::truncated_linear(num("bliss", Some(1.0))?)),
            "linear" => Ok(UtilityFunction::linear()),
            "pwl" => {
                let slopes = list("slopes")?;
                if slopes.is_empty() {
                    return Err(spec_err(spec, "missing parameter `slopes`"));
                }
                wrap(UtilityFunction::piecewise(list("knots")?, slopes))
            }
            _ => unreachable!(),
        }
    }
}

impl fmt::Display for UtilityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("/");
        match &self.family {
            Family::Exponential { gamma } => write!(f, "exp:gamma={gamma}"),
            Family::ShiftedLog { shift } => write!(f, "log:shift={shift}"),
            Family::Power { gamma, shift } => write!(f, "power:gamma={gamma},shift={shift}"),
            Family::Quadratic { bliss } => write!(f, "quad:bliss={bliss}"),
            Family::TruncatedLinear { bliss } => write!(f, "trunclin:bliss={bliss}"),
            Family::Piecewise(p) if p.knots.is_empty() && p.slopes == [1.0] => write!(f, "linear"),
            Family::Piecewise(p) => write!(f, "pwl:knots={},slopes={}", join(&p.knots), join(&p.slopes)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn exp1() -> UtilityFunction {
        UtilityFunction::exponential(1.0).unwrap()
    }

    fn all_families() -> Vec<UtilityFunction> {
        [
            "exp:gamma=1",
            "exp:gamma=2.5",
            "log:shift=1",
            "log:shift=3",
            "power:gamma=2,shift=1",
            "power:gamma=0.5,shift=2",
            "quad",
            "quad:bliss=3",
            "trunclin:bliss=1",
            "linear",
            "pwl:knots=-1/0.5/2,slopes=3/1.5/0.5/0",
            "pwl:knots=1,slopes=2/0.25",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
    }

    #[test]
    fn exponential_values() {
        let u = exp1();
        assert_eq!(u.value(0.0), 0.0);
        assert_eq!(u.value(f64::INFINITY), 1.0);
        assert_eq!(u.value(f64::NEG_INFINITY), f64::NEG_INFINITY);
    }

    #[test]
    fn truncated_linear_plateau() {
        let u = UtilityFunction::truncated_linear(1.0).unwrap();
        assert_eq!(u.value(2.0), 1.0);
        assert_eq!(u.value(-3.0), -3.0);
        assert_eq!(u.value(f64::INFINITY), 1.0);
    }

    #[test]
    fn conjugate_examples() {
        let u = exp1();
        assert_abs_diff_eq!(u.conjugate(1.0), 0.0, epsilon = 1e-15);
        assert_eq!(u.conjugate(0.0), 1.0);
        assert_eq!(u.conjugate(-0.5), f64::INFINITY);
        let t = UtilityFunction::truncated_linear(1.0).unwrap();
        assert_abs_diff_eq!(t.conjugate(0.5), 0.5, epsilon = 1e-15);
        let num = t.conjugate_numeric(0.5, &NumericConjugate::default()).unwrap();
        assert_abs_diff_eq!(num, 0.5, epsilon = 1e-10);
        for y in [0.0, 0.25, 0.8, 1.0] {
            assert_abs_diff_eq!(t.conjugate(y), 1.0 - y, epsilon = 1e-15);
        }
    }

    #[test]
    fn fenchel_examples() {
        let u = exp1();
        assert_abs_diff_eq!(u.fenchel_residual(0.0, 1.0), 0.0, epsilon = 1e-15);
        let v2 = 2.0 * 2f64.ln() - 2.0 + 1.0;
        assert_abs_diff_eq!(u.fenchel_residual(0.0, 2.0), -v2, epsilon = 1e-12);
        assert!((u.fenchel_residual(0.0, 2.0) + 0.386).abs() < 1e-3);
    }

    #[test]
    fn satiation_examples() {
        let s = exp1().satiation_info();
        assert_eq!((s.x_lo, s.x_bliss, s.u_infinity), (f64::NEG_INFINITY, f64::INFINITY, 1.0));
        let s = UtilityFunction::truncated_linear(1.0).unwrap().satiation_info();
        assert_eq!((s.x_lo, s.x_bliss, s.u_infinity), (f64::NEG_INFINITY, 1.0, 1.0));
        let s = UtilityFunction::shifted_log(1.0).unwrap().satiation_info();
        assert_eq!((s.x_lo, s.x_bliss, s.u_infinity), (-1.0, f64::INFINITY, f64::INFINITY));
    }

    #[test]
    fn subdifferential_examples() {
        let s = exp1().subdifferential(0.0).unwrap();
        assert_eq!((s.lower, s.upper), (1.0, 1.0));
        let s = UtilityFunction::truncated_linear(1.0).unwrap().subdifferential(1.0).unwrap();
        assert_eq!((s.lower, s.upper), (0.0, 1.0));
        let s = UtilityFunction::quadratic(1.0).unwrap().subdifferential(0.5).unwrap();
        assert_eq!((s.lower, s.upper), (0.5, 0.5));
        assert!(UtilityFunction::shifted_log(1.0).unwrap().subdifferential(-1.0).is_err());
    }

    #[test]
    fn elasticity_examples() {
        let p = exp1().elasticity_profile(&[10.0, 100.0, 1000.0]);
        assert!(p.rows.iter().all(|r| r.ratio < 1e-3));
        assert_eq!(p.plus_infinity, RaeVerdict::Satisfied);
        assert!(p.heuristic);
        let p = UtilityFunction::linear().elasticity_profile(&[10.0, 100.0, 1000.0]);
        assert!(p.rows.iter().all(|r| r.ratio == 1.0));
        assert_eq!(p.plus_infinity, RaeVerdict::Violated);
        let p = UtilityFunction::truncated_linear(1.0).unwrap().elasticity_profile(&[2.0, 5.0, 50.0]);
        assert!(p.rows.iter().all(|r| r.ratio == 0.0));
    }

    #[test]
    fn closed_form_matches_numeric_conjugate() {
        let cfg = NumericConjugate::default();
        for u in all_families() {
            for y in [0.0, 0.1, 0.5, 1.0, 1.7, 3.0, 10.0] {
                let exact = u.conjugate(y);
                let num = u.conjugate_numeric(y, &cfg).unwrap();
                if exact.is_infinite() {
                    assert_eq!(num, exact, "{u} at y={y}");
                } else {
                    assert!((exact - num).abs() <= 1e-9 * (1.0 + exact.abs()), "{u} at y={y}: {exact} vs {num}");
                }
            }
        }
    }

    #[test]
    fn conjugate_at_zero_is_sup() {
        for u in all_families() {
            assert_eq!(u.conjugate(0.0), u.sup_value(), "{u}");
        }
    }

    #[test]
    fn argmax_attains_conjugate() {
        for u in all_families() {
            for y in [0.2, 0.5, 1.0, 2.0] {
                if let Some((lo, hi)) = u.argmax(y) {
                    for x in [lo, hi] {
                        if x.is_finite() {
                            assert!(u.fenchel_residual(x, y).abs() < 1e-12, "{u} y={y} x={x}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        for u in all_families().into_iter().filter(|u| u.is_smooth()) {
            for x in [-0.4, 0.0, 0.7, 2.0] {
                let h = 1e-6;
                let fd = (u.value(x + h) - u.value(x - h)) / (2.0 * h);
                assert!((fd - u.derivative(x)).abs() < 1e-6, "{u} at {x}");
                let fd2 = (u.derivative(x + h) - u.derivative(x - h)) / (2.0 * h);
                assert!((fd2 - u.second_derivative(x)).abs() < 1e-5, "{u} at {x}");
            }
            for y in [0.3, 1.0, 2.5] {
                let h = 1e-6;
                let fd = (u.conjugate(y + h) - u.conjugate(y - h)) / (2.0 * h);
                assert!((fd - u.conjugate_derivative(y)).abs() < 1e-6, "{u} at {y}");
                let fd2 = (u.conjugate_derivative(y + h) - u.conjugate_derivative(y - h)) / (2.0 * h);
                assert!((fd2 - u.conjugate_second_derivative(y)).abs() < 1e-4, "{u} at {y}");
            }
        }
    }

    #[test]
    fn power_boundary_is_usc() {
        let u = UtilityFunction::power(0.5, 1.0).unwrap();
        assert_eq!(u.value(-1.0), -2.0);
        assert_eq!(u.value(-1.0 - 1e-12), f64::NEG_INFINITY);
        let u = UtilityFunction::power(2.0, 1.0).unwrap();
        assert_eq!(u.value(-1.0), f64::NEG_INFINITY);
        assert_eq!(u.value(f64::INFINITY), 1.0);
    }

    #[test]
    fn piecewise_is_anchored_and_concave() {
        let u: UtilityFunction = "pwl:knots=-1/0.5/2,slopes=3/1.5/0.5/0".parse().unwrap();
        assert_eq!(u.value(0.0), 0.0);
        assert_abs_diff_eq!(u.value(-2.0), -1.5 - 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u.value(1.0), 0.75 + 0.25, epsilon = 1e-15);
        assert_eq!(u.bliss(), 2.0);
        assert_abs_diff_eq!(u.sup_value(), 0.75 + 0.75, epsilon = 1e-15);
    }

    #[test]
    fn spec_round_trip_and_errors() {
        for u in all_families() {
            let again: UtilityFunction = u.to_string().parse().unwrap();
            assert_eq!(again, u);
        }
        for bad in ["cara", "exp:gamma=-1", "exp:gama=1", "exp:gamma", "pwl:knots=1,slopes=1/2", "pwl"] {
            assert!(bad.parse::<UtilityFunction>().is_err(), "{bad}");
        }
    }

    #[test]
    fn quadratic_conjugate_is_finite_on_negatives() {
        let u = UtilityFunction::quadratic(1.0).unwrap();
        assert_abs_diff_eq!(u.conjugate(-1.0), 2.0, epsilon = 1e-15);
        let num = u.conjugate_numeric(-1.0, &NumericConjugate::default()).unwrap();
        assert_abs_diff_eq!(num, 2.0, epsilon = 1e-9);
    }
}
