//! Moment conditions on the large jumps of a Lévy measure.
//!
//! `E[g(L_1)] < inf` iff `∫_{|x| > 1} g(x) nu(dx) < inf` for submultiplicative
//! `g`; the verdict below uses the analytic tail of each family and the
//! integral is evaluated numerically as a cross-check.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{integrate_tail, TailIntegral};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum LevyFamily {
    /// Normally distributed jumps arriving at rate `intensity`.
    GaussianJumps { intensity: f64, mean: f64, sd: f64 },
    /// Jumps with density `p eta e^{-eta x}` on `x > 0` and
    /// `(1 - p) eta e^{eta x}` on `x < 0`.
    DoubleExponential { intensity: f64, p_up: f64, eta: f64 },
    /// Symmetric power tail `scale |x|^{-1-alpha}`.
    StableTail { alpha: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "criterion", content = "order", rename_all = "kebab-case")]
pub enum MomentCriterion {
    /// `g(x) = e^{lambda |x|}`.
    ExpMoment(f64),
    /// `g(x) = |x|^p`.
    PowerMoment(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevyVerdict {
    pub finite: bool,
    /// `∫_{|x|>1} g dnu`, `None` when the numeric tail integral diverged or
    /// failed to settle.
    pub integral: Option<f64>,
    /// Whether the numeric outcome matches the analytic verdict.
    pub numeric_agrees: bool,
}

impl LevyFamily {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LevyFamily::GaussianJumps { intensity, mean, sd } => intensity > 0.0 && sd > 0.0 && mean.is_finite(),
            LevyFamily::DoubleExponential { intensity, p_up, eta } => {
                intensity > 0.0 && eta > 0.0 && (0.0..=1.0).contains(&p_up)
            }
            LevyFamily::StableTail { alpha, scale } => alpha > 0.0 && alpha < 2.0 && scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid Lévy parameters {self:?}")))
        }
    }

    /// Lévy density at `x != 0`.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            LevyFamily::GaussianJumps { intensity, mean, sd } => {
                let z = (x - mean) / sd;
                intensity * (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            LevyFamily::DoubleExponential { intensity, p_up, eta } => {
                let side = if x > 0.0 { p_up } else { 1.0 - p_up };
                intensity * side * eta * (-eta * x.abs()).exp()
            }
            LevyFamily::StableTail { alpha, scale } => scale * x.abs().powf(-1.0 - alpha),
        }
    }

    fn analytic(&self, criterion: MomentCriterion) -> bool {
        match (*self, criterion) {
            (LevyFamily::GaussianJumps { .. }, _) => true,
            (LevyFamily::DoubleExponential { eta, .. }, MomentCriterion::ExpMoment(l)) => l < eta,
            (LevyFamily::DoubleExponential { .. }, MomentCriterion::PowerMoment(_)) => true,
            (LevyFamily::StableTail { .. }, MomentCriterion::ExpMoment(l)) => l <= 0.0,
            (LevyFamily::StableTail { alpha, .. }, MomentCriterion::PowerMoment(p)) => p < alpha,
        }
    }
}

pub fn levy_moment_check(family: &LevyFamily, criterion: MomentCriterion) -> Result<LevyVerdict> {
    family.validate()?;
    let g = move |x: f64| match criterion {
        MomentCriterion::ExpMoment(l) => (l * x.abs()).exp(),
        MomentCriterion::PowerMoment(p) => x.abs().powf(p),
    };
    let finite = family.analytic(criterion);
    let right = integrate_tail(|x| g(x) * family.density(x), 1.0, 1.0, 1e-10);
    let left = integrate_tail(|x| g(-x) * family.density(-x), 1.0, 1.0, 1e-10);
    let integral = match (right, left) {
        (TailIntegral::Finite(a), TailIntegral::Finite(b)) => Some(a + b),
        _ => None,
    };
    let divergent = matches!(right, TailIntegral::Divergent) || matches!(left, TailIntegral::Divergent);
    let numeric_agrees = if finite { integral.is_some() } else { divergent || integral.is_none() };
    Ok(LevyVerdict { finite, integral: if finite { integral } else { None }, numeric_agrees })
}
