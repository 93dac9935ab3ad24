//! Young functions, Luxemburg norms on finite samples and Orlicz-heart
//! diagnostics for a small catalogue of parametric distributions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{integrate_tail, TailIntegral};
use crate::utility::{Family, UtilityFunction};

/// An even, convex Young function `Psi` with `Psi(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum YoungFunction {
    /// `Psi(x) = -U(-|x|)`.
    Induced(UtilityFunction),
    /// `|x|^p` with `p >= 1`.
    Power(f64),
    /// `cosh(x) - 1`.
    CoshMinusOne,
    /// `0` on `[-1, 1]`, `+inf` outside.
    UnitBallIndicator,
}

/// Asymptotic growth class used for analytic moment thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Growth {
    /// Comparable to `|x|^p`.
    Power(f64),
    /// Comparable to `exp(k |x|)`.
    Exponential(f64),
    /// Finite only on `|x| <= r`.
    Radius(f64),
}

impl YoungFunction {
    pub fn induce(u: &UtilityFunction) -> Self {
        YoungFunction::Induced(u.clone())
    }

    pub fn power(p: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::Domain(format!("power Young function needs p >= 1, got {p}")));
        }
        Ok(YoungFunction::Power(p))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            YoungFunction::Induced(u) => {
                let v = -u.value(-a);
                if v == 0.0 {
                    0.0
                } else {
                    v
                }
            }
            YoungFunction::Power(p) => a.powf(*p),
            YoungFunction::CoshMinusOne => {
                if a < 1e-4 {
                    // avoid cancellation in cosh(a) - 1
                    let a2 = a * a;
                    a2 / 2.0 + a2 * a2 / 24.0
                } else {
                    a.cosh() - 1.0
                }
            }
            YoungFunction::UnitBallIndicator => {
                if a <= 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `ln Psi(x)`, stable where `Psi` itself would overflow.
    pub fn ln_eval(&self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            YoungFunction::Induced(u) => match u.family() {
                Family::Exponential { gamma } => {
                    let g = gamma * a;
                    if g == 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        g + (-(-g).exp_m1()).ln()
                    }
                }
                _ => self.eval(x).ln(),
            },
            YoungFunction::Power(p) => p * a.ln(),
            YoungFunction::CoshMinusOne => {
                if a < 20.0 {
                    self.eval(x).ln()
                } else {
                    a - std::f64::consts::LN_2 + (-2.0 * (-a).exp() + (-2.0 * a).exp()).ln_1p()
                }
            }
            YoungFunction::UnitBallIndicator => self.eval(x).ln(),
        }
    }

    /// Supremum of `r` such that `Psi` is finite on `(-r, r)`.
    pub fn finiteness_radius(&self) -> f64 {
        match self {
            YoungFunction::Induced(u) => -u.domain_inf(),
            YoungFunction::UnitBallIndicator => 1.0,
            _ => f64::INFINITY,
        }
    }

    pub fn growth(&self) -> Growth {
        match self {
            YoungFunction::Induced(u) => {
                let r = -u.domain_inf();
                if r.is_finite() {
                    return Growth::Radius(r);
                }
                match u.family() {
                    Family::Exponential { gamma } => Growth::Exponential(*gamma),
                    Family::Quadratic { .. } => Growth::Power(2.0),
                    _ => Growth::Power(1.0),
                }
            }
            YoungFunction::Power(p) => Growth::Power(*p),
            YoungFunction::CoshMinusOne => Growth::Exponential(1.0),
            YoungFunction::UnitBallIndicator => Growth::Radius(1.0),
        }
    }
}

/// Finite sample with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() || values.is_empty() {
            return Err(Error::InvalidSample("values and weights must be non-empty and of equal length".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("entry {}: value is not finite", i + 1)));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidSample(format!("entry {}: weight must be positive", i + 1)));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSample(format!("weights sum to {total}, expected 1")));
        }
        Ok(WeightedSample { values, weights })
    }

    /// Equally weighted sample.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let w = 1.0 / values.len().max(1) as f64;
        let n = values.len();
        Self::new(values, vec![w; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scaled(&self, a: f64) -> Self {
        WeightedSample { values: self.values.iter().map(|v| a * v).collect(), weights: self.weights.clone() }
    }

    /// `E[Psi(X / k)]`, summed in sample order.
    pub fn modular(&self, psi: &YoungFunction, k: f64) -> f64 {
        self.values.iter().zip(&self.weights).map(|(&v, &w)| w * psi.eval(v / k)).sum()
    }
}

/// Luxemburg norm together with bisection diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LuxemburgNorm {
    pub value: f64,
    /// `E[Psi(X / value)]`, at most one by construction.
    pub modular: f64,
    pub iterations: usize,
}

/// `inf { k > 0 : E[Psi(X/k)] <= 1 }` by bisection.
///
/// The returned value is always the feasible end of the final bracket, so
/// `E[Psi(X/N)] <= 1` holds exactly for the reported `N`.
pub fn luxemburg_norm(psi: &YoungFunction, sample: &WeightedSample) -> Result<LuxemburgNorm> {
    let m = sample.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return Ok(LuxemburgNorm { value: 0.0, modular: 0.0, iterations: 0 });
    }
    let mut hi = m;
    let mut doublings = 0;
    while sample.modular(psi, hi) > 1.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::NonConvergence { what: "Luxemburg norm bracket".into(), iterations: doublings });
        }
    }
    let mut lo = 1e-12_f64.min(hi);
    if sample.modular(psi, lo) <= 1.0 {
        return Ok(LuxemburgNorm { value: lo, modular: sample.modular(psi, lo), iterations: 0 });
    }
    let mut it = 0;
    while hi - lo > 1e-12 * hi {
        if it >= 200 {
            return Err(Error::NonConvergence { what: "Luxemburg norm bisection".into(), iterations: it });
        }
        it += 1;
        let mid = 0.5 * (lo + hi);
        if sample.modular(psi, mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(LuxemburgNorm { value: hi, modular: sample.modular(psi, hi), iterations: it })
}

/// Parametric distributions supported by [`heart_membership`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Distribution {
    Gaussian { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    /// Density `alpha x_m^alpha / x^(alpha+1)` on `[x_m, inf)`.
    Pareto { alpha: f64, scale: f64 },
}

impl Distribution {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Gaussian { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Distribution::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Distribution::Pareto { alpha, scale } => alpha > 0.0 && scale > 0.0 && alpha.is_finite() && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid distribution parameters: {self:?}")))
        }
    }

    fn ln_density(&self, x: f64) -> f64 {
        match *self {
            Distribution::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Distribution::Exponential { rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            Distribution::Pareto { alpha, scale } => {
                if x < scale {
                    f64::NEG_INFINITY
                } else {
                    alpha.ln() + alpha * scale.ln() - (alpha + 1.0) * x.ln()
                }
            }
        }
    }

    /// Whether `E[Psi(cX)]` is finite, from the growth class alone.
    pub fn analytic_finite(&self, growth: Growth, c: f64) -> bool {
        match (growth, *self) {
            (Growth::Radius(_), _) => false,
            (Growth::Exponential(_), Distribution::Gaussian { .. }) => true,
            (Growth::Exponential(k), Distribution::Exponential { rate }) => k * c < rate,
            (Growth::Exponential(_), Distribution::Pareto { .. }) => false,
            (Growth::Power(_), Distribution::Gaussian { .. } | Distribution::Exponential { .. }) => true,
            (Growth::Power(p), Distribution::Pareto { alpha, .. }) => p < alpha,
        }
    }

    /// `E[Psi(cX)]` by tail-doubling quadrature.
    pub fn young_moment(&self, psi: &YoungFunction, c: f64) -> TailIntegral {
        let term = |x: f64| {
            let l = psi.ln_eval(c * x) + self.ln_density(x);
            if l == f64::NEG_INFINITY {
                0.0
            } else {
                l.exp()
            }
        };
        match *self {
            Distribution::Gaussian { mean, sd } => {
                integrate_tail(|t| term(mean + t) + term(mean - t), 0.0, 8.0 * sd, 1e-13)
            }
            Distribution::Exponential { rate } => integrate_tail(term, 0.0, 8.0 / rate, 1e-13),
            Distribution::Pareto { scale, .. } => integrate_tail(term, scale, 8.0 * scale, 1e-13),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeartClass {
    /// Finite for every tested multiplier.
    Heart,
    /// Finite for some but not all multipliers.
    SpaceOnly,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeartRow {
    pub c: f64,
    /// `None` when the integral was declared divergent.
    pub moment: Option<f64>,
    pub analytic_finite: bool,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeartReport {
    pub rows: Vec<HeartRow>,
    pub classification: HeartClass,
    pub analytic_classification: HeartClass,
}

fn classify(flags: impl Iterator<Item = bool>) -> HeartClass {
    let (mut any, mut all) = (false, true);
    for f in flags {
        any |= f;
        all &= f;
    }
    if all && any {
        HeartClass::Heart
    } else if any {
        HeartClass::SpaceOnly
    } else {
        HeartClass::Outside
    }
}

/// Checks `E[Psi(cX)] < inf` for each `c`, numerically and analytically.
pub fn heart_membership(psi: &YoungFunction, dist: &Distribution, c_grid: &[f64]) -> Result<HeartReport> {
    dist.validate()?;
    if c_grid.is_empty() || c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return Err(Error::Domain("c grid must be non-empty and positive".into()));
    }
    let growth = psi.growth();
    let mut rows = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let moment = match dist.young_moment(psi, c) {
            TailIntegral::Finite(v) => Some(v),
            TailIntegral::Divergent => None,
            TailIntegral::NotConverged => {
                return Err(Error::NonConvergence { what: format!("moment integral at c = {c}"), iterations: 64 })
            }
        };
        let analytic_finite = dist.analytic_finite(growth, c);
        rows.push(HeartRow { c, moment, analytic_finite, agrees: moment.is_some() == analytic_finite });
    }
    Ok(HeartReport {
        classification: classify(rows.iter().map(|r| r.moment.is_some())),
        analytic_classification: classify(rows.iter().map(|r| r.analytic_finite)),
        rows,
    })
}

/// Result of a grid search for `Psi1(lambda x) >= Psi2(x)` on `x >= x0`.
///
/// Domination is an asymptotic property, so a verdict from finitely many
/// points is always heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominationVerdict {
    pub dominates: bool,
    pub lambda: Option<f64>,
    pub x0: Option<f64>,
    pub heuristic: bool,
}

pub fn young_dominates(
    psi1: &YoungFunction,
    psi2: &YoungFunction,
    lambda_grid: &[f64],
    x0_grid: &[f64],
    x_grid: &[f64],
) -> DominationVerdict {
    let mut lambdas = lambda_grid.to_vec();
    lambdas.sort_by(f64::total_cmp);
    let mut x0s = x0_grid.to_vec();
    x0s.sort_by(f64::total_cmp);
    for &lambda in &lambdas {
        for &x0 in &x0s {
            let ok = x_grid.iter().filter(|&&x| x >= x0).all(|&x| psi1.eval(lambda * x) >= psi2.eval(x));
            if ok {
                return DominationVerdict { dominates: true, lambda: Some(lambda), x0: Some(x0), heuristic: true };
            }
        }
    }
    DominationVerdict { dominates: false, lambda: None, x0: None, heuristic: true }
}
