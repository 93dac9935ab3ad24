//! Localisation of a sampled price process by a single positive integrand.
//!
//! Given nested predictable sets `D_1 ⊆ D_2 ⊆ ...` whose union is everything,
//! each stopped integral `1_{D_n} . S` is made `Psi`-integrable by a scale
//! `c_n`, and the pieces are glued into
//! `phi = sum_n c_n d_n 1_{D_n}`, `d_n = h 2^-n / (1 + b_n)`,
//! `b_n = E[Psi(c_n (1_{D_n} . S)*_T)]`, `1/h = sum_n 2^-n / (1 + b_n)`.
//! Then `sum d_n = 1`, `0 < phi <= 1`, and by convexity
//! `E[Psi((phi . S)*_T)] <= sum d_n b_n <= h <= 2 (1 + b_1)`.

use serde::Serialize;

use super::sample::PathSample;
use crate::error::{Error, Result};
use crate::orlicz::YoungFunction;

/// Predictable set of (step, path) pairs; step `t` is the move from date
/// `t - 1` to date `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictableSet {
    All,
    /// Steps whose starting maximal price `S*_{t-1}` is at most the level.
    RunningMaxAtMost(f64),
    /// Steps `t <= m`.
    UpToTime(usize),
}

impl PredictableSet {
    fn contains(&self, t: usize, running_max_before: f64) -> bool {
        match *self {
            PredictableSet::All => true,
            PredictableSet::RunningMaxAtMost(k) => running_max_before <= k,
            PredictableSet::UpToTime(m) => t <= m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizeOptions {
    /// Target for `E[Psi(c (1_D . S)*_T)]` when halving `c`.
    pub budget: f64,
    pub max_halvings: usize,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        LocalizeOptions { budget: 1.0, max_halvings: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Localization {
    pub c: Vec<f64>,
    pub halvings: Vec<usize>,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub h: f64,
    /// `phi` per path and step (steps `1..T`).
    #[serde(skip)]
    pub phi: Vec<Vec<f64>>,
    pub phi_min: f64,
    pub phi_max: f64,
    /// `E[Psi((phi . S)*_T)]` on the sample.
    pub localized_moment: f64,
    /// `sum d_n b_n`.
    pub series: f64,
    /// `2 (1 + b_1)`.
    pub limit: f64,
    pub holds: bool,
}

/// Maximal process of the integral `g . S` for one path, where `g[t-1]`
/// weights step `t`.
fn integral_max(sample: &PathSample, i: usize, g: &[f64]) -> f64 {
    let d = sample.assets();
    let mut acc = vec![0.0_f64; d];
    let mut run = vec![0.0_f64; d];
    for t in 1..sample.times() {
        let (prev, cur) = (sample.price(i, t - 1), sample.price(i, t));
        for a in 0..d {
            acc[a] += g[t - 1] * (cur[a] - prev[a]);
            run[a] = run[a].max(acc[a].abs());
        }
    }
    run.iter().sum()
}

fn psi_moment(sample: &PathSample, psi: &YoungFunction, maxima: &[f64], c: f64) -> f64 {
    sample.expectation(|i| psi.eval(c * maxima[i]))
}

pub fn sigma_localize(
    sample: &PathSample,
    psi: &YoungFunction,
    sets: &[PredictableSet],
    opts: &LocalizeOptions,
) -> Result<Localization> {
    if sets.is_empty() {
        return Err(Error::InvalidSample("at least one predictable set is required".into()));
    }
    let steps = sample.times() - 1;
    let smax = sample.maximal_process();
    // indicators[n][i][t-1]
    let indicators: Vec<Vec<Vec<bool>>> = sets
        .iter()
        .map(|set| (0..sample.len()).map(|i| (1..=steps).map(|t| set.contains(t, smax[i][t - 1])).collect()).collect())
        .collect();
    for (n, pair) in indicators.windows(2).enumerate() {
        if pair[0].iter().flatten().zip(pair[1].iter().flatten()).any(|(&a, &b)| a && !b) {
            return Err(Error::InvalidSample(format!("set {} is not contained in set {}", n + 1, n + 2)));
        }
    }
    if indicators.last().unwrap().iter().any(|row| row.iter().any(|&b| !b)) {
        return Err(Error::InvalidSample("the last set does not cover every step of the sample".into()));
    }
    let mut c = Vec::new();
    let mut halvings = Vec::new();
    let mut b = Vec::new();
    for (n, ind) in indicators.iter().enumerate() {
        let maxima: Vec<f64> = (0..sample.len())
            .map(|i| {
                let g: Vec<f64> = ind[i].iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
                integral_max(sample, i, &g)
            })
            .collect();
        let mut cn = 1.0;
        let mut k = 0;
        let mut bn = psi_moment(sample, psi, &maxima, cn);
        while !(bn <= opts.budget) {
            if k == opts.max_halvings {
                return Err(Error::NonConvergence { what: format!("localizing scale for set {}", n + 1), iterations: k });
            }
            cn *= 0.5;
            k += 1;
            bn = psi_moment(sample, psi, &maxima, cn);
        }
        c.push(cn);
        halvings.push(k);
        b.push(bn);
    }
    let weights: Vec<f64> = b.iter().enumerate().map(|(n, bn)| 0.5f64.powi(n as i32 + 1) / (1.0 + bn)).collect();
    let h = 1.0 / weights.iter().sum::<f64>();
    let d: Vec<f64> = weights.iter().map(|w| h * w).collect();
    let phi: Vec<Vec<f64>> = (0..sample.len())
        .map(|i| {
            (0..steps)
                // sum c_n d_n <= sum d_n = 1; the clamp only removes round-off
                .map(|s| (0..sets.len()).filter(|&n| indicators[n][i][s]).map(|n| c[n] * d[n]).sum::<f64>().min(1.0))
                .collect()
        })
        .collect();
    let localized_moment = sample.expectation(|i| psi.eval(integral_max(sample, i, &phi[i])));
    let series: f64 = d.iter().zip(&b).map(|(x, y)| x * y).sum();
    let limit = 2.0 * (1.0 + b[0]);
    let (phi_min, phi_max) = phi
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let holds = phi_min > 0.0 && phi_max <= 1.0 && localized_moment <= limit;
    Ok(Localization { c, halvings, b, d, h, phi, phi_min, phi_max, localized_moment, series, limit, holds })
}
