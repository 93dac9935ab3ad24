//! Weighted samples of discrete-time price paths.
//!
//! Text format: one path per record, `weight,v...` with the values listed
//! time-major (all assets at time 0, then time 1, ...). Lines starting with
//! `#` are comments; `# assets=d` sets the asset count (default 1).

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    assets: usize,
    times: usize,
    weights: Vec<f64>,
    /// Path-major, then time-major, then asset.
    values: Vec<f64>,
}

impl PathSample {
    pub fn new(assets: usize, times: usize, weights: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if assets == 0 || times == 0 {
            return Err(Error::InvalidSample("need at least one asset and one time".into()));
        }
        if values.len() != weights.len() * assets * times {
            return Err(Error::InvalidSample(format!(
                "{} values for {} paths of {times} times and {assets} assets",
                values.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidSample("empty sample".into()));
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidSample(format!("path {i}: weight must be positive and finite")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite price".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(PathSample { assets, times, weights, values })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut assets = 1;
        let mut weights = Vec::new();
        let mut values = Vec::new();
        let mut times = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(v) = c.trim().strip_prefix("assets=") {
                    assets = v.trim().parse().map_err(|_| {
                        Error::InvalidSample(format!("line {}: bad asset count {v:?}", lineno + 1))
                    })?;
                }
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidSample(format!("line {}: {e}", lineno + 1)))?;
            let n = fields.len().saturating_sub(1);
            if n == 0 || !n.is_multiple_of(assets) {
                return Err(Error::InvalidSample(format!(
                    "line {}: {n} values is not a multiple of {assets} assets",
                    lineno + 1
                )));
            }
            match times {
                None => times = Some(n / assets),
                Some(t) if t != n / assets => {
                    return Err(Error::InvalidSample(format!("line {}: expected {t} times, found {}", lineno + 1, n / assets)))
                }
                _ => {}
            }
            weights.push(fields[0]);
            values.extend_from_slice(&fields[1..]);
        }
        PathSample::new(assets, times.unwrap_or(0), weights, values)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# assets={}\n", self.assets);
        for i in 0..self.len() {
            out.push_str(&format!("{:e}", self.weights[i]));
            for v in self.path(i) {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    /// Number of dates, including time 0.
    pub fn times(&self) -> usize {
        self.times
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Normalised weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let w = self.assets * self.times;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn price(&self, i: usize, t: usize) -> &[f64] {
        let p = self.path(i);
        &p[t * self.assets..(t + 1) * self.assets]
    }

    /// A copy with every price multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        PathSample { values: self.values.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    /// `S*_t = sum_i max_{s <= t} |S^i_s|` for every path and date.
    pub fn maximal_process(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                let mut run = vec![0.0_f64; self.assets];
                (0..self.times)
                    .map(|t| {
                        for (r, v) in run.iter_mut().zip(self.price(i, t)) {
                            *r = r.max(v.abs());
                        }
                        run.iter().sum()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(i, w)| crate::numeric::mul0(*w, f(i))).sum()
    }
}

/// Compound-Poisson paths with double-exponential jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompoundPoisson {
    pub s0: f64,
    /// Expected number of jumps per step.
    pub intensity: f64,
    pub p_up: f64,
    pub eta_up: f64,
    pub eta_down: f64,
}

impl CompoundPoisson {
    /// Draws `paths` equally weighted single-asset paths of `steps` steps.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, paths: usize, steps: usize) -> Result<PathSample> {
        let bad = |m: &str| Error::InvalidSample(m.to_string());
        let poisson = Poisson::new(self.intensity).map_err(|_| bad("intensity must be positive"))?;
        let up = Exp::new(self.eta_up).map_err(|_| bad("upward rate must be positive"))?;
        let down = Exp::new(self.eta_down).map_err(|_| bad("downward rate must be positive"))?;
        if !(0.0..=1.0).contains(&self.p_up) {
            return Err(bad("upward jump probability must lie in [0, 1]"));
        }
        let mut values = Vec::with_capacity(paths * (steps + 1));
        for _ in 0..paths {
            let mut s = self.s0;
            values.push(s);
            for _ in 0..steps {
                let jumps = poisson.sample(rng) as u64;
                for _ in 0..jumps {
                    s += if rng.gen::<f64>() < self.p_up { up.sample(rng) } else { -down.sample(rng) };
                }
                values.push(s);
            }
        }
        PathSample::new(1, steps + 1, vec![1.0; paths], values)
    }
}
