//! Lamperti transform of ξ into the self-similar Markov process Z and the
//! Cauchy-weighted oracle for the locally largest fragment.

use crate::error::{invalid, numeric, Result};
use crate::levy::{LevyConfig, LevyPath, LevySampler};
use crate::rng::RngKey;
use crate::sampling::{cauchy_increment, GridSpec};
use serde::{Deserialize, Serialize};

/// End of a cell's simulated life, measured in level units from its birth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Lifetime {
    /// |Z| dropped below the extinction floor at this level.
    Dead(f64),
    /// Still alive when the simulation horizon was exhausted.
    Censored(f64),
}

impl Lifetime {
    pub fn level(&self) -> f64 {
        match *self {
            Lifetime::Dead(a) | Lifetime::Censored(a) => a,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, Lifetime::Censored(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsmpPath {
    pub z: f64,
    /// Requested levels covered by the simulated clock.
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
    pub zeta: Lifetime,
    /// (level, ΔZ) for every jump of ξ.
    pub jumps: Vec<(f64, f64)>,
}

impl SsmpPath {
    /// Z at a requested level; 0 after death, `None` past censoring.
    pub fn value_at_index(&self, i: usize) -> Option<f64> {
        if i < self.values.len() {
            Some(self.values[i])
        } else if self.zeta.is_censored() {
            None
        } else {
            Some(0.0)
        }
    }
}

/// Trapezoid cumulative of e^{ξ} along the path.
pub fn lamperti_clock(xi: &LevyPath) -> Vec<f64> {
    let mut c = Vec::with_capacity(xi.times.len());
    c.push(0.0);
    let mut acc = 0.0;
    for k in 1..xi.times.len() {
        let h = xi.times[k] - xi.times[k - 1];
        if h > 0.0 {
            acc += 0.5 * h * (xi.xi[k - 1].exp() + xi.xi[k].exp());
        }
        c.push(acc);
    }
    c
}

/// Z_a = z·exp(ξ(τ(a/|z|))) on an increasing level grid; negative z gives
/// the negated process started from |z|.
pub fn lamperti_z(xi: &LevyPath, z: f64, levels: &[f64]) -> Result<SsmpPath> {
    if z == 0.0 || !z.is_finite() {
        return Err(invalid(format!("z must be finite and non-zero, got {z}")));
    }
    if levels.windows(2).any(|w| w[1] < w[0]) || levels.first().is_some_and(|&a| a < 0.0) {
        return Err(invalid("levels must be non-negative and non-decreasing"));
    }
    let az = z.abs();
    let clock = lamperti_clock(xi);
    let last = *clock.last().expect("path has a starting point");
    let mut out_levels = Vec::new();
    let mut values = Vec::new();
    let mut k = 0;
    for &a in levels {
        let target = a / az;
        if target > last {
            break;
        }
        while k + 1 < clock.len() && clock[k + 1] < target {
            k += 1;
        }
        let v = if k + 1 >= clock.len() || clock[k + 1] == clock[k] {
            xi.xi[k]
        } else {
            let f = (target - clock[k]) / (clock[k + 1] - clock[k]);
            xi.xi[k] + f * (xi.xi[k + 1] - xi.xi[k])
        };
        out_levels.push(a);
        values.push(z * v.exp());
    }
    let mut jumps = Vec::with_capacity(xi.jumps.len());
    for k in 0..xi.times.len().saturating_sub(1) {
        if xi.times[k + 1] == xi.times[k] && xi.xi[k + 1] != xi.xi[k] {
            jumps.push((az * clock[k], z * (xi.xi[k + 1].exp() - xi.xi[k].exp())));
        }
    }
    let zeta = if xi.floor_hit { Lifetime::Dead(az * last) } else { Lifetime::Censored(az * last) };
    Ok(SsmpPath { z, levels: out_levels, values, zeta, jumps })
}

/// Simulates Z directly on a level grid, running ξ until the clock covers
/// the last level or |Z| falls below `floor_rel·|z|`.
#[derive(Debug, Clone)]
pub struct SsmpSampler {
    pub levy: LevySampler,
    pub floor_rel: f64,
    pub max_xi_time: f64,
}

impl SsmpSampler {
    pub fn new(cfg: &LevyConfig, floor_rel: f64) -> Result<Self> {
        if !(floor_rel > 0.0 && floor_rel < 1.0) {
            return Err(invalid(format!("floor_rel must lie in (0, 1), got {floor_rel}")));
        }
        Ok(SsmpSampler { levy: LevySampler::new(cfg)?, floor_rel, max_xi_time: 1e4 })
    }

    pub fn sample(&self, z: f64, levels: &[f64], key: RngKey) -> Result<SsmpPath> {
        if z == 0.0 || !z.is_finite() {
            return Err(invalid(format!("z must be finite and non-zero, got {z}")));
        }
        let top = levels.last().copied().unwrap_or(0.0);
        let xi = self.levy.sample_until(self.max_xi_time, self.floor_rel.ln(), top / z.abs(), &mut key.stream());
        lamperti_z(&xi, z, levels)
    }
}

/// Weighted empirical law of the locally largest fragment built from
/// symmetric Cauchy paths.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    pub levels: Vec<f64>,
    /// η on `levels` for every kept path.
    pub paths: Vec<Vec<f64>>,
    /// η at the final level for every kept path.
    pub values: Vec<f64>,
    /// x²/η_a² for every kept path.
    pub weights: Vec<f64>,
    pub n_total: usize,
}

impl WeightedSample {
    pub fn n_kept(&self) -> usize {
        self.values.len()
    }

    pub fn rejection_rate(&self) -> f64 {
        1.0 - self.n_kept() as f64 / self.n_total as f64
    }

    /// Σw/N, an estimate of the probability that Ξ is still alive at level a.
    pub fn alive_mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.n_total as f64
    }

    /// Effective sample size (Σw)²/Σw² of the kept paths.
    pub fn ess(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        if s2 == 0.0 {
            0.0
        } else {
            s * s / s2
        }
    }
}

/// Cauchy paths η from x with scale 2, kept when every increment satisfies
/// |η_b| ≥ |Δη_b| and weighted by x²/η_a².
pub fn cauchy_weighted_xi_oracle(x: f64, a: f64, grid: &GridSpec, key: RngKey, n: usize) -> Result<WeightedSample> {
    grid.validate()?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(format!("start must be positive, got {x}")));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("level must be positive, got {a}")));
    }
    if n == 0 {
        return Err(invalid("need at least one path"));
    }
    let steps = (a / grid.dt).ceil().max(1.0) as usize;
    let h = a / steps as f64;
    let every = ((grid.level_da / h).round() as usize).max(1);
    let mut levels: Vec<f64> = (0..=steps).step_by(every).map(|k| k as f64 * h).collect();
    if steps % every != 0 {
        levels.push(a);
    }
    let mut out = WeightedSample { levels, paths: Vec::new(), values: Vec::new(), weights: Vec::new(), n_total: n };
    'paths: for i in 0..n {
        let mut rng = key.split(i as u64).stream();
        let mut eta = x;
        let mut path = Vec::with_capacity(out.levels.len());
        path.push(eta);
        for k in 1..=steps {
            let d = cauchy_increment(h, &mut rng);
            eta += d;
            if eta.abs() < d.abs() {
                continue 'paths;
            }
            if k % every == 0 || k == steps {
                path.push(eta);
            }
        }
        out.weights.push(x * x / (eta * eta));
        out.values.push(eta);
        out.paths.push(path);
    }
    if out.values.is_empty() {
        return Err(numeric(format!("insufficient sample: all {n} Cauchy paths rejected")));
    }
    Ok(out)
}
