//! Path-level samplers: excursion durations, Brownian and BES³ bridges,
//! excursions under γ_z, symmetric Cauchy paths and H-excursions.

use crate::error::{invalid, Result};
use crate::rng::{RngKey, Stream};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dt: f64,
    pub level_da: f64,
    pub seed: u64,
    pub replica_index: u64,
    /// Hard cap on the number of steps of one path. Longer paths get a
    /// uniformly coarser step `duration / max_steps`.
    pub max_steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { dt: 1e-4, level_da: 1e-3, seed: 0, replica_index: 0, max_steps: 1 << 21 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.level_da > 0.0 && self.level_da.is_finite()) {
            return Err(invalid(format!("level_da must be positive, got {}", self.level_da)));
        }
        if self.max_steps < 2 {
            return Err(invalid("max_steps must be at least 2"));
        }
        Ok(())
    }

    /// Stream key of this replica.
    pub fn key(&self) -> RngKey {
        RngKey::new(self.seed).split(self.replica_index)
    }

    /// Uniform time grid on `[0, r]` with the final partial step retained.
    pub fn times(&self, r: f64) -> Vec<f64> {
        let h = self.dt.max(r / self.max_steps as f64);
        let mut n = ((r / h).ceil() as usize).max(2);
        while n > 2 && (n - 1) as f64 * h >= r {
            n -= 1;
        }
        let h = if (n - 1) as f64 * h >= r { r / n as f64 } else { h };
        let mut t: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
        t.push(r);
        t
    }
}

/// A discretized excursion u = (x, y) with endpoint z and duration R(u).
#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionPath {
    pub z: f64,
    pub duration: f64,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ExcursionPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn height(&self) -> f64 {
        self.y.iter().copied().fold(0.0, f64::max)
    }

    /// Check the pinning and positivity invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n < 2 || self.x.len() != n || self.y.len() != n {
            return Err(invalid("malformed path: inconsistent lengths"));
        }
        if self.times[0] != 0.0 || self.x[0] != 0.0 || self.y[0] != 0.0 || self.y[n - 1] != 0.0 {
            return Err(invalid("malformed path: endpoints not pinned"));
        }
        if self.x[n - 1] != self.z {
            return Err(invalid("malformed path: x[last] != z"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("malformed path: times not strictly increasing"));
        }
        if self.y[1..n - 1].iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("malformed path: y <= 0 in the interior"));
        }
        Ok(())
    }

    /// Keeps every `every`-th sample and the endpoint. A path on the grid dt
    /// becomes an exact draw on the grid every·dt.
    pub fn subsample(&self, every: usize) -> ExcursionPath {
        let every = every.max(1);
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).step_by(every).collect();
        if idx.last() != Some(&(n - 1)) {
            idx.push(n - 1);
        }
        ExcursionPath {
            z: self.z,
            duration: self.duration,
            times: idx.iter().map(|&k| self.times[k]).collect(),
            x: idx.iter().map(|&k| self.x[k]).collect(),
            y: idx.iter().map(|&k| self.y[k]).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y")?;
        for k in 0..self.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.times[k], self.x[k], self.y[k])?;
        }
        Ok(())
    }
}

/// r = z²/(2W) with W ~ Exp(1).
pub fn sample_duration_with(z: f64, rng: &mut Stream) -> f64 {
    loop {
        let w: f64 = rng.sample(Exp1);
        if w > 0.0 {
            return z * z / (2.0 * w);
        }
    }
}

pub fn sample_duration(z: f64, key: RngKey) -> Result<f64> {
    if z == 0.0 || !z.is_finite() {
        return Err(invalid(format!("z must be finite and non-zero, got {z}")));
    }
    Ok(sample_duration_with(z, &mut key.stream()))
}

/// Fill `out` with a Brownian bridge from 0 to `endpoint` on `times`.
fn fill_bridge(times: &[f64], endpoint: f64, rng: &mut Stream, out: &mut [f64]) {
    let n = times.len();
    let r = times[n - 1];
    out[0] = 0.0;
    let mut b = 0.0;
    for k in 1..n {
        let z: f64 = rng.sample(StandardNormal);
        b += z * (times[k] - times[k - 1]).sqrt();
        out[k] = b;
    }
    let shift = b - endpoint;
    for k in 1..n - 1 {
        out[k] -= times[k] / r * shift;
    }
    out[n - 1] = endpoint;
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("bridge length must be positive, got {r}")));
    }
    Ok(())
}

pub fn sample_brownian_bridge(r: f64, endpoint: f64, grid: &GridSpec, key: RngKey) -> Result<Vec<f64>> {
    check_r(r)?;
    grid.validate()?;
    let times = grid.times(r);
    let mut out = vec![0.0; times.len()];
    fill_bridge(&times, endpoint, &mut key.stream(), &mut out);
    Ok(out)
}

fn fill_bessel3_bridge(times: &[f64], rng: &mut Stream, out: &mut [f64], scratch: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for _ in 0..3 {
        fill_bridge(times, 0.0, rng, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += s * s;
        }
    }
    for o in out.iter_mut() {
        *o = o.sqrt();
    }
    let n = out.len();
    out[0] = 0.0;
    out[n - 1] = 0.0;
}

pub fn sample_bessel3_bridge(r: f64, grid: &GridSpec, key: RngKey) -> Result<Vec<f64>> {
    check_r(r)?;
    grid.validate()?;
    let times = grid.times(r);
    let mut out = vec![0.0; times.len()];
    let mut scratch = vec![0.0; times.len()];
    fill_bessel3_bridge(&times, &mut key.stream(), &mut out, &mut scratch);
    Ok(out)
}

/// One excursion under γ_z: random duration, Brownian bridge 0→z for x and
/// an independent BES³ bridge 0→0 for y.
pub fn sample_excursion(z: f64, grid: &GridSpec, key: RngKey) -> Result<ExcursionPath> {
    grid.validate()?;
    let r = sample_duration(z, key.named("duration"))?;
    let times = grid.times(r);
    let n = times.len();
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    fill_bridge(&times, z, &mut key.named("x").stream(), &mut x);
    let mut scratch = vec![0.0; n];
    fill_bessel3_bridge(&times, &mut key.named("y").stream(), &mut y, &mut scratch);
    Ok(ExcursionPath { z, duration: r, times, x, y })
}

/// Symmetric Cauchy path with characteristic function e^{-2h|λ|} per step h.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyPath {
    pub start: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Increments with magnitude above the reporting threshold.
    pub jumps: Vec<(f64, f64)>,
}

/// Default jump-reporting threshold 10·√dt.
pub fn default_jump_threshold(dt: f64) -> f64 {
    10.0 * dt.sqrt()
}

/// Cauchy increment over a step of length h: 2h·tan(π(U − 1/2)).
pub fn cauchy_increment(h: f64, rng: &mut Stream) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return 2.0 * h * (PI * (u - 0.5)).tan();
        }
    }
}

fn step_times(horizon: f64, dt: f64) -> Vec<f64> {
    let n = (horizon / dt).ceil().max(1.0) as usize;
    let mut t: Vec<f64> = (0..n).map(|k| k as f64 * dt).filter(|&s| s < horizon).collect();
    t.push(horizon);
    t
}

pub fn sample_cauchy_path(start: f64, horizon: f64, grid: &GridSpec, key: RngKey) -> Result<CauchyPath> {
    sample_cauchy_path_with_threshold(start, horizon, grid, default_jump_threshold(grid.dt), key)
}

pub fn sample_cauchy_path_with_threshold(
    start: f64,
    horizon: f64,
    grid: &GridSpec,
    threshold: f64,
    key: RngKey,
) -> Result<CauchyPath> {
    grid.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    let times = step_times(horizon, grid.dt);
    let mut rng = key.stream();
    let mut values = Vec::with_capacity(times.len());
    let mut jumps = Vec::new();
    let mut eta = start;
    values.push(eta);
    for w in times.windows(2) {
        let d = cauchy_increment(w[1] - w[0], &mut rng);
        eta += d;
        values.push(eta);
        if d.abs() > threshold {
            jumps.push((w[1], d));
        }
    }
    Ok(CauchyPath { start, times, values, jumps })
}

/// Brownian real part and BES³ imaginary part from 0, stopped at the first
/// grid time where y ≥ a.
#[derive(Debug, Clone, PartialEq)]
pub struct HExcursionPath {
    pub start: f64,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub level: f64,
    pub truncated: bool,
}

impl HExcursionPath {
    /// Hitting time of the level and x at that time, both linearly
    /// interpolated inside the last grid cell.
    pub fn hit(&self) -> Option<(f64, f64)> {
        if self.truncated {
            return None;
        }
        let n = self.y.len();
        let (y0, y1) = (self.y[n - 2], self.y[n - 1]);
        let f = ((self.level - y0) / (y1 - y0)).clamp(0.0, 1.0);
        let t = self.times[n - 2] + f * (self.times[n - 1] - self.times[n - 2]);
        let x = self.x[n - 2] + f * (self.x[n - 1] - self.x[n - 2]);
        Some((t, x))
    }
}

pub fn sample_h_excursion(start: f64, a: f64, grid: &GridSpec, key: RngKey) -> Result<HExcursionPath> {
    grid.validate()?;
    if !(a > 0.0 && a.is_finite()) {
        return Err(invalid(format!("level must be positive, got {a}")));
    }
    let mut rng = key.stream();
    let sd = grid.dt.sqrt();
    let mut x = start;
    let mut w = [0.0f64; 3];
    let mut times = vec![0.0];
    let mut xs = vec![start];
    let mut ys = vec![0.0];
    let mut truncated = true;
    for k in 1..=grid.max_steps {
        let t = k as f64 * grid.dt;
        x += sd * rng.sample::<f64, _>(StandardNormal);
        for c in w.iter_mut() {
            *c += sd * rng.sample::<f64, _>(StandardNormal);
        }
        let y = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        times.push(t);
        xs.push(x);
        ys.push(y);
        if y >= a {
            truncated = false;
            break;
        }
    }
    Ok(HExcursionPath { start, times, x: xs, y: ys, level: a, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_formula() {
        assert!(sample_duration(0.0, RngKey::new(1)).is_err());
        assert!(sample_duration(2.0, RngKey::new(1)).unwrap() > 0.0);
    }

    #[test]
    fn grid_times_end_exactly() {
        let g = GridSpec { dt: 0.3, ..Default::default() };
        let t = g.times(1.0);
        assert_eq!(t, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        let t = g.times(0.01);
        assert_eq!(t.len(), 3);
        assert_eq!(*t.last().unwrap(), 0.01);
        let g = GridSpec { dt: 0.25, ..Default::default() };
        assert_eq!(g.times(1.0), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn step_cap_coarsens_grid() {
        let g = GridSpec { dt: 1e-4, max_steps: 100, ..Default::default() };
        let t = g.times(10.0);
        assert!(t.len() <= 101);
        assert_eq!(*t.last().unwrap(), 10.0);
    }

    #[test]
    fn bridge_is_pinned() {
        let g = GridSpec { dt: 1e-3, ..Default::default() };
        for s in 0..20 {
            let p = sample_brownian_bridge(0.7, -1.3, &g, RngKey::new(s)).unwrap();
            assert_eq!(p[0], 0.0);
            assert_eq!(*p.last().unwrap(), -1.3);
        }
        assert!(sample_brownian_bridge(0.0, 1.0, &g, RngKey::new(0)).is_err());
    }

    #[test]
    fn excursion_invariants() {
        let g = GridSpec { dt: 1e-3, ..Default::default() };
        for s in 0..50 {
            let e = sample_excursion(-0.8, &g, RngKey::new(s)).unwrap();
            e.validate().unwrap();
            let h = g.dt.max(e.duration / g.max_steps as f64);
            let worst = e.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            assert!(worst <= h * (1.0 + 1e-9), "{worst} {h} {}", e.duration);
            assert!(e.height() > 0.0 && e.height().is_finite());
        }
    }

    #[test]
    fn excursion_is_deterministic() {
        let g = GridSpec { dt: 1e-3, ..Default::default() };
        let a = sample_excursion(1.0, &g, RngKey::new(9)).unwrap();
        let b = sample_excursion(1.0, &g, RngKey::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn h_excursion_stops_at_level() {
        let g = GridSpec { dt: 1e-4, ..Default::default() };
        for s in 0..20 {
            let h = sample_h_excursion(0.5, 0.3, &g, RngKey::new(s)).unwrap();
            assert!(!h.truncated);
            let last = *h.y.last().unwrap();
            assert!(last >= 0.3 && last < 0.3 + 10.0 * g.dt.sqrt());
            assert!(h.y[..h.y.len() - 1].iter().all(|&v| v < 0.3));
            assert_eq!(h.x[0], 0.5);
        }
    }

    #[test]
    fn cauchy_path_shape() {
        let g = GridSpec { dt: 0.01, ..Default::default() };
        let p = sample_cauchy_path(2.0, 1.0, &g, RngKey::new(3)).unwrap();
        assert_eq!(p.values[0], 2.0);
        assert_eq!(*p.times.last().unwrap(), 1.0);
        for (t, _) in &p.jumps {
            assert!(p.times.contains(t));
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let g = GridSpec { dt: 0.1, ..Default::default() };
        let e = sample_excursion(1.0, &g, RngKey::new(0)).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,x,y\n"));
        assert_eq!(s.lines().count(), e.len() + 1);
    }
}
