//! The Lévy measure Λ(dy) = (2/π) e^{-y} (e^y − 1)^{-2} dy on y > −ln 2,
//! the Laplace exponent Ψ and a simulator for ξ.
//!
//! With u = e^y the density becomes (2/π) du / (u²(u − 1)²), whose partial
//! fractions give closed forms for every tail mass used here.

use crate::error::{domain, invalid, Result};
use crate::quad::{integrate, QuadOptions};
use crate::rng::{RngKey, Stream};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_2_PI, LN_2, PI};

/// Left end of the support of Λ.
pub const Y_MIN: f64 = -LN_2;

/// Below this |y| the compensated Ψ integrand is replaced by its Taylor series.
pub const SERIES_CUTOFF: f64 = 1e-4;

const TAIL_SPLIT: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyConfig {
    pub eps: f64,
    pub dt: f64,
    pub quadrature_tol: f64,
}

impl Default for LevyConfig {
    fn default() -> Self {
        LevyConfig { eps: 1e-3, dt: 1e-3, quadrature_tol: 1e-12 }
    }
}

impl LevyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < LN_2) {
            return Err(invalid(format!("eps must lie in (0, ln 2), got {}", self.eps)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.quadrature_tol > 0.0) {
            return Err(invalid("quadrature_tol must be positive"));
        }
        Ok(())
    }

    pub(crate) fn quad(&self) -> QuadOptions {
        QuadOptions::with_tol(self.quadrature_tol)
    }
}

/// Density of Λ; +∞ at y = 0.
pub fn levy_density(y: f64) -> f64 {
    if y <= Y_MIN {
        return 0.0;
    }
    if y == 0.0 {
        return f64::INFINITY;
    }
    let d = y.exp_m1();
    FRAC_2_PI * (-y).exp() / (d * d)
}

/// Λ((c, ∞)) for c > 0.
pub fn tail_pos(c: f64) -> f64 {
    debug_assert!(c > 0.0);
    // (π/2) Λ((c,∞)) = 1/u + 1/(u−1) − 2 ln(u/(u−1)) with w = 1/(u−1)
    let w = 1.0 / c.exp_m1();
    let v = if w < 0.1 {
        let mut s = 0.0;
        let mut p = w * w;
        for n in 3..40 {
            p *= w;
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * (n as f64 - 2.0) / n as f64 * p;
        }
        s
    } else {
        w / (1.0 + w) + w - 2.0 * w.ln_1p()
    };
    FRAC_2_PI * v
}

/// Λ((−ln 2, −c)) for 0 < c < ln 2.
pub fn tail_neg(c: f64) -> f64 {
    debug_assert!(c > 0.0);
    if c >= LN_2 {
        return 0.0;
    }
    // antiderivative in v = e^y: −1/v + 1/(1−v) + 2 ln(v/(1−v)), zero at v = 1/2
    let v = (-c).exp();
    let one_minus_v = -(-c).exp_m1();
    FRAC_2_PI * (-1.0 / v + 1.0 / one_minus_v + 2.0 * (v / one_minus_v).ln())
}

/// ∫_{|y|>eps} (e^y − 1) Λ(dy).
pub fn big_jump_compensator(eps: f64) -> f64 {
    // antiderivative of (e^y − 1)Λ(dy) in u = e^y: (2/π)(ln|u−1| − ln u + 1/u)
    let g = |ln_u: f64, ln_abs_u_minus_1: f64| ln_abs_u_minus_1 - ln_u + (-ln_u).exp();
    let pos = -g(eps, eps.exp_m1().ln());
    let neg = g(-eps, (-(-eps).exp_m1()).ln()) - 2.0;
    FRAC_2_PI * (pos + neg)
}

/// Compensated Ψ integrand (e^{qy} − 1 − q(e^y − 1))·density, finite at y = 0.
pub fn psi_integrand(q: f64, y: f64) -> f64 {
    if y.abs() < SERIES_CUTOFF {
        let c0 = 0.5 * (q * q - q);
        let c1 = (q * q * q - q) / 6.0 - (q * q - q);
        return FRAC_2_PI * (c0 + c1 * y);
    }
    let num = (q * y).exp_m1() - q * y.exp_m1();
    let d = y.exp_m1();
    if y > 20.0 {
        // e^{-3y}(e^{qy} − 1 − q(e^y − 1)) / (1 − e^{-y})²
        let s = -(-y).exp_m1();
        return FRAC_2_PI * (((q - 3.0) * y).exp() - q * (-2.0 * y).exp() + (q - 1.0) * (-3.0 * y).exp()) / (s * s);
    }
    FRAC_2_PI * num * (-y).exp() / (d * d)
}

/// ∫_{TAIL_SPLIT}^∞ of the Ψ integrand in closed form.
fn psi_far_tail(q: f64) -> f64 {
    let y = TAIL_SPLIT;
    let mut s = 0.0;
    for k in 0..4 {
        let kf = k as f64;
        let a = 3.0 - q + kf;
        s += (kf + 1.0)
            * ((-a * y).exp() / a - q * (-(2.0 + kf) * y).exp() / (2.0 + kf)
                + (q - 1.0) * (-(3.0 + kf) * y).exp() / (3.0 + kf));
    }
    FRAC_2_PI * s
}

/// Laplace exponent Ψ(q) = −(4/π)q + ∫(e^{qy} − 1 − q(e^y − 1))Λ(dy), q < 3.
pub fn psi(q: f64, cfg: &LevyConfig) -> Result<f64> {
    if !(q < 3.0) || !q.is_finite() {
        return Err(domain(format!("psi requires q < 3, got {q}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let opts = cfg.quad();
    let f = |y: f64| psi_integrand(q, y);
    let mut total = -2.0 * FRAC_2_PI * q;
    total += integrate(f, Y_MIN, -SERIES_CUTOFF, opts)?.value;
    total += integrate(f, -SERIES_CUTOFF, SERIES_CUTOFF, opts)?.value;
    // the slowly decaying e^{(q−3)y} tail gets its own panels
    let mut lo = SERIES_CUTOFF;
    for hi in [1.0, 5.0, TAIL_SPLIT] {
        total += integrate(f, lo, hi, opts)?.value;
        lo = hi;
    }
    total += psi_far_tail(q);
    Ok(total)
}

/// Drift, Gaussian variance and jump rates of the simulator at cutoff eps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffParams {
    pub eps: f64,
    pub drift: f64,
    pub sigma2: f64,
    pub rate_pos: f64,
    pub rate_neg: f64,
}

impl CutoffParams {
    pub fn new(eps: f64, opts: QuadOptions) -> Result<Self> {
        if !(eps > 0.0 && eps < LN_2) {
            return Err(invalid(format!("eps must lie in (0, ln 2), got {eps}")));
        }
        // y² Λ(dy) near 0: (2/π)(y / (e^y − 1))² e^{−y}
        let sigma2 = integrate(
            |y: f64| {
                if y == 0.0 {
                    FRAC_2_PI
                } else {
                    let r = y / y.exp_m1();
                    FRAC_2_PI * r * r * (-y).exp()
                }
            },
            -eps,
            eps,
            opts,
        )?
        .value;
        // (y − e^y + 1) Λ(dy) → −1/π at 0
        let small_comp = integrate(
            |y: f64| {
                if y.abs() < 1e-5 {
                    FRAC_2_PI * (-0.5 + y * (1.0 - 1.0 / 6.0))
                } else {
                    let d = y.exp_m1();
                    FRAC_2_PI * (y - d) * (-y).exp() / (d * d)
                }
            },
            -eps,
            eps,
            opts,
        )?
        .value;
        let drift = -2.0 * FRAC_2_PI - big_jump_compensator(eps) + small_comp;
        Ok(CutoffParams { eps, drift, sigma2, rate_pos: tail_pos(eps), rate_neg: tail_neg(eps) })
    }

    pub fn rate(&self) -> f64 {
        self.rate_pos + self.rate_neg
    }

    /// Exact draw from Λ restricted to {|y| > eps}.
    pub fn sample_jump(&self, rng: &mut Stream) -> f64 {
        if rng.random::<f64>() * self.rate() < self.rate_pos {
            sample_pos_jump(self.eps, rng)
        } else {
            sample_neg_jump(self.eps, rng)
        }
    }
}

/// y > eps: in w = e^y − 1 the density is ∝ 1/(w²(1+w)²); propose Pareto 1/w²
/// and accept with probability 1/(1+w)².
fn sample_pos_jump(eps: f64, rng: &mut Stream) -> f64 {
    let w_min = eps.exp_m1();
    loop {
        let u: f64 = rng.random();
        if u == 0.0 {
            continue;
        }
        let w = w_min / u;
        let acc = 1.0 / ((1.0 + w) * (1.0 + w));
        if rng.random::<f64>() < acc {
            return w.ln_1p();
        }
    }
}

/// −ln 2 < y < −eps: in w = 1 − e^y ∈ (w_min, 1/2) the density is
/// ∝ 1/(w²(1−w)²) = 1/w² + 2/w + 1/(1−w)² + 2/(1−w), sampled as a mixture.
fn sample_neg_jump(eps: f64, rng: &mut Stream) -> f64 {
    let w_min = -(-eps).exp_m1();
    let m1 = 1.0 / w_min - 2.0;
    let m2 = 2.0 * (0.5 / w_min).ln();
    let m3 = 2.0 - 1.0 / (1.0 - w_min);
    let m4 = 2.0 * (2.0 * (1.0 - w_min)).ln();
    let total = m1 + m2 + m3 + m4;
    let pick = rng.random::<f64>() * total;
    let u: f64 = rng.random();
    let w = if pick < m1 {
        1.0 / (1.0 / w_min - u * m1)
    } else if pick < m1 + m2 {
        w_min * (0.5 / w_min).powf(u)
    } else if pick < m1 + m2 + m3 {
        // v = 1 − w with density 1/v² on (1/2, 1 − w_min)
        1.0 - 1.0 / (2.0 - u * m3)
    } else {
        1.0 - 0.5 * (2.0 * (1.0 - w_min)).powf(u)
    };
    let w = w.clamp(w_min, 0.5);
    (-w).ln_1p().max(Y_MIN + f64::EPSILON)
}

/// A simulated path of ξ. Jump instants appear twice in `times`, first with
/// the pre-jump and then with the post-jump value.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    pub times: Vec<f64>,
    pub xi: Vec<f64>,
    pub jumps: Vec<(f64, f64)>,
    /// The path was stopped because ξ fell below the extinction floor.
    pub floor_hit: bool,
}

/// Reusable simulator of ξ at a fixed cutoff.
#[derive(Debug, Clone)]
pub struct LevySampler {
    pub cfg: LevyConfig,
    pub params: CutoffParams,
}

impl LevySampler {
    pub fn new(cfg: &LevyConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(LevySampler { cfg: *cfg, params: CutoffParams::new(cfg.eps, cfg.quad())? })
    }

    /// Simulate ξ on [0, horizon]. Stops early once ξ drops below `floor` or
    /// once the clock ∫₀ᵗ e^{ξ(s)} ds (trapezoid rule) reaches `clock_target`.
    pub fn sample_until(&self, horizon: f64, floor: f64, clock_target: f64, rng: &mut Stream) -> LevyPath {
        let p = &self.params;
        let sd = p.sigma2.sqrt();
        let rate = p.rate();
        let mut times = vec![0.0];
        let mut xi = vec![0.0];
        let mut jumps = Vec::new();
        let (mut t, mut x, mut clock) = (0.0f64, 0.0f64, 0.0f64);
        let mut next_jump = t + rng.sample::<f64, _>(Exp1) / rate;
        while t < horizon && x >= floor && clock < clock_target {
            let target = (t + self.cfg.dt).min(horizon);
            let jump_now = next_jump <= target;
            let t1 = if jump_now { next_jump } else { target };
            let h = t1 - t;
            if h > 0.0 {
                let x1 = x + p.drift * h + sd * h.sqrt() * rng.sample::<f64, _>(StandardNormal);
                clock += 0.5 * h * (x.exp() + x1.exp());
                x = x1;
            }
            t = t1;
            times.push(t);
            xi.push(x);
            if jump_now {
                let d = p.sample_jump(rng);
                x += d;
                jumps.push((t, d));
                times.push(t);
                xi.push(x);
                next_jump = t + rng.sample::<f64, _>(Exp1) / rate;
            }
        }
        LevyPath { times, xi, jumps, floor_hit: x < floor }
    }
}

pub fn sample_levy_xi(horizon: f64, cfg: &LevyConfig, key: RngKey) -> Result<LevyPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    let s = LevySampler::new(cfg)?;
    Ok(s.sample_until(horizon, f64::NEG_INFINITY, f64::INFINITY, &mut key.stream()))
}

/// E[ξ_1] = Ψ'(0) = −4/π + ∫(y − e^y + 1)Λ(dy), by quadrature.
pub fn psi_prime_zero(cfg: &LevyConfig) -> Result<f64> {
    let opts = cfg.quad();
    let f = |y: f64| {
        if y.abs() < SERIES_CUTOFF {
            FRAC_2_PI * (-0.5 + y * (5.0 / 6.0))
        } else if y > 20.0 {
            let s = -(-y).exp_m1();
            FRAC_2_PI * ((y + 1.0) * (-3.0 * y).exp() - (-2.0 * y).exp()) / (s * s)
        } else {
            let d = y.exp_m1();
            FRAC_2_PI * (y - d) * (-y).exp() / (d * d)
        }
    };
    let mut s = -4.0 / PI;
    s += integrate(f, Y_MIN, -SERIES_CUTOFF, opts)?.value;
    s += integrate(f, -SERIES_CUTOFF, SERIES_CUTOFF, opts)?.value;
    s += integrate(f, SERIES_CUTOFF, 1.0, opts)?.value;
    s += crate::quad::integrate_to_inf(f, 1.0, opts)?.value;
    Ok(s)
}
