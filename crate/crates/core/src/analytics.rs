//! Cumulant function κ, Φ⁺, the roots ω±, the Green function R_C, and the
//! estimators for the martingale M_a and the tilted law μ_z.

use crate::error::{domain, invalid, numeric, Result};
use crate::levelcut::{fragments_at_level, time_in_small_excursions, SplitTree};
use crate::levy::{psi, LevyConfig};
use crate::quad::integrate;
use crate::rng::RngKey;
use crate::sampling::ExcursionPath;
use crate::stats::{bootstrap_ci, ess, ks_weighted, ks_weighted_bootstrap_p, mean_se};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::{FRAC_2_PI, PI};

/// κ(q) = Ψ(q) + ∫_{y<0} (1 − e^y)^q Λ(dy) for 1 < q < 3.
pub fn kappa(q: f64, cfg: &LevyConfig) -> Result<f64> {
    if !(q > 1.0 && q < 3.0) {
        return Err(domain(format!("kappa requires 1 < q < 3, got {q}")));
    }
    // with s = (1 − e^y)^{q−1} the negative-jump integral is smooth
    let p = 1.0 / (q - 1.0);
    let f = |s: f64| {
        let d = 1.0 - s.powf(p);
        1.0 / (d * d)
    };
    let neg = FRAC_2_PI * p * integrate(f, 0.0, 2f64.powf(1.0 - q), cfg.quad())?.value;
    Ok(psi(q, cfg)? + neg)
}

/// κ(q) = −2 cos(πq)/π · Γ(q − 1)Γ(3 − q).
pub fn kappa_closed(q: f64) -> Result<f64> {
    if !(q > 1.0 && q < 3.0) {
        return Err(domain(format!("kappa_closed requires 1 < q < 3, got {q}")));
    }
    if q == 1.5 || q == 2.5 {
        return Ok(0.0);
    }
    if q == 2.0 {
        return Ok(-FRAC_2_PI);
    }
    Ok(-2.0 * (PI * q).cos() / PI * gamma(q - 1.0) * gamma(3.0 - q))
}

/// Φ⁺(q) = −2 Γ(½ − q)Γ(3/2 + q) / (Γ(−q)Γ(1 + q)) on −3/2 < q < 1/2.
pub fn phi_plus(q: f64) -> Result<f64> {
    if !(q > -1.5 && q < 0.5) {
        return Err(domain(format!("phi_plus requires -3/2 < q < 1/2, got {q}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    // 1/(Γ(−q)Γ(1 + q)) = −sin(πq)/π removes the pole at q = 0
    Ok(FRAC_2_PI * (PI * q).sin() * gamma(0.5 - q) * gamma(1.5 + q))
}

fn bisect<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (mut flo, fhi) = (f(lo)?, f(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(numeric(format!("no sign change of kappa on [{lo}, {hi}]")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Roots ω₋ < 2 < ω₊ of κ by bisection.
pub fn find_roots(cfg: &LevyConfig) -> Result<(f64, f64)> {
    let k = |q: f64| kappa(q, cfg);
    Ok((bisect(k, 1.05, 2.0, 1e-10)?, bisect(k, 2.0, 2.95, 1e-10)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantGrid {
    pub q: Vec<f64>,
    pub kappa_numeric: Vec<f64>,
    pub kappa_closed: Vec<f64>,
    /// Φ⁺(q − 5/2).
    pub phi_plus: Vec<f64>,
    pub omega_minus: f64,
    pub omega_plus: f64,
}

impl CumulantGrid {
    pub fn max_abs_diff(&self) -> f64 {
        self.kappa_numeric.iter().zip(&self.kappa_closed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "q,kappa_numeric,kappa_closed")?;
        for i in 0..self.q.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.q[i], self.kappa_numeric[i], self.kappa_closed[i])?;
        }
        Ok(())
    }
}

pub fn cumulant_grid(qs: &[f64], cfg: &LevyConfig) -> Result<CumulantGrid> {
    let mut g = CumulantGrid {
        q: qs.to_vec(),
        kappa_numeric: Vec::new(),
        kappa_closed: Vec::new(),
        phi_plus: Vec::new(),
        omega_minus: 0.0,
        omega_plus: 0.0,
    };
    for &q in qs {
        g.kappa_numeric.push(kappa(q, cfg)?);
        g.kappa_closed.push(kappa_closed(q)?);
        g.phi_plus.push(phi_plus(q - 2.5)?);
    }
    (g.omega_minus, g.omega_plus) = find_roots(cfg)?;
    Ok(g)
}

/// R_C(z) = (1/2π) ln((s + 1)/|s − 1|) with s = √((1 + z̃)/(1 − z̃)), z̃ = 2z/C.
pub fn green_rc(z: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(invalid(format!("C must be positive, got {c}")));
    }
    let zt = 2.0 * z / c;
    if !(zt.abs() <= 1.0) {
        return Err(domain(format!("green_rc requires |z| <= C/2, got z={z}, C={c}")));
    }
    if zt.abs() == 1.0 {
        return Ok(0.0);
    }
    if zt == 0.0 {
        return Ok(f64::INFINITY);
    }
    let s = ((1.0 + zt) / (1.0 - zt)).sqrt();
    let sm1 = 2.0 * zt.abs() / ((1.0 - zt) * (s + 1.0));
    Ok(((s + 1.0) / sm1).ln() / (2.0 * PI))
}

/// M_a = Σ|Δe_i^{a,+}|², the sum of squared fragment sizes above level a;
/// zero when the excursion stays below a.
pub fn martingale_value(tree: &SplitTree, path: &ExcursionPath, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(invalid(format!("level must be positive, got {a}")));
    }
    Ok(fragments_at_level(tree, path, a)?.sizes.iter().map(|s| s * s).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub z: f64,
    pub a: f64,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_boot: usize,
    pub target: f64,
    /// No sampled excursion reached the level.
    pub vacuous: bool,
}

impl MartingaleReport {
    /// |mean − z²| ≤ max(3·SE, 5% of z²).
    pub fn within_tolerance(&self) -> bool {
        (self.mean - self.target).abs() <= (3.0 * self.se).max(0.05 * self.target)
    }
}

/// Mean of M_a over excursions sampled under γ_z, with a bootstrap 95% CI.
pub fn estimate_m_a(values: &[f64], z: f64, a: f64, n_boot: usize, key: RngKey) -> Result<MartingaleReport> {
    let m = mean_se(values)?;
    let (ci_lo, ci_hi) = bootstrap_ci(values, |v| v.iter().sum::<f64>() / v.len() as f64, n_boot, 0.95, key)?;
    Ok(MartingaleReport {
        z,
        a,
        n: values.len(),
        mean: m.mean,
        se: m.se,
        ci_lo,
        ci_hi,
        n_boot,
        target: z * z,
        vacuous: values.iter().all(|&v| v == 0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationReport {
    pub z: f64,
    pub c: f64,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub r_c: f64,
    /// π z² R_C(z/2).
    pub target: f64,
}

/// Mean of T_C over excursions compared with π z² R_C(z/2).
pub fn estimate_t_c(samples: &[(SplitTree, ExcursionPath)], z: f64, c: f64) -> Result<OccupationReport> {
    let vals = samples.iter().map(|(t, p)| time_in_small_excursions(t, p, c)).collect::<Result<Vec<_>>>()?;
    let m = mean_se(&vals)?;
    let r_c = green_rc(z / 2.0, c)?;
    Ok(OccupationReport { z, c, n: vals.len(), mean: m.mean, se: m.se, r_c, target: PI * z * z * r_c })
}

/// Interpolated (t, x) at the first time y reaches a.
pub fn first_hit(path: &ExcursionPath, a: f64) -> Option<(f64, f64)> {
    let k = path.y.iter().position(|&v| v >= a)?;
    if k == 0 {
        return Some((path.times[0], path.x[0]));
    }
    let f = (a - path.y[k - 1]) / (path.y[k] - path.y[k - 1]);
    let t = path.times[k - 1] + f * (path.times[k] - path.times[k - 1]);
    Some((t, path.x[k - 1] + f * (path.x[k] - path.x[k - 1])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuCheckReport {
    pub z: f64,
    pub a: f64,
    pub ks_d: f64,
    pub ks_p: f64,
    pub bootstrap_p: f64,
    pub ess: f64,
    pub mean_weight: f64,
    pub se_weight: f64,
}

/// Compares x(T_a) under γ_z reweighted by M_a/z² with x(T_a) under the
/// H-excursion law.
///
/// `gamma_side` holds (M_a, x(T_a)) per excursion, with x(T_a) ignored when
/// M_a = 0.
pub fn mu_z_check(
    gamma_side: &[(f64, f64)],
    reference: &[f64],
    z: f64,
    a: f64,
    n_boot: usize,
    key: RngKey,
) -> Result<MuCheckReport> {
    let weights: Vec<f64> = gamma_side.iter().map(|p| p.0 / (z * z)).collect();
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(invalid("weights must be non-negative"));
    }
    let m = mean_se(&weights)?;
    let (xs, ws): (Vec<f64>, Vec<f64>) = gamma_side.iter().filter(|p| p.0 > 0.0).map(|p| (p.1, p.0 / (z * z))).unzip();
    let e = ess(&ws);
    if e < 100.0 {
        return Err(numeric(format!("insufficient effective sample size {e:.1}")));
    }
    let ones = vec![1.0; reference.len()];
    let ks = ks_weighted(&xs, &ws, reference, &ones)?;
    let bootstrap_p = ks_weighted_bootstrap_p(&xs, &ws, reference, &ones, n_boot, key)?;
    Ok(MuCheckReport {
        z,
        a,
        ks_d: ks.d,
        ks_p: ks.p,
        bootstrap_p,
        ess: e,
        mean_weight: m.mean,
        se_weight: m.se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_closed_values() {
        assert_eq!(kappa_closed(2.0).unwrap(), -FRAC_2_PI);
        assert_eq!(kappa_closed(1.5).unwrap(), 0.0);
        assert_eq!(kappa_closed(2.5).unwrap(), 0.0);
        assert!(kappa_closed(1.0).is_err() && kappa_closed(3.0).is_err());
        // continuous through q = 2
        assert!((kappa_closed(2.0 + 1e-9).unwrap() + FRAC_2_PI).abs() < 1e-7);
    }

    #[test]
    fn kappa_numeric_values() {
        let cfg = LevyConfig::default();
        assert!((kappa(2.0, &cfg).unwrap() + FRAC_2_PI).abs() < 1e-8);
        assert!(kappa(1.5, &cfg).unwrap().abs() < 1e-8);
        assert!(kappa(2.5, &cfg).unwrap().abs() < 1e-8);
        assert!(kappa(1.0, &cfg).is_err());
    }

    #[test]
    fn phi_plus_values() {
        assert_eq!(phi_plus(0.0).unwrap(), 0.0);
        assert!((phi_plus(-0.5).unwrap() + FRAC_2_PI).abs() < 1e-14);
        assert!(phi_plus(0.5).is_err());
    }

    #[test]
    fn green_function_shape() {
        assert_eq!(green_rc(2.0, 4.0).unwrap(), 0.0);
        assert_eq!(green_rc(-2.0, 4.0).unwrap(), 0.0);
        assert!(green_rc(0.0, 4.0).unwrap().is_infinite());
        assert!(green_rc(2.1, 4.0).is_err());
        let d = (green_rc(0.3, 2.0).unwrap() - green_rc(-0.3, 2.0).unwrap()).abs();
        assert!(d < 1e-12);
        assert!((PI * green_rc(0.5, 4.0).unwrap() - 1.0317).abs() < 1e-3);
    }

    #[test]
    fn first_hit_interpolates() {
        let p = ExcursionPath {
            z: 1.0,
            duration: 2.0,
            times: vec![0.0, 1.0, 2.0],
            x: vec![0.0, 2.0, 1.0],
            y: vec![0.0, 1.0, 0.0],
        };
        assert_eq!(first_hit(&p, 0.5), Some((0.5, 1.0)));
        assert_eq!(first_hit(&p, 1.5), None);
    }
}
