//! Sample statistics: means, bootstrap errors, Kolmogorov–Smirnov tests and
//! weighted least squares.

use crate::error::{invalid, Result};
use crate::rng::RngKey;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn mean_se(xs: &[f64]) -> Result<MeanSe> {
    if xs.len() < 2 {
        return Err(invalid("need at least two observations"));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MeanSe { mean, se: (var / n).sqrt(), n: xs.len() })
}

/// Effective sample size (Σw)²/Σw².
pub fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// P(K > λ) for the Kolmogorov distribution, 2Σ(−1)^{k−1} e^{−2k²λ²}.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    // the CDF is below 1e-11 here and the series converges slowly
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let t = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { t } else { -t };
        if t < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
    pub n_a: f64,
    pub n_b: f64,
}

fn ks_stat(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let wa: f64 = a.iter().map(|p| p.1).sum();
    let wb: f64 = b.iter().map(|p| p.1).sum();
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb, mut d) = (0.0f64, 0.0f64, 0.0f64);
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i].0 == v {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == v {
            fb += b[j].1;
            j += 1;
        }
        d = d.max((fa / wa - fb / wb).abs());
    }
    d
}

fn weighted_sorted(xs: &[f64], ws: &[f64]) -> Result<Vec<(f64, f64)>> {
    if xs.len() != ws.len() {
        return Err(invalid("values and weights differ in length"));
    }
    if xs.iter().any(|x| x.is_nan()) || ws.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(invalid("values must not be NaN and weights must be finite and non-negative"));
    }
    let mut v: Vec<(f64, f64)> = xs.iter().copied().zip(ws.iter().copied()).collect();
    v.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(v)
}

/// Classical two-sample KS test with the asymptotic Kolmogorov p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("KS test needs non-empty samples"));
    }
    ks_weighted(a, &vec![1.0; a.len()], b, &vec![1.0; b.len()])
}

/// Weighted KS: weighted empirical CDFs, with each side's effective sample
/// size standing in for n in the p-value.
pub fn ks_weighted(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> Result<KsResult> {
    let sa = weighted_sorted(a, wa)?;
    let sb = weighted_sorted(b, wb)?;
    let (na, nb) = (ess(wa), ess(wb));
    if na == 0.0 || nb == 0.0 {
        return Err(invalid("KS test needs positive total weight on both sides"));
    }
    let d = ks_stat(&sa, &sb);
    let p = kolmogorov_sf(d * (na * nb / (na + nb)).sqrt());
    Ok(KsResult { d, p, n_a: na, n_b: nb })
}

/// Bootstrap p-value for the weighted KS statistic: both samples are
/// redrawn from the pooled weighted sample, keeping their sizes.
pub fn ks_weighted_bootstrap_p(
    a: &[f64],
    wa: &[f64],
    b: &[f64],
    wb: &[f64],
    n_boot: usize,
    key: RngKey,
) -> Result<f64> {
    let d0 = ks_weighted(a, wa, b, wb)?.d;
    // the pooled law mixes the two normalised weighted samples equally
    let (sa, sb): (f64, f64) = (wa.iter().sum(), wb.iter().sum());
    let pool: Vec<(f64, f64)> =
        a.iter().zip(wa).map(|(x, w)| (*x, w / sa)).chain(b.iter().zip(wb).map(|(x, w)| (*x, w / sb))).collect();
    let mut cum = Vec::with_capacity(pool.len());
    let mut acc = 0.0;
    for p in &pool {
        acc += p.1;
        cum.push(acc);
    }
    let mut rng = key.stream();
    let draw = |n: usize, rng: &mut crate::rng::Stream| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                (pool[cum.partition_point(|&c| c < u).min(pool.len() - 1)].0, 1.0)
            })
            .collect();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        v
    };
    let (na, nb) = (ess(wa).round().max(1.0) as usize, ess(wb).round().max(1.0) as usize);
    let mut exceed = 0usize;
    for _ in 0..n_boot {
        let x = draw(na, &mut rng);
        let y = draw(nb, &mut rng);
        if ks_stat(&x, &y) >= d0 {
            exceed += 1;
        }
    }
    Ok((exceed as f64 + 1.0) / (n_boot as f64 + 1.0))
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<KsResult> {
    if xs.is_empty() {
        return Err(invalid("KS test needs a non-empty sample"));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult { d, p: kolmogorov_sf(d * n.sqrt()), n_a: n, n_b: f64::INFINITY })
}

/// Bootstrap standard error of a statistic of an i.i.d. sample.
pub fn bootstrap_se<F: Fn(&[f64]) -> f64>(xs: &[f64], stat: F, n_boot: usize, key: RngKey) -> Result<f64> {
    let reps = bootstrap_replicates(xs, stat, n_boot, key)?;
    Ok(mean_se(&reps)?.se * (reps.len() as f64).sqrt())
}

/// Percentile interval from bootstrap replicates.
pub fn bootstrap_ci<F: Fn(&[f64]) -> f64>(
    xs: &[f64],
    stat: F,
    n_boot: usize,
    level: f64,
    key: RngKey,
) -> Result<(f64, f64)> {
    let mut reps = bootstrap_replicates(xs, stat, n_boot, key)?;
    reps.sort_by(f64::total_cmp);
    let lo = ((1.0 - level) / 2.0 * (reps.len() - 1) as f64).round() as usize;
    let hi = ((1.0 + level) / 2.0 * (reps.len() - 1) as f64).round() as usize;
    Ok((reps[lo], reps[hi]))
}

fn bootstrap_replicates<F: Fn(&[f64]) -> f64>(xs: &[f64], stat: F, n_boot: usize, key: RngKey) -> Result<Vec<f64>> {
    if xs.is_empty() || n_boot < 2 {
        return Err(invalid("bootstrap needs data and at least two resamples"));
    }
    let mut buf = vec![0.0; xs.len()];
    Ok((0..n_boot)
        .map(|b| {
            let mut rng = key.split(b as u64).stream();
            for v in buf.iter_mut() {
                *v = xs[rng.random_range(0..xs.len())];
            }
            stat(&buf)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_se: f64,
}

/// Weighted least squares y = intercept + slope·g with weights 1/σ².
pub fn weighted_linear_fit(g: &[f64], y: &[f64], sigma: &[f64]) -> Result<LinearFit> {
    if g.len() < 2 || g.len() != y.len() || g.len() != sigma.len() || sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(invalid("need at least two points with positive errors"));
    }
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&x, &v), &e) in g.iter().zip(y).zip(sigma) {
        let w = 1.0 / (e * e);
        s += w;
        sx += w * x;
        sxx += w * x * x;
        sy += w * v;
        sxy += w * x * v;
    }
    let det = s * sxx - sx * sx;
    if det <= 0.0 {
        return Err(invalid("degenerate design in linear fit"));
    }
    Ok(LinearFit {
        intercept: (sxx * sy - sx * sxy) / det,
        slope: (s * sxy - sx * sy) / det,
        intercept_se: (sxx / det).sqrt(),
    })
}

/// Coefficients c with Σ c_k y_k equal to the unweighted least-squares
/// intercept of y on g, so an intercept can be formed per replica.
pub fn intercept_coefficients(g: &[f64]) -> Result<Vec<f64>> {
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let sgg: f64 = g.iter().map(|x| (x - mean).powi(2)).sum();
    if g.len() < 2 || !(sgg > 0.0) {
        return Err(invalid("need at least two distinct regressor values"));
    }
    Ok(g.iter().map(|x| 1.0 / n - mean * (x - mean) / sgg).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.d, 0.0);
        assert_eq!(r.p, 1.0);
        let b: Vec<f64> = a.iter().map(|x| x + 2.0).collect();
        assert_eq!(ks_two_sample(&a, &b).unwrap().d, 1.0);
        assert!(ks_two_sample(&[], &a).is_err());
    }

    #[test]
    fn ties_are_grouped() {
        let a = [0.0, 0.0, 0.0, 1.0];
        let b = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(ks_two_sample(&a, &b).unwrap().d, 0.0);
    }

    #[test]
    fn weighted_matches_replicated() {
        let a = [1.0, 2.0, 3.0];
        let wa = [2.0, 1.0, 1.0];
        let rep = [1.0, 1.0, 2.0, 3.0];
        let b = [1.5, 2.5, 3.5, 0.5];
        let w = ks_weighted(&a, &wa, &b, &[1.0; 4]).unwrap();
        let r = ks_two_sample(&rep, &b).unwrap();
        assert!((w.d - r.d).abs() < 1e-15);
        assert!((w.n_a - 16.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn intercept_coefficients_recover_line() {
        let g = [1.0, 2.0, 4.0];
        let c = intercept_coefficients(&g).unwrap();
        let y: Vec<f64> = g.iter().map(|x| 3.0 - 0.5 * x).collect();
        let b: f64 = c.iter().zip(&y).map(|(c, y)| c * y).sum();
        assert!((b - 3.0).abs() < 1e-12);
        assert!(intercept_coefficients(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn bootstrap_se_of_mean() {
        let xs: Vec<f64> = (0..400).map(|i| (i % 20) as f64).collect();
        let se = bootstrap_se(&xs, |v| v.iter().sum::<f64>() / v.len() as f64, 400, RngKey::new(1)).unwrap();
        let exact = mean_se(&xs).unwrap().se;
        assert!((se / exact - 1.0).abs() < 0.15, "{se} {exact}");
    }
}
