//! Sampler laws against closed-form oracles.

use hgf_core::stats::{ks_one_sample, mean_se};
use hgf_core::{
    sample_bessel3_bridge, sample_brownian_bridge, sample_cauchy_path, sample_duration, sample_excursion,
    sample_h_excursion, GridSpec, RngKey,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn grid(dt: f64) -> GridSpec {
    GridSpec { dt, ..Default::default() }
}

#[test]
fn duration_scales_with_z_squared() {
    let z = -2.5;
    let key = RngKey::new(1);
    let w: Vec<f64> = (0..20_000).map(|i| z * z / (2.0 * sample_duration(z, key.split(i)).unwrap())).collect();
    let ks = ks_one_sample(&w, |x| if x > 0.0 { -(-x).exp_m1() } else { 0.0 }).unwrap();
    assert!(ks.p > 0.01, "KS p = {}", ks.p);
}

#[test]
fn bridge_midpoint_variance() {
    // Var B(1/2) = t(r − t)/r = 1/4 for a bridge pinned at 0
    let g = grid(0.25);
    let key = RngKey::new(2);
    let v: Vec<f64> = (0..100_000).map(|i| sample_brownian_bridge(1.0, 0.0, &g, key.split(i)).unwrap()[2].powi(2)).collect();
    let m = mean_se(&v).unwrap();
    assert!((m.mean - 0.25).abs() < 3.0 * m.se, "{m:?}");
}

#[test]
fn bridge_covariance_chi_square() {
    // exact law on t = 1/4, 1/2, 3/4 with endpoint 1: mean t, covariance min(s,t) − st
    let g = grid(0.25);
    let t: [f64; 3] = [0.25, 0.5, 0.75];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = t[i].min(t[j]) - t[i] * t[j];
        }
    }
    // Cholesky factor of k
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|m| l[i][m] * l[j][m]).sum();
            l[i][j] = if i == j { (k[i][i] - s).sqrt() } else { (k[i][j] - s) / l[j][j] };
        }
    }
    let key = RngKey::new(3);
    let q: Vec<f64> = (0..100_000)
        .map(|n| {
            let b = sample_brownian_bridge(1.0, 1.0, &g, key.split(n)).unwrap();
            let d: Vec<f64> = (0..3).map(|i| b[i + 1] - t[i]).collect();
            // forward substitution L u = d
            let mut u = [0.0; 3];
            for i in 0..3 {
                let s: f64 = (0..i).map(|m| l[i][m] * u[m]).sum();
                u[i] = (d[i] - s) / l[i][i];
            }
            u.iter().map(|v| v * v).sum()
        })
        .collect();
    let chi = ChiSquared::new(3.0).unwrap();
    let ks = ks_one_sample(&q, |x| chi.cdf(x)).unwrap();
    assert!(ks.p > 0.01, "KS p = {}", ks.p);
}

#[test]
fn bessel_bridge_second_moment() {
    // three independent bridge coordinates: E y(r/2)² = 3r/4
    let g = grid(0.25);
    let key = RngKey::new(4);
    let v: Vec<f64> = (0..100_000).map(|i| sample_bessel3_bridge(1.0, &g, key.split(i)).unwrap()[2].powi(2)).collect();
    let m = mean_se(&v).unwrap();
    assert!((m.mean - 0.75).abs() < 3.0 * m.se, "{m:?}");
}

#[test]
fn cauchy_path_quartiles() {
    // scale 2t at t = 1: P(|η_1 − η_0| > 2) = 1/2 and the quartiles are ±2
    let g = grid(0.05);
    let key = RngKey::new(5);
    let v: Vec<f64> = (0..40_000)
        .map(|i| {
            let p = sample_cauchy_path(0.3, 1.0, &g, key.split(i)).unwrap();
            p.values.last().unwrap() - 0.3
        })
        .collect();
    let n = v.len() as f64;
    let se = (0.25 / n).sqrt();
    let above = v.iter().filter(|x| x.abs() > 2.0).count() as f64 / n;
    assert!((above - 0.5).abs() < 3.0 * se, "{above}");
    let cdf = |x: f64| 0.5 + (x / 2.0).atan() / std::f64::consts::PI;
    let ks = ks_one_sample(&v, cdf).unwrap();
    assert!(ks.p > 0.01, "KS p = {}", ks.p);
}

#[test]
fn bes3_hitting_time_mean() {
    // y² − 3t is a martingale, so E T_a = a²/3
    let g = grid(1e-5);
    let key = RngKey::new(6);
    let t: Vec<f64> =
        (0..4_000).map(|i| sample_h_excursion(0.0, 1.0, &g, key.split(i)).unwrap().hit().unwrap().0).collect();
    let m = mean_se(&t).unwrap();
    assert!((m.mean - 1.0 / 3.0).abs() < 3.0 * m.se, "{m:?}");
}

#[test]
fn excursion_occupation_below_height() {
    // E ∫ 1{y(t) < h} dt = ½ ln(1 + 4h²) at z = 1: Cauchy(2a) density of the
    // endpoint at height a, times 2π z²
    let g = grid(2e-4);
    let key = RngKey::new(7);
    let hs = [0.25, 0.5];
    let mut occ = vec![Vec::new(); hs.len()];
    for i in 0..3_000 {
        let p = sample_excursion(1.0, &g, key.split(i)).unwrap();
        for (k, &h) in hs.iter().enumerate() {
            let mut s = 0.0;
            for j in 1..p.len() {
                let (lo, hi) = (p.y[j - 1].min(p.y[j]), p.y[j - 1].max(p.y[j]));
                let f = if hi <= h {
                    1.0
                } else if lo >= h {
                    0.0
                } else {
                    (h - lo) / (hi - lo)
                };
                s += f * (p.times[j] - p.times[j - 1]);
            }
            occ[k].push(s);
        }
    }
    for (k, &h) in hs.iter().enumerate() {
        let m = mean_se(&occ[k]).unwrap();
        let target = 0.5 * (1.0 + 4.0 * h * h).ln();
        assert!((m.mean - target).abs() < 3.0 * m.se, "h = {h}: {m:?} vs {target}");
    }
}
