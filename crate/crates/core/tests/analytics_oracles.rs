//! Analytic functions and test statistics against independent evaluations.

use hgf_core::stats::{ess, kolmogorov_sf, ks_two_sample, weighted_linear_fit};
use hgf_core::{find_roots, green_rc, kappa, kappa_closed, phi_plus, LevyConfig};
use proptest::prelude::*;
use std::f64::consts::PI;

/// Kolmogorov tail from the theta-function form of the CDF,
/// P(K ≤ λ) = (√(2π)/λ) Σ_{k≥1} exp(−(2k − 1)²π²/(8λ²)).
fn kolmogorov_sf_theta(lambda: f64) -> f64 {
    let s: f64 = (1..50).map(|k| (-((2 * k - 1) as f64).powi(2) * PI * PI / (8.0 * lambda * lambda)).exp()).sum();
    1.0 - (2.0 * PI).sqrt() / lambda * s
}

#[test]
fn kolmogorov_tail_matches_theta_form() {
    for lambda in [0.4, 0.8, 1.0, 1.2224, 1.5, 2.0] {
        let a = kolmogorov_sf(lambda);
        let b = kolmogorov_sf_theta(lambda);
        assert!((a - b).abs() < 1e-12, "λ = {lambda}: {a} vs {b}");
    }
}

#[test]
fn two_sample_example() {
    // n = m = 100 shifted by 19.5: D = 0.2, λ = √50 · 0.2
    let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let b: Vec<f64> = (0..100).map(|i| i as f64 + 19.5).collect();
    let ks = ks_two_sample(&a, &b).unwrap();
    assert!((ks.d - 0.2).abs() < 1e-12);
    let p = kolmogorov_sf_theta(50f64.sqrt() * 0.2);
    assert!((ks.p - p).abs() < 1e-10, "{} vs {p}", ks.p);
    assert!((ks.p - 0.0357).abs() < 1e-3);
}

#[test]
fn green_function_shape() {
    let c = 3.0;
    let h = c / 2.0;
    assert_eq!(green_rc(h, c).unwrap(), 0.0);
    assert_eq!(green_rc(-h, c).unwrap(), 0.0);
    assert!(green_rc(h * 1.001, c).is_err());
    let zs: Vec<f64> = (1..200).map(|k| h * k as f64 / 200.0).collect();
    for w in zs.windows(2) {
        assert!(green_rc(w[0], c).unwrap() > green_rc(w[1], c).unwrap());
    }
    for &z in &zs {
        let (p, m) = (green_rc(z, c).unwrap(), green_rc(-z, c).unwrap());
        assert!((p - m).abs() <= 1e-14 * p, "{p} vs {m}");
    }
    // R_C(z) = (1/2π) ln(C/|z|) + o(1) as z → 0
    for z in [1e-6, 1e-9] {
        let r = green_rc(z, c).unwrap() - (c / z).ln() / (2.0 * PI);
        assert!(r.abs() < 1e-5, "{r}");
    }
}

#[test]
fn green_function_integrates_to_exit_time() {
    // 2R_C is the Green function of the standard Cauchy process on (−C/2, C/2),
    // whose expected exit time from 0 is C/2; integrate with z = (C/2)v²
    let c = 2.5;
    let n = 200_000;
    let h = 1.0 / n as f64;
    let f = |v: f64| if v == 0.0 { 0.0 } else { 2.0 * green_rc(c / 2.0 * v * v, c).unwrap() * c * v };
    let mut s = f(0.0) + f(1.0);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let integral = 2.0 * s * h / 3.0;
    assert!((integral - c / 2.0).abs() < 1e-6, "{integral}");
}

#[test]
fn cumulant_values() {
    let cfg = LevyConfig::default();
    assert!((kappa_closed(2.0).unwrap() + 2.0 / PI).abs() < 1e-12);
    let (lo, hi) = find_roots(&cfg).unwrap();
    assert!((lo - 1.5).abs() < 1e-8 && (hi - 2.5).abs() < 1e-8);
    assert!((phi_plus(-0.5).unwrap() + 2.0 / PI).abs() < 1e-12);
}

#[test]
fn ess_and_linear_fit() {
    assert_eq!(ess(&[2.0; 10]), 10.0);
    assert!((ess(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
    let g = [0.0, 1.0, 2.0, 3.0];
    let y: Vec<f64> = g.iter().map(|x| 0.5 - 2.0 * x).collect();
    let f = weighted_linear_fit(&g, &y, &[1.0; 4]).unwrap();
    assert!((f.intercept - 0.5).abs() < 1e-12 && (f.slope + 2.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kappa_matches_closed_form(q in 1.02f64..2.98) {
        let cfg = LevyConfig::default();
        let a = kappa(q, &cfg).unwrap();
        let b = kappa_closed(q).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn kappa_is_negative_between_roots(q in 1.51f64..2.49) {
        prop_assert!(kappa_closed(q).unwrap() < 0.0);
    }
}
