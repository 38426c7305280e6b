//! Adaptive Gauss–Kronrod (10/21) quadrature with global error control.

use crate::error::{numeric, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_289_480_780,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 2000 }
    }
}

impl QuadOptions {
    pub fn with_tol(tol: f64) -> Self {
        QuadOptions { abs_tol: tol * 0.1, rel_tol: tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

fn kronrod21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut gauss = 0.0;
    let mut kron = fc * WGK[10];
    for j in 0..10 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kron * h;
    let err = ((kron - gauss) * h).abs();
    (value, err)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Integrate `f` over the finite interval `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, intervals: 0 });
    }
    let (v, e) = kronrod21(&mut f, a, b);
    if !v.is_finite() {
        return Err(numeric(format!("non-finite integrand on [{a}, {b}]")));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, err: e });
    let (mut total, mut total_err) = (v, e);
    loop {
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(numeric(format!(
                "quadrature did not converge: value {total}, error {total_err} after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // interval cannot be split any further in floating point
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod21(&mut f, worst.a, m);
        let (v2, e2) = kronrod21(&mut f, m, worst.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(numeric(format!("non-finite integrand on [{}, {}]", worst.a, worst.b)));
        }
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: m, value: v1, err: e1 });
        heap.push(Piece { a: m, b: worst.b, value: v2, err: e2 });
    }
    // re-sum to shed accumulated rounding from the running updates
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.err).sum();
    Ok(QuadResult { value, error, intervals: heap.len() })
}

/// Integrate `f` over `[a, +inf)` through the map `y = a + t / (1 - t)`.
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate(
        |t| {
            if t >= 1.0 {
                return 0.0;
            }
            let s = 1.0 - t;
            let v = f(a + t / s);
            if v == 0.0 {
                0.0
            } else {
                v / (s * s)
            }
        },
        0.0,
        1.0,
        opts,
    )
}
