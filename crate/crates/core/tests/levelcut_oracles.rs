//! Level-cut structures against brute-force scans of the raw path.

use hgf_core::levelcut::{interior_local_minima, size_at};
use hgf_core::stats::mean_se;
use hgf_core::{
    build_split_tree, fragments_at_level, locally_largest, sample_excursion, time_in_small_excursions, ExcursionPath,
    GridSpec, RngKey,
};
use proptest::prelude::*;

/// x where the path first drops to level b walking left or right from the
/// point (tx, ty) inside segment j − 1..j. With `below` it must drop strictly
/// under b, which gives the fragment just below a split height.
fn crossing(p: &ExcursionPath, j: usize, (tx, ty): (f64, f64), b: f64, left: bool, below: bool) -> f64 {
    let (mut prev_x, mut prev_y) = (tx, ty);
    let mut i = if left { j - 1 } else { j };
    loop {
        let (x, y) = (p.x[i], p.y[i]);
        if y < b || (y == b && !below) {
            let g = if prev_y == y { 0.0 } else { (b - y) / (prev_y - y) };
            return x + g * (prev_x - x);
        }
        prev_x = x;
        prev_y = y;
        if left {
            i -= 1;
        } else {
            i += 1;
        }
    }
}

/// T_C by direct scan: sub-sample every segment, and at each time check the
/// fragment size at every sample height below y(t), on both sides of the
/// height (sizes are linear in the level between sample heights).
fn brute_t_c(p: &ExcursionPath, c: f64, sub: usize) -> f64 {
    let mut heights: Vec<f64> = p.y.clone();
    heights.sort_by(f64::total_cmp);
    heights.dedup();
    let mut total = 0.0;
    for j in 1..p.len() {
        let w = (p.times[j] - p.times[j - 1]) / sub as f64;
        for s in 0..sub {
            let f = (s as f64 + 0.5) / sub as f64;
            let ty = p.y[j - 1] + f * (p.y[j] - p.y[j - 1]);
            let tx = p.x[j - 1] + f * (p.x[j] - p.x[j - 1]);
            let ok = heights.iter().take_while(|&&b| b < ty).chain(std::iter::once(&ty)).all(|&b| {
                [false, true].iter().filter(|&&below| !below || b > 0.0).all(|&below| {
                    let size = crossing(p, j, (tx, ty), b, false, below) - crossing(p, j, (tx, ty), b, true, below);
                    size.abs() < c
                })
            });
            if ok {
                total += w;
            }
        }
    }
    total
}

fn sampled(seed: u64, dt: f64) -> ExcursionPath {
    sample_excursion(1.0, &GridSpec { dt, ..Default::default() }, RngKey::new(seed)).unwrap()
}

#[test]
fn t_c_matches_brute_force() {
    // the scan is cubic in the path length, so long excursions are skipped
    for p in (0..40).map(|seed| sampled(seed, 1e-2)).filter(|p| p.len() <= 150).take(12) {
        let tree = build_split_tree(&p).unwrap();
        for c in [1.2, 1.5, 3.0] {
            let fast = time_in_small_excursions(&tree, &p, c).unwrap();
            let slow = brute_t_c(&p, c, 64);
            let tol = 2e-3 * p.duration + 1e-9;
            assert!((fast - slow).abs() <= tol, "R {} C {c}: {fast} vs {slow}", p.duration);
        }
    }
}

#[test]
fn mean_t_c_matches_killed_cauchy_occupation() {
    // E T_C = z² ln((1 + √(1 − u²))/u), u = z/C: the endpoint of the fragment
    // process is a Cauchy process of scale 2 killed on leaving (−C, C)
    let c = 2.0;
    let g = GridSpec { dt: 2e-4, ..Default::default() };
    let key = RngKey::new(21);
    let t: Vec<f64> = (0..4_000)
        .map(|i| {
            let p = sample_excursion(1.0, &g, key.split(i)).unwrap();
            time_in_small_excursions(&build_split_tree(&p).unwrap(), &p, c).unwrap()
        })
        .collect();
    let m = mean_se(&t).unwrap();
    let u = 1.0 / c;
    let target = ((1.0 + (1.0 - u * u).sqrt()) / u).ln();
    assert!((m.mean - target).abs() < 3.0 * m.se, "{m:?} vs {target}");
}

#[test]
fn locally_largest_is_a_fragment() {
    let g = GridSpec { dt: 1e-3, ..Default::default() };
    for seed in 30..40 {
        let p = sampled(seed, 1e-3);
        let tree = build_split_tree(&p).unwrap();
        let ll = locally_largest(&tree, &p, &g).unwrap();
        for k in (0..ll.levels.len() - 1).step_by(7) {
            let a = ll.levels[k];
            let frag = fragments_at_level(&tree, &p, a).unwrap();
            let v = ll.values[k];
            assert!(frag.sizes.iter().any(|s| (s - v).abs() <= 1e-12), "Ξ({a}) = {v} not among {:?}", frag.sizes);
        }
    }
}

/// Piecewise-linear excursion from raw increments: y > 0 inside.
fn path_from(xs: &[f64], ys: &[f64]) -> ExcursionPath {
    let n = ys.len() + 2;
    let times: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
    let mut x = vec![0.0];
    for d in xs.iter().take(n - 1) {
        x.push(x.last().unwrap() + d);
    }
    let mut y = vec![0.0];
    y.extend_from_slice(ys);
    y.push(0.0);
    let z = *x.last().unwrap();
    ExcursionPath { z, duration: times[n - 1], times, x, y }
}

fn arb_path() -> impl Strategy<Value = ExcursionPath> {
    (3usize..40).prop_flat_map(|m| {
        (prop::collection::vec(-1.0f64..1.0, m + 1), prop::collection::vec(0.01f64..2.0, m))
            .prop_map(|(xs, ys)| path_from(&xs, &ys))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn one_split_per_interior_minimum(p in arb_path()) {
        let tree = build_split_tree(&p).unwrap();
        let minima = interior_local_minima(&p.y).len();
        prop_assert_eq!(tree.n_splits(), minima);
        prop_assert_eq!(tree.nodes.len(), 2 * minima + 1);
    }

    #[test]
    fn sizes_are_conserved_at_splits(p in arb_path()) {
        let tree = build_split_tree(&p).unwrap();
        prop_assert_eq!(tree.root().birth_size, p.z);
        for v in &tree.nodes {
            if let Some((l, r)) = v.children {
                let before = size_at(v, &p, v.death_level);
                let after = tree.nodes[l].birth_size + tree.nodes[r].birth_size;
                prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before.abs()), "{} vs {}", before, after);
            }
        }
    }

    #[test]
    fn t_c_is_monotone_and_bounded(p in arb_path(), c1 in 0.05f64..3.0, c2 in 0.05f64..3.0) {
        let tree = build_split_tree(&p).unwrap();
        let (lo, hi) = (c1.min(c2), c1.max(c2));
        let a = time_in_small_excursions(&tree, &p, lo).unwrap();
        let b = time_in_small_excursions(&tree, &p, hi).unwrap();
        prop_assert!(a <= b + 1e-12);
        prop_assert!(b <= p.duration + 1e-12);
        let all = time_in_small_excursions(&tree, &p, 1e9).unwrap();
        prop_assert!((all - p.duration).abs() <= 1e-12);
    }

    #[test]
    fn t_c_matches_brute_force_on_random_paths(p in arb_path(), c in 0.2f64..2.5) {
        let tree = build_split_tree(&p).unwrap();
        let fast = time_in_small_excursions(&tree, &p, c).unwrap();
        let slow = brute_t_c(&p, c, 200);
        prop_assert!((fast - slow).abs() <= 0.01 * p.duration, "{} vs {}", fast, slow);
    }

    #[test]
    fn fragment_intervals_shrink_as_level_rises(p in arb_path(), a in 0.0f64..1.0, da in 0.0f64..0.5) {
        let tree = build_split_tree(&p).unwrap();
        let low = fragments_at_level(&tree, &p, a).unwrap();
        let high = fragments_at_level(&tree, &p, a + da).unwrap();
        for &(i, j) in &high.intervals {
            prop_assert!(low.intervals.iter().any(|&(l, r)| l <= i && j <= r));
        }
    }
}
