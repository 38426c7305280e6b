//! Structural invariants of truncated cell systems over random parameters.

use hgf_core::{snapshot_xbar, Cell, CellOptions, CellSimulator, LevyConfig, RngKey, Truncation};
use proptest::prelude::*;
use std::collections::HashMap;

fn params() -> impl Strategy<Value = (f64, Truncation, u64)> {
    (
        prop_oneof![-2.0f64..-0.3, 0.3f64..2.0],
        0.02f64..0.2,
        1u32..4,
        prop_oneof![Just(f64::INFINITY), 0.2f64..2.0],
        any::<u64>(),
    )
        .prop_map(|(z, s_min, g, horizon, seed)| (z, Truncation { s_min, max_generation: g, horizon }, seed))
}

fn by_label(cells: &[Cell]) -> HashMap<&[u32], &Cell> {
    cells.iter().map(|c| (c.label.as_slice(), c)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn genealogy_is_consistent((z, t, seed) in params()) {
        let sim = CellSimulator::new(&LevyConfig::default(), CellOptions { record_paths: true, ..Default::default() }).unwrap();
        let cs = sim.simulate(z, &t, RngKey::new(seed)).unwrap();
        prop_assert!(cs.cells[0].label.is_empty());
        prop_assert_eq!(cs.cells[0].birth_size, z);
        prop_assert!(cs.cells.windows(2).all(|w| w[0].label < w[1].label));
        let pos = by_label(&cs.cells);
        for c in &cs.cells[1..] {
            let parent = pos.get(&c.label[..c.label.len() - 1]);
            prop_assert!(parent.is_some(), "labels are prefix closed");
            let p = parent.unwrap();
            prop_assert!(c.generation() <= t.max_generation as usize);
            prop_assert!(c.birth_size.abs() >= t.s_min);
            prop_assert!(c.birth_level < t.horizon);
            prop_assert!((c.birth_level - (p.birth_level + c.parent_jump_level)).abs() < 1e-12);
            let path = p.path.as_ref().unwrap();
            let jump = path.jumps.iter().find(|j| j.0 == c.parent_jump_level);
            prop_assert!(jump.is_some(), "child born at a jump of its parent");
            prop_assert_eq!(c.birth_size, -jump.unwrap().1);
            // rank k + 1 is no larger than rank k
            if let Some(&r) = c.label.last() {
                if r > 1 {
                    let mut prev = c.label.clone();
                    *prev.last_mut().unwrap() = r - 1;
                    prop_assert!(pos[prev.as_slice()].birth_size.abs() >= c.birth_size.abs());
                }
            }
        }
        for c in &cs.cells {
            if let Some(p) = &c.path {
                prop_assert!(p.values.iter().all(|v| v.signum() == c.birth_size.signum()));
            }
        }
    }

    #[test]
    fn same_key_same_system((z, t, seed) in params()) {
        let opts = CellOptions { observe: vec![0.1], ..Default::default() };
        let sim = CellSimulator::new(&LevyConfig::default(), opts).unwrap();
        let a = sim.simulate(z, &t, RngKey::new(seed)).unwrap();
        let b = sim.simulate(z, &t, RngKey::new(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn snapshots_are_sorted_and_within_truncation((z, t, seed) in params()) {
        let level = 0.1f64.min(t.horizon);
        let sim = CellSimulator::new(&LevyConfig::default(), CellOptions { observe: vec![level], ..Default::default() }).unwrap();
        let cs = sim.simulate(z, &t, RngKey::new(seed)).unwrap();
        let snap = snapshot_xbar(&cs, level).unwrap();
        prop_assert!(snap.sizes.windows(2).all(|w| w[0].abs() >= w[1].abs()));
        prop_assert!(snap.labels.iter().all(|l| l.len() <= t.max_generation as usize));
        let pos = by_label(&cs.cells);
        for l in &snap.labels {
            prop_assert!(pos[l.as_slice()].birth_level <= level);
        }
    }

    #[test]
    fn last_generation_is_born_but_not_evolved((z, t, seed) in params()) {
        let opts = CellOptions { evolve_last_generation: false, ..Default::default() };
        let sim = CellSimulator::new(&LevyConfig::default(), opts).unwrap();
        let cs = sim.simulate(z, &t, RngKey::new(seed)).unwrap();
        for c in &cs.cells {
            prop_assert_eq!(c.lifetime.is_none(), c.generation() == t.max_generation as usize);
        }
    }

    #[test]
    fn coarsening_keeps_a_truncated_subsystem((z, t, seed) in params(), factor in 1.0f64..4.0) {
        let sim = CellSimulator::new(&LevyConfig::default(), CellOptions::default()).unwrap();
        let cs = sim.simulate(z, &t, RngKey::new(seed)).unwrap();
        prop_assert_eq!(&cs.coarsened(t.s_min).unwrap(), &cs);
        prop_assert!(cs.coarsened(t.s_min * 0.5).is_err());
        let s = t.s_min * factor;
        let coarse = cs.coarsened(s).unwrap();
        prop_assert_eq!(coarse.truncation.s_min, s);
        let pos = by_label(&coarse.cells);
        for c in &coarse.cells[1..] {
            prop_assert!(c.birth_size.abs() >= s);
            prop_assert!(pos.contains_key(&c.label[..c.label.len() - 1]));
            if let Some(&r) = c.label.last() {
                if r > 1 {
                    let mut prev = c.label.clone();
                    *prev.last_mut().unwrap() = r - 1;
                    prop_assert!(pos.contains_key(prev.as_slice()), "sibling ranks stay contiguous");
                }
            }
        }
        let kept = cs.cells.iter().filter(|c| {
            (1..=c.label.len()).all(|k| by_label(&cs.cells)[&c.label[..k]].birth_size.abs() >= s)
        }).count();
        prop_assert_eq!(kept, coarse.cells.len());
    }
}
