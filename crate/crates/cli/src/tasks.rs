//! Replica passes shared by the experiments and the acceptance suite.
//!
//! Each replica is a pure function of its split key, so results are
//! collected in index order and do not depend on the worker count.

use hgf_core::analytics::{first_hit, martingale_value};
use hgf_core::levelcut::{build_split_tree, fragments_at_level, locally_largest, time_in_small_excursions};
use hgf_core::sampling::{sample_excursion, sample_h_excursion, GridSpec};
use hgf_core::{CellSimulator, CellSystem, Result, RngKey, Truncation};
use rayon::prelude::*;

pub fn par_replicas<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    (0..n).into_par_iter().map(&f).collect()
}

/// What to measure on each excursion of a pass.
#[derive(Debug, Clone, Default)]
pub struct ExcursionProbe {
    /// Levels for M_a.
    pub m_levels: Vec<f64>,
    /// Constants C for T_C.
    pub t_c: Vec<f64>,
    /// Levels for x(T_a).
    pub hit_levels: Vec<f64>,
    /// Levels for the ranked fragment sizes.
    pub fragment_levels: Vec<f64>,
    /// Levels for Ξ(a)·1{alive}.
    pub xi_levels: Vec<f64>,
    /// Extra coarser grids (as subsampling factors) on which M_a is also
    /// measured.
    pub coarsen: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionSummary {
    pub duration: f64,
    pub height: f64,
    pub n_points: usize,
    pub n_splits: usize,
    pub m: Vec<f64>,
    pub t_c: Vec<f64>,
    pub hit_x: Vec<Option<f64>>,
    pub fragments: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    /// M_a per coarsening factor, then per level.
    pub m_coarse: Vec<Vec<f64>>,
}

pub fn excursion_pass(z: f64, grid: &GridSpec, probe: &ExcursionProbe, n: usize, key: RngKey) -> Result<Vec<ExcursionSummary>> {
    par_replicas(n, |i| {
        let path = sample_excursion(z, grid, key.split(i as u64))?;
        let tree = build_split_tree(&path)?;
        let mut s = ExcursionSummary {
            duration: path.duration,
            height: path.height(),
            n_points: path.len(),
            n_splits: tree.n_splits(),
            m: Vec::new(),
            t_c: Vec::new(),
            hit_x: Vec::new(),
            fragments: Vec::new(),
            xi: Vec::new(),
            m_coarse: Vec::new(),
        };
        for &a in &probe.m_levels {
            s.m.push(martingale_value(&tree, &path, a)?);
        }
        for &c in &probe.t_c {
            s.t_c.push(time_in_small_excursions(&tree, &path, c)?);
        }
        for &a in &probe.hit_levels {
            s.hit_x.push(first_hit(&path, a).map(|h| h.1));
        }
        for &a in &probe.fragment_levels {
            s.fragments.push(fragments_at_level(&tree, &path, a)?.sizes);
        }
        if !probe.xi_levels.is_empty() {
            let ll = locally_largest(&tree, &path, grid)?;
            for &a in &probe.xi_levels {
                s.xi.push(ll.value_at(&tree, &path, a));
            }
        }
        for &k in &probe.coarsen {
            let coarse = path.subsample(k);
            let ct = build_split_tree(&coarse)?;
            s.m_coarse.push(probe.m_levels.iter().map(|&a| martingale_value(&ct, &coarse, a)).collect::<Result<_>>()?);
        }
        Ok(s)
    })
}

/// x at the first hitting of level a by H-excursions from 0; `None` when the
/// step cap was reached first.
pub fn h_excursion_pass(a: f64, grid: &GridSpec, n: usize, key: RngKey) -> Result<Vec<Option<f64>>> {
    par_replicas(n, |i| Ok(sample_h_excursion(0.0, a, grid, key.split(i as u64))?.hit().map(|h| h.1)))
}

/// Simulates `n` cell systems and reduces each to a summary with `f`.
pub fn cell_pass<T, F>(sim: &CellSimulator, z: f64, trunc: &Truncation, n: usize, key: RngKey, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&CellSystem) -> Result<T> + Sync,
{
    par_replicas(n, |i| f(&sim.simulate(z, trunc, key.split(i as u64))?))
}

/// The r-th largest |size| (1-based), or 0 when fewer fragments exist.
pub fn rank_abs(sizes: &[f64], r: usize) -> f64 {
    sizes.get(r - 1).map_or(0.0, |s| s.abs())
}

/// The signed largest size, or 0 when there is none.
pub fn signed_largest(sizes: &[f64]) -> f64 {
    sizes.first().copied().unwrap_or(0.0)
}
