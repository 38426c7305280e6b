//! The signed cell system X̄ indexed by the Ulam tree, its positive
//! restriction X and branching-random-walk observables.
//!
//! Each cell evolves as a Lamperti transform of ξ. The simulator streams the
//! level clock directly, and picks per step the largest small-jump cutoff
//! eps_k = eps·2^k for which no jump below the cutoff could produce a child
//! of size ≥ s_min. Tiny cells therefore take few, coarse steps.

use crate::analytics::green_rc;
use crate::error::{invalid, Result};
use crate::levy::{CutoffParams, LevyConfig};
use crate::rng::RngKey;
use crate::ssmp::{Lifetime, SsmpPath};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub s_min: f64,
    pub max_generation: u32,
    /// Level horizon A; may be infinite.
    pub horizon: f64,
}

impl Truncation {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 0.0) {
            return Err(invalid(format!("s_min must be positive, got {}", self.s_min)));
        }
        if !(self.horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOptions {
    /// Absolute levels at which every alive cell's size is recorded.
    pub observe: Vec<f64>,
    pub record_paths: bool,
    /// Whether cells of the last generation are evolved or only born.
    pub evolve_last_generation: bool,
    /// Extinction floor as a fraction of s_min.
    pub floor_frac: f64,
    /// Largest ξ-time step used for small cells.
    pub dt_max: f64,
    /// Largest small-jump cutoff on the adaptive ladder.
    pub eps_max: f64,
    pub max_xi_time: f64,
    /// Simulate only the 𝕌^(C) subsystem for this C: children of size ≥ C
    /// are not recorded, and a cell is censored as soon as it reaches size C.
    pub prune_at: Option<f64>,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            observe: Vec::new(),
            record_paths: false,
            evolve_last_generation: true,
            floor_frac: 0.05,
            dt_max: 0.05,
            eps_max: 0.3,
            max_xi_time: 1e4,
            prune_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Ulam label; children of a cell are ranked 1, 2, … by decreasing |size|.
    pub label: Vec<u32>,
    pub birth_level: f64,
    pub birth_size: f64,
    /// `None` for last-generation cells that were born but not evolved.
    pub lifetime: Option<Lifetime>,
    /// Level within the parent's life at which this cell was born.
    pub parent_jump_level: f64,
    /// sup of |X_parent| over the parent's life up to this birth.
    pub parent_sup: f64,
    /// (index into the observation levels, X_u at that level).
    pub observed: Vec<(u32, f64)>,
    pub path: Option<SsmpPath>,
}

impl Cell {
    pub fn generation(&self) -> usize {
        self.label.len()
    }

    pub fn label_string(&self) -> String {
        self.label.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(".")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSystem {
    pub z: f64,
    pub truncation: Truncation,
    pub observe: Vec<f64>,
    /// Cells in lexicographic label order; the Eve cell comes first.
    pub cells: Vec<Cell>,
}

impl CellSystem {
    pub fn n_censored(&self) -> usize {
        self.cells.iter().filter(|c| c.lifetime.is_some_and(|l| l.is_censored())).count()
    }

    pub fn write_jsonl<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for c in &self.cells {
            let rec = serde_json::json!({
                "label": c.label_string(),
                "b_u": c.birth_level,
                "size0": c.birth_size,
                "zeta_u": c.lifetime.map(|l| l.level()),
                "censored": c.lifetime.is_some_and(|l| l.is_censored()),
            });
            writeln!(w, "{rec}")?;
        }
        Ok(())
    }

    fn index_of_parents(&self) -> Vec<Option<usize>> {
        let pos: HashMap<&[u32], usize> = self.cells.iter().enumerate().map(|(i, c)| (c.label.as_slice(), i)).collect();
        self.cells
            .iter()
            .map(|c| if c.label.is_empty() { None } else { pos.get(&c.label[..c.label.len() - 1]).copied() })
            .collect()
    }
}

/// Shared, read-only simulator tables.
#[derive(Debug, Clone)]
pub struct CellSimulator {
    pub cfg: LevyConfig,
    pub opts: CellOptions,
    ladder: Vec<CutoffParams>,
}

struct CellRun {
    lifetime: Lifetime,
    observed: Vec<(u32, f64)>,
    /// (level within this cell's life, signed child size, sup |X| so far)
    children: Vec<(f64, f64, f64)>,
    path: Option<SsmpPath>,
}

impl CellSimulator {
    pub fn new(cfg: &LevyConfig, opts: CellOptions) -> Result<Self> {
        cfg.validate()?;
        if opts.observe.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("observation levels must be sorted"));
        }
        if !(opts.floor_frac > 0.0 && opts.dt_max >= cfg.dt && opts.eps_max < std::f64::consts::LN_2) {
            return Err(invalid("invalid cell options"));
        }
        let mut ladder = Vec::new();
        let mut eps = cfg.eps;
        while eps <= opts.eps_max || ladder.is_empty() {
            ladder.push(CutoffParams::new(eps, cfg.quad())?);
            eps *= 2.0;
        }
        Ok(CellSimulator { cfg: *cfg, opts, ladder })
    }

    pub fn ladder(&self) -> &[CutoffParams] {
        &self.ladder
    }

    fn run_cell(&self, x0: f64, birth: f64, trunc: &Truncation, key: RngKey, spawn: bool) -> CellRun {
        let sign = x0.signum();
        let mut zabs = x0.abs();
        let floor = trunc.s_min * self.opts.floor_frac;
        let thresholds: Vec<f64> = self.ladder.iter().map(|p| trunc.s_min / p.eps.exp_m1()).collect();
        let obs = &self.opts.observe;
        let mut oi = obs.partition_point(|&l| l < birth);
        let mut rng = key.stream();
        let mut e_mass: f64 = rng.sample(Exp1);
        let (mut a, mut t, mut sup) = (0.0f64, 0.0f64, zabs);
        let mut observed = Vec::new();
        let mut children = Vec::new();
        let mut rec = self.opts.record_paths.then(|| (vec![0.0], vec![x0], Vec::new()));
        let prune = self.opts.prune_at.unwrap_or(f64::INFINITY);
        let lifetime = loop {
            if zabs < floor {
                break Lifetime::Dead(a);
            }
            if birth + a >= trunc.horizon || t >= self.opts.max_xi_time || sup >= prune {
                break Lifetime::Censored(a.min(trunc.horizon - birth));
            }
            let mut k = 0;
            while k + 1 < thresholds.len() && zabs < thresholds[k + 1] {
                k += 1;
            }
            let p = &self.ladder[k];
            let lam = p.rate();
            let mut h = (self.cfg.dt * (1u64 << k) as f64).min(self.opts.dt_max);
            let jump = e_mass <= lam * h;
            if jump {
                h = e_mass / lam;
            }
            let dxi = p.drift * h + (p.sigma2 * h).sqrt() * rng.sample::<f64, _>(StandardNormal);
            let z1 = zabs * dxi.exp();
            let da = 0.5 * h * (zabs + z1);
            while oi < obs.len() && obs[oi] < birth + a + da {
                let f = (obs[oi] - birth - a) / da;
                observed.push((oi as u32, sign * zabs * (f * dxi).exp()));
                oi += 1;
            }
            a += da;
            t += h;
            zabs = z1;
            sup = sup.max(zabs);
            if jump {
                let y = p.sample_jump(&mut rng);
                let dz = zabs * y.exp_m1();
                let child = -sign * dz;
                if spawn && child.abs() >= trunc.s_min && birth + a < trunc.horizon && child.abs() < prune {
                    children.push((a, child, sup));
                }
                if let Some((_, _, jumps)) = rec.as_mut() {
                    jumps.push((a, sign * dz));
                }
                zabs += dz;
                sup = sup.max(zabs);
                e_mass = rng.sample(Exp1);
            } else {
                e_mass -= lam * h;
            }
            if let Some((lv, vals, _)) = rec.as_mut() {
                lv.push(a);
                vals.push(sign * zabs);
            }
        };
        let path = rec.map(|(levels, values, jumps)| SsmpPath { z: x0, levels, values, zeta: lifetime, jumps });
        CellRun { lifetime, observed, children, path }
    }

    pub fn simulate(&self, z: f64, trunc: &Truncation, key: RngKey) -> Result<CellSystem> {
        trunc.validate()?;
        if z == 0.0 || !z.is_finite() {
            return Err(invalid(format!("z must be finite and non-zero, got {z}")));
        }
        let g = trunc.max_generation as usize;
        let mut cells = Vec::new();
        // (label, birth level, size, parent jump level, parent sup, key)
        let mut pending: Vec<(Vec<u32>, f64, f64, f64, f64, RngKey)> = vec![(vec![], 0.0, z, 0.0, 0.0, key)];
        while let Some((label, b, x0, pj, psup, k)) = pending.pop() {
            let gen = label.len();
            if !label.is_empty() && self.opts.prune_at.is_some_and(|c| x0.abs() >= c) {
                continue;
            }
            if gen == g && !self.opts.evolve_last_generation {
                cells.push(Cell {
                    label,
                    birth_level: b,
                    birth_size: x0,
                    lifetime: None,
                    parent_jump_level: pj,
                    parent_sup: psup,
                    observed: vec![],
                    path: None,
                });
                continue;
            }
            let run = self.run_cell(x0, b, trunc, k.named("path"), gen < g);
            let mut kids: Vec<(usize, (f64, f64, f64))> = run.children.into_iter().enumerate().collect();
            kids.sort_by(|p, q| q.1 .1.abs().total_cmp(&p.1 .1.abs()).then(p.0.cmp(&q.0)));
            for (rank, (chrono, (lvl, size, sup))) in kids.into_iter().enumerate() {
                let mut l = label.clone();
                l.push(rank as u32 + 1);
                pending.push((l, b + lvl, size, lvl, sup, k.split(chrono as u64)));
            }
            cells.push(Cell {
                label,
                birth_level: b,
                birth_size: x0,
                lifetime: Some(run.lifetime),
                parent_jump_level: pj,
                parent_sup: psup,
                observed: run.observed,
                path: run.path,
            });
        }
        cells.sort_by(|p, q| p.label.cmp(&q.label));
        Ok(CellSystem { z, truncation: *trunc, observe: self.opts.observe.clone(), cells })
    }
}

pub fn simulate_cell_system(
    z: f64,
    trunc: &Truncation,
    cfg: &LevyConfig,
    opts: CellOptions,
    key: RngKey,
) -> Result<CellSystem> {
    CellSimulator::new(cfg, opts)?.simulate(z, trunc, key)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub level: f64,
    /// Sizes sorted by decreasing absolute value.
    pub sizes: Vec<f64>,
    pub labels: Vec<Vec<u32>>,
}

impl Snapshot {
    pub fn to_json(&self, system_id: usize) -> serde_json::Value {
        crate::levelcut::fragment_record(system_id, self.level, &self.sizes)
    }
}

/// X̄(a): sizes of all cells alive at an observed level a.
pub fn snapshot_xbar(cs: &CellSystem, a: f64) -> Result<Snapshot> {
    if a > cs.truncation.horizon {
        return Err(invalid(format!("level {a} is beyond the horizon {}", cs.truncation.horizon)));
    }
    let mut items: Vec<(f64, Vec<u32>)> = if a == 0.0 {
        vec![(cs.z, vec![])]
    } else {
        let idx = cs
            .observe
            .iter()
            .position(|&l| l == a)
            .ok_or_else(|| invalid(format!("level {a} was not among the observed levels")))?;
        cs.cells
            .iter()
            .filter_map(|c| c.observed.iter().find(|o| o.0 as usize == idx).map(|o| (o.1, c.label.clone())))
            .collect()
    };
    items.sort_by(|p, q| q.0.abs().total_cmp(&p.0.abs()).then(p.1.cmp(&q.1)));
    Ok(Snapshot { level: a, sizes: items.iter().map(|i| i.0).collect(), labels: items.into_iter().map(|i| i.1).collect() })
}

impl CellSystem {
    /// The system a larger threshold `s_min` would have produced: the cells
    /// whose ancestors, themselves included, were born with |size| ≥ s_min.
    /// Sibling ranks are unchanged because only the smallest siblings go.
    pub fn coarsened(&self, s_min: f64) -> Result<CellSystem> {
        if !(s_min >= self.truncation.s_min) {
            return Err(invalid(format!("cannot coarsen s_min {} to {s_min}", self.truncation.s_min)));
        }
        let parents = self.index_of_parents();
        let mut keep = vec![false; self.cells.len()];
        for (i, c) in self.cells.iter().enumerate() {
            keep[i] = match parents[i] {
                None => true,
                Some(p) => keep[p] && c.birth_size.abs() >= s_min,
            };
        }
        let cells = self.cells.iter().zip(&keep).filter(|(_, &k)| k).map(|(c, _)| c.clone()).collect();
        Ok(CellSystem { z: self.z, truncation: Truncation { s_min, ..self.truncation }, observe: self.observe.clone(), cells })
    }
}

/// Restriction to cells whose ancestors, themselves included, all have
/// positive birth sizes.
pub fn positive_gf_x(cs: &CellSystem) -> CellSystem {
    let parents = cs.index_of_parents();
    let mut keep = vec![false; cs.cells.len()];
    for (i, c) in cs.cells.iter().enumerate() {
        keep[i] = c.birth_size > 0.0 && parents[i].is_none_or(|p| keep[p]);
    }
    let cells = cs.cells.iter().zip(&keep).filter(|(_, &k)| k).map(|(c, _)| c.clone()).collect();
    CellSystem { z: cs.z, truncation: cs.truncation, observe: cs.observe.clone(), cells }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrwReport {
    pub n: usize,
    /// Σ_{|u|=n+1} |X_u(0)|²
    pub m_n: f64,
    /// −Σ_{|u|=n+1} ln|X_u(0)|·|X_u(0)|²
    pub d_n: f64,
    /// π Σ_{u ∈ 𝕌^(C), |u|=n+1} R_C(X_u(0)/2)·|X_u(0)|²
    pub dc_n: f64,
    pub c: f64,
    /// Some cell of generation ≤ n was censored, so births may be missing.
    pub biased: bool,
}

/// Membership in 𝕌^(C): the cell and all its ancestors have |birth size| < C
/// and no ancestor reached size C before the birth of the next cell on the
/// branch.
pub fn in_u_c(cs: &CellSystem, c: f64) -> Vec<bool> {
    let parents = cs.index_of_parents();
    let mut ok = vec![false; cs.cells.len()];
    for (i, cell) in cs.cells.iter().enumerate() {
        let own = cell.birth_size.abs() < c;
        ok[i] = match parents[i] {
            None => own,
            Some(p) => ok[p] && own && cell.parent_sup < c,
        };
    }
    ok
}

pub fn brw_observables(cs: &CellSystem, n: usize, c: f64) -> Result<BrwReport> {
    if !(c > 0.0) {
        return Err(invalid(format!("C must be positive, got {c}")));
    }
    if n >= cs.truncation.max_generation as usize {
        return Err(invalid(format!("generation {} exceeds the simulated depth", n + 1)));
    }
    let ok = in_u_c(cs, c);
    let mut r = BrwReport { n, m_n: 0.0, d_n: 0.0, dc_n: 0.0, c, biased: false };
    for (i, cell) in cs.cells.iter().enumerate() {
        let g = cell.generation();
        if g <= n && cell.lifetime.is_some_and(|l| l.is_censored()) {
            r.biased = true;
        }
        if g != n + 1 {
            continue;
        }
        let x = cell.birth_size.abs();
        r.m_n += x * x;
        r.d_n -= x.ln() * x * x;
        if ok[i] {
            r.dc_n += PI * green_rc(x / 2.0, c)? * x * x;
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(opts: CellOptions) -> CellSimulator {
        CellSimulator::new(&LevyConfig::default(), opts).unwrap()
    }

    #[test]
    fn eve_and_tree_shape() {
        let s = sim(CellOptions { observe: vec![0.1, 0.2], ..Default::default() });
        let t = Truncation { s_min: 1e-2, max_generation: 2, horizon: 0.3 };
        let cs = s.simulate(1.0, &t, RngKey::new(4)).unwrap();
        let eve = &cs.cells[0];
        assert!(eve.label.is_empty());
        assert_eq!(eve.birth_level, 0.0);
        assert_eq!(eve.birth_size, 1.0);
        let labels: std::collections::HashSet<&[u32]> = cs.cells.iter().map(|c| c.label.as_slice()).collect();
        for c in &cs.cells[1..] {
            assert!(labels.contains(&c.label[..c.label.len() - 1]), "prefix closed");
            assert!(c.birth_size.abs() >= 1e-2);
            assert!(c.generation() <= 2);
        }
        assert_eq!(snapshot_xbar(&cs, 0.0).unwrap().sizes, vec![1.0]);
        assert!(snapshot_xbar(&cs, 0.15).is_err());
        assert!(snapshot_xbar(&cs, 0.5).is_err());
        let snap = snapshot_xbar(&cs, 0.2).unwrap();
        assert!(snap.sizes.windows(2).all(|w| w[0].abs() >= w[1].abs()));
    }

    #[test]
    fn birth_levels_add_and_signs_follow_jumps() {
        let s = sim(CellOptions { record_paths: true, ..Default::default() });
        let t = Truncation { s_min: 5e-3, max_generation: 2, horizon: f64::INFINITY };
        let cs = s.simulate(-0.7, &t, RngKey::new(8)).unwrap();
        let pos: HashMap<&[u32], &Cell> = cs.cells.iter().map(|c| (c.label.as_slice(), c)).collect();
        for c in &cs.cells[1..] {
            let p = pos[&c.label[..c.label.len() - 1]];
            assert!((c.birth_level - (p.birth_level + c.parent_jump_level)).abs() < 1e-12);
            let path = p.path.as_ref().unwrap();
            let j = path.jumps.iter().find(|j| j.0 == c.parent_jump_level).expect("parent jump exists");
            assert_eq!(c.birth_size, -j.1);
            assert_eq!(c.birth_size.signum(), -j.1.signum());
        }
        // cells never change sign along their path
        for c in &cs.cells {
            if let Some(p) = &c.path {
                assert!(p.values.iter().all(|v| v.signum() == c.birth_size.signum()));
            }
        }
    }

    #[test]
    fn deterministic_given_key() {
        let s = sim(CellOptions { observe: vec![0.2], ..Default::default() });
        let t = Truncation { s_min: 1e-2, max_generation: 3, horizon: 0.3 };
        let a = s.simulate(1.0, &t, RngKey::new(11)).unwrap();
        let b = s.simulate(1.0, &t, RngKey::new(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn positive_restriction_drops_negative_subtrees() {
        let s = sim(CellOptions::default());
        let t = Truncation { s_min: 5e-3, max_generation: 3, horizon: 0.5 };
        let cs = s.simulate(1.0, &t, RngKey::new(3)).unwrap();
        let x = positive_gf_x(&cs);
        assert!(x.cells[0].label.is_empty());
        let neg: Vec<&Vec<u32>> = cs.cells.iter().filter(|c| c.birth_size < 0.0).map(|c| &c.label).collect();
        assert!(!neg.is_empty());
        for c in &x.cells {
            assert!(c.birth_size > 0.0);
            assert!(!neg.iter().any(|l| c.label.starts_with(l)));
        }
    }

    #[test]
    fn brw_single_unit_child() {
        let cell = |label: Vec<u32>, size: f64| Cell {
            label,
            birth_level: 0.0,
            birth_size: size,
            lifetime: None,
            parent_jump_level: 0.0,
            parent_sup: 1.0,
            observed: vec![],
            path: None,
        };
        let cs = CellSystem {
            z: 1.0,
            truncation: Truncation { s_min: 1e-3, max_generation: 1, horizon: 1.0 },
            observe: vec![],
            cells: vec![cell(vec![], 1.0), cell(vec![1], 1.0), cell(vec![2], -5.0)],
        };
        let r = brw_observables(&cs, 0, 4.0).unwrap();
        assert_eq!(r.d_n, -(5f64.ln()) * 25.0);
        assert_eq!(r.m_n, 26.0);
        // the size-5 child is outside 𝕌^(4)
        assert!((r.dc_n - PI * green_rc(0.5, 4.0).unwrap()).abs() < 1e-12);
        assert!(brw_observables(&cs, 1, 4.0).is_err());
    }
}
