//! The named experiments. Each one writes its data files and a JSON report
//! into the output directory and returns whether its in-run checks passed.

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{now_rfc3339, OutputDir, RunManifest};
use crate::tasks::{cell_pass, excursion_pass, h_excursion_pass, par_replicas, rank_abs, signed_largest, ExcursionProbe};
use crate::Failure;
use anyhow::{Context, Result};
use hgf_core::analytics::{
    cumulant_grid, estimate_m_a, find_roots, green_rc, kappa, kappa_closed, mu_z_check, phi_plus, MuCheckReport,
};
use hgf_core::cells::{brw_observables, positive_gf_x, snapshot_xbar, CellOptions, CellSimulator};
use hgf_core::levelcut::{build_split_tree, locally_largest};
use hgf_core::levy::LevyConfig;
use hgf_core::sampling::sample_excursion;
use hgf_core::stats::{intercept_coefficients, ks_two_sample, mean_se, KsResult, MeanSe};
use hgf_core::RngKey;
use serde::Serialize;
use serde_json::{json, Value};
use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt::Write as _;

pub const KS_ALPHA: f64 = 0.01;

/// Thresholds 4s, 2s, s of the s_min-halving ladder, coarsest first.
pub fn halving_ladder(s_min: f64) -> [f64; 3] {
    [4.0 * s_min, 2.0 * s_min, s_min]
}

/// Mass lost below s for Σ|x|².
pub fn lost_square(s: f64) -> f64 {
    s
}

/// Mass lost below s for Σ|x|² ln|x| and the derivative martingale.
pub fn lost_square_log(s: f64) -> f64 {
    s * (s.ln() - 1.0)
}

/// Mass lost below s for Σ|x|^{5/2}.
pub fn lost_five_halves(s: f64) -> f64 {
    s.powf(1.5)
}

/// An observable measured on each rung of the ladder, with its per-system
/// extrapolation to s_min → 0.
#[derive(Debug, Clone, Serialize)]
pub struct Ladder {
    pub s_min: Vec<f64>,
    pub raw: Vec<MeanSe>,
    pub extrapolated: MeanSe,
}

/// `y[i][k]` is system i measured at `s[k]`; `lost` is the regressor of the
/// truncation loss. Each system contributes one extrapolated value, so the
/// standard error covers the coupling between rungs.
pub fn extrapolate(s: &[f64], y: &[Vec<f64>], lost: fn(f64) -> f64) -> Result<Ladder> {
    let raw = (0..s.len())
        .map(|k| mean_se(&y.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect::<hgf_core::Result<Vec<_>>>()?;
    Ok(Ladder { s_min: s.to_vec(), raw, extrapolated: mean_se(&extrapolated_values(s, y, lost)?)? })
}

/// Per-system extrapolated values, for paired comparisons between observables.
pub fn extrapolated_values(s: &[f64], y: &[Vec<f64>], lost: fn(f64) -> f64) -> Result<Vec<f64>> {
    let g: Vec<f64> = s.iter().map(|&v| lost(v)).collect();
    let c = intercept_coefficients(&g)?;
    Ok(y.iter().map(|r| r.iter().zip(&c).map(|(v, c)| v * c).sum()).collect())
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: Value,
    pub passed: bool,
    pub manifest: RunManifest,
}

/// Runs one experiment into `cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig) -> std::result::Result<RunOutcome, Failure> {
    let started = now_rfc3339();
    let mut out = OutputDir::create(&cfg.output_dir).map_err(Failure::io)?;
    let (report, passed) = execute(cfg, &mut out).map_err(Failure::classify)?;
    let report = json!({ "experiment": cfg.experiment.name(), "passed": passed, "results": report });
    out.write_json("report.json", &report).map_err(Failure::io)?;
    let config = serde_json::to_value(cfg).map_err(|e| Failure::Io(e.to_string()))?;
    let manifest = out.finish(config, cfg.seed, started).map_err(Failure::io)?;
    Ok(RunOutcome { report, passed, manifest })
}

fn execute(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(Value, bool)> {
    let key = RngKey::new(cfg.seed);
    match cfg.experiment {
        Experiment::SampleExcursion => sample_excursions(cfg, key, out),
        Experiment::Cut => cut(cfg, key, out),
        Experiment::LocallyLargest => locally_largest_paths(cfg, key, out),
        Experiment::SimulateGf => simulate_gf(cfg, key, out),
        Experiment::Cumulant => cumulant(cfg, out),
        Experiment::Martingales => martingales(cfg, key, out),
        Experiment::CompareTheorem1 => compare_theorem1(cfg, key, out),
        Experiment::MuCheck => mu_check(cfg, key, out),
        Experiment::DerivativeMartingale => derivative_martingale(cfg, key, out),
    }
}

pub fn csv_row(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v:.16e}");
    }
    s.push('\n');
    s
}

pub fn csv(header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&csv_row(&r));
    }
    s
}

fn sample_excursions(cfg: &ExperimentConfig, key: RngKey, out: &mut OutputDir) -> Result<(Value, bool)> {
    let grid = cfg.grid();
    let paths = par_replicas(cfg.n, |i| {
        let p = sample_excursion(cfg.z, &grid, key.named("excursions").split(i as u64))?;
        let mut buf = Vec::new();
        p.write_csv(&mut buf).expect("writing to memory");
        let ok = p.validate().is_ok() && p.x[0] == 0.0 && *p.x.last().expect("non-empty") == cfg.z;
        Ok((buf, json!({"replica": i, "duration": p.duration, "n_points": p.len(), "height": p.height()}), ok))
    })?;
    let mut rows = Vec::new();
    let mut passed = true;
    for (i, (buf, row, ok)) in paths.into_iter().enumerate() {
        out.write(&format!("excursions/path_{i:05}.csv"), &buf)?;
        rows.push(row);
        passed &= ok;
    }
    Ok((json!({ "paths": rows, "pinning_ok": passed }), passed))
}

fn cut(cfg: &ExperimentConfig, key: RngKey, out: &mut OutputDir) -> Result<(Value, bool)> {
    let probe = ExcursionProbe {
        fragment_levels: cfg.levels.clone(),
        m_levels: cfg.levels.iter().copied().filter(|&a| a > 0.0).collect(),
        ..Default::default()
    };
    let s = excursion_pass(cfg.z, &cfg.grid(), &probe, cfg.n, key.named("excursions"))?;
    let mut records = Vec::new();
    for (i, e) in s.iter().enumerate() {
        for (k, &a) in cfg.levels.iter().enumerate() {
            records.push(hgf_core::levelcut::fragment_record(i, a, &e.fragments[k]));
        }
    }
    out.write_jsonl("fragments.jsonl", &records)?;
    let mut per_level = Vec::new();
    let mut sorted = true;
    for (k, &a) in cfg.levels.iter().enumerate() {
        let counts: Vec<f64> = s.iter().map(|e| e.fragments[k].len() as f64).collect();
        sorted &= s.iter().all(|e| e.fragments[k].windows(2).all(|w| w[0].abs() >= w[1].abs()));
        let m = probe.m_levels.iter().position(|&l| l == a).map(|j| s.iter().map(|e| e.m[j]).collect::<Vec<_>>());
        per_level.push(json!({
            "level": a,
            "mean_n_fragments": mean_or_value(&counts),
            "m_a": m.as_deref().map(mean_or_value),
        }));
    }
    Ok((json!({ "levels": per_level, "ranked": sorted }), sorted))
}

fn mean_or_value(xs: &[f64]) -> Value {
    match mean_se(xs) {
        Ok(m) => json!({"mean": m.mean, "se": m.se, "n": m.n}),
        Err(_) => json!({"mean": xs.first(), "se": null, "n": xs.len()}),
    }
}

fn locally_largest_paths(cfg: &ExperimentConfig, key: RngKey, out: &mut OutputDir) -> Result<(Value, bool)> {
    let grid = cfg.grid();
    let res = par_replicas(cfg.n, |i| {
        let p = sample_excursion(cfg.z, &grid, key.named("excursions").split(i as u64))?;
        let tree = build_split_tree(&p)?;
        let ll = locally_largest(&tree, &p, &grid)?;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        ll.write_csv(&mut a).expect("writing to memory");
        ll.write_jumps_csv(&mut b).expect("writing to memory");
        let ok = ll.values.first() == Some(&cfg.z);
        Ok((a, b, json!({"replica": i, "apex_height": ll.apex_height, "n_jumps": ll.jumps.len(), "ties": ll.ties}), ok))
    })?;
    let mut rows = Vec::new();
    let mut passed = true;
    for (i, (a, b, row, ok)) in res.into_iter().enumerate() {
        out.write(&format!("xi/path_{i:05}.csv"), &a)?;
        out.write(&format!("xi/jumps_{i:05}.csv"), &b)?;
        rows.push(row);
        passed &= ok;
    }
    Ok((json!({ "paths": rows }), passed))
}

fn simulate_gf(cfg: &ExperimentConfig, key: RngKey, out: &mut OutputDir) -> Result<(Value, bool)> {
    let levels: Vec<f64> = cfg.levels.iter().copied().filter(|&a| a > 0.0 && a <= cfg.horizon()).collect();
    let sim = CellSimulator::new(&cfg.levy(), cfg.cell_options(levels.clone()))?;
    let trunc = cfg.truncation();
    let ladder = halving_ladder(trunc.s_min);
    let res = cell_pass(&sim, cfg.z, &trunc, cfg.n, key.named("cells"), |cs| {
        let mut buf = Vec::new();
        cs.write_jsonl(&mut buf).expect("writing to memory");
        let mut snaps = Vec::new();
        let mut omega = Vec::new();
        let x = ladder.iter().map(|&s| cs.coarsened(s).map(|c| positive_gf_x(&c))).collect::<hgf_core::Result<Vec<_>>>()?;
        for &a in &levels {
            snaps.push(snapshot_xbar(cs, a)?);
            let mut rungs = Vec::with_capacity(x.len());
            for sys in &x {
                rungs.push(snapshot_xbar(sys, a)?.sizes.iter().map(|s| s.powf(2.5)).sum::<f64>());
            }
            omega.push(rungs);
        }
        let labels: std::collections::HashSet<&[u32]> = cs.cells.iter().map(|c| c.label.as_slice()).collect();
        let ok = cs.cells.iter().skip(1).all(|c| {
            labels.contains(&c.label[..c.label.len() - 1])
                && c.birth_size.abs() >= trunc.s_min
                && c.generation() <= trunc.max_generation as usize
        });
        Ok((buf, snaps, omega, cs.cells.len(), cs.n_censored(), ok))
    })?;
    let mut records = Vec::new();
    let mut passed = true;
    let (mut n_cells, mut n_cens) = (Vec::new(), Vec::new());
    let mut omega = vec![Vec::new(); levels.len()];
    for (i, (buf, snaps, om, nc, ncen, ok)) in res.into_iter().enumerate() {
        out.write(&format!("cells/system_{i:05}.jsonl"), &buf)?;
        for s in &snaps {
            records.push(s.to_json(i));
        }
        for (k, v) in om.into_iter().enumerate() {
            omega[k].push(v);
        }
        n_cells.push(nc as f64);
        n_cens.push(ncen as f64);
        passed &= ok;
    }
    out.write_jsonl("snapshots.jsonl", &records)?;
    let omega_rows = levels
        .iter()
        .zip(&omega)
        .map(|(a, v)| {
            let sum = if v.len() > 1 {
                json!(extrapolate(&ladder, v, lost_five_halves)?)
            } else {
                json!(v.first().map(|r| r.last().copied()))
            };
            Ok(json!({"level": a, "sum_x_5_2": sum}))
        })
        .collect::<Result<Vec<Value>>>()?;
    Ok((
        json!({
            "cells_per_system": mean_or_value(&n_cells),
            "censored_per_system": mean_or_value(&n_cens),
            "omega_plus_martingale": omega_rows,
            "tree_well_formed": passed,
        }),
        passed,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct CumulantSummary {
    pub max_abs_diff: f64,
    pub kappa_2: f64,
    pub kappa_3_2: f64,
    pub kappa_5_2: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
    /// (q, Φ⁺(q), κ(q + 5/2))
    pub phi_checks: Vec<(f64, f64, f64)>,
    pub phi_minus_half: f64,
}

impl CumulantSummary {
    pub fn kappa_ok(&self) -> bool {
        self.max_abs_diff <= 1e-6
            && (self.kappa_2 + FRAC_2_PI).abs() <= 1e-8
            && self.kappa_3_2.abs() <= 1e-8
            && self.kappa_5_2.abs() <= 1e-8
            && (self.omega_minus - 1.5).abs() <= 1e-6
            && (self.omega_plus - 2.5).abs() <= 1e-6
    }

    pub fn phi_max_diff(&self) -> f64 {
        self.phi_checks.iter().map(|c| (c.1 - c.2).abs()).fold(0.0, f64::max)
    }

    pub fn phi_ok(&self) -> bool {
        self.phi_max_diff() <= 1e-6 && (self.phi_minus_half + FRAC_2_PI).abs() <= 1e-8
    }
}

pub const CUMULANT_Q: [f64; 19] =
    [1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0, 2.1, 2.2, 2.3, 2.4, 2.5, 2.6, 2.7, 2.8, 2.9];
pub const PHI_Q: [f64; 5] = [-1.2, -0.6, -0.5, 0.0, 0.3];

pub fn cumulant_checks(levy: &LevyConfig, out: &mut OutputDir, prefix: &str) -> Result<CumulantSummary> {
    let g = cumulant_grid(&CUMULANT_Q, levy)?;
    let mut buf = Vec::new();
    g.write_csv(&mut buf)?;
    out.write(&format!("{prefix}kappa.csv"), &buf)?;
    let mut phi_checks = Vec::new();
    for q in PHI_Q {
        phi_checks.push((q, phi_plus(q)?, kappa(q + 2.5, levy)?));
    }
    let s = CumulantSummary {
        max_abs_diff: g.max_abs_diff(),
        kappa_2: kappa(2.0, levy)?,
        kappa_3_2: kappa(1.5, levy)?,
        kappa_5_2: kappa(2.5, levy)?,
        omega_minus: g.omega_minus,
        omega_plus: g.omega_plus,
        phi_checks,
        phi_minus_half: phi_plus(-0.5)?,
    };
    Ok(s)
}

fn cumulant(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(Value, bool)> {
    let levy = cfg.levy();
    let s = cumulant_checks(&levy, out, "")?;
    let half = cfg.c / 2.0;
    let rows = (1..200).map(|k| {
        let z = -half + k as f64 * cfg.c / 200.0;
        vec![z, green_rc(z, cfg.c).unwrap_or(f64::NAN)]
    });
    out.write("green.csv", csv("z,RC", rows).as_bytes())?;
    let closed_2 = kappa_closed(2.0)?;
    let roots = find_roots(&levy)?;
    let passed = s.kappa_ok() && s.phi_ok();
    Ok((json!({ "summary": s, "kappa_closed_2": closed_2, "roots": roots, "C": cfg.c }), passed))
}

fn martingales(cfg: &ExperimentConfig, key: RngKey, out: &mut OutputDir) -> Result<(Value, bool)> {
    let probe = ExcursionProbe { m_levels: vec![cfg.a], t_c: vec![cfg.c], ..Default::default() };
    let s = excursion_pass(cfg.z, &cfg.grid(), &probe, cfg.n, key.named("excursions"))?;
    out.write("martingale.csv", csv("M_a,T_C", s.iter().map(|e| vec![e.m[0], e.t_c[0]])).as_bytes())?;
    let m: Vec<f64> = s.iter().map(|e| e.m[0]).collect();
    let rep = estimate_m_a(&m, cfg.z, cfg.a, cfg.n_boot, key.named("bootstrap"))?;
    let t: Vec<f64> = s.iter().map(|e| e.t_c[0]).collect();
    let tc = mean_se(&t)?;
    let r_c = green_rc(cfg.z / 2.0, cfg.c)?;
    let t_target = PI * cfg.z * cfg.z * r_c;
    let t_ok = (tc.mean - t_target).abs() <= 3.0 * tc.se;
    let passed = rep.within_tolerance() && t_ok;
    Ok((
        json!({
            "m_a": rep,
            "t_c": {"mean": tc.mean, "se": tc.se, "target": t_target, "R_C": r_c, "C": cfg.c, "pass": t_ok},
        }),
        passed,
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct RankComparison {
    pub name: String,
    pub ks: KsResult,
    pub mean_excursion: f64,
    pub mean_cells: f64,
}

/// Per-rank KS comparison of ranked sizes from level-cut fragments against
/// cell-system snapshots at the same level.
pub fn compare_ranked_sizes(excursion_sizes: &[Vec<f64>], cell_sizes: &[Vec<f64>]) -> Result<Vec<RankComparison>> {
    let mut rows = Vec::new();
    let mut push = |name: String, f: &dyn Fn(&[f64]) -> f64| -> Result<()> {
        let a: Vec<f64> = excursion_sizes.iter().map(|s| f(s)).collect();
        let b: Vec<f64> = cell_sizes.iter().map(|s| f(s)).collect();
        rows.push(RankComparison {
            name,
            ks: ks_two_sample(&a, &b)?,
            mean_excursion: a.iter().sum::<f64>() / a.len() as f64,
            mean_cells: b.iter().sum::<f64>() / b.len() as f64,
        });
        Ok(())
    };
    for r in 1..=3 {
        push(format!("rank{r}_abs"), &|s| rank_abs(s, r))?;
    }
    push("largest_signed".into(), &signed_largest)?;
    Ok(rows)
}

pub fn cell_snapshot_sizes(cfg: &ExperimentConfig, n: usize, key: RngKey) -> Result<Vec<Vec<f64>>> {
    let sim = CellSimulator::new(&cfg.levy(), CellOptions { observe: vec![cfg.a], ..Default::default() })?;
    let mut trunc = cfg.truncation();
    trunc.horizon = cfg.a;
    Ok(cell_pass(&sim, cfg.z, &trunc, n, key, |cs| Ok(snapshot_xbar(cs, cfg.a)?.sizes))?)
}

pub fn write_ranked(out: &mut OutputDir, name: &str, level: f64, sizes: &[Vec<f64>]) -> Result<()> {
    let recs: Vec<Value> = sizes.iter().enumerate().map(|(i, s)| hgf_core::levelcut::fragment_record(i, level, s)).collect();
    out.write_jsonl(name, &recs)
}

fn compare_theorem1(cfg: &ExperimentConfig, key: RngKey, out: &mut OutputDir) -> Result<(Value, bool)> {
    let probe = ExcursionProbe { fragment_levels: vec![cfg.a], ..Default::default() };
    let exc: Vec<Vec<f64>> = excursion_pass(cfg.z, &cfg.grid(), &probe, cfg.n, key.named("excursions"))?
        .into_iter()
        .map(|mut e| e.fragments.swap_remove(0))
        .collect();
    let cells = cell_snapshot_sizes(cfg, cfg.n, key.named("cells"))?;
    write_ranked(out, "fragments.jsonl", cfg.a, &exc)?;
    write_ranked(out, "snapshots.jsonl", cfg.a, &cells)?;
    let rows = compare_ranked_sizes(&exc, &cells)?;
    let passed = rows.iter().all(|r| r.ks.p > KS_ALPHA);
    Ok((json!({ "level": cfg.a, "comparisons": rows }), passed))
}

pub fn mu_check_data(cfg: &ExperimentConfig, key: RngKey) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    let probe = ExcursionProbe { m_levels: vec![cfg.a], hit_levels: vec![cfg.a], ..Default::default() };
    let s = excursion_pass(cfg.z, &cfg.grid(), &probe, cfg.n, key.named("excursions"))?;
    let gamma: Vec<(f64, f64)> = s.iter().map(|e| (e.m[0], e.hit_x[0].unwrap_or(0.0))).collect();
    let h = h_excursion_pass(cfg.a, &cfg.grid(), cfg.n, key.named("h-excursions"))?;
    Ok((gamma, h.into_iter().flatten().collect()))
}

pub fn mu_check_ok(r: &MuCheckReport) -> bool {
    r.ks_p > KS_ALPHA && (r.mean_weight - 1.0).abs() <= 3.0 * r.se_weight
}

fn mu_check(cfg: &ExperimentConfig, key: RngKey, out: &mut OutputDir) -> Result<(Value, bool)> {
    let (gamma, h) = mu_check_data(cfg, key)?;
    let z2 = cfg.z * cfg.z;
    out.write("gamma_side.csv", csv("weight,x_hit", gamma.iter().map(|g| vec![g.0 / z2, g.1])).as_bytes())?;
    out.write("h_side.csv", csv("x_hit", h.iter().map(|&x| vec![x])).as_bytes())?;
    let r = mu_z_check(&gamma, &h, cfg.z, cfg.a, cfg.n_boot, key.named("bootstrap"))?;
    let passed = mu_check_ok(&r);
    Ok((json!({ "report": r, "n_h_truncated": cfg.n - h.len() }), passed))
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeSummary {
    /// DC_n for n < G, on each rung of the s_min ladder and extrapolated.
    pub dc: Vec<Ladder>,
    /// (n, m, |mean_n − mean_m|, SE of the paired difference) of the extrapolated values
    pub pairs: Vec<(usize, usize, f64, f64)>,
    pub target: f64,
    pub biased_systems: usize,
}

impl DerivativeSummary {
    pub fn constant_ok(&self) -> bool {
        self.pairs.iter().all(|p| p.2 <= 3.0 * p.3)
    }

    pub fn target_ok(&self) -> bool {
        let m = &self.dc[0].extrapolated;
        (m.mean - self.target).abs() <= 3.0 * m.se
    }
}

/// Per-system DC_n for n < G on 𝕌^(C) only, one row per system laid out as
/// DC_0 on every rung of the ladder, then DC_1, and so on.
pub fn derivative_data(cfg: &ExperimentConfig, n_sys: usize, key: RngKey) -> Result<(Vec<Vec<f64>>, usize)> {
    let opts = CellOptions { evolve_last_generation: false, prune_at: Some(cfg.c), ..Default::default() };
    let sim = CellSimulator::new(&cfg.levy(), opts)?;
    let g = cfg.max_generation as usize;
    let ladder = halving_ladder(cfg.s_min);
    let rows = cell_pass(&sim, cfg.z, &cfg.truncation(), n_sys, key, |cs| {
        let systems = ladder.iter().map(|&s| cs.coarsened(s)).collect::<hgf_core::Result<Vec<_>>>()?;
        let mut v = Vec::with_capacity(g * ladder.len());
        let mut biased = false;
        for n in 0..g {
            for sys in &systems {
                let r = brw_observables(sys, n, cfg.c)?;
                v.push(r.dc_n);
                biased |= r.biased && cfg.horizon().is_finite();
            }
        }
        Ok((v, biased))
    })?;
    let biased = rows.iter().filter(|r| r.1).count();
    Ok((rows.into_iter().map(|r| r.0).collect(), biased))
}

pub fn derivative_header(g: usize, s_min: f64) -> String {
    let ladder = halving_ladder(s_min);
    (0..g).flat_map(|n| ladder.iter().map(move |s| format!("DC_{n}_s{s}"))).collect::<Vec<_>>().join(",")
}

pub fn derivative_summary(rows: &[Vec<f64>], s_min: f64, z: f64, c: f64, biased: usize) -> Result<DerivativeSummary> {
    let ladder = halving_ladder(s_min);
    let l = ladder.len();
    let g = rows.first().map_or(0, |r| r.len() / l);
    let block = |n: usize| rows.iter().map(|r| r[n * l..(n + 1) * l].to_vec()).collect::<Vec<_>>();
    let dc = (0..g).map(|n| extrapolate(&ladder, &block(n), lost_square_log)).collect::<Result<Vec<_>>>()?;
    let ext = (0..g).map(|n| extrapolated_values(&ladder, &block(n), lost_square_log)).collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..g {
        for j in i + 1..g {
            let d: Vec<f64> = ext[i].iter().zip(&ext[j]).map(|(a, b)| a - b).collect();
            let m = mean_se(&d)?;
            pairs.push((i, j, m.mean.abs(), m.se));
        }
    }
    Ok(DerivativeSummary { dc, pairs, target: PI * z * z * green_rc(z / 2.0, c)?, biased_systems: biased })
}

fn derivative_martingale(cfg: &ExperimentConfig, key: RngKey, out: &mut OutputDir) -> Result<(Value, bool)> {
    let (rows, biased) = derivative_data(cfg, cfg.n, key.named("cells")).context("simulating cell systems")?;
    let header = derivative_header(cfg.max_generation as usize, cfg.s_min);
    out.write("derivative.csv", csv(&header, rows.iter().cloned()).as_bytes())?;
    let s = derivative_summary(&rows, cfg.s_min, cfg.z, cfg.c, biased)?;
    let passed = s.constant_ok() && s.target_ok();
    Ok((json!({ "summary": s, "constant_in_n": s.constant_ok(), "dc0_on_target": s.target_ok() }), passed))
}
