//! The acceptance suite: criteria 1–11, each reduced to one verdict row.

use crate::config::{Experiment, ExperimentConfig};
use crate::experiments::{
    csv, cumulant_checks, derivative_data, derivative_header, derivative_summary, extrapolate, halving_ladder,
    lost_square, lost_square_log, mu_check_ok, cell_snapshot_sizes, compare_ranked_sizes, write_ranked, KS_ALPHA,
};
use crate::output::{now_rfc3339, OutputDir, RunManifest, MANIFEST_NAME};
use crate::tasks::{excursion_pass, h_excursion_pass, par_replicas, ExcursionProbe, ExcursionSummary};
use anyhow::{bail, Result};
use hgf_core::analytics::mu_z_check;
use hgf_core::cells::{brw_observables, CellOptions, CellSimulator, Truncation};
use hgf_core::levy::{psi, sample_levy_xi, LevyConfig};
use hgf_core::sampling::{sample_duration, GridSpec};
use hgf_core::ssmp::{cauchy_weighted_xi_oracle, SsmpSampler};
use hgf_core::stats::{bootstrap_se, ks_one_sample, ks_two_sample, ks_weighted, mean_se};
use hgf_core::RngKey;
use serde::Serialize;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::path::Path;

/// Sample sizes of every Monte Carlo criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scale {
    pub durations: usize,
    pub excursions: usize,
    pub refinement: usize,
    pub size_law: usize,
    pub triangulation: usize,
    pub oracle_paths: usize,
    pub levy_paths: usize,
    pub derivative_systems: usize,
    pub criticality_systems: usize,
    pub h_excursions: usize,
    pub n_boot: usize,
}

impl Scale {
    pub const FULL: Scale = Scale {
        durations: 100_000,
        excursions: 20_000,
        refinement: 5_000,
        size_law: 10_000,
        triangulation: 10_000,
        oracle_paths: 200_000,
        levy_paths: 100_000,
        derivative_systems: 20_000,
        criticality_systems: 10_000,
        h_excursions: 20_000,
        n_boot: 200,
    };

    /// Roughly 1/50 of the full scale; for smoke runs and reproducibility.
    pub const QUICK: Scale = Scale {
        durations: 2_000,
        excursions: 400,
        refinement: 100,
        size_law: 200,
        triangulation: 200,
        oracle_paths: 4_000,
        levy_paths: 2_000,
        derivative_systems: 400,
        criticality_systems: 200,
        h_excursions: 400,
        n_boot: 50,
    };

    pub fn from_name(name: &str) -> Result<Scale> {
        match name {
            "full" => Ok(Scale::FULL),
            "quick" => Ok(Scale::QUICK),
            _ => bail!("unknown acceptance scale {name:?}; expected full or quick"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionRow {
    pub id: u32,
    pub name: String,
    pub target: String,
    pub estimate: String,
    pub tolerance: String,
    pub passed: bool,
}

impl CriterionRow {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} | {} | target {} | estimate {} | tolerance {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.target,
            self.estimate,
            self.tolerance
        )
    }
}

pub struct Suite<'a> {
    pub seed: u64,
    pub scale: Scale,
    pub out: OutputDir,
    pub levy: LevyConfig,
    pub grid: GridSpec,
    /// Called with every finished row.
    pub on_row: Box<dyn FnMut(&CriterionRow) + 'a>,
    rows: Vec<CriterionRow>,
    details: Vec<Value>,
    z1: Option<Vec<ExcursionSummary>>,
}

const Z: f64 = 1.0;
const C: f64 = 4.0;
const M_LEVELS: [f64; 2] = [0.25, 0.5];
const SNAPSHOT_LEVEL: f64 = 0.3;
const MU_LEVEL: f64 = 0.5;
const S_MIN: f64 = 1e-3;

fn fmt_ms(mean: f64, se: f64) -> String {
    format!("{mean:.6} ± {se:.6}")
}

impl<'a> Suite<'a> {
    pub fn new(seed: u64, scale: Scale, out_dir: &Path, on_row: Box<dyn FnMut(&CriterionRow) + 'a>) -> Result<Self> {
        Ok(Suite {
            seed,
            scale,
            out: OutputDir::create(out_dir)?,
            levy: LevyConfig::default(),
            grid: GridSpec { dt: 1e-4 * Z * Z, level_da: 1e-3, ..Default::default() },
            on_row,
            rows: Vec::new(),
            details: Vec::new(),
            z1: None,
        })
    }

    fn key(&self, tag: &str) -> RngKey {
        RngKey::new(self.seed).named(tag)
    }

    fn push(&mut self, row: CriterionRow, details: Value) {
        (self.on_row)(&row);
        self.details.push(json!({ "id": row.id, "details": details }));
        self.rows.push(row);
    }

    /// Excursions at z = 1 shared by criteria 4, 5, 6, 8 and 10.
    fn z1_excursions(&mut self) -> Result<&[ExcursionSummary]> {
        if self.z1.is_none() {
            let probe = ExcursionProbe {
                m_levels: M_LEVELS.to_vec(),
                t_c: vec![C],
                hit_levels: vec![MU_LEVEL],
                fragment_levels: vec![SNAPSHOT_LEVEL],
                xi_levels: vec![SNAPSHOT_LEVEL],
                coarsen: vec![],
            };
            let s = excursion_pass(Z, &self.grid, &probe, self.scale.excursions, self.key("excursions-z1"))?;
            let rows = s.iter().map(|e| {
                vec![e.duration, e.height, e.m[0], e.m[1], e.t_c[0], e.hit_x[0].unwrap_or(f64::NAN), e.xi[0]]
            });
            self.out.write("excursions_z1.csv", csv("duration,height,M_0.25,M_0.5,T_4,x_hit_0.5,xi_0.3", rows).as_bytes())?;
            self.z1 = Some(s);
        }
        Ok(self.z1.as_deref().expect("just filled"))
    }

    pub fn run_all(mut self, with_reproducibility: bool) -> Result<(Vec<CriterionRow>, RunManifest)> {
        let started = now_rfc3339();
        type Step<'b> = fn(&mut Suite<'b>) -> Result<()>;
        let mut steps: Vec<(&[u32], &str, Step<'a>)> = vec![
            (&[1, 2], "cumulant", Suite::cumulant),
            (&[3], "duration law", Suite::duration_law),
            (&[4], "martingale mean", Suite::martingale_mean),
            (&[5], "excursion vs cell size law", Suite::size_law),
            (&[6], "locally largest triangulation", Suite::triangulation),
            (&[7], "Lévy sampler vs Laplace exponent", Suite::levy_moments),
            (&[8], "derivative-martingale chain", Suite::derivative_chain),
            (&[9], "criticality", Suite::criticality),
            (&[10], "change of measure", Suite::change_of_measure),
        ];
        if with_reproducibility {
            steps.push((&[11], "deterministic reproducibility", Suite::reproducibility));
        }
        for (ids, name, step) in steps {
            if let Err(e) = step(&mut self) {
                // an aborted criterion still gets a failing row
                let missing: Vec<u32> = ids.iter().copied().filter(|&id| self.rows.iter().all(|r| r.id != id)).collect();
                for id in missing {
                    let row = CriterionRow {
                        id,
                        name: name.into(),
                        target: "-".into(),
                        estimate: format!("error: {e:#}"),
                        tolerance: "-".into(),
                        passed: false,
                    };
                    self.push(row, json!({ "error": format!("{e:#}") }));
                }
            }
        }
        let table: String = self.rows.iter().map(|r| r.line() + "\n").collect();
        self.out.write("acceptance.txt", table.as_bytes())?;
        let summary = json!({ "scale": self.scale, "rows": self.rows, "details": self.details });
        self.out.write_json("acceptance.json", &summary)?;
        let config = json!({ "suite": "acceptance", "seed": self.seed, "scale": self.scale, "levy": self.levy,
            "grid_dt": self.grid.dt, "grid_level_da": self.grid.level_da, "grid_max_steps": self.grid.max_steps });
        let manifest = self.out.finish(config, self.seed, started)?;
        Ok((self.rows, manifest))
    }

    fn cumulant(&mut self) -> Result<()> {
        let s = cumulant_checks(&self.levy, &mut self.out, "c01_")?;
        let est = format!(
            "max|Δ|={:.2e} κ(2)+2/π={:.2e} κ(3/2)={:.2e} κ(5/2)={:.2e} ω=({:.9}, {:.9})",
            s.max_abs_diff,
            s.kappa_2 + 2.0 / PI,
            s.kappa_3_2,
            s.kappa_5_2,
            s.omega_minus,
            s.omega_plus
        );
        let details = serde_json::to_value(&s)?;
        self.push(
            CriterionRow {
                id: 1,
                name: "cumulant agreement".into(),
                target: "κ numeric = closed form; κ(2) = -2/π; κ(3/2) = κ(5/2) = 0; roots (1.5, 2.5)".into(),
                estimate: est,
                tolerance: "1e-6 grid and roots, 1e-8 point values".into(),
                passed: s.kappa_ok(),
            },
            details.clone(),
        );
        self.push(
            CriterionRow {
                id: 2,
                name: "Φ⁺ consistency".into(),
                target: "Φ⁺(q) = κ(q + 5/2); Φ⁺(-1/2) = -2/π".into(),
                estimate: format!("max|Δ|={:.2e} Φ⁺(-1/2)+2/π={:.2e}", s.phi_max_diff(), s.phi_minus_half + 2.0 / PI),
                tolerance: "1e-6, 1e-8".into(),
                passed: s.phi_ok(),
            },
            details,
        );
        Ok(())
    }

    fn duration_law(&mut self) -> Result<()> {
        let key = self.key("durations");
        let r = par_replicas(self.scale.durations, |i| sample_duration(Z, key.split(i as u64)))?;
        let w: Vec<f64> = r.iter().map(|v| Z * Z / (2.0 * v)).collect();
        self.out.write("c03_durations.csv", csv("r", r.iter().map(|&v| vec![v])).as_bytes())?;
        let ks = ks_one_sample(&w, |x| if x > 0.0 { -(-x).exp_m1() } else { 0.0 })?;
        let m = mean_se(&w)?;
        let passed = ks.p > KS_ALPHA && (m.mean - 1.0).abs() <= 3.0 * m.se;
        self.push(
            CriterionRow {
                id: 3,
                name: "duration law".into(),
                target: "z²/(2R) ~ Exp(1), mean 1".into(),
                estimate: format!("KS p={:.4} mean={}", ks.p, fmt_ms(m.mean, m.se)),
                tolerance: "p > 0.01, 3·SE".into(),
                passed,
            },
            json!({ "ks": ks, "mean": m }),
        );
        Ok(())
    }

    fn martingale_mean(&mut self) -> Result<()> {
        let n_boot = self.scale.n_boot;
        let boot_key = self.key("c04-bootstrap");
        let s = self.z1_excursions()?;
        let mut reports = Vec::new();
        for (k, &a) in M_LEVELS.iter().enumerate() {
            let v: Vec<f64> = s.iter().map(|e| e.m[k]).collect();
            reports.push(hgf_core::analytics::estimate_m_a(&v, Z, a, n_boot, boot_key.split(k as u64))?);
        }
        // coupled refinements: one path on dt/4, subsampled to dt/2 and dt
        let fine = GridSpec { dt: self.grid.dt / 4.0, ..self.grid };
        let probe = ExcursionProbe { m_levels: M_LEVELS.to_vec(), coarsen: vec![4, 2], ..Default::default() };
        let r = excursion_pass(Z, &fine, &probe, self.scale.refinement, self.key("c04-refinement"))?;
        let rows = r.iter().map(|e| {
            let mut v = e.m_coarse[0].clone();
            v.extend(&e.m_coarse[1]);
            v.extend(&e.m);
            v
        });
        self.out.write(
            "c04_refinement.csv",
            csv("M_0.25_dt,M_0.5_dt,M_0.25_dt2,M_0.5_dt2,M_0.25_dt4,M_0.5_dt4", rows).as_bytes(),
        )?;
        let mut refine = Vec::new();
        let mut passed = reports.iter().all(|r| r.within_tolerance());
        for k in 0..M_LEVELS.len() {
            let col = |f: &dyn Fn(&ExcursionSummary) -> f64| r.iter().map(f).collect::<Vec<f64>>();
            let m1 = mean_se(&col(&|e| e.m_coarse[0][k]))?;
            let m2 = mean_se(&col(&|e| e.m_coarse[1][k]))?;
            let m3 = mean_se(&col(&|e| e.m[k]))?;
            let (d1, d2) = (m2.mean - m1.mean, m3.mean - m2.mean);
            let paired1 = mean_se(&col(&|e| e.m_coarse[1][k] - e.m_coarse[0][k]))?;
            let paired2 = mean_se(&col(&|e| e.m[k] - e.m_coarse[1][k]))?;
            let monotone = d1 * d2 > 0.0 && d2.abs() < d1.abs();
            // geometric extrapolation of the coupled sequence
            let limit = if monotone { m3.mean + d2 * (d2 / d1) / (1.0 - d2 / d1) } else { f64::NAN };
            let toward = (limit - Z * Z).abs() <= (3.0 * m3.se).max(0.05 * Z * Z);
            passed &= monotone && toward;
            refine.push(json!({ "a": M_LEVELS[k], "means": [m1, m2, m3], "increments": [d1, d2], "paired_increments": [paired1, paired2],
                "monotone": monotone, "extrapolated": limit, "toward_target": toward }));
        }
        let est = reports.iter().map(|r| format!("a={}: {}", r.a, fmt_ms(r.mean, r.se))).collect::<Vec<_>>().join("; ");
        let inc = refine
            .iter()
            .map(|v| {
                let p = &v["paired_increments"];
                let f = |i: usize, k: &str| p[i][k].as_f64().unwrap_or(f64::NAN);
                format!("Δ=({:+.4}±{:.4}, {:+.4}±{:.4})", f(0, "mean"), f(0, "se"), f(1, "mean"), f(1, "se"))
            })
            .collect::<Vec<_>>()
            .join(" ");
        self.push(
            CriterionRow {
                id: 4,
                name: "martingale mean".into(),
                target: "γ_1[M_a] = 1 at a ∈ {0.25, 0.5}; coupled dt-halving monotone toward 1".into(),
                estimate: format!("{est}; refinement {inc}"),
                tolerance: "max(3·SE, 5%)".into(),
                passed,
            },
            json!({ "estimates": reports, "refinement": refine }),
        );
        Ok(())
    }

    fn size_law(&mut self) -> Result<()> {
        let n = self.scale.size_law;
        let exc: Vec<Vec<f64>> = self.z1_excursions()?.iter().take(n).map(|e| e.fragments[0].clone()).collect();
        let cfg = ExperimentConfig {
            experiment: Experiment::CompareTheorem1,
            z: Z,
            a: SNAPSHOT_LEVEL,
            s_min: S_MIN,
            max_generation: 6,
            eps: self.levy.eps,
            levy_dt: self.levy.dt,
            quadrature_tol: self.levy.quadrature_tol,
            ..Default::default()
        };
        let cells = cell_snapshot_sizes(&cfg, n, self.key("c05-cells"))?;
        write_ranked(&mut self.out, "c05_fragments.jsonl", SNAPSHOT_LEVEL, &exc)?;
        write_ranked(&mut self.out, "c05_snapshots.jsonl", SNAPSHOT_LEVEL, &cells)?;
        let rows = compare_ranked_sizes(&exc, &cells)?;
        let passed = rows.iter().all(|r| r.ks.p > KS_ALPHA);
        let est = rows.iter().map(|r| format!("{} p={:.4}", r.name, r.ks.p)).collect::<Vec<_>>().join(", ");
        self.push(
            CriterionRow {
                id: 5,
                name: "excursion vs cell size law".into(),
                target: "fragment ranks 1-3 and signed largest agree in law with X̄(0.3)".into(),
                estimate: est,
                tolerance: "KS p > 0.01 each".into(),
                passed,
            },
            serde_json::to_value(&rows)?,
        );
        Ok(())
    }

    fn triangulation(&mut self) -> Result<()> {
        let n = self.scale.triangulation;
        let level_cut: Vec<f64> = self.z1_excursions()?.iter().take(n).map(|e| e.xi[0]).collect();
        let sampler = SsmpSampler::new(&self.levy, 1e-4)?;
        let key = self.key("c06-lamperti");
        let lamperti = par_replicas(n, |i| {
            let p = sampler.sample(Z, &[SNAPSHOT_LEVEL], key.split(i as u64))?;
            Ok(p.value_at_index(0).unwrap_or(f64::NAN))
        })?;
        let censored = lamperti.iter().filter(|v| v.is_nan()).count();
        let lamperti: Vec<f64> = lamperti.into_iter().filter(|v| !v.is_nan()).collect();
        let w = cauchy_weighted_xi_oracle(Z, SNAPSHOT_LEVEL, &self.grid, self.key("c06-oracle"), self.scale.oracle_paths)?;
        // dead paths form an atom at 0 of total mass N − Σw, stored as unit points
        let (mut ov, mut ow) = (w.values.clone(), w.weights.clone());
        let mut rest = w.n_total as f64 - w.weights.iter().sum::<f64>();
        while rest > 0.0 {
            ov.push(0.0);
            ow.push(rest.min(1.0));
            rest -= 1.0;
        }
        self.out.write("c06_level_cut.csv", csv("xi", level_cut.iter().map(|&v| vec![v])).as_bytes())?;
        self.out.write("c06_lamperti.csv", csv("xi", lamperti.iter().map(|&v| vec![v])).as_bytes())?;
        self.out.write("c06_oracle.csv", csv("eta,weight", ov.iter().zip(&ow).map(|(&v, &w)| vec![v, w])).as_bytes())?;
        let ones_a = vec![1.0; level_cut.len()];
        let ones_b = vec![1.0; lamperti.len()];
        let ab = ks_two_sample(&level_cut, &lamperti)?;
        let ac = ks_weighted(&level_cut, &ones_a, &ov, &ow)?;
        let bc = ks_weighted(&lamperti, &ones_b, &ov, &ow)?;
        let ess = hgf_core::stats::ess(&ow);
        let passed = [ab.p, ac.p, bc.p].iter().all(|&p| p > KS_ALPHA) && ess >= n as f64 && censored == 0;
        self.push(
            CriterionRow {
                id: 6,
                name: "locally largest triangulation".into(),
                target: "Ξ(0.3)·1{alive} equal in law: level-cut, Lamperti, Cauchy oracle".into(),
                estimate: format!(
                    "p(cut,lamperti)={:.4} p(cut,oracle)={:.4} p(lamperti,oracle)={:.4}; oracle ESS={:.0}; alive mass {:.4}",
                    ab.p,
                    ac.p,
                    bc.p,
                    ess,
                    w.alive_mass()
                ),
                tolerance: format!("KS p > 0.01 pairwise, ESS ≥ {n}"),
                passed,
            },
            json!({ "cut_vs_lamperti": ab, "cut_vs_oracle": ac, "lamperti_vs_oracle": bc, "oracle_ess": ess,
                "oracle_kept": w.n_kept(), "oracle_total": w.n_total, "lamperti_censored": censored }),
        );
        Ok(())
    }

    fn levy_moments(&mut self) -> Result<()> {
        let key = self.key("c07-levy");
        let levy = self.levy;
        let xi1 = par_replicas(self.scale.levy_paths, |i| {
            Ok(*sample_levy_xi(1.0, &levy, key.split(i as u64))?.xi.last().expect("non-empty path"))
        })?;
        self.out.write("c07_xi1.csv", csv("xi_1", xi1.iter().map(|&v| vec![v])).as_bytes())?;
        let mut passed = true;
        let mut parts = Vec::new();
        let mut details = Vec::new();
        for (k, q) in [1.0f64, 2.0].into_iter().enumerate() {
            let e: Vec<f64> = xi1.iter().map(|x| (q * x).exp()).collect();
            let stat = |v: &[f64]| (v.iter().sum::<f64>() / v.len() as f64).ln();
            let est = stat(&e);
            let se = bootstrap_se(&e, stat, self.scale.n_boot, self.key("c07-bootstrap").split(k as u64))?;
            let target = psi(q, &levy)?;
            let ok = (est - target).abs() <= 3.0 * se;
            passed &= ok;
            parts.push(format!("q={q}: {} vs Ψ={target:.6}", fmt_ms(est, se)));
            details.push(json!({ "q": q, "log_mean": est, "bootstrap_se": se, "psi": target, "pass": ok }));
        }
        self.push(
            CriterionRow {
                id: 7,
                name: "Lévy sampler vs Laplace exponent".into(),
                target: "log E[e^{qξ_1}] = Ψ(q), q ∈ {1, 2}".into(),
                estimate: parts.join("; "),
                tolerance: "3·bootstrap SE".into(),
                passed,
            },
            json!(details),
        );
        Ok(())
    }

    fn derivative_chain(&mut self) -> Result<()> {
        let cfg = ExperimentConfig {
            experiment: Experiment::DerivativeMartingale,
            z: Z,
            c: C,
            s_min: S_MIN,
            max_generation: 3,
            eps: self.levy.eps,
            levy_dt: self.levy.dt,
            quadrature_tol: self.levy.quadrature_tol,
            ..Default::default()
        };
        let (rows, biased) = derivative_data(&cfg, self.scale.derivative_systems, self.key("c08-cells"))?;
        self.out.write("c08_derivative.csv", csv(&derivative_header(3, S_MIN), rows.iter().cloned()).as_bytes())?;
        let s = derivative_summary(&rows, S_MIN, Z, C, biased)?;
        let t: Vec<f64> = self.z1_excursions()?.iter().map(|e| e.t_c[0]).collect();
        let tc = mean_se(&t)?;
        let t_ok = (tc.mean - s.target).abs() <= 3.0 * tc.se;
        // occupation of the doubled Cauchy process killed outside (−C, C)
        let u = Z / C;
        let t_closed = Z * Z * ((1.0 + (1.0 - u * u).sqrt()) / u).ln();
        let passed = s.constant_ok() && s.target_ok() && t_ok;
        let dcs = s.dc.iter().map(|l| fmt_ms(l.extrapolated.mean, l.extrapolated.se)).collect::<Vec<_>>().join(", ");
        let raw = s
            .dc
            .iter()
            .map(|l| l.raw.last().map_or(String::new(), |m| fmt_ms(m.mean, m.se)))
            .collect::<Vec<_>>()
            .join(", ");
        self.push(
            CriterionRow {
                id: 8,
                name: "derivative-martingale chain".into(),
                target: format!("E[DC_n] constant in n; E[DC_0] = E[T_4] = πR_4(1/2) = {:.6}", s.target),
                estimate: format!(
                    "DC_0..2 = [{dcs}] (raw at s_min={S_MIN}: [{raw}]); E[T_4] = {}",
                    fmt_ms(tc.mean, tc.se)
                ),
                tolerance: "3·SE of the s_min-extrapolated values (paired for n-constancy)".into(),
                passed,
            },
            json!({ "cells": s, "t_c": tc, "t_c_pass": t_ok, "t_c_closed_form": t_closed, "constant_in_n": s.constant_ok(), "dc0_on_target": s.target_ok() }),
        );
        Ok(())
    }

    fn criticality(&mut self) -> Result<()> {
        let ladder = halving_ladder(S_MIN);
        let opts = CellOptions { evolve_last_generation: false, ..Default::default() };
        let sim = CellSimulator::new(&self.levy, opts)?;
        let trunc = Truncation { s_min: S_MIN, max_generation: 1, horizon: f64::INFINITY };
        let rows = crate::tasks::cell_pass(&sim, Z, &trunc, self.scale.criticality_systems, self.key("c09-cells"), |cs| {
            let mut v = Vec::with_capacity(2 * ladder.len());
            for &s in &ladder {
                let r = brw_observables(&cs.coarsened(s)?, 0, C)?;
                v.extend([r.m_n, -r.d_n]);
            }
            Ok(v)
        })?;
        let header = ladder.iter().map(|s| format!("sum_x2_s{s},sum_x2_ln_x_s{s}")).collect::<Vec<_>>().join(",");
        self.out.write("c09_generation1.csv", csv(&header, rows.iter().cloned()).as_bytes())?;
        let pick = |j: usize| rows.iter().map(|r| (0..ladder.len()).map(|k| r[2 * k + j]).collect()).collect::<Vec<Vec<f64>>>();
        let sq = extrapolate(&ladder, &pick(0), lost_square)?;
        let lg = extrapolate(&ladder, &pick(1), lost_square_log)?;
        let (e1, e2) = (&sq.extrapolated, &lg.extrapolated);
        let ok1 = (e1.mean - Z * Z).abs() <= 3.0 * e1.se;
        let ok2 = e2.mean.abs() <= 3.0 * e2.se;
        let raw = |l: &crate::experiments::Ladder| l.raw.iter().map(|m| fmt_ms(m.mean, m.se)).collect::<Vec<_>>().join(", ");
        self.push(
            CriterionRow {
                id: 9,
                name: "criticality".into(),
                target: "E[Σ|x|² ln|x|] = 0 and E[Σ|x|²] = 1 over generation 1, s_min → 0".into(),
                estimate: format!(
                    "Σx² ln|x| → {} (raw [{}]); Σx² → {} (raw [{}]) at s_min = {:?}",
                    fmt_ms(e2.mean, e2.se),
                    raw(&lg),
                    fmt_ms(e1.mean, e1.se),
                    raw(&sq),
                    ladder
                ),
                tolerance: "3·SE of the per-system s_min-extrapolated values".into(),
                passed: ok1 && ok2,
            },
            json!({ "sum_x2": sq, "sum_x2_ln_x": lg }),
        );
        Ok(())
    }

    fn change_of_measure(&mut self) -> Result<()> {
        let n_h = self.scale.h_excursions;
        let (grid, n_boot) = (self.grid, self.scale.n_boot);
        let h_key = self.key("c10-h");
        let boot = self.key("c10-bootstrap");
        let gamma: Vec<(f64, f64)> =
            self.z1_excursions()?.iter().map(|e| (e.m[1], e.hit_x[0].unwrap_or(0.0))).collect();
        let h: Vec<f64> = h_excursion_pass(MU_LEVEL, &grid, n_h, h_key)?.into_iter().flatten().collect();
        self.out.write("c10_h_side.csv", csv("x_hit", h.iter().map(|&x| vec![x])).as_bytes())?;
        let r = mu_z_check(&gamma, &h, Z, MU_LEVEL, n_boot, boot)?;
        let passed = mu_check_ok(&r) && r.ess >= 1e3;
        self.push(
            CriterionRow {
                id: 10,
                name: "change of measure".into(),
                target: "x(T_0.5) under (M_a/z²)·γ_1 equals the H-excursion law; mean weight 1".into(),
                estimate: format!(
                    "weighted KS p={:.4} (bootstrap p={:.4}); mean weight {}; ESS={:.0}",
                    r.ks_p,
                    r.bootstrap_p,
                    fmt_ms(r.mean_weight, r.se_weight),
                    r.ess
                ),
                tolerance: "p > 0.01, 3·SE, ESS ≥ 1000".into(),
                passed,
            },
            json!({ "report": r, "h_truncated": n_h - h.len() }),
        );
        Ok(())
    }

    fn reproducibility(&mut self) -> Result<()> {
        let root = self.out.root().join("reproducibility");
        let mut manifests = Vec::new();
        for tag in ["run_a", "run_b"] {
            let dir = root.join(tag);
            if dir.exists() {
                std::fs::remove_dir_all(&dir)?;
            }
            let suite = Suite::new(self.seed, Scale::QUICK, &dir, Box::new(|_| {}))?;
            manifests.push(suite.run_all(false)?.1);
        }
        let (a, b) = (&manifests[0], &manifests[1]);
        let mut identical = a.files == b.files && !a.files.is_empty();
        for name in a.files.keys() {
            let fa = std::fs::read(root.join("run_a").join(name))?;
            let fb = std::fs::read(root.join("run_b").join(name))?;
            identical &= fa == fb;
        }
        identical &= a.verify(&root.join("run_a"))?.is_empty() && b.verify(&root.join("run_b"))?.is_empty();
        self.push(
            CriterionRow {
                id: 11,
                name: "deterministic reproducibility".into(),
                target: "two suite runs with one master seed give byte-identical files".into(),
                estimate: format!("{} files compared (excluding {MANIFEST_NAME} timestamps); identical: {identical}", a.files.len()),
                tolerance: "exact".into(),
                passed: identical,
            },
            json!({ "files": a.files.len(), "identical": identical }),
        );
        Ok(())
    }
}
