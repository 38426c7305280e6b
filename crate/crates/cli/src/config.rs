//! Flat experiment configuration: defaults, then a TOML file, then `HGF_*`
//! environment variables, then command-line overrides.

use anyhow::{anyhow, bail, Context, Result};
use hgf_core::{CellOptions, GridSpec, LevyConfig, Truncation};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const ENV_PREFIX: &str = "HGF_";

/// Environment variables with the prefix that are not configuration keys.
pub const RESERVED_ENV: &[&str] = &["HGF_ACCEPTANCE_SCALE", "HGF_ACCEPTANCE_STRICT"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SampleExcursion,
    Cut,
    LocallyLargest,
    SimulateGf,
    Cumulant,
    Martingales,
    CompareTheorem1,
    MuCheck,
    DerivativeMartingale,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::SampleExcursion,
        Experiment::Cut,
        Experiment::LocallyLargest,
        Experiment::SimulateGf,
        Experiment::Cumulant,
        Experiment::Martingales,
        Experiment::CompareTheorem1,
        Experiment::MuCheck,
        Experiment::DerivativeMartingale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SampleExcursion => "sample-excursion",
            Experiment::Cut => "cut",
            Experiment::LocallyLargest => "locally-largest",
            Experiment::SimulateGf => "simulate-gf",
            Experiment::Cumulant => "cumulant",
            Experiment::Martingales => "martingales",
            Experiment::CompareTheorem1 => "compare-theorem1",
            Experiment::MuCheck => "mu-check",
            Experiment::DerivativeMartingale => "derivative-martingale",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| anyhow!("unknown experiment {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Master seed; every replica stream is split from it.
    pub seed: u64,
    /// Excursion size, or the Eve cell size.
    pub z: f64,
    /// Level used by martingales, compare-theorem1 and mu-check.
    pub a: f64,
    /// Levels used by cut and simulate-gf.
    pub levels: Vec<f64>,
    /// Truncation constant C.
    pub c: f64,
    /// Number of replicas.
    pub n: usize,
    /// Excursion time step.
    pub dt: f64,
    /// Level step of locally largest and oracle paths.
    pub level_da: f64,
    pub max_steps: usize,
    /// Small-jump cutoff of ξ.
    pub eps: f64,
    /// ξ time step.
    pub levy_dt: f64,
    pub quadrature_tol: f64,
    pub s_min: f64,
    pub max_generation: u32,
    /// Level horizon A; absent means infinite.
    pub horizon: Option<f64>,
    pub n_boot: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let grid = GridSpec::default();
        let levy = LevyConfig::default();
        ExperimentConfig {
            experiment: Experiment::SampleExcursion,
            seed: 0,
            z: 1.0,
            a: 0.3,
            levels: vec![0.1, 0.2, 0.3],
            c: 4.0,
            n: 100,
            dt: grid.dt,
            level_da: grid.level_da,
            max_steps: grid.max_steps,
            eps: levy.eps,
            levy_dt: levy.dt,
            quadrature_tol: levy.quadrature_tol,
            s_min: 1e-3,
            max_generation: 6,
            horizon: None,
            n_boot: 200,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Defaults as shown by `--help`.
pub fn defaults_help() -> String {
    let d = ExperimentConfig::default();
    format!(
        "Config keys and defaults: seed={} z={} a={} levels={:?} c={} n={} dt={} level_da={} max_steps={} \
         eps={} levy_dt={} quadrature_tol={} s_min={} max_generation={} horizon=inf n_boot={} output_dir={:?}. \
         Every key can be overridden by HGF_<KEY> (e.g. HGF_DT=5e-5) or --set key=value.",
        d.seed,
        d.z,
        d.a,
        d.levels,
        d.c,
        d.n,
        d.dt,
        d.level_da,
        d.max_steps,
        d.eps,
        d.levy_dt,
        d.quadrature_tol,
        d.s_min,
        d.max_generation,
        d.n_boot,
        d.output_dir
    )
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl ExperimentConfig {
    /// Merges a file, environment variables and `key=value` overrides on
    /// top of the defaults; unknown keys are rejected at every stage.
    pub fn load(
        experiment: Experiment,
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut table = match toml::Table::try_from(ExperimentConfig::default()) {
            Ok(t) => t,
            Err(e) => bail!("cannot serialize defaults: {e}"),
        };
        if let Some(p) = file {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let from_file: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            for (k, v) in from_file {
                table.insert(k, v);
            }
        }
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && !RESERVED_ENV.contains(&k.as_str()))
            .collect();
        env.sort();
        for (k, v) in env {
            table.insert(k[ENV_PREFIX.len()..].to_ascii_lowercase(), parse_value(&v));
        }
        for (k, v) in overrides {
            table.insert(k.clone(), parse_value(v));
        }
        table.insert("experiment".into(), toml::Value::String(experiment.name().into()));
        let cfg: ExperimentConfig = table.try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z.is_finite() && self.z != 0.0) {
            bail!("z must be finite and non-zero");
        }
        if !(self.a > 0.0) || !(self.c > 0.0) {
            bail!("a and c must be positive");
        }
        if self.n == 0 {
            bail!("n must be at least 1");
        }
        if self.levels.windows(2).any(|w| w[1] < w[0]) || self.levels.iter().any(|&l| !(l >= 0.0)) {
            bail!("levels must be non-negative and sorted");
        }
        self.grid().validate()?;
        self.levy().validate()?;
        self.truncation().validate()?;
        Ok(())
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec { dt: self.dt, level_da: self.level_da, seed: self.seed, replica_index: 0, max_steps: self.max_steps }
    }

    pub fn levy(&self) -> LevyConfig {
        LevyConfig { eps: self.eps, dt: self.levy_dt, quadrature_tol: self.quadrature_tol }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(f64::INFINITY)
    }

    pub fn truncation(&self) -> Truncation {
        Truncation { s_min: self.s_min, max_generation: self.max_generation, horizon: self.horizon() }
    }

    pub fn cell_options(&self, observe: Vec<f64>) -> CellOptions {
        CellOptions { observe, ..Default::default() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_env() -> Vec<(String, String)> {
        vec![]
    }

    #[test]
    fn defaults_roundtrip() {
        let c = ExperimentConfig::load(Experiment::Cumulant, None, no_env(), &[]).unwrap();
        assert_eq!(c.experiment, Experiment::Cumulant);
        assert_eq!(c.dt, 1e-4);
        assert_eq!(c.horizon(), f64::INFINITY);
    }

    #[test]
    fn precedence_file_env_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "z = 2.0\nn = 7\nhorizon = 0.5\n").unwrap();
        let env = vec![("HGF_N".to_string(), "9".to_string()), ("PATH".to_string(), "x".to_string())];
        let c = ExperimentConfig::load(Experiment::Cut, Some(&p), env, &[("z".into(), "3".into())]).unwrap();
        assert_eq!((c.z, c.n, c.horizon()), (3.0, 9, 0.5));
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "zz = 2.0\n").unwrap();
        assert!(ExperimentConfig::load(Experiment::Cut, Some(&p), no_env(), &[]).is_err());
        let env = vec![("HGF_BOGUS".to_string(), "1".to_string())];
        assert!(ExperimentConfig::load(Experiment::Cut, None, env, &[]).is_err());
        assert!(ExperimentConfig::load(Experiment::Cut, None, no_env(), &[("dt".into(), "-1".into())]).is_err());
    }

    #[test]
    fn experiment_names_roundtrip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
    }
}
