use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use hgf_cli::acceptance::{Scale, Suite};
use hgf_cli::config::{defaults_help, Experiment, ExperimentConfig};
use hgf_cli::experiments::{csv, run};
use hgf_cli::output::RunManifest;
use hgf_cli::Failure;
use hgf_core::analytics::kappa;
use hgf_core::levy::{psi, LevyConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hgf", version, about = "Growth-fragmentation in planar Brownian excursions: simulation and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with config keys (see --help of any experiment)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Override a config key, e.g. --set n=1000 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample excursions under γ_z and write their paths
    #[command(after_help = defaults_help())]
    SampleExcursion(Common),
    /// Cut excursions at levels and record fragment sizes
    #[command(after_help = defaults_help())]
    Cut(Common),
    /// Follow the locally largest fragment along excursions
    #[command(after_help = defaults_help())]
    LocallyLargest(Common),
    /// Simulate truncated cell systems and their snapshots
    #[command(after_help = defaults_help())]
    SimulateGf(Common),
    /// Tabulate κ, Φ⁺ and the Green function R_C
    #[command(after_help = defaults_help())]
    Cumulant(Common),
    /// Estimate E[M_a] and E[T_C] under γ_z
    #[command(after_help = defaults_help())]
    Martingales(Common),
    /// Compare fragment and cell-system laws at level a
    #[command(after_help = defaults_help())]
    CompareTheorem1(Common),
    /// Check the spine change of measure at level a
    #[command(after_help = defaults_help())]
    MuCheck(Common),
    /// Estimate E[DC_n] over generations
    #[command(after_help = defaults_help())]
    DerivativeMartingale(Common),
    /// Run the acceptance suite and print one verdict line per criterion
    Acceptance {
        /// Reduced sample sizes (about 1/50 of the full suite)
        #[arg(long)]
        quick: bool,
        /// Skip the double run that checks byte-identical outputs
        #[arg(long)]
        no_reproducibility: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out/acceptance")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute the digests listed in a manifest
    Verify { manifest: PathBuf },
    /// Evaluate Ψ or κ for every q in a CSV with a header row `q`
    Exponent {
        #[arg(long, value_parser = ["psi", "kappa"], default_value = "psi")]
        function: String,
        input: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
    },
}

fn split_set(s: &str) -> anyhow::Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {s:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Failure::Config("--workers must be at least 1".into()));
        }
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Failure::Io(e.to_string()))
}

fn run_experiment(experiment: Experiment, c: Common) -> Result<bool, Failure> {
    let mut overrides = c.set.iter().map(|s| split_set(s)).collect::<anyhow::Result<Vec<_>>>().map_err(|e| Failure::Config(format!("{e:#}")))?;
    if let Some(s) = c.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(o) = &c.out {
        overrides.push(("output_dir".into(), format!("{:?}", o.display().to_string())));
    }
    let cfg = ExperimentConfig::load(experiment, c.config.as_deref(), std::env::vars(), &overrides)
        .map_err(|e| Failure::Config(format!("{e:#}")))?;
    let outcome = thread_pool(c.workers)?.install(|| run(&cfg))?;
    println!("{}", serde_json::to_string_pretty(&outcome.report).map_err(|e| Failure::Io(e.to_string()))?);
    if !outcome.passed {
        return Err(Failure::Statistical(format!("{} assertions failed; see report.json", cfg.experiment)));
    }
    Ok(true)
}

fn acceptance(quick: bool, repro: bool, seed: u64, out: PathBuf, workers: Option<usize>) -> Result<bool, Failure> {
    let scale = if quick { Scale::QUICK } else { Scale::FULL };
    let (rows, _) = thread_pool(workers)?
        .install(|| {
            let suite = Suite::new(seed, scale, &out, Box::new(|r| println!("{}", r.line())))?;
            suite.run_all(repro)
        })
        .map_err(Failure::classify)?;
    let failed: Vec<u32> = rows.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        Ok(true)
    } else {
        Err(Failure::Statistical(format!("criteria {failed:?} failed")))
    }
}

fn verify(path: PathBuf) -> Result<bool, Failure> {
    let m = RunManifest::load(&path).map_err(Failure::io)?;
    let dir = path.parent().map(PathBuf::from).unwrap_or_default();
    let bad = m.verify(&dir).map_err(Failure::io)?;
    if bad.is_empty() {
        println!("{} files verified", m.files.len());
        Ok(true)
    } else {
        Err(Failure::Io(format!("digest mismatch: {}", bad.join(", "))))
    }
}

fn exponent(function: &str, input: PathBuf, eps: Option<f64>) -> Result<bool, Failure> {
    let text = std::fs::read_to_string(&input)
        .with_context(|| format!("reading {}", input.display()))
        .map_err(Failure::io)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("q") {
        return Err(Failure::Config("input must start with the header row `q`".into()));
    }
    let mut cfg = LevyConfig::default();
    if let Some(e) = eps {
        cfg.eps = e;
    }
    let mut rows = Vec::new();
    for l in lines.filter(|l| !l.trim().is_empty()) {
        let q: f64 = l.trim().parse().map_err(|_| Failure::Config(format!("bad q value {l:?}")))?;
        let v = if function == "psi" { psi(q, &cfg) } else { kappa(q, &cfg) };
        rows.push(vec![q, v.map_err(|e| Failure::classify(e.into()))?]);
    }
    print!("{}", csv(&format!("q,{function}"), rows));
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SampleExcursion(c) => run_experiment(Experiment::SampleExcursion, c),
        Command::Cut(c) => run_experiment(Experiment::Cut, c),
        Command::LocallyLargest(c) => run_experiment(Experiment::LocallyLargest, c),
        Command::SimulateGf(c) => run_experiment(Experiment::SimulateGf, c),
        Command::Cumulant(c) => run_experiment(Experiment::Cumulant, c),
        Command::Martingales(c) => run_experiment(Experiment::Martingales, c),
        Command::CompareTheorem1(c) => run_experiment(Experiment::CompareTheorem1, c),
        Command::MuCheck(c) => run_experiment(Experiment::MuCheck, c),
        Command::DerivativeMartingale(c) => run_experiment(Experiment::DerivativeMartingale, c),
        Command::Acceptance { quick, no_reproducibility, seed, out, workers } => {
            acceptance(quick, !no_reproducibility, seed, out, workers)
        }
        Command::Verify { manifest } => verify(manifest),
        Command::Exponent { function, input, eps } => exponent(&function, input, eps),
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
