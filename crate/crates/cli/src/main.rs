use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use mlp_cli::{emit, render, run, OutputFormat, ReferenceKind, RunConfig};

/// Sweep the multilevel Picard estimator over (n, M, N, alpha) and report
/// error, cost and timing per cell.
///
/// Command-line flags override values from `--config`. The worker count
/// comes from `MLP_WORKERS` and defaults to the available parallelism.
#[derive(Debug, Parser)]
#[command(name = "mlp", version)]
struct Args {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long = "d")]
    dim: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u32>>,
    #[arg(long = "M", value_delimiter = ',')]
    branching: Option<Vec<u32>>,
    /// Euler step counts; 0 selects exact simulation.
    #[arg(long = "N", value_delimiter = ',')]
    steps: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    reference: Option<RefArg>,
    /// Output path, `-` for standard output.
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum RefArg {
    Exact,
    Picard,
    None,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl Args {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.problem {
            cfg.problem = v;
        }
        if let Some(v) = self.dim {
            cfg.d = v;
        }
        if let Some(v) = self.t {
            cfg.t = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.branching {
            cfg.m = v;
            cfg.m_equals_n = false;
        }
        if let Some(v) = self.steps {
            cfg.euler_steps = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.reference {
            cfg.reference = match v {
                RefArg::Exact => ReferenceKind::Exact,
                RefArg::Picard => ReferenceKind::Picard,
                RefArg::None => ReferenceKind::None,
            };
        }
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if let Some(v) = self.format {
            cfg.format = match v {
                FormatArg::Csv => OutputFormat::Csv,
                FormatArg::Json => OutputFormat::Json,
            };
        }
        Ok(cfg)
    }
}

fn workers() -> anyhow::Result<usize> {
    match std::env::var("MLP_WORKERS") {
        Ok(s) => {
            let n: usize = s
                .trim()
                .parse()
                .with_context(|| format!("MLP_WORKERS={s:?} is not a count"))?;
            anyhow::ensure!(n > 0, "MLP_WORKERS must be positive");
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)),
    }
}

fn main_inner() -> anyhow::Result<()> {
    let cfg = Args::parse().into_config()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers()?)
        .build()?;
    let rows = pool.install(|| run(&cfg))?;
    emit(&render(&rows, cfg.format)?, &cfg.out)?;
    Ok(())
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
