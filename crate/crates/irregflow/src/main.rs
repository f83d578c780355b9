use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::Parser;
use irregflow::config::{Experiment, ExperimentConfig};
use irregflow::output::{write_file, Manifest};
use irregflow::run_experiment;

/// Run one experiment and write manifest.json, results.csv and summary.txt.
#[derive(Parser, Debug)]
#[command(name = "irregflow", version)]
struct Cli {
    experiment: Experiment,
    /// JSON configuration; every key is optional.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config `output`, then $IRREGFLOW_OUT, then ./irregflow-out/<experiment>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> anyhow::Result<PathBuf> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(e) = cfg.experiment {
        if e != cli.experiment {
            return Err(irregflow::RunError::ExperimentMismatch { config: e.name(), cli: cli.experiment.name() }.into());
        }
    }
    cfg.experiment = Some(cli.experiment);
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = cli
        .out
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os("IRREGFLOW_OUT").map(|d| PathBuf::from(d).join(cli.experiment.name())))
        .unwrap_or_else(|| PathBuf::from("irregflow-out").join(cli.experiment.name()));
    cfg.output = Some(dir.clone());
    let params = cfg.base_params()?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        pool = pool.num_threads(k);
    }
    let pool = pool.build().context("building the thread pool")?;
    let outcome = pool.install(|| run_experiment(cli.experiment, &cfg))?;

    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = vec!["results.csv".to_string(), "summary.txt".to_string()];
    write_file(&dir, "results.csv", &outcome.csv)?;
    write_file(&dir, "summary.txt", outcome.summary.as_bytes())?;
    for (name, bytes) in &outcome.extra {
        write_file(&dir, name, bytes)?;
        files.push(name.clone());
    }
    let manifest = Manifest {
        tool: "irregflow",
        version: env!("CARGO_PKG_VERSION"),
        experiment: cli.experiment.name(),
        seed: cfg.seed,
        threads: pool.current_num_threads(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config: &cfg,
        params: &params,
        metrics: &outcome.metrics,
        files,
    };
    write_file(&dir, "manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    print!("{}", outcome.summary);
    Ok(dir)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(dir) => {
            eprintln!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
