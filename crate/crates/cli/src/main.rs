use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::Parser;
use structsel_cli::commands::run;
use structsel_cli::config::{Command, ExperimentConfig, PValue};
use structsel_cli::output::write_artifacts;
use structsel_core::report::parse_p;

#[derive(Parser, Debug)]
#[command(
    name = "structsel",
    version,
    about = "Data-driven selection of structural kernel estimators"
)]
struct Args {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    command: Option<Command>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, env = "STRUCTSEL_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    /// Norm exponent; `inf` for the sup norm.
    #[arg(long, value_parser = parse_p)]
    p: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    n_rep: Option<usize>,
}

fn resolve(args: &Args) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(c) = args.command {
        cfg.command = c;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Some(e) = args.eps {
        cfg.eps = e;
    }
    if let Some(p) = args.p {
        cfg.p = p;
        cfg.p_list = vec![PValue(p)];
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    if let Some(n) = args.n_rep {
        cfg.n_rep = n;
    }
    // the flag and the environment win over the file
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn main_inner(args: &Args) -> Result<bool> {
    let cfg = resolve(args)?;
    cfg.validate()?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let threads = rayon::current_num_threads();
    let start = Instant::now();
    let outcome = run(&cfg)?;
    let wall = start.elapsed();
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.command.name()));
    write_artifacts(&dir, &cfg, &outcome, wall, threads)?;
    for f in &outcome.failures {
        eprintln!("FAILED: {f}");
    }
    println!(
        "{} finished in {:.2} s, artifacts in {}",
        cfg.command.name(),
        wall.as_secs_f64(),
        dir.display()
    );
    Ok(outcome.failures.is_empty())
}
