use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tagprof::{CliError, Outcome, PipelineConfig, Runner};

#[derive(Debug, Parser)]
#[command(name = "tagprof", version, about = "Tag mining and trait profiling pipeline")]
struct Args {
    /// Stage to run: synth, ingest, tfidf, tagsim, tagcluster, consolidate,
    /// correlate, lasso, forest, genres, profiles, disposition, report, or all.
    stage: String,

    /// Pipeline config (JSON).
    #[arg(long)]
    config: PathBuf,

    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
}

fn run(args: &Args) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(n) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    }
    let runner = Runner::new(cfg)?;
    for (stage, outcome) in runner.run(&args.stage)? {
        let what = match outcome {
            Outcome::Ran => "done",
            Outcome::Skipped => "up to date",
        };
        println!("{stage}: {what}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
