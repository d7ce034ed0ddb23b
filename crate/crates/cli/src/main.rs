use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use pilot_kalman_cli::{load, run, Overrides, Preset};

/// Kalman-filter channel tracking with pilot beam design: Monte Carlo runner.
#[derive(Debug, Parser)]
#[command(name = "pilot-kalman", version)]
struct Args {
    /// TOML config with [channel], [slot], [fading] and [simulation] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated methods, e.g. `proposed,fixed-eigen,round-robin:16`.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Base settings applied before the config file.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

fn main() -> ExitCode {
    match try_main(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn try_main(args: Args) -> anyhow::Result<()> {
    let overrides = Overrides {
        methods: args.method,
        runs: args.runs,
        seed: args.seed,
    };
    let cfg = load(args.config.as_deref(), args.preset, &overrides)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("PILOT_KALMAN_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .with_context(|| format!("PILOT_KALMAN_THREADS must be a positive integer, got `{v}`"))?;
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let written = pool.install(|| run(&cfg, &args.out))?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
