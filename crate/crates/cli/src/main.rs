use std::path::PathBuf;
use std::process::ExitCode;

use bht_cli::{run, CliError, Command, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bht", version, about = "Numerical experiments for the uniform bilinear Hilbert transform")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// JSON experiment config; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Sweep the multiplier constant over β.
    Multiplier,
    /// Compare the transform with truncated wave packet representations.
    Reconstruct,
    /// Ratio of the transform norm to the input norms across β.
    SweepBeta,
    /// Outer Lebesgue quasi-norms of an embedded field.
    Norms,
    /// Greedy cover of a superlevel set.
    Cover,
    /// Sample ratios of the estimated inequalities.
    Check,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Multiplier => Command::Multiplier,
            Cmd::Reconstruct => Command::Reconstruct,
            Cmd::SweepBeta => Command::SweepBeta,
            Cmd::Norms => Command::Norms,
            Cmd::Cover => Command::Cover,
            Cmd::Check => Command::Check,
        }
    }
}

fn load(args: &Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let res = load(&args).and_then(|cfg| run(args.command.into(), &cfg, &args.out));
    match res {
        Ok(o) => {
            for f in &o.files {
                println!("{}", f.display());
            }
            println!("{}", if o.pass { "PASS" } else { "FAIL" });
            ExitCode::from(o.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
