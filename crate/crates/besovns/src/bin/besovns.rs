use std::path::PathBuf;
use std::process::ExitCode;

use besovns::cli::{run, ExperimentConfig, Mode};
use besovns::Error;
use clap::Parser;

/// Runs an estimate-verification suite and writes its result bundle.
#[derive(Parser, Debug)]
#[command(name = "besovns", version)]
struct Args {
    /// Configuration file, flat `key=value` or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suite to run; overrides `mode` from the file.
    #[arg(long)]
    mode: Option<Mode>,
    /// Bundle directory; overrides `output.dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// RNG seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn load(args: &Args) -> Result<(ExperimentConfig, String), Error> {
    let source = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config { location: p.display().to_string(), message: e.to_string() })?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::parse(&source)?;
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(o) = &args.output {
        cfg.output_dir = o.to_string_lossy().into_owned();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok((cfg, source))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (cfg, source) = match load(&args) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("invalid configuration: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg, &source, args.jobs) {
        Ok(out) if out.exit_code == 0 => {
            println!("{}: pass ({})", cfg.mode, cfg.output_dir);
            ExitCode::SUCCESS
        }
        Ok(out) => {
            eprintln!("{}: fail: {}", cfg.mode, out.failing.join(", "));
            ExitCode::from(1)
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("invalid configuration: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{}: error: {e}", cfg.mode);
            ExitCode::from(1)
        }
    }
}
