use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serrin_lab::{run, Command, ConfigError, RunConfig, RunOptions, EXIT_INVALID, OUT_ENV};

/// Runs one experiment described by a JSON config.
#[derive(Debug, Parser)]
#[command(name = "serrin-lab", version, about)]
struct Args {
    /// solve, diagnose, sweep-sigma, sweep-inclusion, sweep-stability,
    /// frechet-check, verify-identity or nonexistence; must match the config.
    command: Option<String>,
    /// Path to the JSON config.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for sweep members [default: all cores].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Write plot.svg for sweeps.
    #[arg(long)]
    plot: bool,
}

fn load(args: &Args) -> Result<RunConfig, ConfigError> {
    let requested = match &args.command {
        Some(name) => Some(Command::parse(name).ok_or_else(|| ConfigError::new("command", format!("unknown command '{name}'")))?),
        None => None,
    };
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", args.config.display())))?;
    let config = RunConfig::from_json(&text)?;
    if let Some(cmd) = requested {
        if cmd != config.command {
            return Err(ConfigError::new(
                "command",
                format!("'{}' requested but the config says '{}'", cmd.name(), config.command.name()),
            ));
        }
    }
    Ok(config)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    let options = RunOptions {
        jobs: args.jobs.map(|n| n as usize),
        plot: args.plot,
        out_root: std::env::var_os(OUT_ENV).map(PathBuf::from),
    };
    let outcome = run(&config, &options);
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    match &outcome.failure {
        Some(reason) => eprintln!("error: {reason}"),
        None => println!("{}: {}", outcome.dir.display(), outcome.artifacts.join(", ")),
    }
    ExitCode::from(outcome.exit_code as u8)
}
