use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use uav_secrecy_cli::run::{execute, resolve, Invocation, RunSummary};

/// Secrecy-rate maximization for a UAV link with a ground eavesdropper.
#[derive(Debug, Parser)]
#[command(name = "uav-secrecy", version)]
struct Args {
    /// Configuration file (`key = value` per line).
    config: Option<PathBuf>,

    /// Start from a named preset: case1-u2g, case1-g2u, case2-u2g or case2-g2u.
    #[arg(long)]
    preset: Option<String>,

    /// Override one key, e.g. `--set flight_period_s=400`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Comma-separated scheme names.
    #[arg(long)]
    schemes: Option<String>,

    /// Use 5 s slots instead of the configured slot length.
    #[arg(long)]
    desk_scale: bool,
}

fn print_summary(s: &RunSummary) {
    for p in &s.base {
        let mc = p.mc.map(|m| format!("  mc {:.4} ± {:.4}", m.mean, m.std_err)).unwrap_or_default();
        println!(
            "{:<20} {:.6} bps/Hz  ({} iterations{}){mc}",
            p.scheme.name(),
            p.secrecy,
            p.iterations,
            if p.converged { "" } else { ", not converged" }
        );
    }
    for f in &s.files {
        println!("wrote {}", f.display());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let inv = Invocation {
        config_path: args.config,
        preset: args.preset,
        overrides: args.overrides,
        out_dir: args.out,
        seed: args.seed,
        schemes: args.schemes,
        desk_scale: args.desk_scale,
    };
    let result = resolve(&inv).map_err(Into::into).and_then(|cfg| execute(&cfg));
    match result {
        Ok(summary) => {
            print_summary(&summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
