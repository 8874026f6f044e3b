use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use eam_core::PolicyKind;
use eam_sim::commands::{cmd_compare, cmd_inject, cmd_run, load_config};

#[derive(Parser)]
#[command(
    name = "eam",
    version,
    about = "Energy-attack mitigation simulator for federated intermittent systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "EAM_OUT_DIR", default_value = "results")]
    out: PathBuf,
    /// Override a config key, e.g. `--set policy=fh` or `--set sim.dt_s=0.002`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed for attack placement and detector noise.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration.
    Run(Common),
    /// Run every policy against attacks of each duration at a seeded position.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "eam,fh,central")]
        policies: Vec<PolicyKind>,
        /// Attack durations, seconds.
        #[arg(long, value_delimiter = ',', required = true)]
        durations: Vec<f64>,
        /// Start every run at the attack onset with the configured initial energies.
        #[arg(long)]
        equal_budget: bool,
    },
    /// Write a copy of a trace file with an attack window zeroed.
    Inject {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        start: f64,
        #[arg(long)]
        duration: f64,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(c) => {
            let cfg = load_config(&c.config, &c.set, c.seed)?;
            let r = cmd_run(&cfg, &c.out)?;
            println!(
                "{} {}: {} completions in {:.3} h ({:.3}/h), mean schedulability {:.3}",
                r.policy, r.app, r.completions, r.hours, r.app_exec_rate, r.mean_schedulability
            );
            println!("results in {}", c.out.display());
        }
        Command::Compare {
            common: c,
            policies,
            durations,
            equal_budget,
        } => {
            let cfg = load_config(&c.config, &c.set, c.seed)?;
            let cells = cmd_compare(&cfg, &c.out, &policies, &durations, equal_budget)?;
            println!(
                "{:>8} {:>10} {:>8} {:>10} {:>12}",
                "policy", "attack_s", "start_s", "rate_h", "attack_rate"
            );
            for cell in &cells {
                println!(
                    "{:>8} {:>10} {:>8.1} {:>10.3} {:>12.3}",
                    cell.policy,
                    cell.duration,
                    cell.attack_start,
                    cell.report.app_exec_rate,
                    cell.report.attack_window_rate
                );
            }
            println!("results in {}", c.out.join("compare.csv").display());
        }
        Command::Inject {
            trace,
            out,
            start,
            duration,
        } => {
            cmd_inject(&trace, &out, start, duration)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
