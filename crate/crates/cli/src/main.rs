use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qkd_coop_cli::{load, oracle_check, run_bounds, run_coalition, run_plan, run_sweep, CliResult, OutDir};

#[derive(Parser)]
#[command(name = "qkd-coop", version, about = "Stochastic QKD network planning and provider cooperation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Force exact route and reservation search.
    #[arg(long)]
    exhaustive: bool,
    /// Also report the greedy on-demand baseline.
    #[arg(long)]
    baseline: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the grand-coalition plan.
    Plan(Common),
    /// Cost sweep along one axis.
    Sweep(Common),
    /// Wait-and-see, stochastic and expected-value costs.
    Bounds(Common),
    /// Payoff table, equilibria, stationary distribution and fee sweep.
    Coalition(Common),
    /// Compare the exhaustive solver with the brute-force oracle.
    OracleCheck(Common),
}

fn run(cli: Cli) -> CliResult<()> {
    let common = match &cli.command {
        Command::Plan(c) | Command::Sweep(c) | Command::Bounds(c) | Command::Coalition(c) | Command::OracleCheck(c) => c,
    };
    let loaded = load(&common.config)?;
    let out = OutDir::new(&common.out)?;
    let seed = common.seed.unwrap_or(loaded.config.seed);
    match &cli.command {
        Command::Plan(_) => {
            let r = run_plan(&loaded, &out, common.exhaustive, common.baseline)?;
            println!("total {} (first stage {}, second stage {})", r.total, r.first_stage_cost, r.expected_second_stage_cost);
            if let Some(b) = r.baseline_total {
                println!("greedy on-demand baseline {b}");
            }
        }
        Command::Sweep(_) => {
            let rows = run_sweep(&loaded, &out, common.exhaustive)?;
            println!("{} sweep points", rows.len());
        }
        Command::Bounds(_) => {
            for r in run_bounds(&loaded, &out, common.exhaustive, common.baseline)? {
                println!(
                    "{} requests: WS {} SP {} EEV {} (EEV gap {:.2}%, WS gap {:.2}%)",
                    r.requests, r.ws, r.sp, r.eev, r.eev_gap_percent, r.ws_gap_percent
                );
            }
        }
        Command::Coalition(_) => {
            for g in run_coalition(&loaded, &out, seed, common.exhaustive)?.games {
                match g.stable {
                    Some(id) => println!("{}: stable structure C{id} {}", g.name, g.structures[id - 1].blocks),
                    None => println!("{}: no stable structure", g.name),
                }
            }
        }
        Command::OracleCheck(_) => {
            let r = oracle_check(&loaded, &out)?;
            println!("solver {} oracle {}", r.solver_total, r.oracle_total);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
