use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use eqlearn::equilibrium::{
    proportional_response, tatonnement_from, ProportionalResponseOptions, TatonnementOptions,
};
use eqlearn::harness::{run_experiment, write_outputs, ExperimentConfig};
use eqlearn::learner::{init_length, init_schedule};
use eqlearn::losses::{loss_fd, LossOptions};
use eqlearn::{certify_ce_with, DemandMethod, Economy, MarketOutcome, ReferenceEquilibrium};

/// Learn competitive-equilibrium allocations from bandit feedback.
///
/// Log verbosity follows RUST_LOG (e.g. RUST_LOG=info).
#[derive(Parser)]
#[command(name = "eqlearn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write rounds.csv and summary.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's `output`, then `out`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve an economy file for a competitive equilibrium and certify it.
    Solve {
        #[arg(long)]
        economy: PathBuf,
        #[arg(long, value_enum, default_value_t = Solver::Pr)]
        solver: Solver,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        /// Tatonnement stopping tolerance; also the certification tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Result file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the losses of a market outcome (JSON) on an economy file.
    Losses {
        #[arg(long)]
        economy: PathBuf,
        /// JSON object with `allocation` (rows) and `prices`.
        #[arg(long)]
        outcome: PathBuf,
        #[arg(long, value_enum, default_value_t = Demand::Exact)]
        demand: Demand,
        #[arg(long, default_value_t = 50)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compute the exact PE loss on this grid (n*m <= 6).
        #[arg(long)]
        pe_grid: Option<f64>,
    },
    /// Print the initialization schedule.
    Schedule {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Pr,
    Tatonnement,
}

#[derive(Clone, Copy, ValueEnum)]
enum Demand {
    Exact,
    Ascent,
    Mc,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run { config, out } => run(config, out),
        Command::Solve {
            economy,
            solver,
            iters,
            tol,
            out,
        } => solve(economy, solver, iters, tol, out),
        Command::Losses {
            economy,
            outcome,
            demand,
            mc_samples,
            seed,
            pe_grid,
        } => losses(economy, outcome, demand, mc_samples, seed, pe_grid),
        Command::Schedule { n, m } => schedule(n, m),
    }
}

fn run(config_path: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let config = ExperimentConfig::from_path(&config_path)
        .with_context(|| format!("loading {}", config_path.display()))?;
    let dir = out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    info!(
        "running {} seeds to T = {}",
        config.seeds.len(),
        config.horizon
    );
    let output = run_experiment(&config)?;
    for path in write_outputs(&config, &output, &dir)? {
        println!("{}", path.display());
    }
    if let Some(last) = output.summary.last() {
        println!(
            "t = {}: mean cumulative CE loss {:.6} (stderr {:.6})",
            last.t, last.mean_cum_l_ce, last.stderr_cum_l_ce
        );
    }
    Ok(())
}

fn solve(
    path: PathBuf,
    solver: Solver,
    iters: usize,
    tol: f64,
    out: Option<PathBuf>,
) -> Result<()> {
    let e = Economy::from_path(&path)?;
    let report = match solver {
        Solver::Pr => proportional_response(
            e.utilities(),
            e.endowments(),
            ProportionalResponseOptions {
                iters,
                ..Default::default()
            },
            None,
        )?,
        Solver::Tatonnement => tatonnement_from(
            e.utilities(),
            e.endowments(),
            TatonnementOptions {
                max_iters: iters,
                tol,
                ..Default::default()
            },
            None,
        )?,
    };
    let cert = certify_ce_with(
        &report.outcome,
        e.utilities(),
        e.endowments(),
        tol,
        DemandMethod::Exact,
    )?;
    let utilities: Vec<f64> = (0..e.n())
        .map(|i| e.utility(i).utility(report.outcome.allocation.row(i)))
        .collect::<eqlearn::Result<_>>()?;
    // Readable back as a market outcome by `losses`.
    let text = serde_json::to_string_pretty(&json!({
        "prices": report.outcome.prices,
        "allocation": report.outcome.allocation,
        "certificate": cert,
        "utilities": utilities,
        "iterations": report.iterations,
        "residual": report.residual,
        "warning": report.warning,
    }))?;
    match out {
        Some(file) => {
            std::fs::write(&file, text + "\n")
                .with_context(|| format!("writing {}", file.display()))?;
            println!("{}", file.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn losses(
    economy: PathBuf,
    outcome: PathBuf,
    demand: Demand,
    mc_samples: usize,
    seed: u64,
    pe_grid: Option<f64>,
) -> Result<()> {
    let e = Economy::from_path(&economy)?;
    let text = std::fs::read_to_string(&outcome)
        .with_context(|| format!("reading {}", outcome.display()))?;
    let outcome: MarketOutcome =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", outcome.display()))?;
    let ce_demand = match demand {
        Demand::Exact => DemandMethod::Exact,
        Demand::Ascent => DemandMethod::ProjectedAscent,
        Demand::Mc => DemandMethod::MonteCarlo {
            samples: mc_samples,
            seed,
        },
    };
    let reference = ReferenceEquilibrium::solve(&e, 1e-5)?;
    let report = loss_fd(
        &e,
        &outcome,
        &reference,
        LossOptions {
            ce_demand,
            pe_exact_grid: pe_grid,
        },
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn schedule(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        bail!("n and m must be positive");
    }
    let len = init_length(n, m);
    println!("# {len} rounds; row per round, agents separated by ' | '");
    for t in 1..=len {
        let x = init_schedule(n, m, t)?;
        let rows: Vec<String> = x
            .rows()
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        println!("{t}: {}", rows.join(" | "));
    }
    Ok(())
}
