use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use qswarm::scenario::{
    parse_grid, parse_scenario, resolve_output_dir, sweep, verify, write_outputs, write_sweep_report, Scenario, Stats,
};

/// Entanglement-based swarm coordination scenarios.
#[derive(Parser)]
#[command(name = "qswarm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write `<name>.trace.jsonl` and `<name>.stats.json`.
    Run { config: PathBuf },
    /// Run a scenario over a parameter grid and a list of seeds.
    Sweep {
        config: PathBuf,
        /// `key=v1,v2,...` or `key=lo..hi`; repeat for more axes.
        #[arg(long = "grid", value_name = "SPEC")]
        grid: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Also write every run's trace and stats.
        #[arg(long)]
        runs: bool,
    },
    /// Run the built-in invariant checks.
    Verify,
}

fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("in {}", path.display()))
}

fn print_stats(stats: &Stats) {
    println!(
        "{} ({}, seed {}): {} steps, {} events",
        stats.name, stats.protocol, stats.seed, stats.steps_run, stats.events
    );
    println!("  moves {}  crashes {}  max norm drift {:e}", stats.moves, stats.crashes, stats.max_norm_drift);
    for (k, r) in &stats.rates {
        println!("  {k}: {}/{} = {:.4}", r.count, r.trials, r.value);
    }
    for (k, v) in &stats.values {
        println!("  {k}: {v}");
    }
    for (k, v) in &stats.labels {
        println!("  {k}: {v}");
    }
}

fn run(config: &Path) -> Result<()> {
    let scenario = load(config)?;
    let out = write_outputs(&scenario, &resolve_output_dir(&scenario))?;
    print_stats(&out.stats);
    println!("wrote {} and {}", out.trace.display(), out.stats_path.display());
    Ok(())
}

fn run_sweep(config: &Path, grid: &[String], seeds: &[u64], runs: bool) -> Result<()> {
    let base = load(config)?;
    let axes = grid.iter().map(|g| parse_grid(g)).collect::<Result<Vec<_>, _>>()?;
    let dir = resolve_output_dir(&base);
    let report = sweep(&base, &axes, seeds, runs.then_some(dir.as_path()))?;
    for p in &report.points {
        let label: Vec<String> = p.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("[{}] over {} seeds, {} crashes", label.join(" "), p.seeds, p.crashes);
        for (k, r) in &p.rates {
            println!("  {k}: {}/{} = {:.4} ± {:.4}", r.count, r.trials, r.value, r.sigma());
        }
    }
    let path = write_sweep_report(&report, &dir)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(config),
        Command::Sweep { config, grid, seeds, runs } => run_sweep(config, grid, seeds, *runs),
        Command::Verify => {
            let checks = verify::run_checks();
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                Err(anyhow::anyhow!("{failed} of {} checks failed", checks.len()))
            } else {
                Ok(())
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
