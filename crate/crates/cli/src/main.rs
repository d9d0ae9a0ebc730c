//! Command line front end over the library: solve a path to optimality,
//! simulate a scenario, evaluate the closed forms, or rebuild a reference
//! grid. Every subcommand emits one CSV table, to stdout or to `--out`;
//! any failure prints a single `error:` line on stderr and exits nonzero.
//!
//! Scenario files are flat TOML; the recognized keys and their defaults
//! are documented in the repository README and in
//! `flowsamp::harness::ScenarioFile`. `--seed` replaces the file's seed
//! (or the reproduce master seed) before anything is drawn from it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use flowsamp::analysis::{
    cost_order_statistic, cost_uniform, cost_weighted, lower_bound, water_filling,
};
use flowsamp::harness::{reproduce, simulate, FigureId, ScenarioFile, DEFAULT_SEED};
use flowsamp::solver::{relative_value_iteration, DEFAULT_EPSILON};

#[derive(Parser)]
#[command(
    name = "flowsamp",
    version,
    about = "Sampling policies for flow-path monitoring: solver, simulator, closed forms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for replications and grid cells; defaults to all cores.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Write the CSV here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Replace the scenario or grid seed before anything is drawn from it.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario's path by relative value iteration and print the
    /// optimal action table.
    Solve {
        /// Scenario file naming the path; `epsilon` sets the stop width.
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
    },
    /// Run the scenario's Monte Carlo simulation and print the report.
    Simulate {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
    },
    /// Evaluate the closed-form costs and the water-filling weights for
    /// the scenario's path.
    Analyze {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
    },
    /// Rebuild one reference grid (S1, S2, S3, R1, R2, R3, R4, or G).
    Reproduce {
        /// Grid identifier.
        figure: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
        if let Err(err) = pool {
            eprintln!("error: {err}");
            return ExitCode::FAILURE;
        }
    }
    let csv = match &cli.command {
        Command::Solve { scenario } => solve(scenario, cli.seed),
        Command::Simulate { scenario } => run_simulation(scenario, cli.seed),
        Command::Analyze { scenario } => analyze(scenario, cli.seed),
        Command::Reproduce { figure } => rebuild(figure, cli.seed),
    };
    let csv = match csv {
        Ok(csv) => csv,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::FAILURE;
        }
    };
    match &cli.out {
        Some(path) => {
            if let Err(err) = fs::write(path, csv) {
                eprintln!("error: writing {}: {err}", path.display());
                return ExitCode::FAILURE;
            }
        }
        None => print!("{csv}"),
    }
    ExitCode::SUCCESS
}

/// Reads and parses a scenario file, applying the seed override before
/// resolution so random paths draw from the replaced seed.
fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioFile, String> {
    let text =
        fs::read_to_string(path).map_err(|err| format!("reading {}: {err}", path.display()))?;
    let mut file = ScenarioFile::parse(&text).map_err(|err| err.to_string())?;
    if let Some(seed) = seed {
        file = file.with_seed(seed);
    }
    Ok(file)
}

fn solve(path: &Path, seed: Option<u64>) -> Result<String, String> {
    let file = load_scenario(path, seed)?;
    let config = file.resolve_config().map_err(|err| err.to_string())?;
    let epsilon = file.epsilon().unwrap_or(DEFAULT_EPSILON);
    let solution = relative_value_iteration(&config, epsilon).map_err(|err| err.to_string())?;
    let mut out = String::from("# schema=1\n");
    let _ = writeln!(
        out,
        "# gain={:.9} iterations={} epsilon={:e}",
        solution.gain(),
        solution.iterations(),
        solution.epsilon()
    );
    for i in 1..=config.len() {
        let _ = write!(out, "n{i},");
    }
    out.push_str("action,h\n");
    for (counters, action) in solution.table() {
        for n in &counters {
            let _ = write!(out, "{n},");
        }
        let _ = writeln!(out, "{action},{:.9}", solution.h_for(&counters));
    }
    Ok(out)
}

fn run_simulation(path: &Path, seed: Option<u64>) -> Result<String, String> {
    let file = load_scenario(path, seed)?;
    let spec = file.resolve().map_err(|err| err.to_string())?;
    let report = simulate(&spec).map_err(|err| err.to_string())?;
    let mut out = String::from("# schema=1\nquantity,device,gap,value\n");
    let _ = writeln!(out, "mean_cost,,,{:.6}", report.mean_cost());
    let _ = writeln!(out, "cost_stderr,,,{:.6}", report.cost_stderr());
    let _ = writeln!(out, "replications,,,{}", spec.replications());
    let _ = writeln!(out, "burn_in,,,{}", spec.burn_in());
    let _ = writeln!(out, "slots_simulated,,,{}", report.slots_simulated());
    let _ = writeln!(out, "seed,,,{}", report.seed());
    for (i, rate) in report.per_device_sampling_rate().iter().enumerate() {
        let _ = writeln!(out, "sampling_rate,{},,{rate:.6}", i + 1);
    }
    for (i, rate) in report.per_device_reset_rate().iter().enumerate() {
        let _ = writeln!(out, "reset_rate,{},,{rate:.6}", i + 1);
    }
    for (i, histogram) in report.intersample_histograms().iter().enumerate() {
        for (slot, &count) in histogram.iter().enumerate() {
            if count > 0 {
                let _ = writeln!(out, "intersample,{},{},{count}", i + 1, slot + 1);
            }
        }
    }
    Ok(out)
}

fn analyze(path: &Path, seed: Option<u64>) -> Result<String, String> {
    let file = load_scenario(path, seed)?;
    let config = file.resolve_config().map_err(|err| err.to_string())?;
    let mut out = String::from("# schema=1\nquantity,device,value\n");
    let _ = writeln!(out, "uniform,,{:.6}", cost_uniform(&config));
    for g in 2..=4u32 {
        let cost = cost_order_statistic(&config, g).map_err(|err| err.to_string())?;
        let _ = writeln!(out, "order-{g},,{cost:.6}");
    }
    let optimum = water_filling(&config).map_err(|err| err.to_string())?;
    let weighted = cost_weighted(&config, optimum.weights()).map_err(|err| err.to_string())?;
    let _ = writeln!(out, "weighted,,{:.6}", weighted.cost());
    for &device in weighted.starved() {
        let _ = writeln!(out, "starved,{},", device + 1);
    }
    let bound = lower_bound(&config).map_err(|err| err.to_string())?;
    let _ = writeln!(out, "lower_bound,,{bound:.6}");
    for (i, weight) in optimum.weights().iter().enumerate() {
        let _ = writeln!(out, "weight,{},{weight:.6}", i + 1);
    }
    Ok(out)
}

fn rebuild(figure: &str, seed: Option<u64>) -> Result<String, String> {
    let figure: FigureId = figure
        .parse()
        .map_err(|err: flowsamp::harness::HarnessError| err.to_string())?;
    reproduce(figure, seed.unwrap_or(DEFAULT_SEED)).map_err(|err| err.to_string())
}
