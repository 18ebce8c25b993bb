//! `emd`: approximate Earth Mover's Distance and transportation maps.
//!
//! Reads an instance (one point per line, coordinates followed by an integer
//! supply) from a file or standard input and prints the cost of the map it
//! finds. Exit codes: 0 success, 1 bad input or flags, 2 supplies do not sum
//! to zero, 3 the solver failed.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use emd_core::oracle::exact_emd;
use emd_core::pipeline::{self, Config, DEFAULT_NET_POINT_BUDGET};
use emd_core::{Error, Instance64};
use log::{info, warn};

#[derive(Parser, Debug)]
#[command(name = "emd", version, about = "Approximate Euclidean transportation maps")]
struct Args {
    /// Instance file; standard input when absent.
    input: Option<PathBuf>,

    /// Target accuracy, in (0, 1].
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,

    /// Seed for the random grid shift.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Independent runs with seeds seed, seed+1, ...; the cheapest is kept.
    #[arg(long, default_value_t = 1)]
    trials: usize,

    /// Print the flow cost only, without building a map.
    #[arg(long, conflicts_with = "map")]
    estimate_only: bool,

    /// Write the map to FILE, one "source sink amount" line per entry.
    #[arg(long, value_name = "FILE")]
    map: Option<PathBuf>,

    /// Also solve exactly and print the exact cost and the ratio.
    #[arg(long)]
    oracle: bool,

    /// Print graph statistics to standard error.
    #[arg(long)]
    stats: bool,

    /// Progress messages on standard error.
    #[arg(long, short)]
    verbose: bool,

    /// Subcell fraction 1/k with k a power of two; overrides the value derived from epsilon.
    #[arg(long, value_name = "R")]
    eps0: Option<f64>,

    /// Largest number of net points per cell when eps0 is derived.
    #[arg(long, value_name = "N", default_value_t = DEFAULT_NET_POINT_BUDGET)]
    net_point_budget: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::SupplyImbalance { .. } => 2,
        Error::SolverExhausted { .. } | Error::RoundingResidual { .. } | Error::NonzeroTotal { .. } => 3,
        _ => 1,
    }
}

fn read_instance(path: Option<&PathBuf>) -> Result<Instance64, Error> {
    match path {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| Error::Invalid(format!("{}: {e}", p.display())))?;
            Instance64::read(BufReader::new(file))
        }
        None => Instance64::read(io::stdin().lock()),
    }
}

fn run(args: &Args) -> Result<(), (u8, String)> {
    let fail = |e: Error| (exit_code(&e), e.to_string());
    let cfg = Config {
        epsilon: args.epsilon,
        seed: args.seed,
        trials: args.trials,
        eps0: args.eps0,
        net_point_budget: args.net_point_budget,
        estimate_only: args.estimate_only,
    };
    cfg.validate().map_err(fail)?;
    let inst = read_instance(args.input.as_ref()).map_err(fail)?;
    info!(
        "{} points in dimension {}, total supply {}",
        inst.len(),
        inst.dim(),
        inst.total_supply()
    );

    let out = pipeline::run(&inst, &cfg).map_err(fail)?;
    if args.stats {
        if let Some(s) = &out.graph {
            eprint!("{s}");
        }
        eprintln!("# seed {}", out.seed);
        eprintln!("# flow cost {}", out.flow_cost);
        eprintln!("# mwu rounds {}, stages {}", out.mwu_rounds, out.stages);
    }

    let mut stdout = io::stdout().lock();
    let io_err = |e: io::Error| (1u8, e.to_string());
    writeln!(stdout, "{}", out.cost).map_err(io_err)?;
    if let (Some(path), Some(map)) = (&args.map, &out.map) {
        fs::write(path, map.to_text()).map_err(|e| (1, format!("{}: {e}", path.display())))?;
    }
    if args.oracle {
        match exact_emd(&inst) {
            Ok(exact) => {
                writeln!(stdout, "exact {}", exact.cost).map_err(io_err)?;
                let ratio = if exact.cost > 0.0 { out.cost / exact.cost } else { 1.0 };
                writeln!(stdout, "ratio {ratio}").map_err(io_err)?;
            }
            Err(e) => warn!("oracle skipped: {e}"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if args.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
