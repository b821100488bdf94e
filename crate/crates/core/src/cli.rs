//! `balint solve | verify | simulate`.
//!
//! Exit codes: 0 success, 1 usage/config/io error, 2 mathematical
//! infeasibility (divergent moment, missing MGF, no root), 3 verification
//! gap above threshold.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{EngineKind, GridConfig, Overrides};
use crate::error::Error;
use crate::harness::{run_grid, summarize_grid, write_results_csv, RowStatus};
use crate::intercept::{expectation_of_mean, solve};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_GAP: i32 = 3;

/// Stream below the scenario key used by `verify`, distinct from the
/// solver's.
const VERIFY_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Parser)]
#[command(name = "balint", version, about = "Balancing intercepts for simulation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the balancing intercept of a single-model config.
    Solve(Common),
    /// Evaluate the achieved mean of a given intercept.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        beta0: f64,
    },
    /// Run the scenario grid and write the result CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Exact,
    Mc,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[arg(long = "n-mc")]
    n_mc: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            replicates: self.replicates,
            workers: self.workers,
            engine: self.engine.map(|e| match e {
                EngineArg::Exact => EngineKind::Exact,
                EngineArg::Mc => EngineKind::Mc,
            }),
            n_mc: self.n_mc,
            tol: self.tol,
        }
    }

    fn load(&self) -> Result<GridConfig, Error> {
        let mut cfg = GridConfig::load(&self.config)?;
        cfg.apply(&self.overrides());
        cfg.check()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_infeasible() {
        EXIT_INFEASIBLE
    } else {
        EXIT_CONFIG
    }
}

fn report(err: &mut dyn Write, e: &Error) -> i32 {
    let _ = writeln!(err, "error: {e}");
    exit_code(e)
}

fn cmd_solve(c: &Common, out: &mut dyn Write) -> Result<i32, Error> {
    let cfg = c.load()?;
    let s = cfg.single()?;
    let sol = solve(&s.dgp, s.solver, s.engine, s.tol, &s.stream().child(crate::harness::SOLVER_STREAM))?;
    writeln!(out, "beta0,method,residual,iterations,mc_se,warnings")?;
    writeln!(
        out,
        "{},{},{},{},{},{}",
        sol.beta0, sol.method, sol.residual, sol.iterations, sol.mc_se, sol.warnings
    )?;
    Ok(EXIT_OK)
}

fn cmd_verify(c: &Common, beta0: f64, out: &mut dyn Write) -> Result<i32, Error> {
    let cfg = c.load()?;
    let s = cfg.single()?;
    let e = expectation_of_mean(beta0, &s.dgp, s.engine, &s.stream().child(VERIFY_STREAM))?;
    let gap = (e.value - s.dgp.target_mean).abs();
    let threshold = s.tol.max(4.0 * e.se);
    let pass = gap <= threshold;
    writeln!(out, "target,achieved,se,gap,threshold,pass")?;
    writeln!(out, "{},{},{},{},{},{}", s.dgp.target_mean, e.value, e.se, gap, threshold, pass)?;
    Ok(if pass { EXIT_OK } else { EXIT_GAP })
}

fn cmd_simulate(c: &Common, path: &PathBuf, err: &mut dyn Write) -> Result<i32, Error> {
    let cfg = c.load()?;
    let rows = run_grid(&cfg)?;
    let file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write_results_csv(&rows, &mut w)?;
    w.flush()?;
    for row in &rows {
        if let RowStatus::Skipped { reason, .. } = &row.status {
            writeln!(err, "skipped {}: {reason}", row.scenario.id)?;
        }
    }
    let sum = summarize_grid(&rows);
    writeln!(
        err,
        "cells run: {}, skipped: {}, max |bias|/se: {:.3}",
        sum.run, sum.skipped, sum.max_bias_ratio
    )?;
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Solve(c) => cmd_solve(c, out),
        Command::Verify { common, beta0 } => cmd_verify(common, *beta0, out),
        Command::Simulate { common, out: path } => cmd_simulate(common, path, err),
    };
    result.unwrap_or_else(|e| report(err, &e))
}
