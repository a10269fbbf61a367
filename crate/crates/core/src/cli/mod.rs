//! Configuration-driven experiment runner behind the `riga-qep` binary.

mod config;
mod run;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{ExperimentConfig, MaterialConfig, Problem, ShiftValue, SweepConfig, VerifyConfig, MACROELEMENT};
pub use run::{
    cmd_assemble, cmd_cost_model, cmd_solve, cmd_sweep, cmd_verify, dimensions, em_multiplicity, prepare, run_solve,
    solve_options, solve_prepared, space_kind, write_csv, write_json, CostModelOutput, Dimensions, PairRow, Prepared,
    RunReport, SweepRow, VerifyRow,
};

use crate::assembly::AssemblyError;
use crate::eig::EigError;
use crate::oracles::OracleError;
use crate::spaces::SpaceError;
use crate::sparse::{Discretization, SparseError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {msg}", .field.as_ref().map(|f| format!(" in `{f}`")).unwrap_or_default())]
    Config { field: Option<String>, msg: String },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(EigError),
    #[error("solver did not converge: {} of {} eigenpairs", .0.converged, .0.requested)]
    NoConvergence(Box<RunReport>),
    #[error("mode {mode} not found near the shift (nearest {nearest:?})")]
    ModeMiss { mode: String, nearest: Option<[f64; 2]> },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<SpaceError> for CliError {
    fn from(e: SpaceError) -> Self {
        CliError::Assembly(e.into())
    }
}

impl From<EigError> for CliError {
    fn from(e: EigError) -> Self {
        match e {
            EigError::Sparse(SparseError::Io(io)) => CliError::Io(io),
            e => CliError::Solver(e),
        }
    }
}

impl From<SparseError> for CliError {
    fn from(e: SparseError) -> Self {
        match e {
            SparseError::Io(io) => CliError::Io(io),
            e => CliError::Assembly(e.into()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Assembly(_) => 3,
            CliError::Solver(_) | CliError::NoConvergence(_) => 4,
            CliError::ModeMiss { .. } | CliError::Oracle(_) => 5,
            CliError::Io(_) | CliError::Json(_) | CliError::Csv(_) => 6,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "riga-qep", version, about = "IGA/rIGA quadratic eigenproblem experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML experiment file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set material.alpha=4e4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "RIGA_QEP_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write K, C, M in Matrix Market form and report sizes.
    Assemble(Common),
    /// Solve one configuration; eigenpairs as JSON and CSV.
    Solve(Common),
    /// Solve every (ne, p, discretization) cell of `[sweep]`.
    Sweep(Common),
    /// Compare against analytic eigenpairs.
    Verify(Common),
    /// Print the asymptotic cost table.
    CostModel(CostArgs),
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub nev: usize,
    #[arg(long, default_value_t = 1)]
    pub nit: usize,
    #[arg(long, value_enum, default_value = "iga")]
    pub disc: DiscArg,
    /// A `report.json` from `solve` whose counters are listed alongside.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum DiscArg {
    Iga,
    Riga,
}

impl From<DiscArg> for Discretization {
    fn from(d: DiscArg) -> Self {
        match d {
            DiscArg::Iga => Discretization::Iga,
            DiscArg::Riga => Discretization::Riga,
        }
    }
}

pub fn load_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let text = match &common.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config {
            field: None,
            msg: format!("cannot read {}: {e}", p.display()),
        })?,
        None => String::new(),
    };
    let mut cfg = ExperimentConfig::from_toml(&text, &common.overrides)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.display().to_string());
    }
    Ok(cfg)
}

fn configure_threads(threads: Option<usize>) {
    let Some(n) = threads else { return };
    #[cfg(feature = "parallel")]
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        log::warn!("thread pool already initialized: {e}");
    }
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the parallel feature; ignoring --threads {n}");
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    PathBuf::from(cfg.out.as_deref().unwrap_or("out"))
}

fn summarize(r: &RunReport) {
    let d = &r.dimensions;
    println!(
        "{} {:?} p={} ne={} levels={}: n={} nnz={} factor_nnz={}",
        r.command, r.config.problem, r.config.p, r.config.ne, r.levels, d.n, d.nnz, d.factor_nnz
    );
    if let Some(c) = &r.counters {
        println!(
            "converged {}/{} nit={} flops fa={:e} fb={:e} mv={:e} vv={:e} total={:e}",
            r.converged, r.requested, r.nit, c.fa.flops, c.fb.flops, c.mv.flops, c.vv.flops, c.total_flops
        );
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Assemble(c) => {
            configure_threads(c.threads);
            let cfg = load_config(&c)?;
            let r = cmd_assemble(&cfg, &out_dir(&cfg))?;
            summarize(&r);
            println!("full dimension {}", r.dimensions.full_n);
        }
        Command::Solve(c) => {
            configure_threads(c.threads);
            let cfg = load_config(&c)?;
            let r = cmd_solve(&cfg, &out_dir(&cfg));
            match &r {
                Ok(rep) => summarize(rep),
                Err(CliError::NoConvergence(rep)) => summarize(rep),
                Err(_) => {}
            }
            r?;
        }
        Command::Sweep(c) => {
            configure_threads(c.threads);
            let cfg = load_config(&c)?;
            let rows = cmd_sweep(&cfg);
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            write_csv(&dir.join("sweep.csv"), &rows)?;
            let failed = rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} cells, {failed} failed; wrote {}", rows.len(), dir.join("sweep.csv").display());
        }
        Command::Verify(c) => {
            configure_threads(c.threads);
            let cfg = load_config(&c)?;
            let rows = cmd_verify(&cfg)?;
            let dir = out_dir(&cfg);
            std::fs::create_dir_all(&dir)?;
            write_csv(&dir.join("verify.csv"), &rows)?;
            for r in &rows {
                println!(
                    "{} ne={} p={} {:?}: lambda_h={:.8e} rel_error={:.3e} l2={}",
                    r.mode,
                    r.ne,
                    r.p,
                    r.discretization,
                    r.lambda_h_re,
                    r.rel_error,
                    r.l2_error.map_or("-".into(), |e| format!("{e:.3e}"))
                );
            }
        }
        Command::CostModel(a) => {
            let measured = match &a.report {
                Some(p) => Some(read_report(p)?),
                None => None,
            };
            let t = cmd_cost_model(a.n, a.p, a.nev, a.nit, a.disc.into(), measured.as_ref());
            let csv = t.to_csv();
            print!("{csv}");
            if let Some(o) = &a.out {
                std::fs::create_dir_all(o)?;
                std::fs::write(o.join("cost_model.csv"), csv)?;
            }
        }
    }
    Ok(())
}

fn read_report(p: &Path) -> Result<RunReport, CliError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?)
}
