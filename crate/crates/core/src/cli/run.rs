use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Problem};
use super::CliError;
use crate::assembly::{assemble_acoustic, assemble_em, QuadraticPencil};
use crate::c64;
use crate::eig::{self, EigError, EigenPair, SolveOptions, SolveReport, Verification};
use crate::oracles::{self, AnalyticField};
use crate::spaces::{build_riga_space, SpaceKind, VectorSpace};
use crate::sparse::{
    nested_dissection_order, symbolic_factor, theoretical_costs, CostTable, CounterSnapshot, Discretization, FlopCounter,
    Ordering,
};

/// A discretized problem ready to solve.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub space: VectorSpace,
    pub pencil: QuadraticPencil,
    pub ordering: Ordering,
    pub levels: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dimensions {
    /// DOFs before boundary elimination.
    pub full_n: usize,
    pub full_nnz: usize,
    pub n: usize,
    pub nnz: usize,
    pub nnz_nonzero: usize,
    /// Lower-factor nnz of `Q(s)` under the nested dissection ordering.
    pub factor_nnz: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub index: usize,
    pub re: f64,
    pub im: f64,
    pub residual: f64,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config: ExperimentConfig,
    pub levels: u32,
    pub dimensions: Dimensions,
    pub shift: [f64; 2],
    pub m: usize,
    pub keep: usize,
    pub nit: usize,
    pub requested: usize,
    pub converged: usize,
    pub eigenpairs: Vec<PairRow>,
    pub counters: Option<CounterSnapshot>,
    pub extra_counters: Option<CounterSnapshot>,
    pub verification: Option<Verification>,
    pub wall_time_s: f64,
}

pub fn space_kind(problem: Problem) -> SpaceKind {
    match problem {
        Problem::Em | Problem::EmNonconductive => SpaceKind::Curl,
        Problem::Acoustic => SpaceKind::Div,
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let levels = cfg.levels_for(cfg.ne, cfg.discretization)?;
    let space = build_riga_space(space_kind(cfg.problem), cfg.p, cfg.ne, levels, cfg.domain)?;
    let pencil = match cfg.problem {
        Problem::Em | Problem::EmNonconductive => assemble_em(&space, &cfg.em_material()?)?,
        Problem::Acoustic => assemble_acoustic(&space, &cfg.acoustic_material())?,
    };
    let ordering = nested_dissection_order(&space, &pencil.free_dofs);
    Ok(Prepared {
        space,
        pencil,
        ordering,
        levels,
    })
}

pub fn dimensions(prep: &Prepared) -> Dimensions {
    let s = &prep.pencil.stats;
    Dimensions {
        full_n: s.full_n,
        full_nnz: s.full_nnz,
        n: s.reduced_n,
        nnz: s.reduced_nnz,
        nnz_nonzero: s.reduced_nnz_nonzero,
        factor_nnz: symbolic_factor(prep.pencil.pattern(), &prep.ordering).nnz_l,
    }
}

pub fn solve_options(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions {
        nev: cfg.nev,
        m: cfg.m,
        keep: cfg.keep,
        tol: cfg.tol,
        max_restarts: cfg.max_restarts,
        seed: cfg.seed,
        scale: cfg.scale,
        verify: cfg.check_krylov,
        ..SolveOptions::default()
    }
}

/// Routes non-conductive Maxwell to the Hermitian solver on `(-K, M)`.
pub fn solve_prepared(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    opts: &SolveOptions,
    counter: &FlopCounter,
) -> Result<SolveReport, EigError> {
    let shift = cfg.shift();
    match cfg.problem {
        Problem::EmNonconductive => {
            let a = prep.pencil.k.scaled(c64::new(-1.0, 0.0));
            eig::solve_generalized_hermitian(&a, &prep.pencil.m, shift.re, &prep.ordering, opts, counter)
        }
        _ => eig::solve_quadratic(&prep.pencil, shift, &prep.ordering, opts, counter),
    }
}

fn pair_rows(pairs: &[EigenPair]) -> Vec<PairRow> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| PairRow {
            index: i,
            re: p.lambda.re,
            im: p.lambda.im,
            residual: p.residual,
            estimate: p.estimate,
        })
        .collect()
}

fn base_report(command: &str, cfg: &ExperimentConfig, prep: &Prepared) -> RunReport {
    let s = cfg.shift();
    RunReport {
        command: command.into(),
        config: cfg.clone(),
        levels: prep.levels,
        dimensions: dimensions(prep),
        shift: [s.re, s.im],
        m: 0,
        keep: 0,
        nit: 0,
        requested: cfg.nev,
        converged: 0,
        eigenpairs: Vec::new(),
        counters: None,
        extra_counters: None,
        verification: None,
        wall_time_s: 0.0,
    }
}

pub fn cmd_assemble(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, CliError> {
    let t = Instant::now();
    let prep = prepare(cfg)?;
    prep.pencil.write_matrix_market(out)?;
    prep.ordering.write_text(&out.join("ordering.txt"))?;
    let mut r = base_report("assemble", cfg, &prep);
    r.requested = 0;
    r.wall_time_s = t.elapsed().as_secs_f64();
    write_json(&out.join("report.json"), &r)?;
    Ok(r)
}

/// Solves one configuration; partial results come back inside `CliError::NoConvergence`.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<(RunReport, Prepared, Vec<EigenPair>), CliError> {
    let t = Instant::now();
    let prep = prepare(cfg)?;
    let counter = FlopCounter::default();
    let mut r = base_report("solve", cfg, &prep);
    match solve_prepared(cfg, &prep, &solve_options(cfg), &counter) {
        Ok(rep) => {
            r.m = rep.m;
            r.keep = rep.keep;
            r.nit = rep.nit;
            r.converged = rep.pairs.len();
            r.eigenpairs = pair_rows(&rep.pairs);
            r.counters = Some(rep.counters);
            r.extra_counters = Some(rep.extra_counters);
            r.verification = rep.verification;
            r.wall_time_s = t.elapsed().as_secs_f64();
            Ok((r, prep, rep.pairs))
        }
        Err(EigError::NoConvergence { converged, .. }) => {
            r.converged = converged.len();
            r.eigenpairs = pair_rows(&converged);
            r.counters = Some(counter.snapshot());
            r.wall_time_s = t.elapsed().as_secs_f64();
            Err(CliError::NoConvergence(Box::new(r)))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport, CliError> {
    let result = run_solve(cfg);
    let r = match &result {
        Ok((r, ..)) => r,
        Err(CliError::NoConvergence(r)) => r.as_ref(),
        Err(_) => return result.map(|(r, ..)| r),
    };
    std::fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), r)?;
    write_csv(&out.join("eigenpairs.csv"), &r.eigenpairs)?;
    result.map(|(r, ..)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ne: usize,
    pub p: usize,
    pub discretization: Discretization,
    pub levels: Option<u32>,
    pub n: Option<usize>,
    pub nnz: Option<usize>,
    pub factor_nnz: Option<usize>,
    pub nit: Option<usize>,
    pub converged: Option<usize>,
    pub fa: Option<f64>,
    pub fb: Option<f64>,
    pub mv: Option<f64>,
    pub vv: Option<f64>,
    pub total: Option<f64>,
    /// IGA/rIGA ratios, filled on rIGA rows that have an IGA partner.
    pub ratio_fa: Option<f64>,
    pub ratio_fb: Option<f64>,
    pub ratio_mv: Option<f64>,
    pub ratio_vv: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn flops(&self) -> Option<[f64; 4]> {
        Some([self.fa?, self.fb?, self.mv?, self.vv?])
    }
}

fn sweep_axes(cfg: &ExperimentConfig) -> (Vec<usize>, Vec<usize>, Vec<Discretization>) {
    let or = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
    let discs = if cfg.sweep.discretization.is_empty() {
        vec![cfg.discretization]
    } else {
        cfg.sweep.discretization.clone()
    };
    (or(&cfg.sweep.ne, cfg.ne), or(&cfg.sweep.p, cfg.p), discs)
}

/// Every `(ne, p, discretization)` cell; failures are recorded per row.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Vec<SweepRow> {
    let (nes, ps, discs) = sweep_axes(cfg);
    let mut rows = Vec::new();
    for &ne in &nes {
        for &p in &ps {
            for &disc in &discs {
                let mut row = SweepRow {
                    ne,
                    p,
                    discretization: disc,
                    levels: None,
                    n: None,
                    nnz: None,
                    factor_nnz: None,
                    nit: None,
                    converged: None,
                    fa: None,
                    fb: None,
                    mv: None,
                    vv: None,
                    total: None,
                    ratio_fa: None,
                    ratio_fb: None,
                    ratio_mv: None,
                    ratio_vv: None,
                    error: None,
                };
                let result = cfg.cell(ne, p, disc).and_then(|c| run_solve(&c).map(|(r, ..)| r));
                let report = match result {
                    Ok(r) => Some(r),
                    Err(CliError::NoConvergence(r)) => {
                        row.error = Some(format!("{} of {} eigenpairs converged", r.converged, r.requested));
                        Some(*r)
                    }
                    Err(e) => {
                        log::warn!("sweep cell ne={ne} p={p} {disc:?} failed: {e}");
                        row.error = Some(e.to_string());
                        None
                    }
                };
                if let Some(r) = report {
                    row.levels = Some(r.levels);
                    row.n = Some(r.dimensions.n);
                    row.nnz = Some(r.dimensions.nnz);
                    row.factor_nnz = Some(r.dimensions.factor_nnz);
                    row.nit = Some(r.nit);
                    row.converged = Some(r.converged);
                    if let Some(c) = r.counters {
                        row.fa = Some(c.fa.flops);
                        row.fb = Some(c.fb.flops);
                        row.mv = Some(c.mv.flops);
                        row.vv = Some(c.vv.flops);
                        row.total = Some(c.total_flops);
                    }
                }
                rows.push(row);
            }
        }
    }
    fill_ratios(&mut rows);
    rows
}

fn fill_ratios(rows: &mut [SweepRow]) {
    let igas: Vec<(usize, usize, [f64; 4])> = rows
        .iter()
        .filter(|r| r.discretization == Discretization::Iga)
        .filter_map(|r| Some((r.ne, r.p, r.flops()?)))
        .collect();
    for r in rows.iter_mut().filter(|r| r.discretization == Discretization::Riga) {
        let (Some(own), Some(&(_, _, iga))) = (r.flops(), igas.iter().find(|(ne, p, _)| *ne == r.ne && *p == r.p)) else {
            continue;
        };
        let q = |i: usize| (own[i] > 0.0).then(|| iga[i] / own[i]);
        r.ratio_fa = q(0);
        r.ratio_fb = q(1);
        r.ratio_mv = q(2);
        r.ratio_vv = q(3);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub ne: usize,
    pub p: usize,
    pub discretization: Discretization,
    pub mode: String,
    pub lambda_ref: f64,
    pub lambda_h_re: f64,
    pub lambda_h_im: f64,
    pub rel_error: f64,
    /// Left empty for degenerate modes, whose eigenfunction is not unique.
    pub l2_error: Option<f64>,
    pub total_flops: f64,
}

/// Number of Maxwell modes sharing `i² + j²`.
pub fn em_multiplicity(i: u32, j: u32) -> usize {
    let s = i * i + j * j;
    let r = (f64::from(s)).sqrt() as u32 + 1;
    (0..=r)
        .flat_map(|k| (0..=r).map(move |l| (k, l)))
        .filter(|&(k, l)| (k, l) != (0, 0) && k * k + l * l == s)
        .count()
}

struct Target {
    label: String,
    lambda: f64,
    field: Box<dyn AnalyticField>,
    unique: bool,
}

fn targets(cfg: &ExperimentConfig) -> Result<Vec<Target>, CliError> {
    let mut out = Vec::new();
    match cfg.problem {
        Problem::EmNonconductive => {
            for &[i, j] in &cfg.verify.modes {
                let m = oracles::em_analytic(i, j)?;
                out.push(Target {
                    label: format!("em({i},{j})"),
                    lambda: m.lambda,
                    field: Box::new(m),
                    unique: em_multiplicity(i, j) == 1,
                });
            }
        }
        Problem::Acoustic => {
            let mat = cfg.acoustic_material();
            let (a, b) = (cfg.domain.lengths()[0], cfg.domain.lengths()[1]);
            for &[j, branch] in &cfg.verify.acoustic {
                let branch = u8::try_from(branch).map_err(|_| oracles::OracleError::InvalidBranch(u8::MAX))?;
                let m = oracles::acoustic_dispersion_roots(j, branch, &mat, a, b)?;
                out.push(Target {
                    label: format!("acoustic(j={j},branch={branch})"),
                    lambda: m.lambda,
                    field: Box::new(m),
                    unique: true,
                });
            }
        }
        Problem::Em => {
            return Err(CliError::Config {
                field: Some("problem".into()),
                msg: "the conductive Maxwell problem has no analytic oracle".into(),
            })
        }
    }
    Ok(out)
}

/// One verification row per (cell, mode); the shift is placed on the oracle value.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<Vec<VerifyRow>, CliError> {
    let (nes, ps, discs) = sweep_axes(cfg);
    let targets = targets(cfg)?;
    let mut rows = Vec::new();
    for &ne in &nes {
        for &p in &ps {
            for &disc in &discs {
                let base = cfg.cell(ne, p, disc)?;
                let prep = prepare(&base)?;
                for t in &targets {
                    let mut c = base.clone();
                    c.shift = Some(super::config::ShiftValue::Real(t.lambda));
                    let counter = FlopCounter::default();
                    let rep = solve_prepared(&c, &prep, &solve_options(&c), &counter)?;
                    let best = rep
                        .pairs
                        .iter()
                        .min_by(|a, b| (a.lambda - t.lambda).norm().total_cmp(&(b.lambda - t.lambda).norm()))
                        .ok_or_else(|| CliError::ModeMiss {
                            mode: t.label.clone(),
                            nearest: None,
                        })?;
                    let rel = oracles::eigenvalue_error(best.lambda.re, t.lambda)?;
                    if (best.lambda - t.lambda).norm() > cfg.verify.miss_tolerance * t.lambda.abs() {
                        return Err(CliError::ModeMiss {
                            mode: t.label.clone(),
                            nearest: Some([best.lambda.re, best.lambda.im]),
                        });
                    }
                    let l2 = if t.unique {
                        let u = prep.pencil.expand(prep.space.n(), &best.u);
                        Some(oracles::eigenfunction_l2_error(&prep.space, &u, t.field.as_ref())?)
                    } else {
                        None
                    };
                    rows.push(VerifyRow {
                        ne,
                        p,
                        discretization: disc,
                        mode: t.label.clone(),
                        lambda_ref: t.lambda,
                        lambda_h_re: best.lambda.re,
                        lambda_h_im: best.lambda.im,
                        rel_error: rel,
                        l2_error: l2,
                        total_flops: rep.counters.total_flops,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModelOutput {
    pub table: CostTable,
    /// Measured FLOPs per category from a previous run, when supplied.
    pub measured: Option<[f64; 4]>,
}

pub fn cmd_cost_model(n: usize, p: usize, nev: usize, nit: usize, disc: Discretization, measured: Option<&RunReport>) -> CostModelOutput {
    CostModelOutput {
        table: theoretical_costs(n, p, nev, nit, disc),
        measured: measured.and_then(|r| r.counters.as_ref()).map(|c| [c.fa.flops, c.fb.flops, c.mv.flops, c.vv.flops]),
    }
}

impl CostModelOutput {
    pub fn to_csv(&self) -> String {
        let mut s = self.table.to_csv();
        if let Some(m) = self.measured {
            s.push_str(&format!("\"measured\",{:e},{:e},{:e},{:e}\n", m[0], m[1], m[2], m[3]));
        }
        s
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
