//! Shift-and-invert eigensolvers for quadratic and Hermitian-definite pencils.
//!
//! The quadratic pencil is linearized as `A x = λ B x` with
//! `A = [0 I; −K −C]`, `B = diag(I, M)` and `x = (u, λu)`, so the operator
//! `S = (A − sB)⁻¹B` only ever needs a factorization of `Q(s) = K + sC + s²M`.

mod arnoldi;
pub mod dense;
mod lanczos;

use std::borrow::Cow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{QuadraticPencil, Scaling};
use crate::c64;
use crate::par::{self, Exec};
use crate::sparse::{
    lu_factorize_with, symbolic_factor, Category, CounterSnapshot, Factorization, FlopCounter, LuOptions, Ordering,
    SparseError, SparseMatrix,
};

pub use arnoldi::{arnoldi_run, krylov_schur_restart, ritz_extract, solve_quadratic, KrylovState, RitzPair};
pub use lanczos::solve_generalized_hermitian;

#[derive(Debug, Error)]
pub enum EigError {
    #[error("mass matrix has zero norm; the pencil cannot be scaled")]
    ZeroMass,
    #[error("Q(s) is singular at shift {shift} (pivot {magnitude:e} at column {column}); perturb the shift")]
    ShiftCollision { shift: c64, column: usize, magnitude: f64 },
    #[error("projected QR did not converge on a {size}x{size} matrix within {iterations} iterations")]
    QrNoConvergence { size: usize, iterations: usize },
    #[error("only {} of {requested} eigenpairs converged after {restarts} restarts", .converged.len())]
    NoConvergence {
        converged: Vec<EigenPair>,
        requested: usize,
        restarts: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

pub type Result<T> = std::result::Result<T, EigError>;

/// A vector of the linearized space, split into its two length-N blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVec {
    pub upper: Vec<c64>,
    pub lower: Vec<c64>,
}

impl BlockVec {
    pub fn zeros(n: usize) -> Self {
        Self {
            upper: vec![c64::new(0.0, 0.0); n],
            lower: vec![c64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: c64,
    /// Unit 2-norm, in the pencil's (reduced) numbering.
    #[serde(skip)]
    pub u: Vec<c64>,
    /// Relative residual of the original (unlinearized) problem.
    pub residual: f64,
    /// Cheap Krylov estimate `‖S x − θ x‖_B / |θ|`.
    pub estimate: f64,
}

/// Post-run checks of the Krylov relation, charged to a separate counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// `max_j ‖(S V − V H − v bᵀ) e_j‖_B / ‖H‖_F`.
    pub arnoldi_residual: f64,
    /// `‖VᴴBV − I‖_max` over the final basis.
    pub b_orthogonality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub nev: usize,
    /// Krylov subspace size; defaults to `max(2 nev, nev + 20)`.
    pub m: Option<usize>,
    /// Ritz values retained on restart; defaults to `nev + min(20, m − nev − 1)`.
    pub keep: Option<usize>,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
    /// Solve the pencil scaled by `ς = sqrt(‖K‖∞ / ‖M‖∞)`.
    pub scale: bool,
    /// Measure the Arnoldi residual and B-orthogonality after the run.
    pub verify: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            nev: 10,
            m: None,
            keep: None,
            tol: 1e-8,
            max_restarts: 100,
            seed: 42,
            scale: true,
            verify: false,
            exec: Exec::default(),
        }
    }
}

impl SolveOptions {
    pub fn with_nev(nev: usize) -> Self {
        Self {
            nev,
            ..Default::default()
        }
    }

    pub fn subspace(&self) -> usize {
        self.m.unwrap_or((2 * self.nev).max(self.nev + 20))
    }

    pub fn retained(&self) -> usize {
        let m = self.subspace();
        self.keep
            .unwrap_or(self.nev + 20.min(m.saturating_sub(self.nev + 1)))
    }
}

/// Restart size for an effective subspace `m` (capped by the problem size).
/// `m == nev` is only allowed when the subspace is the whole space.
pub(crate) fn retained_for(opts: &SolveOptions, m: usize) -> Result<usize> {
    let nev = opts.nev;
    if m > nev {
        Ok(opts.retained().clamp(nev, m - 1))
    } else if m == nev && opts.subspace() >= m {
        Ok(nev)
    } else {
        Err(EigError::InvalidArgument(format!("subspace size {m} must exceed nev = {nev}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Sorted by distance to the shift.
    pub pairs: Vec<EigenPair>,
    pub shift: c64,
    pub scaling: f64,
    pub m: usize,
    pub keep: usize,
    /// Outer iterations (one initial run plus one per restart).
    pub nit: usize,
    pub invariant_subspace: bool,
    /// Counts charged to the caller's counter by this solve.
    pub counters: CounterSnapshot,
    /// Explicit residuals, Ritz vectors and verification work.
    pub extra_counters: CounterSnapshot,
    pub verification: Option<Verification>,
}

/// Returns the pencil `(K, ςC, ς²M)` and `ς = sqrt(‖K‖∞ / ‖M‖∞)`.
pub fn scale_pencil(pencil: &QuadraticPencil) -> Result<(QuadraticPencil, f64)> {
    let nm = inf_norm(&pencil.m);
    if nm == 0.0 {
        return Err(EigError::ZeroMass);
    }
    let s = (inf_norm(&pencil.k) / nm).sqrt();
    if s == 0.0 || !s.is_finite() {
        return Err(EigError::InvalidArgument(format!("degenerate scaling factor {s}")));
    }
    let mut out = pencil.clone();
    out.c = pencil.c.scaled(c64::new(s, 0.0));
    out.m = pencil.m.scaled(c64::new(s * s, 0.0));
    out.scaling = Scaling::Scaled(pencil.scaling.factor() * s);
    Ok((out, s))
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &SparseMatrix) -> f64 {
    let p = a.pattern();
    (0..a.n())
        .map(|i| (p.row_ptr()[i]..p.row_ptr()[i + 1]).map(|k| a.values().get(k).norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `S = (A − sB)⁻¹B` for the linearized pencil, holding the LU of `Q(s)`.
pub struct ShiftInvertOperator<'a> {
    pencil: Cow<'a, QuadraticPencil>,
    shift: c64,
    factor: Factorization,
    scaling: f64,
    exec: Exec,
}

impl std::fmt::Debug for ShiftInvertOperator<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftInvertOperator")
            .field("n", &self.n())
            .field("shift", &self.shift)
            .field("scaling", &self.scaling)
            .finish()
    }
}

impl<'a> ShiftInvertOperator<'a> {
    pub fn n(&self) -> usize {
        self.pencil.n()
    }

    /// Shift in the units of the stored (possibly scaled) pencil.
    pub fn shift(&self) -> c64 {
        self.shift
    }

    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn pencil(&self) -> &QuadraticPencil {
        &self.pencil
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factor
    }

    pub fn set_exec(&mut self, exec: Exec) {
        self.exec = exec;
    }

    /// Eigenvalue of the original pencil for a Ritz value `θ`.
    pub fn lambda_of(&self, theta: c64) -> c64 {
        (self.shift + c64::new(1.0, 0.0) / theta) * self.scaling
    }
}

/// Factorizes `Q(s) = K + sC + s²M` once (one `fa` call).
pub fn build_operator<'a>(
    pencil: &'a QuadraticPencil,
    s: c64,
    ordering: &Ordering,
    counter: &FlopCounter,
) -> Result<ShiftInvertOperator<'a>> {
    build_operator_scaled(Cow::Borrowed(pencil), s, 1.0, ordering, counter, Exec::default())
}

pub(crate) fn build_operator_scaled<'a>(
    pencil: Cow<'a, QuadraticPencil>,
    s: c64,
    scaling: f64,
    ordering: &Ordering,
    counter: &FlopCounter,
    exec: Exec,
) -> Result<ShiftInvertOperator<'a>> {
    let one = c64::new(1.0, 0.0);
    let q = SparseMatrix::combine(&[(one, &pencil.k), (s, &pencil.c), (s * s, &pencil.m)])?;
    let factor = factorize(&q, ordering, counter, exec).map_err(|e| match e {
        EigError::Sparse(SparseError::Singular { column, magnitude }) => EigError::ShiftCollision {
            shift: s * scaling,
            column,
            magnitude,
        },
        e => e,
    })?;
    Ok(ShiftInvertOperator {
        pencil,
        shift: s,
        factor,
        scaling,
        exec,
    })
}

pub(crate) fn factorize(a: &SparseMatrix, ordering: &Ordering, counter: &FlopCounter, exec: Exec) -> Result<Factorization> {
    if ordering.len() != a.n() {
        return Err(EigError::InvalidArgument(format!(
            "ordering has {} entries for a matrix of order {}",
            ordering.len(),
            a.n()
        )));
    }
    let sym = Arc::new(symbolic_factor(a.pattern(), ordering));
    Ok(lu_factorize_with(a, sym, counter, LuOptions { exec, ..Default::default() })?)
}

/// `r_u = −Q(s)⁻¹(sM v_u + C v_u + M v_l)`, `r_l = s r_u + v_u`.
pub fn apply_operator(op: &ShiftInvertOperator<'_>, v: &BlockVec, counter: &FlopCounter) -> Result<BlockVec> {
    let n = op.n();
    if v.upper.len() != n || v.lower.len() != n {
        return Err(SparseError::DimensionMismatch {
            expected: n,
            got: v.upper.len().min(v.lower.len()),
        }
        .into());
    }
    let p = &op.pencil;
    let s = op.shift;
    let mut mu = vec![c64::new(0.0, 0.0); n];
    let mut cu = vec![c64::new(0.0, 0.0); n];
    let mut ml = vec![c64::new(0.0, 0.0); n];
    p.m.spmv_into(op.exec, &v.upper, &mut mu, counter)?;
    p.c.spmv_into(op.exec, &v.upper, &mut cu, counter)?;
    p.m.spmv_into(op.exec, &v.lower, &mut ml, counter)?;
    let mut ru: Vec<c64> = (0..n).map(|i| -(s * mu[i] + cu[i] + ml[i])).collect();
    op.factor.solve_in_place(&mut ru, counter)?;
    let rl = (0..n).map(|i| s * ru[i] + v.upper[i]).collect();
    Ok(BlockVec { upper: ru, lower: rl })
}

/// `x_uᴴ y_u + x_lᴴ M y_l`; two `vv` and one `mv`.
pub fn b_inner(x: &BlockVec, y: &BlockVec, m: &SparseMatrix, counter: &FlopCounter) -> Result<c64> {
    let n = m.n();
    if x.len() != n || y.len() != n || x.lower.len() != n || y.lower.len() != n {
        return Err(SparseError::DimensionMismatch {
            expected: n,
            got: x.len().min(y.len()),
        }
        .into());
    }
    let my = m.spmv(&y.lower, counter)?;
    Ok(crate::sparse::dot(&x.upper, &y.upper, counter)? + crate::sparse::dot(&x.lower, &my, counter)?)
}

/// Relative residual `‖Q(λ)u‖ / ((‖K‖₁ + |λ|‖C‖₁ + |λ|²‖M‖₁)‖u‖)`.
pub fn pencil_residual(pencil: &QuadraticPencil, lambda: c64, u: &[c64], counter: &FlopCounter) -> Result<f64> {
    let ku = pencil.k.spmv(u, counter)?;
    let cu = pencil.c.spmv(u, counter)?;
    let mu = pencil.m.spmv(u, counter)?;
    let r: Vec<c64> = (0..u.len()).map(|i| ku[i] + lambda * cu[i] + lambda * lambda * mu[i]).collect();
    let l = lambda.norm();
    let denom = (pencil.k.norm1() + l * pencil.c.norm1() + l * l * pencil.m.norm1()) * crate::sparse::norm2(u);
    Ok(if denom == 0.0 { 0.0 } else { crate::sparse::norm2(&r) / denom })
}

/// `y_i = Σ_j V_j[i] c_j` for vectors of equal length; charges one `vv` per term.
pub(crate) fn combine_into(exec: Exec, vs: &[&[c64]], coef: &[c64], out: &mut [c64], counter: &FlopCounter) {
    let n = out.len();
    par::for_each_chunk_mut(exec, out, par::MIN_CHUNK, |ci, chunk| {
        let base = ci * par::MIN_CHUNK;
        for (off, o) in chunk.iter_mut().enumerate() {
            let i = base + off;
            let mut s = c64::new(0.0, 0.0);
            for (v, &c) in vs.iter().zip(coef) {
                s += v[i] * c;
            }
            *o = s;
        }
    });
    for _ in 0..vs.len() {
        counter.charge(Category::Vv, n as u64);
    }
}

/// `out_j = V_jᴴ y` for every basis vector; one `vv` each.
pub(crate) fn project(exec: Exec, vs: &[&[c64]], y: &[c64], counter: &FlopCounter) -> Vec<c64> {
    let out = par::map_range(exec, vs.len(), |j| crate::sparse::dot_raw(vs[j], y));
    for _ in 0..vs.len() {
        counter.charge(Category::Vv, y.len() as u64);
    }
    out
}

/// `y ← y − Σ_j c_j V_j`; one `vv` per term.
pub(crate) fn subtract_combination(exec: Exec, vs: &[&[c64]], coef: &[c64], y: &mut [c64], counter: &FlopCounter) {
    let n = y.len();
    par::for_each_chunk_mut(exec, y, par::MIN_CHUNK, |ci, chunk| {
        let base = ci * par::MIN_CHUNK;
        for (off, o) in chunk.iter_mut().enumerate() {
            let i = base + off;
            let mut s = c64::new(0.0, 0.0);
            for (v, &c) in vs.iter().zip(coef) {
                s += v[i] * c;
            }
            *o -= s;
        }
    });
    for _ in 0..vs.len() {
        counter.charge(Category::Vv, n as u64);
    }
}

/// `y ← a y`; one `vv`.
pub(crate) fn scale_in_place(a: c64, y: &mut [c64], counter: &FlopCounter) {
    for z in y.iter_mut() {
        *z *= a;
    }
    counter.charge(Category::Vv, y.len() as u64);
}

/// Unit-norm random start vector.
pub(crate) fn random_vector(n: usize, seed: u64, complex: bool) -> Vec<c64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<c64> = (0..n)
        .map(|_| {
            let re = rng.gen_range(-1.0..1.0);
            let im = if complex { rng.gen_range(-1.0..1.0) } else { 0.0 };
            c64::new(re, im)
        })
        .collect();
    let nrm = crate::sparse::norm2(&v);
    v.into_iter().map(|z| z / nrm).collect()
}

#[cfg(test)]
mod tests;
