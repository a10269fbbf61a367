use std::borrow::Cow;

use nalgebra::DMatrix;

use crate::assembly::QuadraticPencil;
use crate::c64;
use crate::par::Exec;
use crate::sparse::{Category, FlopCounter, Ordering};

use super::{
    apply_operator, build_operator_scaled, combine_into, dense, pencil_residual, project, random_vector, scale_in_place,
    scale_pencil, subtract_combination, BlockVec, EigError, EigenPair, Result, ShiftInvertOperator, SolveOptions,
    SolveReport, Verification,
};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Second Gram–Schmidt pass when the projection removed more than this share of `‖r‖_B`.
const DGKS_ETA: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `S V_k = V_k H_k + v_{k+1} h_{k+1,:}`, with `V` B-orthonormal.
///
/// After a Krylov–Schur restart the leading block of `H` is triangular and the
/// residual row is full; plain Arnoldi keeps `H` upper Hessenberg.
#[derive(Debug, Clone)]
pub struct KrylovState {
    /// `k + 1` vectors, or `k` after an invariant subspace was found.
    pub basis: Vec<BlockVec>,
    /// `(m + 1) × m`; columns `k..` are unused.
    pub h: DMatrix<c64>,
    pub k: usize,
    pub m: usize,
    pub nit: usize,
    pub invariant: bool,
    pub reorthogonalizations: usize,
}

impl KrylovState {
    pub fn beta(&self) -> f64 {
        if self.k == 0 {
            return 0.0;
        }
        (0..self.k).map(|j| self.h[(self.k, j)].norm_sqr()).sum::<f64>().sqrt()
    }

    /// Leading `k × k` projected matrix.
    pub fn projected(&self) -> DMatrix<c64> {
        self.h.view((0, 0), (self.k, self.k)).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RitzPair {
    pub theta: c64,
    /// Eigenvalue of the original pencil (scaling undone).
    pub lambda: c64,
    /// Unit 2-norm coordinates in the Krylov basis.
    pub y: Vec<c64>,
    /// `‖S x − θ x‖_B` for `x = V y`.
    pub estimate: f64,
}

fn uppers(b: &[BlockVec]) -> Vec<&[c64]> {
    b.iter().map(|v| v.upper.as_slice()).collect()
}

fn lowers(b: &[BlockVec]) -> Vec<&[c64]> {
    b.iter().map(|v| v.lower.as_slice()).collect()
}

/// B-normalizes `v` in place and returns the norm it had.
fn b_normalize(op: &ShiftInvertOperator<'_>, v: &mut BlockVec, exec: Exec, counter: &FlopCounter) -> Result<f64> {
    let n = v.len();
    let mut ml = vec![ZERO; n];
    op.pencil().m.spmv_into(exec, &v.lower, &mut ml, counter)?;
    let nrm = b_norm_sq(v, &ml, counter).sqrt();
    if nrm == 0.0 {
        return Err(EigError::InvalidArgument("zero start vector".into()));
    }
    let inv = c64::new(1.0 / nrm, 0.0);
    scale_in_place(inv, &mut v.upper, counter);
    scale_in_place(inv, &mut v.lower, counter);
    Ok(nrm)
}

fn b_norm_sq(v: &BlockVec, ml: &[c64], counter: &FlopCounter) -> f64 {
    counter.charge(Category::Vv, v.len() as u64);
    counter.charge(Category::Vv, v.len() as u64);
    let a = crate::sparse::dot_raw(&v.upper, &v.upper).re;
    let b = crate::sparse::dot_raw(&v.lower, ml).re;
    (a + b).max(0.0)
}

/// Runs `m` Arnoldi steps from `v1` (normalized here in the B-norm).
pub fn arnoldi_run(
    op: &ShiftInvertOperator<'_>,
    m: usize,
    v1: BlockVec,
    counter: &FlopCounter,
) -> Result<KrylovState> {
    if m == 0 {
        return Err(EigError::InvalidArgument("Krylov subspace size must be positive".into()));
    }
    let exec = op.exec;
    let mut v1 = v1;
    b_normalize(op, &mut v1, exec, counter)?;
    let mut state = KrylovState {
        basis: vec![v1],
        h: DMatrix::zeros(m + 1, m),
        k: 0,
        m,
        nit: 1,
        invariant: false,
        reorthogonalizations: 0,
    };
    extend(op, &mut state, counter)?;
    Ok(state)
}

/// Continues the recurrence from column `k` to `m`.
pub(crate) fn extend(op: &ShiftInvertOperator<'_>, state: &mut KrylovState, counter: &FlopCounter) -> Result<()> {
    let exec = op.exec;
    let mm = &op.pencil().m;
    let n = op.n();
    while state.k < state.m && !state.invariant {
        let j = state.k;
        let mut r = apply_operator(op, &state.basis[j], counter)?;
        let mut ml = vec![ZERO; n];
        mm.spmv_into(exec, &r.lower, &mut ml, counter)?;
        let (vu, vl) = (uppers(&state.basis), lowers(&state.basis));
        let hu = project(exec, &vu, &r.upper, counter);
        let hl = project(exec, &vl, &ml, counter);
        let mut h: Vec<c64> = hu.iter().zip(&hl).map(|(a, b)| a + b).collect();
        subtract_combination(exec, &vu, &h, &mut r.upper, counter);
        subtract_combination(exec, &vl, &h, &mut r.lower, counter);
        mm.spmv_into(exec, &r.lower, &mut ml, counter)?;
        let mut nz2 = b_norm_sq(&r, &ml, counter);
        let nr = (nz2 + h.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        if nz2.sqrt() < DGKS_ETA * nr {
            let cu = project(exec, &vu, &r.upper, counter);
            let cl = project(exec, &vl, &ml, counter);
            let c: Vec<c64> = cu.iter().zip(&cl).map(|(a, b)| a + b).collect();
            subtract_combination(exec, &vu, &c, &mut r.upper, counter);
            subtract_combination(exec, &vl, &c, &mut r.lower, counter);
            for (hi, ci) in h.iter_mut().zip(&c) {
                *hi += ci;
            }
            mm.spmv_into(exec, &r.lower, &mut ml, counter)?;
            nz2 = b_norm_sq(&r, &ml, counter);
            state.reorthogonalizations += 1;
        }
        let nz = nz2.sqrt();
        for (i, hi) in h.iter().enumerate() {
            state.h[(i, j)] = *hi;
        }
        state.k = j + 1;
        if nz <= 1e-14 * nr || nr == 0.0 {
            state.h[(j + 1, j)] = ZERO;
            state.invariant = true;
            break;
        }
        state.h[(j + 1, j)] = c64::new(nz, 0.0);
        let inv = c64::new(1.0 / nz, 0.0);
        scale_in_place(inv, &mut r.upper, counter);
        scale_in_place(inv, &mut r.lower, counter);
        state.basis.push(r);
    }
    Ok(())
}

/// Ritz pairs of the projected matrix, closest to the shift (largest `|θ|`) first.
pub fn ritz_extract(state: &KrylovState, op: &ShiftInvertOperator<'_>) -> Result<Vec<RitzPair>> {
    let k = state.k;
    if k == 0 {
        return Err(EigError::InvalidArgument("no completed Arnoldi steps".into()));
    }
    let (vals, vecs) = dense::eigen(&state.projected())?;
    let mut out: Vec<RitzPair> = vals
        .iter()
        .enumerate()
        .map(|(i, &theta)| {
            let y: Vec<c64> = vecs.column(i).iter().copied().collect();
            let estimate = if state.invariant {
                0.0
            } else {
                (0..k).map(|j| state.h[(k, j)] * y[j]).sum::<c64>().norm()
            };
            RitzPair {
                theta,
                lambda: op.lambda_of(theta),
                y,
                estimate,
            }
        })
        .collect();
    out.sort_by(|a, b| b.theta.norm().total_cmp(&a.theta.norm()));
    Ok(out)
}

/// Truncates to the `keep` Ritz values of largest `|θ|` via a reordered Schur form.
///
/// Returns `false` (state untouched) when the reordering is numerically unreliable.
pub fn krylov_schur_restart(state: &mut KrylovState, keep: usize, exec: Exec, counter: &FlopCounter) -> Result<bool> {
    let k = state.k;
    if keep == 0 || keep > k {
        return Err(EigError::InvalidArgument(format!("cannot keep {keep} of {k} Ritz values")));
    }
    if state.invariant {
        return Err(EigError::InvalidArgument("restart after an invariant subspace".into()));
    }
    let (mut q, mut t) = dense::schur(&state.projected())?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| t[(b, b)].norm().total_cmp(&t[(a, a)].norm()));
    order.truncate(keep);
    if !dense::reorder_schur(&mut q, &mut t, &order) {
        return Ok(false);
    }
    let n = state.basis[0].len();
    let (vu, vl) = (uppers(&state.basis[..k]), lowers(&state.basis[..k]));
    let mut nb = Vec::with_capacity(keep + 1);
    for i in 0..keep {
        let coef: Vec<c64> = (0..k).map(|j| q[(j, i)]).collect();
        let mut v = BlockVec::zeros(n);
        combine_into(exec, &vu, &coef, &mut v.upper, counter);
        combine_into(exec, &vl, &coef, &mut v.lower, counter);
        nb.push(v);
    }
    let residual_row: Vec<c64> = (0..keep)
        .map(|i| (0..k).map(|j| state.h[(k, j)] * q[(j, i)]).sum())
        .collect();
    nb.push(state.basis.swap_remove(k));
    let mut h = DMatrix::zeros(state.m + 1, state.m);
    for i in 0..keep {
        for j in i..keep {
            h[(i, j)] = t[(i, j)];
        }
        h[(keep, i)] = residual_row[i];
    }
    state.basis = nb;
    state.h = h;
    state.k = keep;
    Ok(true)
}

/// `x = V y` in the linearized space.
fn ritz_vector(state: &KrylovState, y: &[c64], exec: Exec, counter: &FlopCounter) -> BlockVec {
    let k = y.len();
    let n = state.basis[0].len();
    let mut x = BlockVec::zeros(n);
    combine_into(exec, &uppers(&state.basis[..k]), y, &mut x.upper, counter);
    combine_into(exec, &lowers(&state.basis[..k]), y, &mut x.lower, counter);
    x
}

/// Upper-block eigenvector: the block with the larger 2-norm, the lower one divided by `γ`.
fn extract_u(x: &BlockVec, gamma: c64) -> Vec<c64> {
    let (nu, nl) = (crate::sparse::norm2(&x.upper), crate::sparse::norm2(&x.lower));
    let (v, s) = if nu >= nl || gamma == ZERO {
        (&x.upper, c64::new(1.0, 0.0))
    } else {
        (&x.lower, c64::new(1.0, 0.0) / gamma)
    };
    let mut u: Vec<c64> = v.iter().map(|z| z * s).collect();
    let nrm = crate::sparse::norm2(&u);
    if nrm > 0.0 {
        u.iter_mut().for_each(|z| *z /= nrm);
    }
    u
}

fn make_pair(
    op: &ShiftInvertOperator<'_>,
    state: &KrylovState,
    rp: &RitzPair,
    counter: &FlopCounter,
) -> Result<EigenPair> {
    let x = ritz_vector(state, &rp.y, op.exec, counter);
    let gamma = rp.lambda / op.scaling();
    let u = extract_u(&x, gamma);
    let residual = pencil_residual(op.pencil(), gamma, &u, counter)?;
    Ok(EigenPair {
        lambda: rp.lambda,
        u,
        residual,
        estimate: rp.estimate / rp.theta.norm(),
    })
}

/// Measures the Krylov relation and B-orthonormality of `state` (one extra
/// operator application per basis vector).
pub(crate) fn verify(op: &ShiftInvertOperator<'_>, state: &KrylovState, counter: &FlopCounter) -> Result<Verification> {
    let exec = op.exec;
    let k = state.k;
    let n = op.n();
    let mm = &op.pencil().m;
    let nb = state.basis.len();
    let (vu, vl) = (uppers(&state.basis), lowers(&state.basis));
    let mut hnorm = 0.0f64;
    for j in 0..k {
        for i in 0..=k.min(nb - 1) {
            hnorm += state.h[(i, j)].norm_sqr();
        }
    }
    let hnorm = hnorm.sqrt().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for j in 0..k {
        let mut r = apply_operator(op, &state.basis[j], counter)?;
        let rows = nb.min(k + 1);
        let coef: Vec<c64> = (0..rows).map(|i| state.h[(i, j)]).collect();
        subtract_combination(exec, &vu[..rows], &coef, &mut r.upper, counter);
        subtract_combination(exec, &vl[..rows], &coef, &mut r.lower, counter);
        let mut ml = vec![ZERO; n];
        mm.spmv_into(exec, &r.lower, &mut ml, counter)?;
        worst = worst.max(b_norm_sq(&r, &ml, counter).sqrt());
    }
    let mut dev = 0.0f64;
    for (j, vj) in state.basis.iter().enumerate() {
        let mut ml = vec![ZERO; n];
        mm.spmv_into(exec, &vj.lower, &mut ml, counter)?;
        let gu = project(exec, &vu, &vj.upper, counter);
        let gl = project(exec, &vl, &ml, counter);
        for i in 0..nb {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gu[i] + gl[i] - target).norm());
        }
    }
    Ok(Verification {
        arnoldi_residual: worst / hnorm,
        b_orthogonality: dev,
    })
}

/// Shift-and-invert Krylov–Schur for `(K + λC + λ²M)u = 0`, returning the
/// `nev` eigenpairs nearest `shift`.
pub fn solve_quadratic(
    pencil: &QuadraticPencil,
    shift: c64,
    ordering: &Ordering,
    opts: &SolveOptions,
    counter: &FlopCounter,
) -> Result<SolveReport> {
    let n = pencil.n();
    let nev = opts.nev;
    let dim = 2 * n;
    if nev == 0 || nev > dim {
        return Err(EigError::InvalidArgument(format!("nev = {nev} must lie in 1..={dim}")));
    }
    if opts.tol <= 0.0 || !opts.tol.is_finite() {
        return Err(EigError::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    let m = opts.subspace().min(dim);
    let keep = super::retained_for(opts, m)?;
    let exec = opts.exec;
    let start = counter.snapshot();
    let extra = FlopCounter::new(counter.flops_per_madd());

    let (scaled, sigma) = if opts.scale {
        let (p, s) = scale_pencil(pencil)?;
        (Cow::Owned(p), s)
    } else {
        (Cow::Borrowed(pencil), 1.0)
    };
    let op = build_operator_scaled(scaled, shift / sigma, sigma, ordering, counter, exec)?;
    let v1 = BlockVec {
        upper: random_vector(n, opts.seed, true),
        lower: random_vector(n, opts.seed.wrapping_add(1), true),
    };
    let mut state = arnoldi_run(&op, m, v1, counter)?;
    let mut nit = 1usize;
    let pairs = loop {
        let ritz = ritz_extract(&state, &op)?;
        let wanted = &ritz[..nev.min(ritz.len())];
        let mut converged = Vec::new();
        for rp in wanted {
            if state.invariant || rp.estimate <= opts.tol * rp.theta.norm() {
                let pair = make_pair(&op, &state, rp, &extra)?;
                if pair.residual <= opts.tol {
                    converged.push(pair);
                }
            }
        }
        if converged.len() == nev {
            break converged;
        }
        if state.invariant || nit > opts.max_restarts {
            converged.sort_by(|a, b| (a.lambda - shift).norm().total_cmp(&(b.lambda - shift).norm()));
            return Err(EigError::NoConvergence {
                converged,
                requested: nev,
                restarts: nit - 1,
            });
        }
        if !krylov_schur_restart(&mut state, keep, exec, counter)? {
            // explicit restart from the sum of the wanted Ritz vectors
            log::warn!("Schur reordering unreliable; explicit restart");
            let mut v = BlockVec::zeros(n);
            let mut y = vec![ZERO; state.k];
            for rp in wanted {
                for (a, b) in y.iter_mut().zip(&rp.y) {
                    *a += b;
                }
            }
            let x = ritz_vector(&state, &y, exec, counter);
            v.upper = x.upper;
            v.lower = x.lower;
            state = arnoldi_run(&op, m, v, counter)?;
        } else {
            extend(&op, &mut state, counter)?;
        }
        nit += 1;
        state.nit = nit;
    };
    let mut pairs = pairs;
    pairs.sort_by(|a, b| (a.lambda - shift).norm().total_cmp(&(b.lambda - shift).norm()));
    let counters = counter.snapshot().since(&start);
    let verification = if opts.verify {
        Some(verify(&op, &state, &extra)?)
    } else {
        None
    };
    Ok(SolveReport {
        pairs,
        shift,
        scaling: sigma,
        m,
        keep,
        nit,
        invariant_subspace: state.invariant,
        counters,
        extra_counters: extra.snapshot(),
        verification,
    })
}
