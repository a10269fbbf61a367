//! Small dense kernels on the projected matrix.

use nalgebra::DMatrix;

use crate::c64;

use super::{EigError, Result};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Complex Schur form `A = Q T Qᴴ` (Francis QR); `T` is returned exactly upper triangular.
pub fn schur(a: &DMatrix<c64>) -> Result<(DMatrix<c64>, DMatrix<c64>)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)));
    }
    let max_iter = 30 * n.max(1);
    let s = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, max_iter).ok_or(EigError::QrNoConvergence {
        size: n,
        iterations: max_iter,
    })?;
    let (q, mut t) = s.unpack();
    for j in 0..n {
        for i in j + 1..n {
            t[(i, j)] = ZERO;
        }
    }
    Ok((q, t))
}

/// Givens pair with real `c`: `[c s; -s̄ c] [f; g] = [r; 0]`.
fn lartg(f: c64, g: c64) -> (f64, c64) {
    if g == ZERO {
        return (1.0, ZERO);
    }
    if f == ZERO {
        return (0.0, g.conj() / g.norm());
    }
    let (fa, ga) = (f.norm(), g.norm());
    let d = fa.hypot(ga);
    (fa / d, (f / fa) * g.conj() / d)
}

/// `x ← c x + s y`, `y ← c y − s̄ x` over paired entries.
fn rot(x: &mut [c64], y: &mut [c64], c: f64, s: c64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = xa * c + s * yb;
        *b = yb * c - s.conj() * xa;
    }
}

/// Swaps the adjacent diagonal entries `k`, `k+1` of the triangular `t`, updating `q`.
fn swap_adjacent(q: &mut DMatrix<c64>, t: &mut DMatrix<c64>, k: usize) {
    let n = t.nrows();
    let (t11, t22) = (t[(k, k)], t[(k + 1, k + 1)]);
    let (c, s) = lartg(t[(k, k + 1)], t22 - t11);
    if k + 2 < n {
        let mut x: Vec<c64> = (k + 2..n).map(|j| t[(k, j)]).collect();
        let mut y: Vec<c64> = (k + 2..n).map(|j| t[(k + 1, j)]).collect();
        rot(&mut x, &mut y, c, s);
        for (o, j) in (k + 2..n).enumerate() {
            t[(k, j)] = x[o];
            t[(k + 1, j)] = y[o];
        }
    }
    if k > 0 {
        let mut x: Vec<c64> = (0..k).map(|i| t[(i, k)]).collect();
        let mut y: Vec<c64> = (0..k).map(|i| t[(i, k + 1)]).collect();
        rot(&mut x, &mut y, c, s.conj());
        for i in 0..k {
            t[(i, k)] = x[i];
            t[(i, k + 1)] = y[i];
        }
    }
    t[(k, k)] = t22;
    t[(k + 1, k + 1)] = t11;
    let m = q.nrows();
    let mut x: Vec<c64> = (0..m).map(|i| q[(i, k)]).collect();
    let mut y: Vec<c64> = (0..m).map(|i| q[(i, k + 1)]).collect();
    rot(&mut x, &mut y, c, s.conj());
    for i in 0..m {
        q[(i, k)] = x[i];
        q[(i, k + 1)] = y[i];
    }
}

/// Moves the diagonal entries listed in `order` to the leading positions, in that order.
///
/// Returns `false` when the reordered diagonal drifts from the requested values
/// by more than `1e-8` relative to `‖T‖`.
pub fn reorder_schur(q: &mut DMatrix<c64>, t: &mut DMatrix<c64>, order: &[usize]) -> bool {
    let n = t.nrows();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let target: Vec<c64> = order.iter().map(|&i| t[(i, i)]).collect();
    // where each original index currently sits
    let mut at: Vec<usize> = (0..n).collect();
    for (dest, &orig) in order.iter().enumerate() {
        let mut pos = at[orig];
        while pos > dest {
            swap_adjacent(q, t, pos - 1);
            let moved = at.iter().position(|&p| p == pos - 1).unwrap();
            at[moved] = pos;
            at[orig] = pos - 1;
            pos -= 1;
        }
    }
    target
        .iter()
        .enumerate()
        .all(|(i, &z)| (t[(i, i)] - z).norm() <= 1e-8 * scale && t[(i, i)].is_finite())
}

/// Eigenvectors of an upper-triangular matrix, one per column (unit 2-norm).
pub fn triangular_eigenvectors(t: &DMatrix<c64>) -> DMatrix<c64> {
    let n = t.nrows();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let small = (f64::EPSILON * scale).max(f64::MIN_POSITIVE);
    let mut x = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        x[(k, k)] = c64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in i + 1..=k {
                s += t[(i, j)] * x[(j, k)];
            }
            let mut d = t[(i, i)] - lam;
            if d.norm() < small {
                d = c64::new(small, 0.0);
            }
            x[(i, k)] = -s / d;
        }
        let nrm = x.column(k).norm();
        x.column_mut(k).unscale_mut(nrm);
    }
    x
}

/// Eigenvalues and unit eigenvectors of a general square matrix.
pub fn eigen(a: &DMatrix<c64>) -> Result<(Vec<c64>, DMatrix<c64>)> {
    let (q, t) = schur(a)?;
    let vals = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    let v = &q * triangular_eigenvectors(&t);
    Ok((vals, v))
}
