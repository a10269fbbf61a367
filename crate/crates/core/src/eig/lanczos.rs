use nalgebra::{DMatrix, SymmetricEigen};

use crate::c64;
use crate::par::Exec;
use crate::sparse::{Category, Factorization, FlopCounter, Ordering, SparseMatrix};

use super::{
    combine_into, factorize, project, random_vector, scale_in_place, subtract_combination, EigError, EigenPair, Result,
    SolveOptions, SolveReport, Verification,
};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };

/// Measured overlap with earlier basis vectors above which a vector is
/// reorthogonalized against exactly those vectors.
const OVERLAP_TOL: f64 = 1e-10;

struct Op<'a> {
    a: &'a SparseMatrix,
    b: &'a SparseMatrix,
    factor: Factorization,
    exec: Exec,
}

impl Op<'_> {
    /// `(A − sB)⁻¹ w` where `w = B v` is already available.
    fn solve(&self, w: &[c64], counter: &FlopCounter) -> Result<Vec<c64>> {
        let mut r = w.to_vec();
        self.factor.solve_in_place(&mut r, counter)?;
        Ok(r)
    }

    fn b_apply(&self, v: &[c64], counter: &FlopCounter) -> Result<Vec<c64>> {
        let mut w = vec![ZERO; v.len()];
        self.b.spmv_into(self.exec, v, &mut w, counter)?;
        Ok(w)
    }
}

/// Thick-restart Lanczos state: `T` is tridiagonal except for the arrow row
/// coupling the retained Ritz vectors to the first new vector.
struct Lanczos {
    v: Vec<Vec<c64>>,
    /// `B v_j`, kept so B-inner products need no extra mat-vec.
    w: Vec<Vec<c64>>,
    t: DMatrix<f64>,
    k: usize,
    m: usize,
    invariant: bool,
    reorthogonalizations: usize,
}

impl Lanczos {
    fn projected(&self) -> DMatrix<f64> {
        self.t.view((0, 0), (self.k, self.k)).into_owned()
    }

    fn extend(&mut self, op: &Op<'_>, counter: &FlopCounter) -> Result<()> {
        let exec = op.exec;
        while self.k < self.m && !self.invariant {
            let j = self.k;
            let mut r = op.solve(&self.w[j], counter)?;
            counter.charge(Category::Vv, r.len() as u64);
            let alpha = crate::sparse::dot_raw(&self.w[j], &r).re;
            // T is symmetric: the row of j below the diagonal gives the couplings
            let mut idx: Vec<usize> = (0..j).filter(|&i| self.t[(j, i)] != 0.0).collect();
            idx.push(j);
            let coef: Vec<c64> = idx
                .iter()
                .map(|&i| c64::new(if i == j { alpha } else { self.t[(j, i)] }, 0.0))
                .collect();
            let vs: Vec<&[c64]> = idx.iter().map(|&i| self.v[i].as_slice()).collect();
            subtract_combination(exec, &vs, &coef, &mut r, counter);
            let mut br = op.b_apply(&r, counter)?;
            counter.charge(Category::Vv, r.len() as u64);
            let mut beta = crate::sparse::dot_raw(&r, &br).re.max(0.0).sqrt();
            let scale = (alpha * alpha + coef.iter().map(|c| c.norm_sqr()).sum::<f64>() + beta * beta).sqrt();
            if beta > 1e-14 * scale {
                // measured overlaps of the normalized candidate with every basis vector
                let ws: Vec<&[c64]> = self.w.iter().map(|w| w.as_slice()).collect();
                let omega = project(exec, &ws, &r, counter);
                let sel: Vec<usize> = (0..omega.len()).filter(|&i| omega[i].norm() > OVERLAP_TOL * beta).collect();
                if !sel.is_empty() {
                    let vs: Vec<&[c64]> = sel.iter().map(|&i| self.v[i].as_slice()).collect();
                    let c: Vec<c64> = sel.iter().map(|&i| omega[i]).collect();
                    subtract_combination(exec, &vs, &c, &mut r, counter);
                    br = op.b_apply(&r, counter)?;
                    counter.charge(Category::Vv, r.len() as u64);
                    beta = crate::sparse::dot_raw(&r, &br).re.max(0.0).sqrt();
                    self.reorthogonalizations += 1;
                }
            }
            self.t[(j, j)] = alpha;
            self.k = j + 1;
            if beta <= 1e-14 * scale || scale == 0.0 {
                self.invariant = true;
                break;
            }
            self.t[(j + 1, j)] = beta;
            if j + 1 < self.m {
                self.t[(j, j + 1)] = beta;
            }
            let inv = c64::new(1.0 / beta, 0.0);
            scale_in_place(inv, &mut r, counter);
            scale_in_place(inv, &mut br, counter);
            self.v.push(r);
            self.w.push(br);
        }
        Ok(())
    }

    fn residual_row(&self) -> Vec<f64> {
        if self.invariant {
            return vec![0.0; self.k];
        }
        (0..self.k).map(|j| self.t[(self.k, j)]).collect()
    }

    fn restart(&mut self, vecs: &DMatrix<f64>, vals: &[f64], order: &[usize], exec: Exec, counter: &FlopCounter) {
        let k = self.k;
        let keep = order.len();
        let n = self.v[0].len();
        let row = self.residual_row();
        let vs: Vec<&[c64]> = self.v[..k].iter().map(|v| v.as_slice()).collect();
        let ws: Vec<&[c64]> = self.w[..k].iter().map(|v| v.as_slice()).collect();
        let mut nv = Vec::with_capacity(keep + 1);
        let mut nw = Vec::with_capacity(keep + 1);
        for &i in order {
            let coef: Vec<c64> = (0..k).map(|j| c64::new(vecs[(j, i)], 0.0)).collect();
            let mut a = vec![ZERO; n];
            let mut b = vec![ZERO; n];
            combine_into(exec, &vs, &coef, &mut a, counter);
            combine_into(exec, &ws, &coef, &mut b, counter);
            nv.push(a);
            nw.push(b);
        }
        nv.push(self.v.swap_remove(k));
        nw.push(self.w.swap_remove(k));
        let mut t = DMatrix::zeros(self.m + 1, self.m);
        for (d, &i) in order.iter().enumerate() {
            t[(d, d)] = vals[i];
            let b: f64 = (0..k).map(|j| row[j] * vecs[(j, i)]).sum();
            t[(keep, d)] = b;
            t[(d, keep)] = b;
        }
        self.v = nv;
        self.w = nw;
        self.t = t;
        self.k = keep;
    }
}

/// Shift-and-invert thick-restart Lanczos for `A u = λ B u` with `A`
/// Hermitian, `B` Hermitian positive definite and a real shift.
pub fn solve_generalized_hermitian(
    a: &SparseMatrix,
    b: &SparseMatrix,
    shift: f64,
    ordering: &Ordering,
    opts: &SolveOptions,
    counter: &FlopCounter,
) -> Result<SolveReport> {
    let n = a.n();
    let nev = opts.nev;
    if b.n() != n {
        return Err(EigError::InvalidArgument(format!("A is {n}x{n} but B is {0}x{0}", b.n())));
    }
    if nev == 0 || nev > n {
        return Err(EigError::InvalidArgument(format!("nev = {nev} must lie in 1..={n}")));
    }
    if opts.tol <= 0.0 || !opts.tol.is_finite() {
        return Err(EigError::InvalidArgument(format!("tolerance {} must be positive", opts.tol)));
    }
    for (name, mat) in [("A", a), ("B", b)] {
        if !is_hermitian(mat) {
            return Err(EigError::InvalidArgument(format!("{name} is not Hermitian")));
        }
    }
    let m = opts.subspace().min(n);
    let keep = super::retained_for(opts, m)?;
    let exec = opts.exec;
    let start = counter.snapshot();
    let extra = FlopCounter::new(counter.flops_per_madd());

    let shifted = if a.pattern() == b.pattern() {
        SparseMatrix::combine(&[(c64::new(1.0, 0.0), a), (c64::new(-shift, 0.0), b)])?
    } else {
        return Err(EigError::InvalidArgument("A and B must share a sparsity pattern".into()));
    };
    let factor = factorize(&shifted, ordering, counter, exec).map_err(|e| match e {
        EigError::Sparse(crate::sparse::SparseError::Singular { column, magnitude }) => EigError::ShiftCollision {
            shift: c64::new(shift, 0.0),
            column,
            magnitude,
        },
        e => e,
    })?;
    drop(shifted);
    let op = Op {
        a,
        b,
        factor,
        exec,
    };
    let complex = !(a.is_real() && b.is_real());
    let mut v0 = random_vector(n, opts.seed, complex);
    let mut w0 = op.b_apply(&v0, counter)?;
    counter.charge(Category::Vv, n as u64);
    let nrm = crate::sparse::dot_raw(&v0, &w0).re.sqrt();
    if !(nrm > 0.0) {
        return Err(EigError::InvalidArgument("B is not positive definite".into()));
    }
    scale_in_place(c64::new(1.0 / nrm, 0.0), &mut v0, counter);
    scale_in_place(c64::new(1.0 / nrm, 0.0), &mut w0, counter);
    let mut lz = Lanczos {
        v: vec![v0],
        w: vec![w0],
        t: DMatrix::zeros(m + 1, m),
        k: 0,
        m,
        invariant: false,
        reorthogonalizations: 0,
    };
    lz.extend(&op, counter)?;
    let mut nit = 1usize;
    let pairs = loop {
        let eig = SymmetricEigen::new(lz.projected());
        let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let vecs = eig.eigenvectors;
        let row = lz.residual_row();
        let mut order: Vec<usize> = (0..lz.k).collect();
        order.sort_by(|&i, &j| vals[j].abs().total_cmp(&vals[i].abs()));
        let mut converged = Vec::new();
        for &i in order.iter().take(nev) {
            let theta = vals[i];
            let est = (0..lz.k).map(|j| row[j] * vecs[(j, i)]).sum::<f64>().abs();
            if lz.invariant || est <= opts.tol * theta.abs() {
                let coef: Vec<c64> = (0..lz.k).map(|j| c64::new(vecs[(j, i)], 0.0)).collect();
                let vs: Vec<&[c64]> = lz.v[..lz.k].iter().map(|v| v.as_slice()).collect();
                let mut u = vec![ZERO; n];
                combine_into(exec, &vs, &coef, &mut u, &extra);
                let nu = crate::sparse::norm2(&u);
                u.iter_mut().for_each(|z| *z /= nu);
                let lambda = shift + 1.0 / theta;
                let residual = hermitian_residual(&op, lambda, &u, &extra)?;
                if residual <= opts.tol {
                    converged.push(EigenPair {
                        lambda: c64::new(lambda, 0.0),
                        u,
                        residual,
                        estimate: est / theta.abs(),
                    });
                }
            }
        }
        if converged.len() == nev {
            break converged;
        }
        if lz.invariant || nit > opts.max_restarts {
            converged.sort_by(|x, y| (x.lambda.re - shift).abs().total_cmp(&(y.lambda.re - shift).abs()));
            return Err(EigError::NoConvergence {
                converged,
                requested: nev,
                restarts: nit - 1,
            });
        }
        order.truncate(keep);
        lz.restart(&vecs, &vals, &order, exec, counter);
        lz.extend(&op, counter)?;
        nit += 1;
    };
    let mut pairs = pairs;
    pairs.sort_by(|x, y| (x.lambda.re - shift).abs().total_cmp(&(y.lambda.re - shift).abs()));
    let counters = counter.snapshot().since(&start);
    let verification = if opts.verify {
        Some(verify(&op, &lz, &extra)?)
    } else {
        None
    };
    Ok(SolveReport {
        pairs,
        shift: c64::new(shift, 0.0),
        scaling: 1.0,
        m,
        keep,
        nit,
        invariant_subspace: lz.invariant,
        counters,
        extra_counters: extra.snapshot(),
        verification,
    })
}

fn is_hermitian(a: &SparseMatrix) -> bool {
    let p = a.pattern();
    let scale = a.norm_max().max(f64::MIN_POSITIVE);
    (0..a.n()).all(|i| {
        (p.row_ptr()[i]..p.row_ptr()[i + 1]).all(|k| {
            let j = p.col_idx()[k] as usize;
            (a.values().get(k) - a.get(j, i).conj()).norm() <= 1e-12 * scale
        })
    })
}

/// `‖A u − λ B u‖ / ((‖A‖₁ + |λ|‖B‖₁)‖u‖)`.
fn hermitian_residual(op: &Op<'_>, lambda: f64, u: &[c64], counter: &FlopCounter) -> Result<f64> {
    let au = op.a.spmv(u, counter)?;
    let bu = op.b.spmv(u, counter)?;
    let r: Vec<c64> = au.iter().zip(&bu).map(|(x, y)| x - y * lambda).collect();
    let denom = (op.a.norm1() + lambda.abs() * op.b.norm1()) * crate::sparse::norm2(u);
    Ok(if denom == 0.0 { 0.0 } else { crate::sparse::norm2(&r) / denom })
}

fn verify(op: &Op<'_>, lz: &Lanczos, counter: &FlopCounter) -> Result<Verification> {
    let exec = op.exec;
    let k = lz.k;
    let nb = lz.v.len();
    let rows = nb.min(k + 1);
    let vs: Vec<&[c64]> = lz.v.iter().map(|v| v.as_slice()).collect();
    let mut hnorm = 0.0f64;
    for j in 0..k {
        for i in 0..rows {
            hnorm += lz.t[(i, j)].powi(2);
        }
    }
    let hnorm = hnorm.sqrt().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for j in 0..k {
        let bv = op.b_apply(&lz.v[j], counter)?;
        let mut r = op.solve(&bv, counter)?;
        let coef: Vec<c64> = (0..rows).map(|i| c64::new(lz.t[(i, j)], 0.0)).collect();
        subtract_combination(exec, &vs[..rows], &coef, &mut r, counter);
        let br = op.b_apply(&r, counter)?;
        counter.charge(Category::Vv, r.len() as u64);
        worst = worst.max(crate::sparse::dot_raw(&r, &br).re.max(0.0).sqrt());
    }
    let mut dev = 0.0f64;
    for j in 0..nb {
        // recompute B v_j rather than trusting the stored copy
        let bv = op.b_apply(&lz.v[j], counter)?;
        let g = project(exec, &vs, &bv, counter);
        for (i, gi) in g.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gi - target).norm());
        }
    }
    Ok(Verification {
        arnoldi_residual: worst / hnorm,
        b_orthogonality: dev,
    })
}
