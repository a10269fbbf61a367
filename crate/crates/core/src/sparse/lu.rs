use std::sync::Arc;

use crate::c64;
use crate::par::{self, Exec};

use super::ordering::Symbolic;
use super::{Category, FlopCounter, Result, SparseError, SparseMatrix};

const NONE: usize = usize::MAX;
const ZERO: c64 = c64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy)]
pub struct LuOptions {
    /// A candidate on the diagonal is kept if `|a_tt| >= threshold * max|a_it|`.
    pub pivot_threshold: f64,
    /// Columns per blocked panel.
    pub panel: usize,
    pub exec: Exec,
}

impl Default for LuOptions {
    fn default() -> Self {
        Self {
            pivot_threshold: 0.1,
            panel: 48,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Front {
    k: usize,
    r: usize,
    /// `nf × k` row-major: unit-lower `L` below the diagonal, `U11` on and above.
    panel: Vec<c64>,
    /// `k × r` row-major.
    u12: Vec<c64>,
    /// Row `t` of the front was swapped with row `piv[t]` at step `t`.
    piv: Vec<u32>,
}

/// Supernodal LU of `P A Pᵀ` with row interchanges confined to each front's
/// fully summed rows.
#[derive(Debug, Clone)]
pub struct Factorization {
    symbolic: Arc<Symbolic>,
    fronts: Vec<Front>,
    /// Pivots that failed the threshold test but had no better candidate.
    pub weak_pivots: usize,
    /// Lower factor nnz (unit diagonal counted).
    pub nnz_l: usize,
    /// Upper factor nnz (diagonal counted).
    pub nnz_u: usize,
    /// Multiply-adds charged to `fa`.
    pub madds: u64,
}

pub fn lu_factorize(a: &SparseMatrix, symbolic: Arc<Symbolic>, counter: &FlopCounter) -> Result<Factorization> {
    lu_factorize_with(a, symbolic, counter, LuOptions::default())
}

pub fn lu_factorize_with(
    a: &SparseMatrix,
    symbolic: Arc<Symbolic>,
    counter: &FlopCounter,
    opts: LuOptions,
) -> Result<Factorization> {
    let sym = &*symbolic;
    let n = a.n();
    if sym.n != n {
        return Err(SparseError::DimensionMismatch {
            expected: sym.n,
            got: n,
        });
    }
    let pat = a.pattern();
    let vals = a.values();
    let perm = &sym.ordering.perm;
    let inv = &sym.ordering.inverse;
    let nsn = sym.supernodes();

    let mut pending: Vec<Option<Vec<c64>>> = vec![None; nsn];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nsn];
    for s in 0..nsn {
        if sym.sn_parent[s] != NONE {
            children[sym.sn_parent[s]].push(s);
        }
    }
    let mut pos = vec![NONE; n];
    let mut fronts = Vec::with_capacity(nsn);
    let mut weak = 0usize;
    for s in 0..nsn {
        let f0 = sym.sn_start[s];
        let (k, r) = sym.front_size(s);
        let nf = k + r;
        let rows = &sym.sn_rows[s];
        for t in 0..k {
            pos[f0 + t] = t;
        }
        for (ii, &g) in rows.iter().enumerate() {
            pos[g as usize] = k + ii;
        }
        let mut f = vec![ZERO; nf * nf];
        for t in 0..k {
            let old = perm[f0 + t];
            for kk in pat.row_ptr()[old]..pat.row_ptr()[old + 1] {
                let c_old = pat.col_idx()[kk] as usize;
                let c = inv[c_old];
                if c < f0 {
                    continue;
                }
                let pc = pos[c];
                debug_assert!(pc != NONE);
                // row part: A'(j, c)
                f[t * nf + pc] = vals.get(kk);
                // column part: A'(c, j) for rows below the block
                if pc >= k {
                    let kt = pat.find(c_old, old).ok_or_else(|| {
                        SparseError::InvalidPattern("factorization needs a structurally symmetric pattern".into())
                    })?;
                    f[pc * nf + t] = vals.get(kt);
                }
            }
        }
        for &ch in &children[s] {
            let cb = pending[ch].take().expect("child contribution pending");
            let crow = &sym.sn_rows[ch];
            let rc = crow.len();
            let map: Vec<usize> = crow.iter().map(|&g| pos[g as usize]).collect();
            for (i, &pi) in map.iter().enumerate() {
                let src = &cb[i * rc..(i + 1) * rc];
                let dst = &mut f[pi * nf..(pi + 1) * nf];
                for (j, &pj) in map.iter().enumerate() {
                    dst[pj] += src[j];
                }
            }
        }
        let piv = factor_front(&mut f, nf, k, &opts, &mut weak, perm, f0)?;
        let mut panel = vec![ZERO; nf * k];
        let mut u12 = vec![ZERO; k * r];
        for i in 0..nf {
            panel[i * k..(i + 1) * k].copy_from_slice(&f[i * nf..i * nf + k]);
        }
        for t in 0..k {
            u12[t * r..(t + 1) * r].copy_from_slice(&f[t * nf + k..(t + 1) * nf]);
        }
        if sym.sn_parent[s] != NONE && r > 0 {
            let mut cb = vec![ZERO; r * r];
            for i in 0..r {
                cb[i * r..(i + 1) * r].copy_from_slice(&f[(k + i) * nf + k..(k + i + 1) * nf]);
            }
            pending[s] = Some(cb);
        }
        for t in 0..k {
            pos[f0 + t] = NONE;
        }
        for &g in rows.iter() {
            pos[g as usize] = NONE;
        }
        fronts.push(Front { k, r, panel, u12, piv });
    }
    let madds = sym.factor_madds();
    counter.charge(Category::Fa, madds);
    if weak > 0 {
        log::debug!("{weak} pivots below threshold {}", opts.pivot_threshold);
    }
    Ok(Factorization {
        nnz_l: sym.nnz_l,
        nnz_u: sym.nnz_l,
        symbolic,
        fronts,
        weak_pivots: weak,
        madds,
    })
}

/// Partial LU of the first `k` columns of a row-major `nf × nf` front.
fn factor_front(
    f: &mut [c64],
    nf: usize,
    k: usize,
    opts: &LuOptions,
    weak: &mut usize,
    perm: &[usize],
    f0: usize,
) -> Result<Vec<u32>> {
    let mut piv = vec![0u32; k];
    let nb = opts.panel.max(1);
    let mut t0 = 0;
    while t0 < k {
        let t1 = (t0 + nb).min(k);
        for t in t0..t1 {
            let mut amax = 0.0f64;
            for i in t..nf {
                amax = amax.max(f[i * nf + t].norm());
            }
            let mut best = t;
            let mut bmax = f[t * nf + t].norm();
            for i in t + 1..k {
                let v = f[i * nf + t].norm();
                if v > bmax {
                    best = i;
                    bmax = v;
                }
            }
            if bmax < 1e-300 {
                return Err(SparseError::Singular {
                    column: perm[f0 + t],
                    magnitude: bmax,
                });
            }
            let p = if f[t * nf + t].norm() >= opts.pivot_threshold * amax { t } else { best };
            if f[p * nf + t].norm() < opts.pivot_threshold * amax {
                *weak += 1;
            }
            piv[t] = p as u32;
            if p != t {
                let (a, b) = f.split_at_mut(p * nf);
                a[t * nf..(t + 1) * nf].swap_with_slice(&mut b[..nf]);
            }
            let inv = 1.0 / f[t * nf + t];
            for i in t + 1..nf {
                let l = f[i * nf + t] * inv;
                f[i * nf + t] = l;
                if l != ZERO {
                    for j in t + 1..t1 {
                        let u = f[t * nf + j];
                        f[i * nf + j] -= l * u;
                    }
                }
            }
        }
        if t1 < nf {
            // U rows of the panel: forward substitution with the unit-lower panel block
            for t in t0..t1 {
                for i in t + 1..t1 {
                    let l = f[i * nf + t];
                    if l != ZERO {
                        let (a, b) = f.split_at_mut(i * nf);
                        let src = &a[t * nf + t1..(t + 1) * nf];
                        let dst = &mut b[t1..nf];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d -= l * s;
                        }
                    }
                }
            }
            trailing_update(f, nf, t0, t1, opts.exec);
        }
        t0 = t1;
    }
    Ok(piv)
}

/// `F[t1.., t1..] -= F[t1.., t0..t1] · F[t0..t1, t1..]`.
fn trailing_update(f: &mut [c64], nf: usize, t0: usize, t1: usize, exec: Exec) {
    let m = nf - t1;
    let kk = t1 - t0;
    if m == 0 || kk == 0 {
        return;
    }
    let (top, bottom) = f.split_at_mut(t1 * nf);
    let b_ptr = top[t0 * nf + t1..].as_ptr() as usize;
    // roughly 2^18 multiply-adds per task
    let rows_per_task = ((1usize << 18) / (kk * m).max(1)).max(16);
    par::for_each_chunk_mut(exec, bottom, rows_per_task * nf, |_, chunk| {
        let rows = chunk.len() / nf;
        let base = chunk.as_mut_ptr();
        // SAFETY: A (columns t0..t1) and C (columns t1..nf) are disjoint
        // regions of this chunk; B lies in `top`, which is not mutated.
        unsafe {
            matrixmultiply::zgemm(
                matrixmultiply::CGemmOption::Standard,
                matrixmultiply::CGemmOption::Standard,
                rows,
                kk,
                m,
                [-1.0, 0.0],
                base.add(t0) as *const [f64; 2],
                nf as isize,
                1,
                b_ptr as *const [f64; 2],
                nf as isize,
                1,
                [1.0, 0.0],
                base.add(t1) as *mut [f64; 2],
                nf as isize,
                1,
            );
        }
    });
}

impl Factorization {
    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    pub fn symbolic(&self) -> &Arc<Symbolic> {
        &self.symbolic
    }

    /// Multiply-adds of one forward plus backward substitution.
    pub fn solve_madds(&self) -> u64 {
        (self.nnz_l + self.nnz_u) as u64
    }

    /// Solves `A x = b` in place (`b` in original numbering).
    pub fn solve_in_place(&self, b: &mut [c64], counter: &FlopCounter) -> Result<()> {
        let n = self.n();
        if b.len() != n {
            return Err(SparseError::DimensionMismatch {
                expected: n,
                got: b.len(),
            });
        }
        let sym = &*self.symbolic;
        let perm = &sym.ordering.perm;
        let mut y: Vec<c64> = perm.iter().map(|&p| b[p]).collect();
        for (s, fr) in self.fronts.iter().enumerate() {
            let f0 = sym.sn_start[s];
            let k = fr.k;
            for t in 0..k {
                let p = fr.piv[t] as usize;
                if p != t {
                    y.swap(f0 + t, f0 + p);
                }
            }
            for t in 0..k {
                let yt = y[f0 + t];
                if yt != ZERO {
                    for i in t + 1..k {
                        y[f0 + i] -= fr.panel[i * k + t] * yt;
                    }
                }
            }
            let yb = &y[f0..f0 + k];
            let mut upd = vec![ZERO; fr.r];
            for (ii, u) in upd.iter_mut().enumerate() {
                let row = &fr.panel[(k + ii) * k..(k + ii + 1) * k];
                let mut acc = ZERO;
                for (l, v) in row.iter().zip(yb) {
                    acc += l * v;
                }
                *u = acc;
            }
            for (ii, &g) in sym.sn_rows[s].iter().enumerate() {
                y[g as usize] -= upd[ii];
            }
        }
        for (s, fr) in self.fronts.iter().enumerate().rev() {
            let f0 = sym.sn_start[s];
            let (k, r) = (fr.k, fr.r);
            let rows = &sym.sn_rows[s];
            for t in 0..k {
                let urow = &fr.u12[t * r..(t + 1) * r];
                let mut acc = ZERO;
                for (u, &g) in urow.iter().zip(rows.iter()) {
                    acc += u * y[g as usize];
                }
                y[f0 + t] -= acc;
            }
            for t in (0..k).rev() {
                let mut acc = y[f0 + t];
                for j in t + 1..k {
                    acc -= fr.panel[t * k + j] * y[f0 + j];
                }
                y[f0 + t] = acc / fr.panel[t * k + t];
            }
        }
        for (i, &p) in perm.iter().enumerate() {
            b[p] = y[i];
        }
        counter.charge(Category::Fb, self.solve_madds());
        Ok(())
    }

    /// Dense `(P_r, L, U)` with `P_r (P A Pᵀ) = L U`; `rows[q]` is the permuted-row
    /// label placed at position `q`. For small test matrices only.
    pub fn dense_factors(&self) -> (Vec<usize>, Vec<c64>, Vec<c64>) {
        let n = self.n();
        let sym = &*self.symbolic;
        let mut rows: Vec<usize> = (0..n).collect();
        for (s, fr) in self.fronts.iter().enumerate() {
            let f0 = sym.sn_start[s];
            for t in 0..fr.k {
                rows.swap(f0 + t, f0 + fr.piv[t] as usize);
            }
        }
        let mut pos_of = vec![0; n];
        for (q, &lab) in rows.iter().enumerate() {
            pos_of[lab] = q;
        }
        let mut l = vec![ZERO; n * n];
        let mut u = vec![ZERO; n * n];
        for (s, fr) in self.fronts.iter().enumerate() {
            let f0 = sym.sn_start[s];
            let k = fr.k;
            for t in 0..k {
                for j in 0..k {
                    let v = fr.panel[t * k + j];
                    if j < t {
                        l[(f0 + t) * n + f0 + j] = v;
                    } else {
                        u[(f0 + t) * n + f0 + j] = v;
                    }
                }
                l[(f0 + t) * n + f0 + t] = c64::new(1.0, 0.0);
                for (jj, &g) in sym.sn_rows[s].iter().enumerate() {
                    u[(f0 + t) * n + g as usize] = fr.u12[t * fr.r + jj];
                }
            }
            for (ii, &g) in sym.sn_rows[s].iter().enumerate() {
                for t in 0..k {
                    l[pos_of[g as usize] * n + f0 + t] = fr.panel[(k + ii) * k + t];
                }
            }
        }
        (rows, l, u)
    }
}

/// `x = A⁻¹ b` through an existing factorization.
pub fn solve_factored(f: &Factorization, rhs: &[c64], counter: &FlopCounter) -> Result<Vec<c64>> {
    let mut x = rhs.to_vec();
    f.solve_in_place(&mut x, counter)?;
    Ok(x)
}
