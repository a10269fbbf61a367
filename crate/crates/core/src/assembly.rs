//! Galerkin assembly of the quadratic pencils `(K, C, M)`.
//!
//! On a box with y-layered constant coefficients every entry factors into
//! products of 1D integrals, so assembly builds small dense 1D matrices by
//! Gauss quadrature and writes the 2D entries straight into the
//! support-overlap pattern.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::c64;
use crate::par::{self, Exec};
use crate::quadrature;
use crate::spaces::{self, BoundaryProblem, Edge, SpaceError, SpaceKind, VectorSpace};
use crate::sparse::{Pattern, SparseError, SparseMatrix, Values};
use crate::splines::UnivariateSpace;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("space kind mismatch: {problem} needs a {expected:?}-conforming space, got {got:?}")]
    KindMismatch {
        problem: &'static str,
        expected: SpaceKind,
        got: SpaceKind,
    },
    #[error("invalid material: {0}")]
    Material(String),
    #[error("layer interface y={0} does not fall on an element boundary")]
    MisalignedLayer(f64),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

pub type Result<T> = std::result::Result<T, AssemblyError>;

/// Horizontal slab `y ∈ [y0, y1]` with diagonal conductivity `(σx, σy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub y: [f64; 2],
    pub sigma: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmMaterial {
    /// Empty means non-conductive everywhere.
    pub layers: Vec<Layer>,
    pub mu: f64,
    pub eps: f64,
}

impl EmMaterial {
    pub fn nonconductive() -> Self {
        Self {
            layers: Vec::new(),
            mu: 1.0,
            eps: 1.0,
        }
    }

    /// Three horizontal layers with anisotropic conductivity, interfaces at a
    /// quarter and three quarters of the height.
    pub fn three_layer(y: [f64; 2]) -> Self {
        let h = y[1] - y[0];
        let cut = [y[0], y[0] + 0.25 * h, y[0] + 0.75 * h, y[1]];
        let sigma = [[1.0, 0.5], [10.0, 10.0], [2.0, 4.0]];
        Self {
            layers: (0..3)
                .map(|k| Layer {
                    y: [cut[k], cut[k + 1]],
                    sigma: sigma[k],
                })
                .collect(),
            mu: 1.0,
            eps: 1.0,
        }
    }

    pub fn is_conductive(&self) -> bool {
        self.layers.iter().any(|l| l.sigma[0] != 0.0 || l.sigma[1] != 0.0)
    }

    fn validate(&self, y: [f64; 2]) -> Result<()> {
        if !(self.mu > 0.0) || !(self.eps > 0.0) {
            return Err(AssemblyError::Material("mu and eps must be positive".into()));
        }
        if self.layers.is_empty() {
            return Ok(());
        }
        let tol = 1e-12 * (y[1] - y[0]).abs().max(1.0);
        let mut layers = self.layers.clone();
        layers.sort_by(|a, b| a.y[0].total_cmp(&b.y[0]));
        let mut at = y[0];
        for l in &layers {
            if (l.y[0] - at).abs() > tol || !(l.y[1] > l.y[0]) {
                return Err(AssemblyError::Material(format!(
                    "layers must tile [{}, {}] without gaps or overlaps (gap at y={at})",
                    y[0], y[1]
                )));
            }
            if l.sigma.iter().any(|s| !(*s >= 0.0)) {
                return Err(AssemblyError::Material("conductivities must be nonnegative".into()));
            }
            at = l.y[1];
        }
        if (at - y[1]).abs() > tol {
            return Err(AssemblyError::Material(format!("layers end at y={at}, domain at y={}", y[1])));
        }
        Ok(())
    }

    /// `σ_comp` on each y-element.
    fn element_sigma(&self, y: [f64; 2], ne: usize, comp: usize) -> Result<Vec<f64>> {
        if self.layers.is_empty() {
            return Ok(vec![0.0; ne]);
        }
        let h = (y[1] - y[0]) / ne as f64;
        for l in &self.layers {
            for &yy in &l.y {
                let t = (yy - y[0]) / h;
                if (t - t.round()).abs() > 1e-9 {
                    return Err(AssemblyError::MisalignedLayer(yy));
                }
            }
        }
        Ok((0..ne)
            .map(|e| {
                let mid = y[0] + (e as f64 + 0.5) * h;
                self.layers
                    .iter()
                    .find(|l| l.y[0] <= mid && mid <= l.y[1])
                    .map_or(0.0, |l| l.sigma[comp])
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticMaterial {
    pub rho: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub absorbing_edges: Vec<Edge>,
}

impl AcousticMaterial {
    /// Air-like cavity with a viscoelastic lid on the top edge.
    pub fn absorbing_lid() -> Self {
        Self {
            rho: 1.0,
            c: 340.0,
            alpha: 5e4,
            beta: 200.0,
            absorbing_edges: vec![Edge::Top],
        }
    }

    pub fn rigid_edges(&self) -> Vec<Edge> {
        Edge::ALL
            .into_iter()
            .filter(|e| !self.absorbing_edges.contains(e))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("c", self.c), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0) {
                return Err(AssemblyError::Material(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PencilKind {
    /// Real symmetric K, M and skew-Hermitian (purely imaginary) C.
    Gyroscopic,
    /// Real symmetric K, C, M.
    RealSymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Scaling {
    Unscaled,
    Scaled(f64),
}

impl Scaling {
    pub fn factor(self) -> f64 {
        match self {
            Scaling::Unscaled => 1.0,
            Scaling::Scaled(s) => s,
        }
    }
}

/// Structural and numerical nnz of the `|K| + |C| + |M|` union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatternStats {
    pub full_n: usize,
    /// Support-overlap pattern before eliminating constrained DOFs.
    pub full_nnz: usize,
    /// Entries of that pattern where some matrix is numerically nonzero.
    pub full_nnz_nonzero: usize,
    pub reduced_n: usize,
    pub reduced_nnz: usize,
    pub reduced_nnz_nonzero: usize,
}

/// `(K + λC + λ²M) u = 0` on the free DOFs; the three matrices share one pattern.
#[derive(Debug, Clone)]
pub struct QuadraticPencil {
    pub k: SparseMatrix,
    pub c: SparseMatrix,
    pub m: SparseMatrix,
    pub kind: PencilKind,
    pub scaling: Scaling,
    /// Full-space DOF index of each reduced unknown.
    pub free_dofs: Vec<usize>,
    pub stats: PatternStats,
}

impl QuadraticPencil {
    pub fn n(&self) -> usize {
        self.k.n()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        self.k.pattern()
    }

    pub fn is_generalized(&self) -> bool {
        self.c.is_zero()
    }

    /// Builds a pencil from explicit matrices, unifying their patterns.
    pub fn from_matrices(k: &SparseMatrix, c: &SparseMatrix, m: &SparseMatrix) -> Result<Self> {
        let n = k.n();
        if c.n() != n || m.n() != n {
            return Err(SparseError::DimensionMismatch {
                expected: n,
                got: if c.n() != n { c.n() } else { m.n() },
            }
            .into());
        }
        let mut triplets = Vec::new();
        for (which, a) in [k, c, m].into_iter().enumerate() {
            let p = a.pattern();
            for i in 0..n {
                for kk in p.row_ptr()[i]..p.row_ptr()[i + 1] {
                    triplets.push((i, p.col_idx()[kk] as usize, which));
                }
            }
        }
        triplets.sort_unstable();
        let mut pos: Vec<(usize, usize)> = triplets.iter().map(|&(i, j, _)| (i, j)).collect();
        pos.dedup();
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _) in &pos {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx: Vec<u32> = pos.iter().map(|&(_, j)| j as u32).collect();
        let pattern = Arc::new(Pattern::new(n, row_ptr, col_idx)?);
        let restrict = |a: &SparseMatrix| -> Result<SparseMatrix> {
            let vals: Vec<c64> = pos.iter().map(|&(i, j)| a.get(i, j)).collect();
            Ok(SparseMatrix::new(pattern.clone(), compact(vals))?)
        };
        let (k, c, m) = (restrict(k)?, restrict(c)?, restrict(m)?);
        let kind = if k.is_real() && c.is_real() && m.is_real() {
            PencilKind::RealSymmetric
        } else {
            PencilKind::Gyroscopic
        };
        let nnz = pattern.nnz();
        let nonzero = count_union_nonzero(&k, &c, &m);
        Ok(Self {
            kind,
            scaling: Scaling::Unscaled,
            free_dofs: (0..n).collect(),
            stats: PatternStats {
                full_n: n,
                full_nnz: nnz,
                full_nnz_nonzero: nonzero,
                reduced_n: n,
                reduced_nnz: nnz,
                reduced_nnz_nonzero: nonzero,
            },
            k,
            c,
            m,
        })
    }

    /// Writes `K.mtx`, `C.mtx`, `M.mtx` into `dir`.
    pub fn write_matrix_market(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(SparseError::from)?;
        self.k.write_matrix_market(&dir.join("K.mtx"))?;
        self.c.write_matrix_market(&dir.join("C.mtx"))?;
        self.m.write_matrix_market(&dir.join("M.mtx"))?;
        Ok(())
    }

    /// Scatters a reduced vector into the full DOF numbering (zeros on constraints).
    pub fn expand(&self, full_n: usize, reduced: &[c64]) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); full_n];
        for (&d, &v) in self.free_dofs.iter().zip(reduced) {
            out[d] = v;
        }
        out
    }
}

fn compact(vals: Vec<c64>) -> Values {
    if vals.iter().all(|z| z.im == 0.0) {
        Values::Real(vals.into_iter().map(|z| z.re).collect())
    } else if vals.iter().all(|z| z.re == 0.0) {
        Values::Imag(vals.into_iter().map(|z| z.im).collect())
    } else {
        Values::Complex(vals)
    }
}

fn count_union_nonzero(k: &SparseMatrix, c: &SparseMatrix, m: &SparseMatrix) -> usize {
    let zero = c64::new(0.0, 0.0);
    (0..k.nnz())
        .filter(|&i| k.values().get(i) != zero || c.values().get(i) != zero || m.values().get(i) != zero)
        .count()
}

/// Dense 1D Galerkin matrix `G[i][k] = Σ_e w_e ∫_e A_i^(da) B_k^(db)`.
#[derive(Debug, Clone)]
struct Dense1D {
    cols: usize,
    data: Vec<f64>,
}

impl Dense1D {
    #[inline]
    fn at(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }

    fn transposed(&self) -> Dense1D {
        let rows = self.data.len() / self.cols.max(1);
        let mut data = vec![0.0; self.data.len()];
        for i in 0..rows {
            for k in 0..self.cols {
                data[k * rows + i] = self.data[i * self.cols + k];
            }
        }
        Dense1D { cols: rows, data }
    }
}

fn gram_1d(a: &UnivariateSpace, b: &UnivariateSpace, da: usize, db: usize, weights: Option<&[f64]>, extra_pts: usize) -> Dense1D {
    let (ka, kb) = (a.knot_vector(), b.knot_vector());
    let (na, nb) = (ka.basis_count(), kb.basis_count());
    let (pa, pb) = (ka.degree(), kb.degree());
    let ne = ka.elements();
    let npts = pa.max(pb) + 1 + extra_pts;
    let mut data = vec![0.0; na * nb];
    for e in 0..ne {
        let w_e = weights.map_or(1.0, |w| w[e]);
        if w_e == 0.0 {
            continue;
        }
        let (x0, x1) = (e as f64 / ne as f64, (e + 1) as f64 / ne as f64);
        let (pts, wts) = quadrature::mapped(npts, x0, x1).expect("rule size within range");
        let (sa, sb) = (ka.element_span(e), kb.element_span(e));
        for (&u, &w) in pts.iter().zip(&wts) {
            let va = ka.derivatives_at_span(sa, u, da);
            let vb = kb.derivatives_at_span(sb, u, db);
            for (r, &fa) in va[da].iter().enumerate() {
                let i = sa - pa + r;
                let row = &mut data[i * nb..(i + 1) * nb];
                for (s, &fb) in vb[db].iter().enumerate() {
                    row[sb - pb + s] += w_e * w * fa * fb;
                }
            }
        }
    }
    if std::ptr::eq(a, b) && da == db {
        // exact symmetry, so Hermitian blocks stay bitwise Hermitian
        for i in 0..na {
            for k in 0..i {
                data[i * nb + k] = data[k * nb + i];
            }
        }
    }
    Dense1D { cols: nb, data }
}

/// Uses the transpose of the already computed `(b, a)` block for `b < a`.
fn cross_gram(
    terms: &[Term],
    a: usize,
    b: usize,
    make: impl FnOnce() -> (Dense1D, Dense1D),
) -> (Dense1D, Dense1D) {
    if b < a {
        if let Some(t) = terms.iter().find(|t| t.target == Target::K && t.a == b && t.b == a) {
            return (t.gx.transposed(), t.gy.transposed());
        }
    }
    make()
}

/// Outer product of the traces at `u ∈ {0, 1}`.
fn trace_1d(a: &UnivariateSpace, b: &UnivariateSpace, u: f64) -> Dense1D {
    let (na, nb) = (a.n(), b.n());
    let mut data = vec![0.0; na * nb];
    let ta: Vec<f64> = (0..na).map(|i| a.knot_vector().basis_value(i, u).unwrap()).collect();
    let tb: Vec<f64> = (0..nb).map(|i| b.knot_vector().basis_value(i, u).unwrap()).collect();
    for i in 0..na {
        for k in 0..nb {
            data[i * nb + k] = ta[i] * tb[k];
        }
    }
    Dense1D { cols: nb, data }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    K,
    C,
    M,
}

/// `coef · Gx ⊗ Gy` contribution to block `(a, b)` of one matrix.
struct Term {
    a: usize,
    b: usize,
    target: Target,
    coef: f64,
    gx: Dense1D,
    gy: Dense1D,
}

/// Index range of `B` functions sharing an element with each `A` function.
fn overlap_ranges(a: &UnivariateSpace, b: &UnivariateSpace) -> Vec<(usize, usize)> {
    let (ka, kb) = (a.knot_vector(), b.knot_vector());
    (0..ka.basis_count())
        .map(|i| {
            let (e0, e1) = ka.support_elements(i);
            (kb.element_first_basis(e0), kb.element_first_basis(e1) + kb.degree())
        })
        .collect()
}

struct Assembler<'a> {
    space: &'a VectorSpace,
    terms: Vec<Term>,
    /// `[a][b]` overlap ranges in x and y.
    ox: [[Vec<(usize, usize)>; 2]; 2],
    oy: [[Vec<(usize, usize)>; 2]; 2],
    c_imag: bool,
    exec: Exec,
}

impl<'a> Assembler<'a> {
    fn new(space: &'a VectorSpace, terms: Vec<Term>, c_imag: bool, exec: Exec) -> Self {
        let cs = &space.comps;
        let ox = [0, 1].map(|a| [0, 1].map(|b| overlap_ranges(&cs[a].sx, &cs[b].sx)));
        let oy = [0, 1].map(|a| [0, 1].map(|b| overlap_ranges(&cs[a].sy, &cs[b].sy)));
        Self {
            space,
            terms,
            ox,
            oy,
            c_imag,
            exec,
        }
    }

    /// Calls `f(col_dof, k, c, m)` for every pattern entry of full row `dof`, in column order.
    #[inline]
    fn row<F: FnMut(usize, f64, f64, f64)>(&self, dof: usize, mut f: F) {
        let (a, i, j) = self.space.locate(dof);
        for b in 0..2 {
            let (k0, k1) = self.ox[a][b][i];
            let (l0, l1) = self.oy[a][b][j];
            let terms: Vec<&Term> = self.terms.iter().filter(|t| t.a == a && t.b == b).collect();
            for l in l0..=l1 {
                for k in k0..=k1 {
                    let (mut vk, mut vc, mut vm) = (0.0, 0.0, 0.0);
                    for t in &terms {
                        let v = t.coef * t.gx.at(i, k) * t.gy.at(j, l);
                        match t.target {
                            Target::K => vk += v,
                            Target::C => vc += v,
                            Target::M => vm += v,
                        }
                    }
                    f(self.space.dof(b, k, l), vk, vc, vm);
                }
            }
        }
    }

    fn full_stats(&self) -> (usize, usize) {
        let n = self.space.n();
        par::sum_chunks(self.exec, n, 256, |r0, r1| {
            let mut s = Pair::default();
            for dof in r0..r1 {
                self.row(dof, |_, k, c, m| {
                    s.0 += 1;
                    if k != 0.0 || c != 0.0 || m != 0.0 {
                        s.1 += 1;
                    }
                });
            }
            s
        })
        .into()
    }

    fn assemble(&self, constrained: &BTreeSet<usize>) -> Result<(SparseMatrix, SparseMatrix, SparseMatrix, Vec<usize>)> {
        let n = self.space.n();
        let free: Vec<usize> = (0..n).filter(|d| !constrained.contains(d)).collect();
        let mut map = vec![u32::MAX; n];
        for (r, &d) in free.iter().enumerate() {
            map[d] = r as u32;
        }
        let nr = free.len();
        let counts = par::map_range(self.exec, nr, |r| {
            let mut c = 0usize;
            self.row(free[r], |col, _, _, _| {
                if map[col] != u32::MAX {
                    c += 1;
                }
            });
            c
        });
        let mut row_ptr = Vec::with_capacity(nr + 1);
        row_ptr.push(0usize);
        for c in counts {
            row_ptr.push(row_ptr.last().unwrap() + c);
        }
        let nnz = row_ptr[nr];
        let mut cols = vec![0u32; nnz];
        let mut kv = vec![0.0; nnz];
        let mut cv = vec![0.0; nnz];
        let mut mv = vec![0.0; nnz];

        // split storage into disjoint row blocks
        const BLOCK: usize = 256;
        let mut jobs = Vec::new();
        {
            let (mut rc, mut rk, mut rcv, mut rm) = (&mut cols[..], &mut kv[..], &mut cv[..], &mut mv[..]);
            let mut r0 = 0;
            while r0 < nr {
                let r1 = (r0 + BLOCK).min(nr);
                let len = row_ptr[r1] - row_ptr[r0];
                let (a, b) = rc.split_at_mut(len);
                rc = b;
                let (c, d) = rk.split_at_mut(len);
                rk = d;
                let (e, f) = rcv.split_at_mut(len);
                rcv = f;
                let (g, h) = rm.split_at_mut(len);
                rm = h;
                jobs.push((r0, r1, a, c, e, g));
                r0 = r1;
            }
        }
        par::for_each_owned(self.exec, jobs, |(r0, r1, oc, ok, ocv, om)| {
            let mut pos = 0;
            for &dof in &free[r0..r1] {
                self.row(dof, |col, k, c, m| {
                    let rc = map[col];
                    if rc != u32::MAX {
                        oc[pos] = rc;
                        ok[pos] = k;
                        ocv[pos] = c;
                        om[pos] = m;
                        pos += 1;
                    }
                });
            }
        });
        let pattern = Arc::new(Pattern::new(nr, row_ptr, cols)?);
        let k = SparseMatrix::new(pattern.clone(), Values::Real(kv))?;
        let c = SparseMatrix::new(
            pattern.clone(),
            if self.c_imag { Values::Imag(cv) } else { Values::Real(cv) },
        )?;
        let m = SparseMatrix::new(pattern, Values::Real(mv))?;
        Ok((k, c, m, free))
    }
}

#[derive(Default)]
struct Pair(usize, usize);

impl std::ops::Add for Pair {
    type Output = Pair;
    fn add(self, o: Pair) -> Pair {
        Pair(self.0 + o.0, self.1 + o.1)
    }
}

impl std::iter::Sum for Pair {
    fn sum<I: Iterator<Item = Pair>>(iter: I) -> Pair {
        iter.fold(Pair::default(), |a, b| a + b)
    }
}

impl From<Pair> for (usize, usize) {
    fn from(p: Pair) -> Self {
        (p.0, p.1)
    }
}

fn finish(asm: Assembler<'_>, constrained: BTreeSet<usize>, kind: PencilKind) -> Result<QuadraticPencil> {
    let (full_nnz, full_nnz_nonzero) = asm.full_stats();
    let (k, c, m, free_dofs) = asm.assemble(&constrained)?;
    let stats = PatternStats {
        full_n: asm.space.n(),
        full_nnz,
        full_nnz_nonzero,
        reduced_n: k.n(),
        reduced_nnz: k.nnz(),
        reduced_nnz_nonzero: count_union_nonzero(&k, &c, &m),
    };
    log::info!(
        "assembled pencil: N={} (full {}), nnz={} (full {})",
        stats.reduced_n,
        stats.full_n,
        stats.reduced_nnz,
        stats.full_nnz
    );
    Ok(QuadraticPencil {
        k,
        c,
        m,
        kind,
        scaling: Scaling::Unscaled,
        free_dofs,
        stats,
    })
}

/// `K = −μ⁻¹∫curl·curl`, `C = −i∫φ·σφ`, `M = ε∫φ·φ`, tangential traces eliminated.
pub fn assemble_em(space: &VectorSpace, material: &EmMaterial) -> Result<QuadraticPencil> {
    assemble_em_with(space, material, Exec::default(), 0)
}

/// `extra_pts` adds Gauss points beyond `p + 1` per element (quadrature checks).
pub fn assemble_em_with(space: &VectorSpace, material: &EmMaterial, exec: Exec, extra_pts: usize) -> Result<QuadraticPencil> {
    if space.kind != SpaceKind::Curl {
        return Err(AssemblyError::KindMismatch {
            problem: "electromagnetic",
            expected: SpaceKind::Curl,
            got: space.kind,
        });
    }
    let g = &space.geometry;
    material.validate(g.y)?;
    let l = g.lengths();
    let det = g.det();
    let cs = &space.comps;
    let sigma = [
        material.element_sigma(g.y, space.elements, 0)?,
        material.element_sigma(g.y, space.elements, 1)?,
    ];
    let mut terms = Vec::new();
    // curl of component a differentiates in y for a = 0 (with a minus sign), in x for a = 1
    let sign = [-1.0, 1.0];
    for a in 0..2 {
        for b in 0..2 {
            let (dxa, dya) = if a == 0 { (0, 1) } else { (1, 0) };
            let (dxb, dyb) = if b == 0 { (0, 1) } else { (1, 0) };
            let (gx, gy) = cross_gram(&terms, a, b, || {
                (
                    gram_1d(&cs[a].sx, &cs[b].sx, dxa, dxb, None, extra_pts),
                    gram_1d(&cs[a].sy, &cs[b].sy, dya, dyb, None, extra_pts),
                )
            });
            terms.push(Term {
                a,
                b,
                target: Target::K,
                coef: -sign[a] * sign[b] / (material.mu * det),
                gx,
                gy,
            });
        }
        let gx = gram_1d(&cs[a].sx, &cs[a].sx, 0, 0, None, extra_pts);
        terms.push(Term {
            a,
            b: a,
            target: Target::M,
            coef: material.eps * det / (l[a] * l[a]),
            gx: gx.clone(),
            gy: gram_1d(&cs[a].sy, &cs[a].sy, 0, 0, None, extra_pts),
        });
        if sigma[a].iter().any(|&s| s != 0.0) {
            terms.push(Term {
                a,
                b: a,
                target: Target::C,
                // C = -i (...): stored as the imaginary part
                coef: -det / (l[a] * l[a]),
                gx,
                gy: gram_1d(&cs[a].sy, &cs[a].sy, 0, 0, Some(&sigma[a]), extra_pts),
            });
        }
    }
    let mask = spaces::boundary_mask(space, BoundaryProblem::Em, &[]);
    let mut constrained = space.constrained().clone();
    constrained.extend(mask);
    finish(Assembler::new(space, terms, true, exec), constrained, PencilKind::Gyroscopic)
}

/// `K = ρc²∫div·div + α∫_ΓA (φ·n)²`, `C = β∫_ΓA (φ·n)²`, `M = ρ∫φ·φ`, rigid normal traces eliminated.
pub fn assemble_acoustic(space: &VectorSpace, material: &AcousticMaterial) -> Result<QuadraticPencil> {
    assemble_acoustic_with(space, material, Exec::default(), 0)
}

pub fn assemble_acoustic_with(
    space: &VectorSpace,
    material: &AcousticMaterial,
    exec: Exec,
    extra_pts: usize,
) -> Result<QuadraticPencil> {
    if space.kind != SpaceKind::Div {
        return Err(AssemblyError::KindMismatch {
            problem: "acoustic",
            expected: SpaceKind::Div,
            got: space.kind,
        });
    }
    material.validate()?;
    if material.absorbing_edges.is_empty() {
        log::warn!("no absorbing edges: damping matrix is zero");
    }
    let g = &space.geometry;
    let l = g.lengths();
    let det = g.det();
    let cs = &space.comps;
    let mut terms = Vec::new();
    for a in 0..2 {
        for b in 0..2 {
            // div of component a differentiates along axis a
            let (dxa, dya) = if a == 0 { (1, 0) } else { (0, 1) };
            let (dxb, dyb) = if b == 0 { (1, 0) } else { (0, 1) };
            let (gx, gy) = cross_gram(&terms, a, b, || {
                (
                    gram_1d(&cs[a].sx, &cs[b].sx, dxa, dxb, None, extra_pts),
                    gram_1d(&cs[a].sy, &cs[b].sy, dya, dyb, None, extra_pts),
                )
            });
            terms.push(Term {
                a,
                b,
                target: Target::K,
                coef: material.rho * material.c * material.c / det,
                gx,
                gy,
            });
        }
        terms.push(Term {
            a,
            b: a,
            target: Target::M,
            coef: material.rho * l[a] * l[a] / det,
            gx: gram_1d(&cs[a].sx, &cs[a].sx, 0, 0, None, extra_pts),
            gy: gram_1d(&cs[a].sy, &cs[a].sy, 0, 0, None, extra_pts),
        });
    }
    let edges: BTreeSet<Edge> = material.absorbing_edges.iter().copied().collect();
    for edge in edges {
        let a = space.normal_component(edge);
        let s = &cs[a];
        // φ·n = ±(l_a / det) v̂_a and ds = l_t dt, so the factor is 1 / l_t
        let (gx, gy, lt) = match edge {
            Edge::Left | Edge::Right => {
                let u = if edge == Edge::Left { 0.0 } else { 1.0 };
                (trace_1d(&s.sx, &s.sx, u), gram_1d(&s.sy, &s.sy, 0, 0, None, extra_pts), l[1])
            }
            Edge::Bottom | Edge::Top => {
                let u = if edge == Edge::Bottom { 0.0 } else { 1.0 };
                (gram_1d(&s.sx, &s.sx, 0, 0, None, extra_pts), trace_1d(&s.sy, &s.sy, u), l[0])
            }
        };
        terms.push(Term {
            a,
            b: a,
            target: Target::K,
            coef: material.alpha / lt,
            gx: gx.clone(),
            gy: gy.clone(),
        });
        terms.push(Term {
            a,
            b: a,
            target: Target::C,
            coef: material.beta / lt,
            gx,
            gy,
        });
    }
    let mask = spaces::boundary_mask(space, BoundaryProblem::Acoustic, &material.rigid_edges());
    let mut constrained = space.constrained().clone();
    constrained.extend(mask);
    finish(Assembler::new(space, terms, false, exec), constrained, PencilKind::RealSymmetric)
}

/// Physical field `Σ c_i φ_i` at a physical point; `coefficients` indexes the full DOF set.
pub fn evaluate_field(space: &VectorSpace, coefficients: &[c64], point: [f64; 2]) -> Result<[c64; 2]> {
    if coefficients.len() != space.n() {
        return Err(SparseError::DimensionMismatch {
            expected: space.n(),
            got: coefficients.len(),
        }
        .into());
    }
    let uv = space.geometry.to_parametric(point)?;
    let mut param = [c64::new(0.0, 0.0); 2];
    for (a, t) in space.comps.iter().enumerate() {
        let (kx, ky) = (t.sx.knot_vector(), t.sy.knot_vector());
        let (sx, bx) = kx.eval_basis(uv[0]).map_err(SpaceError::from)?;
        let (sy, by) = ky.eval_basis(uv[1]).map_err(SpaceError::from)?;
        let (i0, j0) = (sx - kx.degree(), sy - ky.degree());
        for (s, &vy) in by.iter().enumerate() {
            for (r, &vx) in bx.iter().enumerate() {
                param[a] += coefficients[space.dof(a, i0 + r, j0 + s)] * (vx * vy);
            }
        }
    }
    let re = spaces::piola_map(space.kind, &space.geometry, [param[0].re, param[1].re], [[0.0; 2]; 2])?;
    let im = spaces::piola_map(space.kind, &space.geometry, [param[0].im, param[1].im], [[0.0; 2]; 2])?;
    Ok([c64::new(re.value[0], im.value[0]), c64::new(re.value[1], im.value[1])])
}
