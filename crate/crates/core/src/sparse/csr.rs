use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::c64;
use crate::par::{self, Exec};

use super::{Category, FlopCounter, Result, SparseError};

/// Compressed-sparse-row structure shared by matrices with the same nonzeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

impl Pattern {
    /// Validates sorted, duplicate-free, in-range column indices.
    pub fn new(n: usize, row_ptr: Vec<usize>, col_idx: Vec<u32>) -> Result<Self> {
        let p = Self { n, row_ptr, col_idx };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let (n, row_ptr, col_idx) = (self.n, &self.row_ptr, &self.col_idx);
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || row_ptr[n] != col_idx.len() {
            return Err(SparseError::InvalidPattern("row pointer length or bounds".into()));
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(SparseError::InvalidPattern(format!("row {i}: decreasing row pointer")));
            }
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SparseError::InvalidPattern(format!("row {i}: unsorted or duplicate columns")));
            }
            if row.last().is_some_and(|&c| c as usize >= n) {
                return Err(SparseError::InvalidPattern(format!("row {i}: column out of range")));
            }
        }
        Ok(())
    }

    /// Skips validation in release builds; callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(n: usize, row_ptr: Vec<usize>, col_idx: Vec<u32>) -> Self {
        let p = Self { n, row_ptr, col_idx };
        debug_assert!(p.validate().is_ok());
        p
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Storage position of `(i, j)`, if present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let row = self.row(i);
        row.binary_search(&(j as u32)).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).iter().all(|&j| self.find(j as usize, i).is_some()))
    }

    /// Pattern of `P A Pᵀ` where `perm[new] = old`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz());
        for &old in perm {
            let start = col_idx.len();
            col_idx.extend(self.row(old).iter().map(|&c| inv[c as usize] as u32));
            col_idx[start..].sort_unstable();
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }
}

/// Value storage. EM damping is purely imaginary and most pencils are real,
/// so those cases keep one `f64` per entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Real(Vec<f64>),
    Imag(Vec<f64>),
    Complex(Vec<c64>),
}

impl Values {
    pub fn len(&self) -> usize {
        match self {
            Values::Real(v) | Values::Imag(v) => v.len(),
            Values::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, k: usize) -> c64 {
        match self {
            Values::Real(v) => c64::new(v[k], 0.0),
            Values::Imag(v) => c64::new(0.0, v[k]),
            Values::Complex(v) => v[k],
        }
    }

    pub fn to_complex(&self) -> Vec<c64> {
        (0..self.len()).map(|k| self.get(k)).collect()
    }

    pub fn is_real(&self) -> bool {
        match self {
            Values::Real(_) => true,
            Values::Imag(v) => v.iter().all(|&x| x == 0.0),
            Values::Complex(v) => v.iter().all(|z| z.im == 0.0),
        }
    }

    pub fn all_zero(&self) -> bool {
        match self {
            Values::Real(v) | Values::Imag(v) => v.iter().all(|&x| x == 0.0),
            Values::Complex(v) => v.iter().all(|z| *z == c64::new(0.0, 0.0)),
        }
    }

    /// `a * self`, keeping the compact representation when possible.
    pub fn scaled(&self, a: c64) -> Values {
        match self {
            Values::Real(v) if a.im == 0.0 => Values::Real(v.iter().map(|x| x * a.re).collect()),
            Values::Imag(v) if a.im == 0.0 => Values::Imag(v.iter().map(|x| x * a.re).collect()),
            Values::Real(v) if a.re == 0.0 => Values::Imag(v.iter().map(|x| x * a.im).collect()),
            Values::Imag(v) if a.re == 0.0 => Values::Real(v.iter().map(|x| -x * a.im).collect()),
            _ => Values::Complex((0..self.len()).map(|k| a * self.get(k)).collect()),
        }
    }
}

/// Square CSR matrix with complex semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<Pattern>,
    values: Values,
}

impl SparseMatrix {
    pub fn new(pattern: Arc<Pattern>, values: Values) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(SparseError::DimensionMismatch {
                expected: pattern.nnz(),
                got: values.len(),
            });
        }
        Ok(Self { pattern, values })
    }

    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let nnz = pattern.nnz();
        Self {
            pattern,
            values: Values::Real(vec![0.0; nnz]),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            pattern: Arc::new(Pattern::identity(n)),
            values: Values::Real(vec![1.0; n]),
        }
    }

    /// Sums duplicates; stores every listed position even when it sums to zero.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, c64)]) -> Result<Self> {
        let mut t: Vec<(usize, usize, c64)> = triplets.to_vec();
        for &(i, j, _) in &t {
            if i >= n || j >= n {
                return Err(SparseError::InvalidPattern(format!("entry ({i}, {j}) outside {n}x{n}")));
            }
        }
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<u32> = Vec::new();
        let mut vals: Vec<c64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(j as u32);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let pattern = Pattern::from_parts_unchecked(n, row_ptr, col_idx);
        Ok(Self {
            pattern: Arc::new(pattern),
            values: compact(vals),
        })
    }

    /// Row-major dense input; exact zeros are not stored.
    pub fn from_dense(n: usize, a: &[c64]) -> Result<Self> {
        if a.len() != n * n {
            return Err(SparseError::DimensionMismatch {
                expected: n * n,
                got: a.len(),
            });
        }
        let t: Vec<_> = (0..n * n)
            .filter(|&k| a[k] != c64::new(0.0, 0.0))
            .map(|k| (k / n, k % n, a[k]))
            .collect();
        Self::from_triplets(n, &t)
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    /// Stored entries whose value is nonzero.
    pub fn nnz_nonzero(&self) -> usize {
        (0..self.nnz()).filter(|&k| self.values.get(k) != c64::new(0.0, 0.0)).count()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.pattern
            .find(i, j)
            .map_or(c64::new(0.0, 0.0), |k| self.values.get(k))
    }

    pub fn is_real(&self) -> bool {
        self.values.is_real()
    }

    pub fn is_zero(&self) -> bool {
        self.values.all_zero()
    }

    pub fn scaled(&self, a: c64) -> Self {
        Self {
            pattern: self.pattern.clone(),
            values: self.values.scaled(a),
        }
    }

    /// Maximum absolute entry.
    pub fn norm_max(&self) -> f64 {
        (0..self.nnz()).map(|k| self.values.get(k).norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.n()];
        for (k, &c) in self.pattern.col_idx.iter().enumerate() {
            col[c as usize] += self.values.get(k).norm();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<c64> {
        let n = self.n();
        let mut a = vec![c64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                a[i * n + self.pattern.col_idx[k] as usize] = self.values.get(k);
            }
        }
        a
    }

    /// `Σ coef_t · A_t` over matrices sharing this pattern.
    pub fn combine(terms: &[(c64, &SparseMatrix)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| SparseError::InvalidPattern("empty combination".into()))?
            .1;
        for (_, m) in terms {
            if !Arc::ptr_eq(&m.pattern, &first.pattern) && m.pattern != first.pattern {
                return Err(SparseError::InvalidPattern("combined matrices must share a pattern".into()));
            }
        }
        let nnz = first.nnz();
        let mut out = vec![c64::new(0.0, 0.0); nnz];
        par::for_each_chunk_mut(Exec::default(), &mut out, par::MIN_CHUNK, |ci, chunk| {
            let base = ci * par::MIN_CHUNK;
            for (off, o) in chunk.iter_mut().enumerate() {
                let k = base + off;
                *o = terms.iter().map(|(a, m)| a * m.values.get(k)).sum();
            }
        });
        Ok(Self {
            pattern: first.pattern.clone(),
            values: Values::Complex(out),
        })
    }

    /// `y = A x`; charges one mat-vec of `nnz` multiply-adds.
    pub fn spmv(&self, x: &[c64], counter: &FlopCounter) -> Result<Vec<c64>> {
        let mut y = vec![c64::new(0.0, 0.0); self.n()];
        self.spmv_into(Exec::default(), x, &mut y, counter)?;
        Ok(y)
    }

    pub fn spmv_into(&self, exec: Exec, x: &[c64], y: &mut [c64], counter: &FlopCounter) -> Result<()> {
        let n = self.n();
        if x.len() != n || y.len() != n {
            return Err(SparseError::DimensionMismatch {
                expected: n,
                got: if x.len() != n { x.len() } else { y.len() },
            });
        }
        let rows_per_chunk = (par::MIN_CHUNK / 64).max(1);
        let p = &*self.pattern;
        par::for_each_chunk_mut(exec, y, rows_per_chunk, |ci, chunk| {
            let r0 = ci * rows_per_chunk;
            for (off, yi) in chunk.iter_mut().enumerate() {
                let i = r0 + off;
                let (a, b) = (p.row_ptr[i], p.row_ptr[i + 1]);
                let cols = &p.col_idx[a..b];
                *yi = match &self.values {
                    Values::Real(v) => {
                        let mut s = c64::new(0.0, 0.0);
                        for (c, val) in cols.iter().zip(&v[a..b]) {
                            s += x[*c as usize] * *val;
                        }
                        s
                    }
                    Values::Imag(v) => {
                        let mut s = c64::new(0.0, 0.0);
                        for (c, val) in cols.iter().zip(&v[a..b]) {
                            s += x[*c as usize] * *val;
                        }
                        c64::new(-s.im, s.re)
                    }
                    Values::Complex(v) => {
                        let mut s = c64::new(0.0, 0.0);
                        for (c, val) in cols.iter().zip(&v[a..b]) {
                            s += x[*c as usize] * *val;
                        }
                        s
                    }
                };
            }
        });
        counter.charge(Category::Mv, self.nnz() as u64);
        Ok(())
    }

    /// Principal submatrix on `keep` (ascending indices).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![u32::MAX; self.n()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new as u32;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut src = Vec::new();
        for &old in keep {
            for k in self.pattern.row_ptr[old]..self.pattern.row_ptr[old + 1] {
                let c = map[self.pattern.col_idx[k] as usize];
                if c != u32::MAX {
                    col_idx.push(c);
                    src.push(k);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let values = match &self.values {
            Values::Real(v) => Values::Real(src.iter().map(|&k| v[k]).collect()),
            Values::Imag(v) => Values::Imag(src.iter().map(|&k| v[k]).collect()),
            Values::Complex(v) => Values::Complex(src.iter().map(|&k| v[k]).collect()),
        };
        Self {
            pattern: Arc::new(Pattern::from_parts_unchecked(keep.len(), row_ptr, col_idx)),
            values,
        }
    }

    /// Coordinate Matrix Market, every stored entry written (explicit zeros included).
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = BufWriter::new(f);
        let real = matches!(self.values, Values::Real(_));
        let field = if real { "real" } else { "complex" };
        writeln!(w, "%%MatrixMarket matrix coordinate {field} general")?;
        writeln!(w, "{} {} {}", self.n(), self.n(), self.nnz())?;
        let mut line = String::new();
        for i in 0..self.n() {
            for k in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                let v = self.values.get(k);
                line.clear();
                let j = self.pattern.col_idx[k] as usize;
                if real {
                    let _ = writeln!(line, "{} {} {:.17e}", i + 1, j + 1, v.re);
                } else {
                    let _ = writeln!(line, "{} {} {:.17e} {:.17e}", i + 1, j + 1, v.re, v.im);
                }
                w.write_all(line.as_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_matrix_market(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut lines = BufReader::new(f).lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
        let header = header?.to_lowercase();
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" || tokens[2] != "coordinate" {
            return Err(parse_err(1, "expected '%%MatrixMarket matrix coordinate' header"));
        }
        let complex = match tokens[3] {
            "real" | "integer" => false,
            "complex" => true,
            other => return Err(parse_err(1, &format!("unsupported field '{other}'"))),
        };
        let symmetric = match tokens[4] {
            "general" => false,
            "symmetric" => true,
            other => return Err(parse_err(1, &format!("unsupported symmetry '{other}'"))),
        };
        let mut size: Option<(usize, usize)> = None;
        let mut triplets = Vec::new();
        for (ln, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('%') {
                continue;
            }
            let nums: Vec<&str> = t.split_whitespace().collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(ln + 1, &format!("bad number '{s}'")));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| parse_err(ln + 1, &format!("bad index '{s}'")));
            match size {
                None => {
                    if nums.len() != 3 {
                        return Err(parse_err(ln + 1, "size line needs rows cols nnz"));
                    }
                    let (r, c) = (idx(nums[0])?, idx(nums[1])?);
                    if r != c {
                        return Err(parse_err(ln + 1, "only square matrices are supported"));
                    }
                    size = Some((r, idx(nums[2])?));
                }
                Some((n, _)) => {
                    let want = if complex { 4 } else { 3 };
                    if nums.len() != want {
                        return Err(parse_err(ln + 1, &format!("expected {want} fields")));
                    }
                    let (i, j) = (idx(nums[0])?, idx(nums[1])?);
                    if i == 0 || j == 0 || i > n || j > n {
                        return Err(parse_err(ln + 1, "index out of range"));
                    }
                    let v = c64::new(num(nums[2])?, if complex { num(nums[3])? } else { 0.0 });
                    triplets.push((i - 1, j - 1, v));
                    if symmetric && i != j {
                        triplets.push((j - 1, i - 1, v));
                    }
                }
            }
        }
        let (n, nnz) = size.ok_or_else(|| parse_err(2, "missing size line"))?;
        let expected = if symmetric { triplets.len() } else { nnz };
        if triplets.len() != expected {
            return Err(parse_err(0, &format!("declared {nnz} entries, found {}", triplets.len())));
        }
        let mut m = Self::from_triplets(n, &triplets)?;
        if !complex {
            m.values = Values::Real(m.values.to_complex().iter().map(|z| z.re).collect());
        }
        Ok(m)
    }
}

fn parse_err(line: usize, msg: &str) -> SparseError {
    SparseError::Parse {
        line,
        msg: msg.to_string(),
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

/// Conjugating inner product `xᴴ y`; one vv operation of length N.
pub fn dot(x: &[c64], y: &[c64], counter: &FlopCounter) -> Result<c64> {
    if x.len() != y.len() {
        return Err(SparseError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    counter.charge(Category::Vv, x.len() as u64);
    Ok(dot_raw(x, y))
}

pub(crate) fn dot_raw(x: &[c64], y: &[c64]) -> c64 {
    let mut s = c64::new(0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        s += a.conj() * b;
    }
    s
}

/// `y ← a x + y`; one vv operation of length N.
pub fn axpy(a: c64, x: &[c64], y: &mut [c64], counter: &FlopCounter) -> Result<()> {
    if x.len() != y.len() {
        return Err(SparseError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    counter.charge(Category::Vv, x.len() as u64);
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
    Ok(())
}

/// Euclidean norm (uncharged helper).
pub fn norm2(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Dense vector as a Matrix Market `array complex general` column.
pub fn write_vector_market(path: &Path, x: &[c64]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix array complex general")?;
    writeln!(w, "{} 1", x.len())?;
    for z in x {
        writeln!(w, "{:.17e} {:.17e}", z.re, z.im)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> c64 {
        c64::new(re, 0.0)
    }

    #[test]
    fn identity_spmv() {
        let cnt = FlopCounter::default();
        let x = vec![c64::new(1.0, 2.0), c64::new(-3.0, 0.5), c(4.0)];
        let y = SparseMatrix::identity(3).spmv(&x, &cnt).unwrap();
        assert_eq!(y, x);
        assert_eq!(cnt.madds(Category::Mv), 3);
    }

    #[test]
    fn empty_pattern_spmv() {
        let cnt = FlopCounter::default();
        let p = Arc::new(Pattern::new(2, vec![0, 0, 0], vec![]).unwrap());
        let y = SparseMatrix::zeros(p).spmv(&[c(1.0), c(2.0)], &cnt).unwrap();
        assert_eq!(y, vec![c(0.0); 2]);
        assert_eq!(cnt.madds(Category::Mv), 0);
    }

    #[test]
    fn two_by_two_spmv() {
        let cnt = FlopCounter::default();
        let a = SparseMatrix::from_dense(2, &[c(1.0), c(2.0), c(3.0), c(4.0)]).unwrap();
        assert_eq!(a.spmv(&[c(1.0), c(1.0)], &cnt).unwrap(), vec![c(3.0), c(7.0)]);
        assert!(a.spmv(&[c(1.0)], &cnt).is_err());
    }

    #[test]
    fn imaginary_storage_spmv() {
        let cnt = FlopCounter::default();
        let i = c64::new(0.0, 1.0);
        let a = SparseMatrix::from_dense(2, &[i * 2.0, c(0.0), c(0.0), -i]).unwrap();
        assert!(matches!(a.values(), Values::Imag(_)));
        let x = [c64::new(1.0, 1.0), c64::new(2.0, -1.0)];
        let y = a.spmv(&x, &cnt).unwrap();
        assert_eq!(y[0], i * 2.0 * x[0]);
        assert_eq!(y[1], -i * x[1]);
    }

    #[test]
    fn dot_conjugates_first_argument() {
        let cnt = FlopCounter::default();
        let e1 = [c(1.0), c(0.0)];
        assert_eq!(dot(&e1, &e1, &cnt).unwrap(), c(1.0));
        let x = [c(1.0), c(-2.0), c(3.0)];
        let ix: Vec<c64> = x.iter().map(|v| v * c64::new(0.0, 1.0)).collect();
        assert_eq!(dot(&ix, &x, &cnt).unwrap(), c64::new(0.0, -14.0));
        assert_eq!(cnt.calls(Category::Vv), 2);
        assert_eq!(cnt.madds(Category::Vv), 5);
    }

    #[test]
    fn axpy_small() {
        let cnt = FlopCounter::default();
        let mut y = vec![c(0.0), c(1.0)];
        axpy(c(2.0), &[c(1.0), c(0.0)], &mut y, &cnt).unwrap();
        assert_eq!(y, vec![c(2.0), c(1.0)]);
        assert!(axpy(c(1.0), &[c(1.0)], &mut y, &cnt).is_err());
    }

    #[test]
    fn triplets_sum_duplicates_and_keep_zeros() {
        let m = SparseMatrix::from_triplets(
            2,
            &[(0, 1, c(1.0)), (0, 1, c(-1.0)), (1, 0, c(2.0)), (0, 0, c(3.0))],
        )
        .unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.nnz_nonzero(), 2);
        assert_eq!(m.get(0, 0), c(3.0));
        assert_eq!(m.get(1, 1), c(0.0));
    }

    #[test]
    fn pattern_validation() {
        assert!(Pattern::new(2, vec![0, 2, 2], vec![1, 0]).is_err());
        assert!(Pattern::new(2, vec![0, 1, 2], vec![0, 2]).is_err());
        assert!(Pattern::new(2, vec![0, 1], vec![0]).is_err());
    }

    #[test]
    fn permuted_pattern_keeps_nnz() {
        let a = SparseMatrix::from_dense(
            3,
            &[c(1.0), c(2.0), c(0.0), c(0.0), c(3.0), c(0.0), c(4.0), c(0.0), c(5.0)],
        )
        .unwrap();
        let p = a.pattern().permuted(&[2, 0, 1]);
        assert_eq!(p.nnz(), a.nnz());
        // old (2,0) -> new (0,1)
        assert!(p.find(0, 1).is_some());
    }

    #[test]
    fn combine_and_scale() {
        let a = SparseMatrix::from_dense(2, &[c(1.0), c(2.0), c(3.0), c(4.0)]).unwrap();
        let b = a.scaled(c64::new(0.0, 1.0));
        assert!(matches!(b.values(), Values::Imag(_)));
        let s = SparseMatrix::combine(&[(c(2.0), &a), (c(1.0), &b)]).unwrap();
        assert_eq!(s.get(1, 0), c64::new(6.0, 3.0));
    }

    #[test]
    fn norms() {
        let a = SparseMatrix::from_dense(2, &[c(1.0), c(-5.0), c(3.0), c(4.0)]).unwrap();
        assert_eq!(a.norm_max(), 5.0);
        assert_eq!(a.norm1(), 9.0);
    }

    #[test]
    fn submatrix_selects_principal_block() {
        let a = SparseMatrix::from_dense(
            3,
            &[c(1.0), c(2.0), c(3.0), c(4.0), c(5.0), c(6.0), c(7.0), c(8.0), c(9.0)],
        )
        .unwrap();
        let s = a.submatrix(&[0, 2]);
        assert_eq!(s.to_dense(), vec![c(1.0), c(3.0), c(7.0), c(9.0)]);
    }

    #[test]
    fn matrix_market_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        let a = SparseMatrix::from_triplets(
            3,
            &[(0, 0, c64::new(1.5, -2.0)), (2, 1, c64::new(0.0, 0.0)), (1, 2, c(7.0))],
        )
        .unwrap();
        a.write_matrix_market(&path).unwrap();
        let b = SparseMatrix::read_matrix_market(&path).unwrap();
        assert_eq!(b.nnz(), 3);
        assert_eq!(b.to_dense(), a.to_dense());

        let r = SparseMatrix::from_dense(2, &[c(1.0), c(0.0), c(0.0), c(2.0)]).unwrap();
        r.write_matrix_market(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("real general"));
        assert_eq!(SparseMatrix::read_matrix_market(&path).unwrap(), r);
    }

    #[test]
    fn matrix_market_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mtx");
        std::fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 x 3.0\n").unwrap();
        match SparseMatrix::read_matrix_market(&path) {
            Err(SparseError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn spmv_matches_dense(n in 1usize..12, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<c64> = (0..n * n)
                .map(|_| if rng.gen_bool(0.4) { c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) } else { c(0.0) })
                .collect();
            let x: Vec<c64> = (0..n).map(|_| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let m = SparseMatrix::from_dense(n, &a).unwrap();
            let y = m.spmv(&x, &FlopCounter::default()).unwrap();
            for i in 0..n {
                let e: c64 = (0..n).map(|j| a[i * n + j] * x[j]).sum();
                prop_assert!((y[i] - e).norm() < 1e-13);
            }
        }
    }
}
