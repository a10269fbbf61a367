//! Univariate B-spline machinery on uniform open knot vectors.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("degree must be at least 1, got {0}")]
    InvalidDegree(usize),
    #[error("need at least one element, got {0}")]
    InvalidElements(usize),
    #[error("expected {expected} interior multiplicities, got {got}")]
    MultiplicityCount { expected: usize, got: usize },
    #[error("multiplicity {mult} at breakpoint {breakpoint} outside [1, {degree}]")]
    InvalidContinuity {
        breakpoint: usize,
        mult: usize,
        degree: usize,
    },
    #[error("parameter {0} outside [0, 1]")]
    Domain(f64),
    #[error("derivative order {order} exceeds degree {degree}")]
    Order { order: usize, degree: usize },
    #[error("target continuity {0} not in {{0, 1}}")]
    InvalidTarget(usize),
    #[error("breakpoint {breakpoint} is not interior to (0, {elements})")]
    NotInterior { breakpoint: usize, elements: usize },
}

pub type Result<T> = std::result::Result<T, SplineError>;

/// Open (clamped) knot vector over `[0, 1]` with uniform breakpoints `b / ne`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    elements: usize,
    /// Multiplicity of interior breakpoint `b` (`1 <= b < ne`) at index `b - 1`.
    mults: Vec<usize>,
    knots: Vec<f64>,
    /// `first_knot[b]` is the index of the first knot equal to breakpoint `b`.
    first_knot: Vec<usize>,
}

/// Builds an open knot vector with `ne` uniform elements.
pub fn make_open_knots(degree: usize, ne: usize, mults: &[usize]) -> Result<KnotVector> {
    KnotVector::new(degree, ne, mults.to_vec())
}

impl KnotVector {
    pub fn new(degree: usize, elements: usize, mults: Vec<usize>) -> Result<Self> {
        if degree < 1 {
            return Err(SplineError::InvalidDegree(degree));
        }
        if elements < 1 {
            return Err(SplineError::InvalidElements(elements));
        }
        if mults.len() != elements - 1 {
            return Err(SplineError::MultiplicityCount {
                expected: elements - 1,
                got: mults.len(),
            });
        }
        for (i, &m) in mults.iter().enumerate() {
            if m < 1 || m > degree {
                return Err(SplineError::InvalidContinuity {
                    breakpoint: i + 1,
                    mult: m,
                    degree,
                });
            }
        }
        let mut knots = Vec::with_capacity(2 * (degree + 1) + mults.iter().sum::<usize>());
        let mut first_knot = Vec::with_capacity(elements + 1);
        first_knot.push(0);
        knots.extend(std::iter::repeat(0.0).take(degree + 1));
        for (i, &m) in mults.iter().enumerate() {
            first_knot.push(knots.len());
            let u = (i + 1) as f64 / elements as f64;
            knots.extend(std::iter::repeat(u).take(m));
        }
        first_knot.push(knots.len());
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Ok(Self {
            degree,
            elements,
            mults,
            knots,
            first_knot,
        })
    }

    /// Maximum-continuity knot vector (all interior multiplicities 1).
    pub fn uniform(degree: usize, elements: usize) -> Result<Self> {
        Self::new(degree, elements, vec![1; elements.saturating_sub(1)])
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn multiplicities(&self) -> &[usize] {
        &self.mults
    }

    /// Number of basis functions.
    pub fn basis_count(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Knot span index `i` with `knots[i] <= u < knots[i+1]`, closing at `u = 1`.
    pub fn find_span(&self, u: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&u) {
            return Err(SplineError::Domain(u));
        }
        let n = self.basis_count();
        if u >= self.knots[n] {
            return Ok(n - 1);
        }
        // first index with knots[idx] > u, minus one
        let idx = self.knots.partition_point(|&k| k <= u);
        Ok(idx - 1)
    }

    /// Span index of element `e` (the last knot equal to its left breakpoint).
    pub fn element_span(&self, e: usize) -> usize {
        debug_assert!(e < self.elements);
        self.first_knot[e + 1] - 1
    }

    /// First basis index that is nonzero on element `e`.
    pub fn element_first_basis(&self, e: usize) -> usize {
        self.element_span(e) - self.degree
    }

    /// Elements `[first, last]` covered by the support of basis `i`.
    pub fn support_elements(&self, i: usize) -> (usize, usize) {
        let lo = self.knots[i];
        let hi = self.knots[i + self.degree + 1];
        let ne = self.elements as f64;
        let first = (lo * ne).round() as usize;
        let last = ((hi * ne).round() as usize).saturating_sub(1);
        (first, last.max(first))
    }

    /// Nonzero basis values at `u`: returns `(span, [B_{span-p}, ..., B_span])`.
    pub fn eval_basis(&self, u: f64) -> Result<(usize, Vec<f64>)> {
        let span = self.find_span(u)?;
        Ok((span, self.basis_at_span(span, u)))
    }

    /// Cox–de Boor triangle for a known span; all denominators are nonzero on
    /// a non-degenerate span.
    pub fn basis_at_span(&self, span: usize, u: f64) -> Vec<f64> {
        let p = self.degree;
        let kn = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = u - kn[span + 1 - j];
            right[j] = kn[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Derivative table: row `k` holds the `k`-th derivatives of the `p+1`
    /// nonzero basis functions at `u`.
    pub fn eval_basis_derivatives(&self, u: f64, max_order: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        if max_order > self.degree {
            return Err(SplineError::Order {
                order: max_order,
                degree: self.degree,
            });
        }
        let span = self.find_span(u)?;
        Ok((span, self.derivatives_at_span(span, u, max_order)))
    }

    /// Triangular-table derivative evaluation for a known span.
    pub fn derivatives_at_span(&self, span: usize, u: f64, max_order: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let kn = &self.knots;
        let nd = max_order.min(p);
        // ndu[j][r]: basis values (upper triangle incl. diagonal) and knot differences (lower)
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - kn[span + 1 - j];
            right[j] = kn[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; max_order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=nd {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// Value of a single basis function `i` at `u` (zero outside its span set).
    pub fn basis_value(&self, i: usize, u: f64) -> Result<f64> {
        let (span, vals) = self.eval_basis(u)?;
        if i + self.degree < span || i > span {
            return Ok(0.0);
        }
        Ok(vals[i + self.degree - span])
    }
}

/// A univariate spline space: a knot vector plus derived continuity data.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateSpace {
    kv: KnotVector,
}

impl UnivariateSpace {
    pub fn new(kv: KnotVector) -> Self {
        Self { kv }
    }

    /// Maximum-continuity space of the given degree.
    pub fn max_continuity(degree: usize, elements: usize) -> Result<Self> {
        Ok(Self::new(KnotVector::uniform(degree, elements)?))
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.kv
    }

    pub fn degree(&self) -> usize {
        self.kv.degree
    }

    pub fn elements(&self) -> usize {
        self.kv.elements
    }

    pub fn n(&self) -> usize {
        self.kv.basis_count()
    }

    /// Continuity `p - m` at each interior breakpoint.
    pub fn continuity(&self) -> Vec<usize> {
        self.kv.mults.iter().map(|m| self.kv.degree - m).collect()
    }

    /// Continuity at interior breakpoint `b` (`1 <= b < ne`).
    pub fn continuity_at(&self, b: usize) -> usize {
        self.kv.degree - self.kv.mults[b - 1]
    }
}

/// Lowers the continuity at the listed interior breakpoints to
/// `target_continuity` by raising their multiplicity to `p - target`.
/// Breakpoints already at or below the target are left alone (logged).
pub fn raise_separator_multiplicity(
    space: &UnivariateSpace,
    separators: &[usize],
    target_continuity: usize,
) -> Result<UnivariateSpace> {
    if target_continuity > 1 {
        return Err(SplineError::InvalidTarget(target_continuity));
    }
    let p = space.degree();
    let ne = space.elements();
    let mut mults = space.kv.mults.clone();
    for &b in separators {
        if b == 0 || b >= ne {
            return Err(SplineError::NotInterior {
                breakpoint: b,
                elements: ne,
            });
        }
        let current = p - mults[b - 1];
        if target_continuity >= current {
            log::warn!(
                "breakpoint {b}: continuity C{current} already at or below target C{target_continuity}"
            );
            continue;
        }
        mults[b - 1] = p - target_continuity;
    }
    Ok(UnivariateSpace::new(KnotVector::new(p, ne, mults)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_clamped_case() {
        let kv = make_open_knots(1, 2, &[1]).unwrap();
        assert_eq!(kv.knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
        assert_eq!(kv.basis_count(), 3);
    }

    #[test]
    fn degree_four_sixteen_elements() {
        let s = UnivariateSpace::max_continuity(4, 16).unwrap();
        assert_eq!(s.n(), 20);
        assert!(s.continuity().iter().all(|&c| c == 3));
    }

    #[test]
    fn mixed_multiplicities() {
        let kv = make_open_knots(3, 4, &[1, 3, 1]).unwrap();
        let s = UnivariateSpace::new(kv);
        assert_eq!(s.continuity(), vec![2, 0, 2]);
        assert_eq!(s.n(), 9);
    }

    #[test]
    fn bad_multiplicity_rejected() {
        assert!(matches!(
            make_open_knots(2, 3, &[1, 3]),
            Err(SplineError::InvalidContinuity { .. })
        ));
        assert!(matches!(
            make_open_knots(2, 3, &[0, 1]),
            Err(SplineError::InvalidContinuity { .. })
        ));
        assert!(make_open_knots(0, 3, &[1, 1]).is_err());
    }

    #[test]
    fn raise_c1_degree_four() {
        let s = UnivariateSpace::max_continuity(4, 64).unwrap();
        assert_eq!(s.n(), 68);
        let r = raise_separator_multiplicity(&s, &[16, 32, 48], 1).unwrap();
        assert_eq!(r.n(), 74);
        assert_eq!(r.continuity_at(32), 1);
        assert_eq!(r.continuity_at(31), 3);
    }

    #[test]
    fn raise_c0_degree_three() {
        let s = UnivariateSpace::max_continuity(3, 64).unwrap();
        assert_eq!(s.n(), 67);
        let r = raise_separator_multiplicity(&s, &[16, 32, 48], 0).unwrap();
        assert_eq!(r.n(), 73);
    }

    #[test]
    fn raise_is_idempotent() {
        let s = UnivariateSpace::max_continuity(3, 8).unwrap();
        let r = raise_separator_multiplicity(&s, &[4], 1).unwrap();
        let rr = raise_separator_multiplicity(&r, &[4], 1).unwrap();
        assert_eq!(r, rr);
        assert!(raise_separator_multiplicity(&s, &[4], 2).is_err());
        assert!(raise_separator_multiplicity(&s, &[8], 1).is_err());
    }

    #[test]
    fn linear_hat_midpoint() {
        let kv = make_open_knots(1, 1, &[]).unwrap();
        let (span, v) = kv.eval_basis(0.5).unwrap();
        assert_eq!(span, 1);
        assert_eq!(v, vec![0.5, 0.5]);
    }

    #[test]
    fn quadratic_two_level_recursion() {
        let kv = make_open_knots(2, 2, &[1]).unwrap();
        let (_, v) = kv.eval_basis(0.25).unwrap();
        for (a, b) in v.iter().zip([0.25, 0.625, 0.125]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn outside_domain() {
        let kv = make_open_knots(2, 2, &[1]).unwrap();
        assert!(matches!(kv.eval_basis(1.1), Err(SplineError::Domain(_))));
        assert!(kv.eval_basis(-1e-9).is_err());
        assert!(matches!(
            kv.eval_basis_derivatives(0.5, 3),
            Err(SplineError::Order { .. })
        ));
    }

    #[test]
    fn linear_slopes() {
        let kv = make_open_knots(1, 1, &[]).unwrap();
        let (_, d) = kv.eval_basis_derivatives(0.3, 1).unwrap();
        assert!((d[1][0] + 1.0).abs() < 1e-15);
        assert!((d[1][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn span_at_right_end() {
        let kv = make_open_knots(3, 4, &[1, 3, 1]).unwrap();
        let (span, v) = kv.eval_basis(1.0).unwrap();
        assert_eq!(span, kv.basis_count() - 1);
        assert!((v[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn element_spans_and_supports() {
        let kv = make_open_knots(2, 4, &[1, 2, 1]).unwrap();
        for e in 0..4 {
            let s = kv.element_span(e);
            let mid = (e as f64 + 0.5) / 4.0;
            assert_eq!(kv.find_span(mid).unwrap(), s);
        }
        for i in 0..kv.basis_count() {
            let (a, b) = kv.support_elements(i);
            for e in 0..4 {
                let mid = (e as f64 + 0.5) / 4.0;
                let v = kv.basis_value(i, mid).unwrap();
                assert_eq!(v > 0.0, e >= a && e <= b, "basis {i} element {e}");
            }
        }
    }

    #[test]
    fn fd_derivatives_quadratic_uniform() {
        let kv = KnotVector::uniform(2, 5).unwrap();
        let h = 1e-6;
        for &u in &[0.13, 0.37, 0.55, 0.81] {
            let (span, d) = kv.eval_basis_derivatives(u, 1).unwrap();
            let p1 = kv.basis_at_span(span, u + h);
            let m1 = kv.basis_at_span(span, u - h);
            for k in 0..3 {
                let fd = (p1[k] - m1[k]) / (2.0 * h);
                assert!((fd - d[1][k]).abs() <= 1e-5 * d[1][k].abs().max(1.0));
            }
        }
    }

    /// Left/right limits of derivative `order` of basis `i` at breakpoint `u`.
    fn one_sided(kv: &KnotVector, i: usize, u: f64, order: usize) -> (f64, f64) {
        let eval = |x: f64, span: usize| {
            let d = kv.derivatives_at_span(span, x, order);
            let p = kv.degree();
            if i + p < span || i > span {
                0.0
            } else {
                d[order][i + p - span]
            }
        };
        let sl = kv.find_span(u - 1e-9).unwrap();
        let sr = kv.find_span(u + 1e-9).unwrap();
        (eval(u, sl), eval(u, sr))
    }

    #[test]
    fn continuity_matches_multiplicity() {
        let kv = make_open_knots(4, 4, &[1, 2, 3]).unwrap();
        for (b, &m) in kv.multiplicities().to_vec().iter().enumerate() {
            let u = (b + 1) as f64 / 4.0;
            let smooth = 4 - m;
            let mut jumped = false;
            for i in 0..kv.basis_count() {
                let (l, r) = one_sided(&kv, i, u, smooth);
                assert!((l - r).abs() <= 1e-8 * l.abs().max(1.0), "C{smooth} violated");
                let (l, r) = one_sided(&kv, i, u, smooth + 1);
                if (l - r).abs() > 1e-6 {
                    jumped = true;
                }
            }
            assert!(jumped, "derivative {} should jump at breakpoint {}", smooth + 1, b + 1);
        }
    }

    /// Solves a small dense system by Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    fn interpolate_poly(space: &UnivariateSpace, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let kv = space.knot_vector();
        let p = kv.degree();
        let n = kv.basis_count();
        // Greville abscissae give a unisolvent collocation set
        let pts: Vec<f64> = (0..n)
            .map(|i| kv.knots()[i + 1..=i + p].iter().sum::<f64>() / p as f64)
            .collect();
        let a: Vec<Vec<f64>> = pts
            .iter()
            .map(|&x| (0..n).map(|i| kv.basis_value(i, x).unwrap()).collect())
            .collect();
        let b = pts.iter().map(|&x| f(x)).collect();
        dense_solve(a, b)
    }

    #[test]
    fn raised_space_reproduces_polynomials() {
        let base = UnivariateSpace::max_continuity(3, 8).unwrap();
        let raised = raise_separator_multiplicity(&base, &[2, 4, 6], 1).unwrap();
        let poly = |x: f64| 0.3 - 1.2 * x + 2.0 * x * x - 0.7 * x * x * x;
        for space in [&base, &raised] {
            let c = interpolate_poly(space, poly);
            for k in 0..=50 {
                let u = k as f64 / 50.0;
                let (span, v) = space.knot_vector().eval_basis(u).unwrap();
                let val: f64 = v
                    .iter()
                    .enumerate()
                    .map(|(r, b)| b * c[span - 3 + r])
                    .sum();
                assert!((val - poly(u)).abs() < 1e-12);
            }
        }
    }

    fn arb_space() -> impl Strategy<Value = (KnotVector, f64)> {
        (1usize..=6, 1usize..=12, 0.0f64..=1.0, any::<u64>()).prop_map(|(p, ne, u, seed)| {
            let mults: Vec<usize> = (0..ne - 1)
                .map(|i| 1 + ((seed >> (i % 60)) as usize + i) % p)
                .collect();
            (KnotVector::new(p, ne, mults).unwrap(), u)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn partition_of_unity((kv, u) in arb_space()) {
            let (_, v) = kv.eval_basis(u).unwrap();
            prop_assert!(v.iter().all(|&x| x >= -1e-15));
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn derivative_rows_sum_to_zero((kv, u) in arb_space()) {
            let (_, d) = kv.eval_basis_derivatives(u, kv.degree()).unwrap();
            for row in &d[1..] {
                let scale: f64 = row.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
                prop_assert!(row.iter().sum::<f64>().abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn local_support((kv, u) in arb_space()) {
            let n = kv.basis_count();
            let p = kv.degree();
            for i in 0..n {
                let v = kv.basis_value(i, u).unwrap();
                let (a, b) = (kv.knots()[i], kv.knots()[i + p + 1]);
                if u < a || u > b {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }
}
