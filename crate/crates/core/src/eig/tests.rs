use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::sparse::Ordering;

fn c(re: f64) -> c64 {
    c64::new(re, 0.0)
}

fn dense_sparse(n: usize, f: impl Fn(usize, usize) -> c64) -> SparseMatrix {
    let t: Vec<_> = (0..n * n).map(|k| (k / n, k % n, f(k / n, k % n))).collect();
    SparseMatrix::from_triplets(n, &t).unwrap()
}

fn pencil(k: &SparseMatrix, cm: &SparseMatrix, m: &SparseMatrix) -> QuadraticPencil {
    QuadraticPencil::from_matrices(k, cm, m).unwrap()
}

fn diag(v: &[f64]) -> SparseMatrix {
    let n = v.len();
    dense_sparse(n, |i, j| if i == j { c(v[i]) } else { c(0.0) })
}

/// Random complex K, C and Hermitian positive definite M, stored densely.
fn random_pencil(n: usize, seed: u64) -> QuadraticPencil {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = || c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let k: Vec<c64> = (0..n * n).map(|_| z()).collect();
    let cc: Vec<c64> = (0..n * n).map(|_| z()).collect();
    let r: Vec<c64> = (0..n * n).map(|_| z()).collect();
    let m = dense_sparse(n, |i, j| {
        let mut s: c64 = (0..n).map(|l| r[l * n + i].conj() * r[l * n + j]).sum();
        if i == j {
            s += c(1.0);
        }
        s
    });
    pencil(&dense_sparse(n, |i, j| k[i * n + j]), &dense_sparse(n, |i, j| cc[i * n + j]), &m)
}

fn to_dense(a: &SparseMatrix) -> DMatrix<c64> {
    let n = a.n();
    let d = a.to_dense();
    DMatrix::from_fn(n, n, |i, j| d[i * n + j])
}

/// `(A − sB)⁻¹B` for `A = [0 I; −K −C]`, `B = diag(I, M)` built explicitly.
fn dense_operator(p: &QuadraticPencil, s: c64) -> DMatrix<c64> {
    let n = p.n();
    let (k, cm, m) = (to_dense(&p.k), to_dense(&p.c), to_dense(&p.m));
    let mut a = DMatrix::<c64>::zeros(2 * n, 2 * n);
    let mut b = DMatrix::<c64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        a[(i, n + i)] = c(1.0);
        b[(i, i)] = c(1.0);
        for j in 0..n {
            a[(n + i, j)] = -k[(i, j)];
            a[(n + i, n + j)] = -cm[(i, j)];
            b[(n + i, n + j)] = m[(i, j)];
        }
    }
    let shifted = &a - &b * s;
    shifted.lu().solve(&b).unwrap()
}

fn stack(v: &BlockVec) -> nalgebra::DVector<c64> {
    nalgebra::DVector::from_iterator(2 * v.len(), v.upper.iter().chain(&v.lower).copied())
}

fn random_block(n: usize, seed: u64) -> BlockVec {
    BlockVec {
        upper: random_vector(n, seed, true),
        lower: random_vector(n, seed + 7, true),
    }
}

#[test]
fn scaling_of_balanced_pencil_is_identity() {
    let k = diag(&[2.0, 3.0]);
    let p = pencil(&k, &diag(&[1.0, 1.0]), &diag(&[3.0, 1.0]));
    let (s, f) = scale_pencil(&p).unwrap();
    assert_eq!(f, 1.0);
    assert_eq!(s.m.to_dense(), p.m.to_dense());
    assert_eq!(s.c.to_dense(), p.c.to_dense());
}

#[test]
fn scaling_relates_roots() {
    let id = diag(&[1.0]);
    let p = pencil(&diag(&[4.0]), &id, &id);
    let (s, f) = scale_pencil(&p).unwrap();
    assert_eq!(f, 2.0);
    assert_eq!(s.k.get(0, 0), c(4.0));
    assert_eq!(s.c.get(0, 0), c(2.0));
    assert_eq!(s.m.get(0, 0), c(4.0));
    // roots of 4 + 2γ + 4γ² times ς are the roots of 4 + λ + λ²
    let disc = c64::new(4.0 - 64.0, 0.0).sqrt();
    let gamma = (c(-2.0) + disc) / c(8.0);
    let lambda = gamma * 2.0;
    assert!((c(4.0) + lambda + lambda * lambda).norm() < 1e-12);
}

#[test]
fn scaling_needs_mass() {
    let z = SparseMatrix::zeros(diag(&[1.0]).pattern().clone());
    let p = pencil(&diag(&[1.0]), &z, &z);
    assert!(matches!(scale_pencil(&p), Err(EigError::ZeroMass)));
}

#[test]
fn scalar_operator_at_zero_shift() {
    let p = pencil(&diag(&[2.0]), &diag(&[3.0]), &diag(&[1.0]));
    let cnt = FlopCounter::default();
    let op = build_operator(&p, c(0.0), &Ordering::natural(1), &cnt).unwrap();
    assert_eq!(cnt.calls(Category::Fa), 1);
    let (_, _, u) = op.factorization().dense_factors();
    assert_eq!(u, vec![c(2.0)]);
}

#[test]
fn shift_on_eigenvalue_is_a_collision() {
    let p = pencil(&diag(&[2.0]), &diag(&[3.0]), &diag(&[1.0]));
    let cnt = FlopCounter::default();
    let e = build_operator(&p, c(-1.0), &Ordering::natural(1), &cnt).unwrap_err();
    assert!(matches!(e, EigError::ShiftCollision { .. }), "{e}");
}

#[test]
fn operator_identity_case() {
    let id = diag(&[1.0, 1.0, 1.0]);
    let z = SparseMatrix::zeros(id.pattern().clone());
    let p = pencil(&id, &z, &id);
    let cnt = FlopCounter::default();
    let op = build_operator(&p, c(0.0), &Ordering::natural(3), &cnt).unwrap();
    let v = random_block(3, 5);
    let r = apply_operator(&op, &v, &cnt).unwrap();
    for i in 0..3 {
        assert!((r.upper[i] + v.lower[i]).norm() < 1e-15);
        assert_eq!(r.lower[i], v.upper[i]);
    }
    assert_eq!(cnt.calls(Category::Fb), 1);
    assert_eq!(cnt.calls(Category::Mv), 3);
}

#[test]
fn operator_lower_block_at_zero_shift() {
    let p = random_pencil(5, 3);
    let cnt = FlopCounter::default();
    let op = build_operator(&p, c(0.0), &Ordering::natural(5), &cnt).unwrap();
    let v = random_block(5, 9);
    let r = apply_operator(&op, &v, &cnt).unwrap();
    assert_eq!(r.lower, v.upper);
}

#[test]
fn operator_matches_dense_linearization() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for t in 0..5 {
        let p = random_pencil(6, 20 + t);
        let s = c64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let cnt = FlopCounter::default();
        let op = build_operator(&p, s, &Ordering::natural(6), &cnt).unwrap();
        let v = random_block(6, 40 + t);
        let r = stack(&apply_operator(&op, &v, &cnt).unwrap());
        let expect = dense_operator(&p, s) * stack(&v);
        assert!((r - &expect).norm() <= 1e-10 * expect.norm().max(1.0));
    }
}

#[test]
fn b_inner_cases() {
    let p = random_pencil(4, 1);
    let cnt = FlopCounter::default();
    let mut e1 = BlockVec::zeros(4);
    e1.upper[0] = c(1.0);
    assert_eq!(b_inner(&e1, &e1, &p.m, &cnt).unwrap(), c(1.0));
    assert_eq!(cnt.calls(Category::Vv), 2);
    assert_eq!(cnt.calls(Category::Mv), 1);

    let id = diag(&[1.0; 4]);
    let (x, y) = (random_block(4, 2), random_block(4, 3));
    let plain: c64 = stack(&x).dotc(&stack(&y));
    assert!((b_inner(&x, &y, &id, &cnt).unwrap() - plain).norm() < 1e-14);

    let mut bd = DMatrix::<c64>::identity(8, 8);
    bd.view_mut((4, 4), (4, 4)).copy_from(&to_dense(&p.m));
    let q = (stack(&x).adjoint() * &bd * stack(&x))[(0, 0)];
    assert!((b_inner(&x, &x, &p.m, &cnt).unwrap() - q).norm() < 1e-12 * q.norm());
}

#[test]
fn one_step_gives_rayleigh_quotient() {
    let p = random_pencil(4, 8);
    let cnt = FlopCounter::default();
    let op = build_operator(&p, c64::new(0.3, 0.1), &Ordering::natural(4), &cnt).unwrap();
    let v = random_block(4, 1);
    let st = arnoldi_run(&op, 1, v, &cnt).unwrap();
    let x = &st.basis[0];
    let sx = apply_operator(&op, x, &cnt).unwrap();
    let rq = b_inner(x, &sx, &p.m, &cnt).unwrap();
    assert!((st.h[(0, 0)] - rq).norm() < 1e-12 * rq.norm());
}

#[test]
fn full_run_on_diagonal_pencil_recovers_spectrum() {
    // K = diag(k), C = 0, M = I: λ = ±i sqrt(k)
    let kv = [1.0, 4.0, 9.0, 16.0];
    let z = SparseMatrix::zeros(diag(&kv).pattern().clone());
    let p = pencil(&diag(&kv), &z, &diag(&[1.0; 4]));
    let s = c64::new(0.2, 0.5);
    let cnt = FlopCounter::default();
    let op = build_operator(&p, s, &Ordering::natural(4), &cnt).unwrap();
    let st = arnoldi_run(&op, 8, random_block(4, 3), &cnt).unwrap();
    let ritz = ritz_extract(&st, &op).unwrap();
    assert_eq!(ritz.len(), 8);
    for &k in &kv {
        for sign in [1.0, -1.0] {
            let lam = c64::new(0.0, sign * f64::sqrt(k));
            let theta = c(1.0) / (lam - s);
            let best = ritz.iter().map(|r| (r.theta - theta).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10 * theta.norm(), "θ = {theta}");
        }
    }
    let ver = arnoldi::verify(&op, &st, &FlopCounter::default()).unwrap();
    assert!(ver.b_orthogonality < 1e-10);
}

#[test]
fn basis_is_b_orthonormal() {
    let p = random_pencil(12, 4);
    let cnt = FlopCounter::default();
    let op = build_operator(&p, c64::new(-0.5, 0.2), &Ordering::natural(12), &cnt).unwrap();
    let st = arnoldi_run(&op, 15, random_block(12, 2), &cnt).unwrap();
    let ver = arnoldi::verify(&op, &st, &FlopCounter::default()).unwrap();
    assert!(ver.b_orthogonality < 1e-10, "{ver:?}");
    assert!(ver.arnoldi_residual < 1e-10, "{ver:?}");
    for j in 0..st.k {
        for i in j + 2..=st.k {
            assert_eq!(st.h[(i, j)], c(0.0));
        }
    }
}

fn state_from_h(h: DMatrix<c64>) -> KrylovState {
    let k = h.ncols();
    let mut hh = DMatrix::zeros(k + 1, k);
    hh.view_mut((0, 0), (k, k)).copy_from(&h);
    KrylovState {
        basis: (0..=k).map(|_| BlockVec::zeros(1)).collect(),
        h: hh,
        k,
        m: k,
        nit: 1,
        invariant: false,
        reorthogonalizations: 0,
    }
}

#[test]
fn ritz_of_diagonal_projection() {
    let p = pencil(&diag(&[2.0]), &diag(&[3.0]), &diag(&[1.0]));
    let cnt = FlopCounter::default();
    let op = build_operator(&p, c(0.0), &Ordering::natural(1), &cnt).unwrap();
    let st = state_from_h(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0), c(3.0)])));
    let r = ritz_extract(&st, &op).unwrap();
    assert!((r[0].lambda - c(1.0 / 3.0)).norm() < 1e-15);
    assert!((r[1].lambda - c(0.5)).norm() < 1e-15);
}

#[test]
fn ritz_of_exchange_matrix() {
    let p = pencil(&diag(&[2.0]), &diag(&[3.0]), &diag(&[1.0]));
    let cnt = FlopCounter::default();
    let op = build_operator(&p, c(0.0), &Ordering::natural(1), &cnt).unwrap();
    let st = state_from_h(DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]));
    let mut th: Vec<f64> = ritz_extract(&st, &op).unwrap().iter().map(|r| r.theta.re).collect();
    th.sort_by(f64::total_cmp);
    assert!((th[0] + 1.0).abs() < 1e-14 && (th[1] - 1.0).abs() < 1e-14);
}

#[test]
fn restart_preserves_relation_and_converged_values() {
    let p = random_pencil(10, 12);
    let cnt = FlopCounter::default();
    let op = build_operator(&p, c64::new(0.1, 0.1), &Ordering::natural(10), &cnt).unwrap();
    let mut st = arnoldi_run(&op, 14, random_block(10, 6), &cnt).unwrap();
    let before = ritz_extract(&st, &op).unwrap();
    assert!(krylov_schur_restart(&mut st, 6, Exec::Sequential, &cnt).unwrap());
    assert_eq!(st.k, 6);
    let ver = arnoldi::verify(&op, &st, &FlopCounter::default()).unwrap();
    assert!(ver.arnoldi_residual < 1e-10 && ver.b_orthogonality < 1e-10, "{ver:?}");
    let after = ritz_extract(&st, &op).unwrap();
    for (a, b) in after.iter().zip(&before) {
        assert!((a.theta - b.theta).norm() < 1e-10 * b.theta.norm());
    }
    arnoldi::extend(&op, &mut st, &cnt).unwrap();
    let ver = arnoldi::verify(&op, &st, &FlopCounter::default()).unwrap();
    assert!(ver.arnoldi_residual < 1e-10 && ver.b_orthogonality < 1e-10, "{ver:?}");
}

#[test]
fn restart_keeping_everything_changes_nothing() {
    let p = random_pencil(8, 2);
    let cnt = FlopCounter::default();
    let op = build_operator(&p, c64::new(0.4, 0.0), &Ordering::natural(8), &cnt).unwrap();
    let mut st = arnoldi_run(&op, 9, random_block(8, 1), &cnt).unwrap();
    let mut before: Vec<c64> = ritz_extract(&st, &op).unwrap().iter().map(|r| r.theta).collect();
    assert!(krylov_schur_restart(&mut st, 9, Exec::Sequential, &cnt).unwrap());
    let mut after: Vec<c64> = ritz_extract(&st, &op).unwrap().iter().map(|r| r.theta).collect();
    before.sort_by(|a, b| a.re.total_cmp(&b.re));
    after.sort_by(|a, b| a.re.total_cmp(&b.re));
    for (a, b) in after.iter().zip(&before) {
        assert!((a - b).norm() < 1e-10 * b.norm());
    }
    let ver = arnoldi::verify(&op, &st, &FlopCounter::default()).unwrap();
    assert!(ver.arnoldi_residual < 1e-10);
}

#[test]
fn scalar_pencil_roots() {
    let p = pencil(&diag(&[2.0]), &diag(&[3.0]), &diag(&[1.0]));
    let cnt = FlopCounter::default();
    let opts = SolveOptions {
        verify: true,
        ..SolveOptions::with_nev(2)
    };
    let rep = solve_quadratic(&p, c(0.0), &Ordering::natural(1), &opts, &cnt).unwrap();
    let mut l: Vec<f64> = rep.pairs.iter().map(|e| e.lambda.re).collect();
    l.sort_by(f64::total_cmp);
    assert!((l[0] + 2.0).abs() < 1e-10 && (l[1] + 1.0).abs() < 1e-10, "{l:?}");
    assert!(rep.pairs.iter().all(|e| e.lambda.im.abs() < 1e-10));
    assert_eq!(rep.counters.fa.calls, 1);
    assert_eq!(rep.counters.fb.calls, (rep.m * rep.nit) as u64);
}

#[test]
fn decoupled_two_by_two() {
    let z = SparseMatrix::zeros(diag(&[1.0, 4.0]).pattern().clone());
    let p = pencil(&diag(&[1.0, 4.0]), &z, &diag(&[1.0, 1.0]));
    let cnt = FlopCounter::default();
    let rep = solve_quadratic(&p, c(0.1), &Ordering::natural(2), &SolveOptions::with_nev(4), &cnt).unwrap();
    for want in [c64::new(0.0, 1.0), c64::new(0.0, -1.0), c64::new(0.0, 2.0), c64::new(0.0, -2.0)] {
        assert!(rep.pairs.iter().any(|e| (e.lambda - want).norm() < 1e-10), "{want}");
    }
}

fn tridiagonal_pencil(n: usize) -> QuadraticPencil {
    let mut t = Vec::new();
    let mut tm = Vec::new();
    let mut tc = Vec::new();
    for i in 0..n {
        t.push((i, i, c(2.0 + i as f64 * 0.01)));
        tm.push((i, i, c(1.0)));
        tc.push((i, i, c(0.05)));
        if i + 1 < n {
            for (a, b) in [(i, i + 1), (i + 1, i)] {
                t.push((a, b, c(-1.0)));
                tm.push((a, b, c(0.1)));
                tc.push((a, b, c(0.0)));
            }
        }
    }
    let k = SparseMatrix::from_triplets(n, &t).unwrap();
    let m = SparseMatrix::from_triplets(n, &tm).unwrap();
    let cm = SparseMatrix::from_triplets(n, &tc).unwrap();
    pencil(&k, &cm, &m)
}

#[test]
fn restarted_solve_obeys_krylov_schur_counts() {
    let p = tridiagonal_pencil(60);
    let cnt = FlopCounter::default();
    let opts = SolveOptions {
        m: Some(14),
        keep: Some(8),
        verify: true,
        ..SolveOptions::with_nev(6)
    };
    let rep = solve_quadratic(&p, c64::new(0.0, 1.2), &Ordering::natural(60), &opts, &cnt).unwrap();
    assert!(rep.nit > 1, "expected restarts");
    assert_eq!(rep.counters.fa.calls, 1);
    assert_eq!(rep.counters.fb.calls, (rep.m + (rep.nit - 1) * (rep.m - rep.keep)) as u64);
    let v = rep.verification.unwrap();
    assert!(v.arnoldi_residual < 1e-8 && v.b_orthogonality < 1e-8, "{v:?}");
    for e in &rep.pairs {
        assert!(e.residual <= 1e-8);
    }
    // same eigenvalues from a dense oracle on the 2N linearization
    let (vals, _) = dense::eigen(&dense_operator(&p, c(0.0))).unwrap();
    for e in &rep.pairs {
        let best = vals
            .iter()
            .map(|th| ((c(1.0) / th) - e.lambda).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-8 * e.lambda.norm(), "{}", e.lambda);
    }
}

#[test]
fn single_pass_counter_laws() {
    let p = tridiagonal_pencil(80);
    let cnt = FlopCounter::default();
    let opts = SolveOptions::with_nev(3);
    let rep = solve_quadratic(&p, c64::new(0.0, 1.0), &Ordering::natural(80), &opts, &cnt).unwrap();
    assert_eq!(rep.nit, 1);
    assert_eq!(rep.counters.fb.calls, (rep.m * rep.nit) as u64);
    let mv = rep.counters.mv.calls as f64 / (rep.m * rep.nit) as f64;
    assert!((4.0..=6.0).contains(&mv), "{mv}");
    // 2m² per pass of classical Gram–Schmidt; the DGKS second pass at most doubles it
    let vv = rep.counters.vv.calls as f64 / (2 * rep.m * rep.m * rep.nit) as f64;
    assert!((0.85..=2.3).contains(&vv), "{vv}");
}

#[test]
fn scaling_does_not_change_the_spectrum() {
    let mut p = tridiagonal_pencil(40);
    p.m = p.m.scaled(c(1e-4));
    let shift = c64::new(0.0, 150.0);
    let run = |scale: bool| {
        let opts = SolveOptions {
            scale,
            ..SolveOptions::with_nev(4)
        };
        solve_quadratic(&p, shift, &Ordering::natural(40), &opts, &FlopCounter::default()).unwrap()
    };
    let (a, b) = (run(true), run(false));
    assert!(a.scaling > 50.0);
    for (x, y) in a.pairs.iter().zip(&b.pairs) {
        assert!((x.lambda - y.lambda).norm() <= 1e-6 * y.lambda.norm());
    }
}

#[test]
fn invalid_sizes() {
    let p = tridiagonal_pencil(5);
    let cnt = FlopCounter::default();
    let bad = SolveOptions {
        m: Some(3),
        ..SolveOptions::with_nev(3)
    };
    assert!(solve_quadratic(&p, c(0.0), &Ordering::natural(5), &bad, &cnt).is_err());
    assert!(solve_quadratic(&p, c(0.0), &Ordering::natural(5), &SolveOptions::with_nev(11), &cnt).is_err());
}

#[test]
fn lanczos_diagonal() {
    let a = diag(&[1.0, 2.0, 3.0]);
    let b = diag(&[1.0, 1.0, 1.0]);
    let cnt = FlopCounter::default();
    let opts = SolveOptions {
        verify: true,
        ..SolveOptions::with_nev(3)
    };
    let rep = solve_generalized_hermitian(&a, &b, 0.0, &Ordering::natural(3), &opts, &cnt).unwrap();
    let mut l: Vec<f64> = rep.pairs.iter().map(|e| e.lambda.re).collect();
    l.sort_by(f64::total_cmp);
    for (x, y) in l.iter().zip([1.0, 2.0, 3.0]) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn lanczos_with_restarts_on_a_laplacian() {
    // 1D Dirichlet Laplacian and lumped mass: eigenvalues 4 sin²(kπ / 2(n+1))
    let n = 200;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, c(2.0)));
        if i + 1 < n {
            t.push((i, i + 1, c(-1.0)));
            t.push((i + 1, i, c(-1.0)));
        }
    }
    let a = SparseMatrix::from_triplets(n, &t).unwrap();
    let tb: Vec<_> = t.iter().map(|&(i, j, _)| (i, j, c(if i == j { 1.0 } else { 0.0 }))).collect();
    let b = SparseMatrix::from_triplets(n, &tb).unwrap();
    let exact: Vec<f64> = (1..=n)
        .map(|k| 4.0 * (k as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin().powi(2))
        .collect();
    let shift = 1.05;
    let cnt = FlopCounter::default();
    let opts = SolveOptions {
        m: Some(16),
        keep: Some(10),
        verify: true,
        ..SolveOptions::with_nev(8)
    };
    let rep = solve_generalized_hermitian(&a, &b, shift, &Ordering::natural(n), &opts, &cnt).unwrap();
    let mut near = exact.clone();
    near.sort_by(|x, y| (x - shift).abs().total_cmp(&(y - shift).abs()));
    for (e, want) in rep.pairs.iter().zip(&near) {
        assert!((e.lambda.re - want).abs() < 1e-9, "{} vs {want}", e.lambda.re);
    }
    let v = rep.verification.unwrap();
    assert!(v.arnoldi_residual < 1e-8 && v.b_orthogonality < 1e-8, "{v:?}");
    assert_eq!(rep.counters.fa.calls, 1);
    assert_eq!(rep.counters.fb.calls, (rep.m + (rep.nit - 1) * (rep.m - rep.keep)) as u64);
}

#[test]
fn lanczos_rejects_non_hermitian() {
    let a = dense_sparse(2, |i, j| c((i * 2 + j) as f64));
    let b = dense_sparse(2, |i, j| c(if i == j { 1.0 } else { 0.0 }));
    let e = solve_generalized_hermitian(&a, &b, 0.0, &Ordering::natural(2), &SolveOptions::with_nev(1), &FlopCounter::default());
    assert!(matches!(e, Err(EigError::InvalidArgument(_))));
}
