//! Gauss–Legendre rules on `[-1, 1]`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("Gauss-Legendre rule needs 1..=16 points, got {0}")]
pub struct QuadratureError(pub usize);

/// Points and weights of the `npts`-point rule, points ascending.
pub fn gauss_legendre(npts: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    if !(1..=16).contains(&npts) {
        return Err(QuadratureError(npts));
    }
    let n = npts;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Rule mapped to `[a, b]`.
pub fn mapped(npts: usize, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    let (x, w) = gauss_legendre(npts)?;
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    Ok((
        x.iter().map(|&t| m + h * t).collect(),
        w.iter().map(|&t| h * t).collect(),
    ))
}
