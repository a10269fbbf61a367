//! Analytic reference eigenpairs and error measures.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{self, AcousticMaterial};
use crate::c64;
use crate::par::{self, Exec};
use crate::quadrature;
use crate::spaces::{BoxGeometry, VectorSpace};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("mode (0, 0) has no eigenfunction")]
    InvalidMode,
    #[error("no dispersion root for j = {j} on branch {branch}")]
    NoRoot { j: u32, branch: u8 },
    #[error("branch must be 1 or 2, got {0}")]
    InvalidBranch(u8),
    #[error("material needs alpha, beta, rho, c > 0")]
    InvalidMaterial,
    #[error("reference eigenvalue is zero")]
    ZeroEigenvalue,
    #[error("discrete eigenfunction vanishes")]
    ZeroFunction,
    #[error(transparent)]
    Assembly(#[from] assembly::AssemblyError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// A vector field with a known closed form on the physical domain.
pub trait AnalyticField: Sync {
    fn eval(&self, x: f64, y: f64) -> [f64; 2];
}

/// Maxwell mode of the unit square with perfectly conducting walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmAnalyticMode {
    pub i: u32,
    pub j: u32,
    /// `π²(i² + j²)`.
    pub lambda: f64,
}

pub fn em_analytic(i: u32, j: u32) -> Result<EmAnalyticMode> {
    if i == 0 && j == 0 {
        return Err(OracleError::InvalidMode);
    }
    Ok(EmAnalyticMode {
        i,
        j,
        lambda: PI * PI * f64::from(i * i + j * j),
    })
}

impl AnalyticField for EmAnalyticMode {
    fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        let (i, j) = (f64::from(self.i), f64::from(self.j));
        let s = 2.0 / (i * i + j * j).sqrt();
        [
            -s * j * (i * PI * x).cos() * (j * PI * y).sin(),
            s * i * (i * PI * x).sin() * (j * PI * y).cos(),
        ]
    }
}

/// Real-eigenvalue mode of the rectangular cavity `[0, a] × [0, b]` whose top wall absorbs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticAnalyticMode {
    pub j: u32,
    pub branch: u8,
    pub lambda: f64,
    /// `η²`; `η` itself is imaginary when this is negative.
    pub eta_sq: f64,
    pub rho: f64,
    pub a: f64,
    pub b: f64,
}

impl AcousticAnalyticMode {
    /// Real `η` or, for `η² < 0`, the modulus of the imaginary one.
    pub fn eta(&self) -> f64 {
        self.eta_sq.abs().sqrt()
    }
}

impl AnalyticField for AcousticAnalyticMode {
    fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        let kx = f64::from(self.j) * PI / self.a;
        let e = self.eta();
        // cosh(ηy) and η sinh(ηy), continued to imaginary η
        let (ch, esh) = if self.eta_sq >= 0.0 {
            ((e * y).cosh(), e * (e * y).sinh())
        } else {
            ((e * y).cos(), -e * (e * y).sin())
        };
        let f = -1.0 / (self.rho * self.lambda * self.lambda);
        [f * (-kx * (kx * x).sin() * ch), f * ((kx * x).cos() * esh)]
    }
}

/// `η tanh(η b)` as a function of `η²`, valid for either sign.
fn eta_tanh(eta_sq: f64, b: f64) -> f64 {
    let e = eta_sq.abs().sqrt();
    if e * b < 1e-4 {
        // series keeps accuracy where η changes from real to imaginary
        return eta_sq * b - eta_sq * eta_sq * b.powi(3) / 3.0;
    }
    if eta_sq >= 0.0 {
        e * (e * b).tanh()
    } else {
        -e * (e * b).tan()
    }
}

struct Dispersion<'a> {
    m: &'a AcousticMaterial,
    j: u32,
    a: f64,
    b: f64,
}

impl Dispersion<'_> {
    fn eta_sq(&self, l: f64) -> f64 {
        let k = f64::from(self.j) * PI / self.a;
        l * l / (self.m.c * self.m.c) + k * k
    }

    fn g(&self, l: f64) -> f64 {
        eta_tanh(self.eta_sq(l), self.b) + self.m.rho * l * l / (self.m.alpha + l * self.m.beta)
    }
}

/// Interval `(lo, hi)` of a branch: `(−2α/β, −α/β)` or `(−50α/β, −2α/β)`.
pub fn branch_interval(material: &AcousticMaterial, branch: u8) -> Result<(f64, f64)> {
    let r = material.alpha / material.beta;
    match branch {
        1 => Ok((-2.0 * r, -r)),
        2 => Ok((-50.0 * r, -2.0 * r)),
        b => Err(OracleError::InvalidBranch(b)),
    }
}

/// All real roots of the dispersion relation on a branch, ascending.
pub fn acoustic_dispersion_all_roots(
    j: u32,
    branch: u8,
    material: &AcousticMaterial,
    a: f64,
    b: f64,
) -> Result<Vec<AcousticAnalyticMode>> {
    let m = material;
    if !(m.alpha > 0.0 && m.beta > 0.0 && m.rho > 0.0 && m.c > 0.0) {
        return Err(OracleError::InvalidMaterial);
    }
    let (lo, hi) = branch_interval(m, branch)?;
    let d = Dispersion { m, j, a, b };
    const SAMPLES: usize = 400;
    // endpoints are poles or accumulation points; sample strictly inside
    let xs: Vec<f64> = (1..=SAMPLES)
        .map(|k| lo + (hi - lo) * k as f64 / (SAMPLES + 1) as f64)
        .collect();
    let gs: Vec<f64> = xs.iter().map(|&x| d.g(x)).collect();
    let mut out = Vec::new();
    for k in 0..SAMPLES - 1 {
        if gs[k] == 0.0 || gs[k].signum() != gs[k + 1].signum() {
            let root = refine(&d, xs[k], xs[k + 1], gs[k]);
            let res = d.g(root);
            // sign changes across poles of tan or of the damping term are not roots
            if res.abs() <= 1e-10 * (1.0 + root.abs()) {
                out.push(AcousticAnalyticMode {
                    j,
                    branch,
                    lambda: root,
                    eta_sq: d.eta_sq(root),
                    rho: m.rho,
                    a,
                    b,
                });
            }
        }
    }
    Ok(out)
}

/// Bisection to machine precision, then one guarded Newton step.
fn refine(d: &Dispersion<'_>, mut x0: f64, mut x1: f64, g0: f64) -> f64 {
    if g0 == 0.0 {
        return x0;
    }
    let s0 = g0.signum();
    for _ in 0..200 {
        let xm = 0.5 * (x0 + x1);
        if xm == x0 || xm == x1 {
            break;
        }
        let gm = d.g(xm);
        if gm == 0.0 {
            return xm;
        }
        if gm.signum() == s0 {
            x0 = xm;
        } else {
            x1 = xm;
        }
    }
    let x = 0.5 * (x0 + x1);
    let h = 1e-7 * x.abs().max(1.0);
    let dg = (d.g(x + h) - d.g(x - h)) / (2.0 * h);
    let xn = x - d.g(x) / dg;
    if dg.is_finite() && xn >= x0.min(x1) && xn <= x0.max(x1) && d.g(xn).abs() < d.g(x).abs() {
        xn
    } else {
        x
    }
}

/// The root of the branch nearest zero.
pub fn acoustic_dispersion_roots(
    j: u32,
    branch: u8,
    material: &AcousticMaterial,
    a: f64,
    b: f64,
) -> Result<AcousticAnalyticMode> {
    acoustic_dispersion_all_roots(j, branch, material, a, b)?
        .pop()
        .ok_or(OracleError::NoRoot { j, branch })
}

/// Dispersion residual `η tanh(ηb) + ρλ²/(α + λβ)`.
pub fn dispersion_residual(material: &AcousticMaterial, j: u32, lambda: f64, a: f64, b: f64) -> f64 {
    Dispersion { m: material, j, a, b }.g(lambda)
}

/// Signed relative error `(λ_h − λ)/λ`.
pub fn eigenvalue_error(lambda_h: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Err(OracleError::ZeroEigenvalue);
    }
    Ok((lambda_h - lambda) / lambda)
}

/// `∫ f·conj(g)` and friends over the mesh of `space`, `2(p+1)` Gauss points per direction.
struct Moments {
    cross: c64,
    norm_h: f64,
    norm_ref: f64,
}

fn quadrature_points(space: &VectorSpace) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let npts = 2 * (space.degree + 1);
    let ne = space.elements;
    let g = &space.geometry;
    let axis = |lim: [f64; 2]| {
        let mut p = Vec::with_capacity(ne * npts);
        let mut w = Vec::with_capacity(ne * npts);
        for e in 0..ne {
            let x0 = lim[0] + (lim[1] - lim[0]) * e as f64 / ne as f64;
            let x1 = lim[0] + (lim[1] - lim[0]) * (e + 1) as f64 / ne as f64;
            let (pe, we) = quadrature::mapped(npts, x0, x1).expect("rule size within range");
            p.extend(pe);
            w.extend(we);
        }
        (p, w)
    };
    let (px, wx) = axis(g.x);
    let (py, wy) = axis(g.y);
    (px, wx, py, wy)
}

fn moments(space: &VectorSpace, coeffs: &[c64], mode: &dyn AnalyticField, exec: Exec) -> Result<Moments> {
    let (px, wx, py, wy) = quadrature_points(space);
    let rows = par::map_range(exec, py.len(), |r| -> Result<(c64, f64, f64)> {
        let (mut cross, mut nh, mut nr) = (c64::new(0.0, 0.0), 0.0, 0.0);
        for (x, w) in px.iter().zip(&wx) {
            let wt = w * wy[r];
            let uh = assembly::evaluate_field(space, coeffs, [*x, py[r]])?;
            let u = mode.eval(*x, py[r]);
            for d in 0..2 {
                cross += uh[d] * u[d] * wt;
                nh += uh[d].norm_sqr() * wt;
                nr += u[d] * u[d] * wt;
            }
        }
        Ok((cross, nh, nr))
    });
    let mut m = Moments {
        cross: c64::new(0.0, 0.0),
        norm_h: 0.0,
        norm_ref: 0.0,
    };
    for r in rows {
        let (c, h, n) = r?;
        m.cross += c;
        m.norm_h += h;
        m.norm_ref += n;
    }
    m.norm_h = m.norm_h.sqrt();
    m.norm_ref = m.norm_ref.sqrt();
    Ok(m)
}

/// Rescales `coeffs` so that `⟨u_h, u⟩` is real positive and `‖u_h‖ = ‖u‖`.
pub fn align_phase(space: &VectorSpace, coeffs: &[c64], mode: &dyn AnalyticField) -> Result<Vec<c64>> {
    let m = moments(space, coeffs, mode, Exec::default())?;
    if m.norm_h == 0.0 {
        return Err(OracleError::ZeroFunction);
    }
    let phase = if m.cross.norm() > 0.0 {
        m.cross.conj() / m.cross.norm()
    } else {
        c64::new(1.0, 0.0)
    };
    let f = phase * (m.norm_ref / m.norm_h);
    Ok(coeffs.iter().map(|z| z * f).collect())
}

/// `|⟨u_h, u⟩| / (‖u_h‖ ‖u‖)`, the cosine of the L² angle between the two fields.
pub fn overlap(space: &VectorSpace, coeffs: &[c64], mode: &dyn AnalyticField) -> Result<f64> {
    let m = moments(space, coeffs, mode, Exec::default())?;
    if m.norm_h == 0.0 {
        return Err(OracleError::ZeroFunction);
    }
    Ok(m.cross.norm() / (m.norm_h * m.norm_ref))
}

/// `‖u_h − u‖_{L²}` after phase and norm alignment; `coeffs` in full space numbering.
pub fn eigenfunction_l2_error(space: &VectorSpace, coeffs: &[c64], mode: &dyn AnalyticField) -> Result<f64> {
    let aligned = align_phase(space, coeffs, mode)?;
    l2_difference(space, &aligned, mode)
}

/// `‖u_h − u‖_{L²}` without alignment.
pub fn l2_difference(space: &VectorSpace, coeffs: &[c64], mode: &dyn AnalyticField) -> Result<f64> {
    let (px, wx, py, wy) = quadrature_points(space);
    let rows = par::map_range(Exec::default(), py.len(), |r| -> Result<f64> {
        let mut s = 0.0;
        for (x, w) in px.iter().zip(&wx) {
            let uh = assembly::evaluate_field(space, coeffs, [*x, py[r]])?;
            let u = mode.eval(*x, py[r]);
            s += w * wy[r] * ((uh[0] - u[0]).norm_sqr() + (uh[1] - u[1]).norm_sqr());
        }
        Ok(s)
    });
    let mut total = 0.0;
    for r in rows {
        total += r?;
    }
    Ok(total.sqrt())
}

/// `∫ f·g` of two analytic fields with `npts` Gauss points per direction on `ne × ne` cells.
pub fn analytic_inner(geom: &BoxGeometry, ne: usize, npts: usize, f: &dyn AnalyticField, g: &dyn AnalyticField) -> f64 {
    let mut s = 0.0;
    for ey in 0..ne {
        let y0 = geom.y[0] + (geom.y[1] - geom.y[0]) * ey as f64 / ne as f64;
        let y1 = geom.y[0] + (geom.y[1] - geom.y[0]) * (ey + 1) as f64 / ne as f64;
        let (py, wy) = quadrature::mapped(npts, y0, y1).expect("rule size within range");
        for ex in 0..ne {
            let x0 = geom.x[0] + (geom.x[1] - geom.x[0]) * ex as f64 / ne as f64;
            let x1 = geom.x[0] + (geom.x[1] - geom.x[0]) * (ex + 1) as f64 / ne as f64;
            let (px, wx) = quadrature::mapped(npts, x0, x1).expect("rule size within range");
            for (y, wyy) in py.iter().zip(&wy) {
                for (x, wxx) in px.iter().zip(&wx) {
                    let (a, b) = (f.eval(*x, *y), g.eval(*x, *y));
                    s += wxx * wyy * (a[0] * b[0] + a[1] * b[1]);
                }
            }
        }
    }
    s
}
