//! Refined isogeometric discretizations of quadratic eigenvalue problems.
//!
//! The crate builds curl- and divergence-conforming B-spline spaces (with or
//! without reduced-continuity separators), assembles the quadratic pencils of
//! two model problems, factorizes `Q(s) = K + sC + s²M` with a supernodal
//! multifrontal LU under a geometric nested dissection ordering, and solves the
//! pencil with a linearized shift-and-invert Krylov–Schur eigensolver. Every
//! expensive kernel charges a [`sparse::FlopCounter`].

pub mod assembly;
pub mod cli;
pub mod eig;
pub mod oracles;
pub mod par;
pub mod quadrature;
pub mod spaces;
pub mod sparse;
pub mod splines;

pub use num_complex::Complex64 as c64;
