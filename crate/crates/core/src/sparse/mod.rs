//! Sparse storage, fill-reducing ordering, multifrontal LU and FLOP accounting.

mod cost;
mod counter;
mod csr;
mod lu;
mod ordering;

use thiserror::Error;

pub use cost::{theoretical_costs, CostRow, CostTable, Discretization};
pub use counter::{Category, CategoryCount, CounterSnapshot, FlopCounter};
pub use csr::{axpy, dot, norm2, write_vector_market, Pattern, SparseMatrix, Values};
pub use lu::{lu_factorize, lu_factorize_with, solve_factored, Factorization, LuOptions};
pub use ordering::{
    cholesky_factor_nnz, elimination_tree, nested_dissection_order, symbolic_factor, Ordering, OrderingMethod,
    Symbolic,
};

pub(crate) use csr::dot_raw;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid sparse pattern: {0}")]
    InvalidPattern(String),
    #[error("numerically singular pivot block at column {column} (max candidate {magnitude:e})")]
    Singular { column: usize, magnitude: f64 },
    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SparseError>;
