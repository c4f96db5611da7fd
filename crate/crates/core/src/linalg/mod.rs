//! Dense and CSR matrices, graph operators, and the desk-scale dense solvers
//! the oracles rely on.

mod dense;
mod eig;
mod graph;
mod lu;
mod sparse;

pub use dense::DenseMatrix;
pub use eig::{
    estimate_lambda_max, symmetric_eig, symmetric_eig_with, EigOptions, PowerIterationOptions,
    SpectralDecomposition, DEFAULT_DENSE_CAP,
};
pub use graph::{gcn_adjacency, modified_laplacian, normalized_laplacian, scaled_laplacian};
pub use lu::{solve_dense, LuDecomposition};
pub use sparse::{build_csr, spmm, spmm_transpose, SparseMatrix};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("index ({row}, {col}) out of range for a {n_rows}x{n_cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("edge ({src}, {dst}) has invalid weight {weight}; adjacency weights must be finite and non-negative")]
    InvalidWeight { src: usize, dst: usize, weight: f64 },
    #[error("invalid CSR structure: {0}")]
    InvalidCsr(String),
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("matrix of size {n} exceeds the dense cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("no convergence after {iterations} iterations (last estimate {last_estimate})")]
    NotConverged {
        iterations: usize,
        last_estimate: f64,
    },
    #[error("singular system (zero pivot in column {column})")]
    Singular { column: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
