//! ARMA graph filters and graph neural network layers on sparse operators.
//!
//! [`linalg`] builds the graph operators, [`filters`] applies fixed
//! polynomial and rational filters, [`layers`] records trainable versions on
//! the [`autodiff`] tape, [`probe`] measures empirical frequency responses,
//! [`train`] fits models and [`data`] reads, writes and synthesizes datasets.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod filters;
pub mod layers;
pub mod linalg;
pub mod probe;
pub mod rng;
pub mod train;

pub use autodiff::{Activation, ParamSet, Tape};
pub use data::{GraphDataset, TaskKind};
pub use filters::{Arma1Params, PolyFilterSpec, RationalFilterSpec};
pub use layers::{ArmaLayerConfig, GcnConfig, GraphOperators};
pub use linalg::{DenseMatrix, SparseMatrix, SpectralDecomposition};
pub use probe::ResponseReport;
pub use train::{ModelConfig, TrainReport};
