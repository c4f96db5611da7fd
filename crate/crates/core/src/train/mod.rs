//! Model assembly, Adam, early-stopped training, evaluation and timing.

mod config;
mod model;
mod optim;
mod run;

pub use config::{ArmaOptions, ChebOptions, GcnOptions, LayerKind, ModelConfig, Readout};
pub use model::{build_model, Architecture, Batch, DatasetShape, Model, PreparedData, Recorded};
pub use optim::Adam;
pub use run::{
    accuracy, benchmark_epoch, evaluate, evaluate_indices, train, train_epoch, EpochRecord,
    EpochRngs, EpochTiming, Evaluation, TrainReport, REPORT_SCHEMA_VERSION,
};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::data::DataError;
use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("loss became non-finite at epoch {epoch}")]
    Diverged {
        epoch: usize,
        report: Box<TrainReport>,
    },
    #[error("split is empty")]
    EmptySplit,
}
