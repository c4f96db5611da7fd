//! Reverse-mode differentiation over dense matrices with constant sparse
//! operators: just enough surface to train the graph layers end to end.

mod gradcheck;
mod param;
mod tape;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use param::{ParamId, ParamKind, ParamSet, Parameter};
pub use tape::{Tape, Var};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidDropoutRate(f64),
    #[error("loss must be 1x1, got {shape:?}")]
    NonScalarLoss { shape: (usize, usize) },
    #[error("tape already consumed by a backward pass")]
    StaleTape,
    #[error("empty mask")]
    EmptyMask,
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("segment offsets must start at 0, end at the row count and be strictly increasing")]
    InvalidSegments,
    #[error("finite-difference epsilon must lie in [1e-7, 1e-4], got {0}")]
    InvalidEpsilon(f64),
}

/// Deliberate backward corruption, compiled only with the `fault-injection`
/// feature. Used as a negative control for gradient checking.
#[cfg(feature = "fault-injection")]
pub mod fault {
    use std::cell::Cell;

    thread_local! {
        static CORRUPT: Cell<bool> = const { Cell::new(false) };
    }

    /// Scales every matmul right-operand gradient by 1.1 on this thread.
    pub fn set_corrupt_backward(on: bool) {
        CORRUPT.with(|c| c.set(on));
    }

    pub(crate) fn corrupt_backward() -> bool {
        CORRUPT.with(|c| c.get())
    }
}
