use std::path::{Path, PathBuf};

use arma_core::autodiff::AutodiffError;
use arma_core::data::DataError;
use arma_core::filters::FilterError;
use arma_core::linalg::LinalgError;
use arma_core::probe::ProbeError;
use arma_core::train::TrainError;
use serde::Serialize;

/// Exit-code classes. The discriminant is the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Internal = 1,
    Config = 2,
    Data = 3,
    Divergence = 4,
    Numeric = 5,
    Resource = 6,
}

/// Printed to stderr as `{"error": {...}}`.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub category: Category,
    /// Stable within a category, e.g. `checksum` or `unstable_coefficient`.
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl CliError {
    pub fn new(category: Category, kind: &str, message: impl Into<String>) -> Self {
        Self {
            category,
            kind: kind.to_string(),
            message: message.into(),
            path: None,
        }
    }

    pub fn config(kind: &str, message: impl Into<String>) -> Self {
        Self::new(Category::Config, kind, message)
    }

    pub fn at(mut self, path: impl AsRef<Path>) -> Self {
        if self.path.is_none() {
            self.path = Some(path.as_ref().to_path_buf());
        }
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.category as i32
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }

    pub fn output(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::new(Category::Internal, "output", err.to_string()).at(path)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let path = match &e {
            DataError::Io { path, .. } => Some(path.clone()),
            _ => None,
        };
        Self {
            path,
            ..Self::new(Category::Data, e.kind(), e.to_string())
        }
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        let (category, kind) = match &e {
            LinalgError::TooLarge { .. } => (Category::Resource, "dense_cap"),
            LinalgError::Singular { .. } => (Category::Numeric, "singular"),
            LinalgError::NotConverged { .. } => (Category::Numeric, "not_converged"),
            LinalgError::InvalidWeight { .. } | LinalgError::NotSymmetric { .. } => {
                (Category::Data, "invalid")
            }
            LinalgError::InvalidParameter(_) => (Category::Config, "invalid_parameter"),
            _ => (Category::Internal, "linalg"),
        };
        Self::new(category, kind, e.to_string())
    }
}

impl From<AutodiffError> for CliError {
    fn from(e: AutodiffError) -> Self {
        Self::new(Category::Internal, "autodiff", e.to_string())
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        let kind = match &e {
            FilterError::Linalg(inner) => return inner.clone().into(),
            FilterError::UnstableCoefficient { .. } => "unstable_coefficient",
            FilterError::NotConverged { .. } => "not_converged",
            FilterError::Pole { .. } => "pole",
            FilterError::LengthMismatch { .. } | FilterError::InvalidSpec(_) => {
                return Self::config("invalid_filter", e.to_string())
            }
        };
        Self::new(Category::Numeric, kind, e.to_string())
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Linalg(inner) => inner.into(),
            ProbeError::Autodiff(inner) => inner.into(),
            other => Self::new(Category::Internal, "probe", other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(msg) => Self::config("invalid_config", msg),
            TrainError::Data(inner) => inner.into(),
            TrainError::Autodiff(inner) => inner.into(),
            TrainError::Linalg(inner) => inner.into(),
            TrainError::EmptySplit => Self::new(Category::Data, "empty_split", e.to_string()),
            TrainError::Diverged { .. } => {
                Self::new(Category::Divergence, "diverged", e.to_string())
            }
        }
    }
}
