//! Datasets: in-memory representation, the canonical on-disk format,
//! parameter checkpoints and synthetic generators.

mod canonical;
mod checkpoint;
mod knn;
mod synth;

pub use canonical::{load_canonical, save_canonical, FORMAT_VERSION};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use knn::knn_graph;
pub use synth::{
    random_knn_graph, sbm_with_edges, synth_band_signals, synth_sbm, toy_p2, BandConfig,
    EdgeBudgetConfig, SbmConfig,
};

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{DenseMatrix, SparseMatrix};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}{}: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Schema {
        file: String,
        line: Option<u64>,
        message: String,
    },
    #[error("{file}: checksum mismatch (meta.json has {expected}, file hashes to {actual})")]
    Checksum {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("{file} line {line}: index {index} out of range (bound {bound})")]
    DanglingIndex {
        file: String,
        line: u64,
        index: usize,
        bound: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(file: &str, line: Option<u64>, message: impl Into<String>) -> Self {
        DataError::Schema {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Stable identifier of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            DataError::Io { .. } => "io",
            DataError::Schema { .. } => "schema",
            DataError::Checksum { .. } => "checksum",
            DataError::DanglingIndex { .. } => "dangling_index",
            DataError::Invalid(_) => "invalid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    NodeClassification,
    SignalClassification,
    GraphClassification,
    GraphRegression,
}

impl TaskKind {
    /// Node tasks label the nodes of one graph; the others label whole graphs.
    pub fn is_node_level(self) -> bool {
        self == TaskKind::NodeClassification
    }

    pub fn is_classification(self) -> bool {
        self != TaskKind::GraphRegression
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub adjacency: Arc<SparseMatrix>,
    pub features: DenseMatrix,
}

impl Graph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    /// One row per entity, one column per regression target.
    Values(DenseMatrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.n_rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn classes(&self) -> Option<&[usize]> {
        match self {
            Targets::Classes(c) => Some(c),
            Targets::Values(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Entity indices (nodes or graphs) per split, in ascending order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn sorted(mut self) -> Self {
        self.train.sort_unstable();
        self.val.sort_unstable();
        self.test.sort_unstable();
        self
    }

    pub fn validate(&self, n_entities: usize) -> Result<(), DataError> {
        let mut seen = vec![false; n_entities];
        for split in [Split::Train, Split::Val, Split::Test] {
            for &i in self.get(split) {
                if i >= n_entities {
                    return Err(DataError::Invalid(format!(
                        "{} split references entity {i} of {n_entities}",
                        split.as_str()
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(DataError::Invalid(format!(
                        "entity {i} appears in more than one split"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub task: TaskKind,
    /// Zero for regression.
    pub n_classes: usize,
    pub graphs: Vec<Graph>,
    pub targets: Targets,
    pub splits: Splits,
    /// Generator seed, when synthetic.
    pub seed: Option<u64>,
    /// Free-form metadata carried through the canonical format.
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl GraphDataset {
    pub fn n_features(&self) -> usize {
        self.graphs.first().map_or(0, |g| g.features.n_cols())
    }

    /// Nodes for node tasks, graphs otherwise.
    pub fn n_entities(&self) -> usize {
        if self.task.is_node_level() {
            self.graphs.first().map_or(0, Graph::n_nodes)
        } else {
            self.graphs.len()
        }
    }

    pub fn n_targets(&self) -> usize {
        match &self.targets {
            Targets::Classes(_) => 1,
            Targets::Values(v) => v.n_cols(),
        }
    }

    /// Whether every graph shares one adjacency.
    pub fn shared_graph(&self) -> bool {
        self.graphs.len() > 1
            && self.graphs.iter().all(|g| {
                Arc::ptr_eq(&g.adjacency, &self.graphs[0].adjacency)
                    || g.adjacency == self.graphs[0].adjacency
            })
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.graphs.is_empty() {
            return Err(DataError::Invalid("no graphs".into()));
        }
        if self.task.is_node_level() && self.graphs.len() != 1 {
            return Err(DataError::Invalid(format!(
                "node tasks hold exactly one graph, found {}",
                self.graphs.len()
            )));
        }
        let f = self.n_features();
        for (g, graph) in self.graphs.iter().enumerate() {
            let a = &graph.adjacency;
            a.validate()
                .map_err(|e| DataError::Invalid(format!("graph {g}: {e}")))?;
            if a.n_rows() != a.n_cols() || !a.is_symmetric(1e-12) {
                return Err(DataError::Invalid(format!(
                    "graph {g}: adjacency is not symmetric"
                )));
            }
            if a.values().iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return Err(DataError::Invalid(format!(
                    "graph {g}: negative or non-finite edge weight"
                )));
            }
            if graph.features.shape() != (a.n_rows(), f) {
                return Err(DataError::Invalid(format!(
                    "graph {g}: features {:?}, expected ({}, {f})",
                    graph.features.shape(),
                    a.n_rows()
                )));
            }
            if !graph.features.is_finite() {
                return Err(DataError::Invalid(format!("graph {g}: non-finite feature")));
            }
        }
        let n = self.n_entities();
        if self.targets.len() != n {
            return Err(DataError::Invalid(format!(
                "{} targets for {n} entities",
                self.targets.len()
            )));
        }
        match (&self.targets, self.task.is_classification()) {
            (Targets::Classes(c), true) => {
                if let Some(&bad) = c.iter().find(|&&y| y >= self.n_classes) {
                    return Err(DataError::Invalid(format!(
                        "label {bad} not below class count {}",
                        self.n_classes
                    )));
                }
            }
            (Targets::Values(v), false) => {
                if !v.is_finite() {
                    return Err(DataError::Invalid("non-finite regression target".into()));
                }
            }
            _ => {
                return Err(DataError::Invalid(
                    "target kind does not match the task".into(),
                ))
            }
        }
        self.splits.validate(n)
    }

    /// Same dataset with nodes of every graph relabelled by `perm`
    /// (node `i` becomes `perm[i]`). Node-level targets and splits follow.
    pub fn permute_nodes(&self, perm: &[usize]) -> GraphDataset {
        let graphs: Vec<Graph> = self
            .graphs
            .iter()
            .map(|g| Graph {
                adjacency: Arc::new(g.adjacency.permute_symmetric(perm)),
                features: g.features.permute_rows(perm),
            })
            .collect();
        let (targets, splits) = if self.task.is_node_level() {
            let targets = match &self.targets {
                Targets::Classes(c) => {
                    let mut out = vec![0; c.len()];
                    for (i, &y) in c.iter().enumerate() {
                        out[perm[i]] = y;
                    }
                    Targets::Classes(out)
                }
                Targets::Values(v) => Targets::Values(v.permute_rows(perm)),
            };
            let map = |idx: &[usize]| idx.iter().map(|&i| perm[i]).collect();
            let splits = Splits {
                train: map(&self.splits.train),
                val: map(&self.splits.val),
                test: map(&self.splits.test),
            }
            .sorted();
            (targets, splits)
        } else {
            (self.targets.clone(), self.splits.clone())
        };
        GraphDataset {
            graphs,
            targets,
            splits,
            ..self.clone()
        }
    }
}
