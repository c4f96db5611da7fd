pub mod bench;
pub mod filter;
pub mod gradcheck;
pub mod probe;
pub mod train;

use std::path::Path;

use arma_core::data::GraphDataset;
use arma_core::linalg::DenseMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::RunManifest;
use crate::source::load_dataset;
use crate::ValidateArgs;

pub(crate) fn manifest(
    command: &str,
    config_path: Option<&Path>,
    resolved: impl Serialize,
    data: Option<&str>,
    seed: Option<u64>,
) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        config_path: config_path.map(Path::to_path_buf),
        resolved_config: serde_json::to_value(resolved).unwrap_or(Value::Null),
        data: data.map(str::to_string),
        seed,
        out_dir: Default::default(),
        tool_version: env!("CARGO_PKG_VERSION"),
        threads: rayon::current_num_threads(),
        started_unix_s: 0.0,
        finished_unix_s: 0.0,
        outputs: Vec::new(),
    }
}

/// Column `column` of graph `graph`'s features as an `n x 1` signal.
pub(crate) fn feature_signal(
    ds: &GraphDataset,
    graph: usize,
    column: usize,
) -> Result<DenseMatrix, CliError> {
    let g = ds.graphs.get(graph).ok_or_else(|| {
        CliError::config(
            "out_of_range",
            format!(
                "graph {graph} requested but the dataset has {}",
                ds.graphs.len()
            ),
        )
    })?;
    if column >= g.features.n_cols() {
        return Err(CliError::config(
            "out_of_range",
            format!(
                "feature {column} requested but graphs have {}",
                g.features.n_cols()
            ),
        ));
    }
    Ok(DenseMatrix::column_vector(&g.features.column(column)))
}

pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let ds = load_dataset(&args.data, args.seed)?;
    ds.validate()?;
    let nodes: usize = ds.graphs.iter().map(|g| g.n_nodes()).sum();
    let edges: usize = ds.graphs.iter().map(|g| g.adjacency.nnz()).sum();
    let summary = json!({
        "name": ds.name,
        "task": ds.task,
        "graphs": ds.graphs.len(),
        "nodes": nodes,
        "stored_edges": edges,
        "features": ds.n_features(),
        "classes": ds.n_classes,
        "splits": {
            "train": ds.splits.train.len(),
            "val": ds.splits.val.len(),
            "test": ds.splits.test.len(),
        },
    });
    println!("{summary}");
    Ok(())
}
