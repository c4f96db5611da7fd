//! Shared fixtures for the criterion benches.

use arma_core::data::{sbm_with_edges, EdgeBudgetConfig, GraphDataset};
use arma_core::layers::{GraphOperators, OperatorOptions};
use arma_core::linalg::DenseMatrix;
use arma_core::train::{LayerKind, ModelConfig};

/// Edge budgets of the scaling suite.
pub const EDGE_SIZES: [usize; 4] = [1000, 2000, 4000, 8000];

/// Four-class SBM with mean degree eight.
pub fn sbm(n_edges: usize) -> GraphDataset {
    sbm_with_edges(&EdgeBudgetConfig {
        n_nodes: n_edges / 4,
        n_edges,
        ..EdgeBudgetConfig::default()
    })
    .expect("valid edge budget")
}

pub fn operators(ds: &GraphDataset) -> GraphOperators {
    GraphOperators::new(&ds.graphs[0].adjacency, &OperatorOptions::default())
        .expect("valid adjacency")
}

pub fn features(ds: &GraphDataset) -> &DenseMatrix {
    &ds.graphs[0].features
}

pub fn model_config(layer: LayerKind) -> ModelConfig {
    ModelConfig {
        layer,
        hidden: vec![16],
        ..ModelConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_the_requested_size() {
        let ds = sbm(1000);
        assert_eq!(ds.graphs[0].n_nodes(), 250);
        assert_eq!(ds.graphs[0].adjacency.nnz(), 2000);
        assert_eq!(operators(&ds).n_nodes(), 250);
    }
}
