use arma_core::data::{sbm_with_edges, EdgeBudgetConfig};
use arma_core::train::{benchmark_epoch, build_model, DatasetShape, LayerKind, ModelConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::output::{num, Format, RunDir};
use crate::{read_json, BenchArgs};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchGraph {
    pub n_edges: usize,
    /// Defaults to `n_edges / 4`, a mean degree of eight.
    #[serde(default)]
    pub n_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSuite {
    pub graphs: Vec<BenchGraph>,
    pub layers: Vec<LayerKind>,
    pub repeats: usize,
    pub warmup: usize,
    pub classes: usize,
    pub n_features: usize,
    pub in_fraction: f64,
    pub seed: u64,
    /// Base model; `layer` is replaced per row.
    pub model: ModelConfig,
}

impl Default for BenchSuite {
    fn default() -> Self {
        Self {
            graphs: [1000, 2000, 4000, 8000]
                .map(|n_edges| BenchGraph {
                    n_edges,
                    n_nodes: None,
                })
                .to_vec(),
            layers: vec![LayerKind::Arma, LayerKind::Gcn],
            repeats: 11,
            warmup: 2,
            classes: 4,
            n_features: 16,
            in_fraction: 0.8,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

fn layer_name(kind: LayerKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

pub fn run(args: &BenchArgs, format: Format) -> Result<(), CliError> {
    let mut suite = match &args.config {
        Some(path) => read_json::<BenchSuite>(path)?,
        None => BenchSuite::default(),
    };
    if let Some(seed) = args.seed {
        suite.seed = seed;
    }
    if suite.graphs.is_empty() || suite.layers.is_empty() || suite.repeats == 0 {
        return Err(CliError::config(
            "invalid_suite",
            "need at least one graph, one layer and one repeat",
        ));
    }

    let mut rows = Vec::new();
    for g in &suite.graphs {
        let n_nodes = g.n_nodes.unwrap_or(g.n_edges / 4);
        let ds = sbm_with_edges(&EdgeBudgetConfig {
            n_nodes,
            classes: suite.classes,
            n_edges: g.n_edges,
            in_fraction: suite.in_fraction,
            n_features: suite.n_features,
            seed: suite.seed,
        })?;
        let mut times = Vec::new();
        for &layer in &suite.layers {
            let cfg = ModelConfig {
                layer,
                ..suite.model.clone()
            };
            let model = build_model(&cfg, DatasetShape::of(&ds), suite.seed)?;
            let timing = benchmark_epoch(&model, &ds, suite.repeats, suite.warmup)?;
            times.push((layer, timing));
        }
        let gcn_ms = times
            .iter()
            .find(|(l, _)| *l == LayerKind::Gcn)
            .map(|(_, t)| t.median_ms);
        for (layer, t) in &times {
            let ratio = gcn_ms
                .filter(|_| *layer == LayerKind::Arma)
                .map(|g| t.median_ms / g);
            rows.push(vec![
                layer_name(*layer),
                n_nodes.to_string(),
                g.n_edges.to_string(),
                num(t.median_ms),
                num(t.iqr_ms),
                ratio.map(num).unwrap_or_default(),
            ]);
        }
    }

    let mut out = RunDir::create(&args.out, format)?;
    let header = [
        "layer",
        "n_nodes",
        "n_edges",
        "epoch_ms_median",
        "epoch_ms_iqr",
        "arma_gcn_ratio",
    ];
    let file = out.write_table("bench", &header, &rows)?;
    out.finish(super::manifest(
        "bench",
        args.config.as_deref(),
        &suite,
        None,
        Some(suite.seed),
    ))?;
    println!(
        "{}",
        json!({ "command": "bench", "rows": rows.len(), "output": file })
    );
    Ok(())
}
