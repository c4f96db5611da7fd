use std::sync::Arc;

use arma_core::autodiff::{grad_check, AutodiffError, GradCheckOptions};
use arma_core::data::{
    random_knn_graph, synth_band_signals, synth_sbm, BandConfig, GraphDataset, SbmConfig, Targets,
};
use arma_core::layers::ForwardMode;
use arma_core::linalg::DenseMatrix;
use arma_core::rng::stream_rng;
use arma_core::train::{build_model, DatasetShape, ModelConfig, PreparedData};
use arma_core::TaskKind;
use serde_json::json;

use crate::error::{Category, CliError};
use crate::output::{num, Format, RunDir};
use crate::{read_json, GradcheckArgs};

pub const TOLERANCE: f64 = 1e-4;

pub const BUNDLED: [(&str, &str); 3] = [
    ("gcn", include_str!("../../configs/gradcheck/gcn.json")),
    ("cheb", include_str!("../../configs/gradcheck/cheb.json")),
    ("arma", include_str!("../../configs/gradcheck/arma.json")),
];

/// Ten nodes for node tasks; six signals on a twelve-node graph otherwise.
fn tiny_dataset(task: TaskKind, seed: u64) -> Result<GraphDataset, CliError> {
    if task.is_node_level() {
        return Ok(synth_sbm(&SbmConfig {
            n_per_class: 5,
            classes: 2,
            p_in: 0.6,
            p_out: 0.15,
            train_per_class: 3,
            seed,
            ..SbmConfig::default()
        })?);
    }
    let adj = Arc::new(random_knn_graph(12, 3, seed)?);
    let mut ds = synth_band_signals(
        adj,
        &BandConfig {
            count: 6,
            seed,
            ..BandConfig::default()
        },
    )?;
    ds.task = task;
    if task == TaskKind::GraphRegression {
        let classes = ds
            .targets
            .classes()
            .expect("band signals are labelled")
            .to_vec();
        ds.targets = Targets::Values(DenseMatrix::column_vector(
            &classes.iter().map(|&c| c as f64).collect::<Vec<_>>(),
        ));
        ds.n_classes = 0;
    }
    Ok(ds)
}

struct Row {
    name: String,
    layer: String,
    max_relative_error: f64,
    coordinates: usize,
    kinks_skipped: usize,
}

fn check(name: &str, cfg: &ModelConfig, seed: u64) -> Result<Row, CliError> {
    let ds = tiny_dataset(cfg.task, seed)?;
    let mut model = build_model(cfg, DatasetShape::of(&ds), seed)?;
    let data = PreparedData::new(&ds, cfg)?;
    let rows: Vec<usize> = if cfg.task.is_node_level() {
        ds.splits.train.clone()
    } else {
        (0..ds.n_entities().min(4)).collect()
    };
    let batch = data.batch(&rows);
    let arch = model.arch.clone();
    let report = grad_check(
        |tape, params| -> Result<_, AutodiffError> {
            let mut rng = stream_rng(seed, 0);
            let mut mode = ForwardMode {
                training: false,
                rng: &mut rng,
            };
            Ok(arch.record_loss(tape, params, &batch, &mut mode)?.loss)
        },
        &mut model.params,
        &GradCheckOptions {
            seed,
            ..GradCheckOptions::default()
        },
    )?;
    Ok(Row {
        name: name.to_string(),
        layer: serde_json::to_value(cfg.layer)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        max_relative_error: report.max_relative_error,
        coordinates: report.coordinates_checked,
        kinks_skipped: report.kinks_skipped,
    })
}

pub fn run(args: &GradcheckArgs, format: Format) -> Result<(), CliError> {
    let mut configs = Vec::new();
    if args.config.is_empty() {
        for (name, text) in BUNDLED {
            let cfg: ModelConfig = serde_json::from_str(text)
                .map_err(|e| CliError::config("schema", format!("bundled {name}: {e}")))?;
            configs.push((name.to_string(), cfg));
        }
    } else {
        for path in &args.config {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            configs.push((name, read_json::<ModelConfig>(path)?));
        }
    }
    for (_, cfg) in &mut configs {
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
    }

    let mut rows = Vec::new();
    for (name, cfg) in &configs {
        rows.push(check(name, cfg, cfg.seed)?);
    }
    let header = [
        "config",
        "layer",
        "max_relative_error",
        "coordinates_checked",
        "kinks_skipped",
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.layer.clone(),
                num(r.max_relative_error),
                r.coordinates.to_string(),
                r.kinks_skipped.to_string(),
            ]
        })
        .collect();
    match format {
        Format::Csv => {
            println!("{}", header.join(","));
            for row in &table {
                println!("{}", row.join(","));
            }
        }
        Format::Json => {
            let records: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({
                        "config": r.name,
                        "layer": r.layer,
                        "max_relative_error": r.max_relative_error,
                        "coordinates_checked": r.coordinates,
                        "kinks_skipped": r.kinks_skipped,
                    })
                })
                .collect();
            println!("{}", serde_json::Value::from(records));
        }
    }
    if let Some(dir) = &args.out {
        let mut out = RunDir::create(dir, format)?;
        out.write_table("gradcheck", &header, &table)?;
        let resolved: Vec<_> = configs
            .iter()
            .map(|(name, cfg)| json!({ "name": name, "config": cfg }))
            .collect();
        out.finish(super::manifest(
            "gradcheck",
            args.config.first().map(|p| p.as_path()),
            resolved,
            None,
            args.seed,
        ))?;
    }

    let failing: Vec<&Row> = rows
        .iter()
        .filter(|r| r.max_relative_error.is_nan() || r.max_relative_error > TOLERANCE)
        .collect();
    if failing.is_empty() {
        return Ok(());
    }
    let worst = failing
        .iter()
        .map(|r| format!("{} {:.2e}", r.name, r.max_relative_error));
    Err(CliError::new(
        Category::Numeric,
        "gradient_mismatch",
        format!(
            "relative error above {TOLERANCE:e}: {}",
            worst.collect::<Vec<_>>().join(", ")
        ),
    ))
}
