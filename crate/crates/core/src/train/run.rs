use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Tape};
use crate::data::{GraphDataset, Split};
use crate::layers::ForwardMode;
use crate::linalg::DenseMatrix;
use crate::rng::{stream_rng, Rng, STREAM_DROPOUT, STREAM_SHUFFLE};

use super::{Adam, Model, ModelConfig, PreparedData, TrainError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Fraction of `rows` whose argmax (lowest index on ties) equals the label.
pub fn accuracy(logits: &DenseMatrix, labels: &[usize], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    let correct = rows
        .iter()
        .filter(|&&i| {
            let row = logits.row(i);
            let best = row
                .iter()
                .enumerate()
                .fold(0, |best, (c, &v)| if v > row[best] { c } else { best });
            best == labels[i]
        })
        .count();
    correct as f64 / rows.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    /// Accuracy for classification, MSE for regression.
    pub metric: f64,
    pub count: usize,
}

fn metric_of(batch: &super::Batch, output: &DenseMatrix, data_loss: f64) -> f64 {
    match &batch.targets {
        Some(_) => data_loss,
        None => accuracy(output, &batch.labels, &batch.rows),
    }
}

/// Loss and metric on `indices` in evaluation mode, averaged over entities.
pub fn evaluate_indices(
    model: &Model,
    data: &PreparedData<'_>,
    indices: &[usize],
) -> Result<Evaluation, TrainError> {
    if indices.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let chunk = if data.task().is_node_level() {
        indices.len()
    } else {
        model.arch.config.batch_size
    };
    let mut rng = stream_rng(0, 0);
    let (mut loss, mut metric) = (0.0, 0.0);
    for part in indices.chunks(chunk) {
        let batch = data.batch(part);
        let mut tape = Tape::new();
        let mut mode = ForwardMode {
            training: false,
            rng: &mut rng,
        };
        let rec = model
            .arch
            .record_loss(&mut tape, &model.params, &batch, &mut mode)?;
        let l = tape.scalar(rec.data_loss);
        let w = part.len() as f64;
        loss += w * l;
        metric += w * metric_of(&batch, tape.value(rec.output), l);
    }
    let n = indices.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        metric: metric / n,
        count: indices.len(),
    })
}

pub fn evaluate(
    model: &Model,
    data: &PreparedData<'_>,
    split: Split,
) -> Result<Evaluation, TrainError> {
    evaluate_indices(model, data, data.dataset.splits.get(split))
}

/// Per-run RNG state for dropout and batch order.
pub struct EpochRngs {
    pub dropout: Rng,
    pub shuffle: Rng,
}

impl EpochRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            dropout: stream_rng(seed, STREAM_DROPOUT),
            shuffle: stream_rng(seed, STREAM_SHUFFLE),
        }
    }
}

/// One pass over the training split: a single full-batch update for node
/// tasks, shuffled mini-batches otherwise. Returns training loss (including
/// any L2 term) and the training-mode metric.
pub fn train_epoch(
    model: &mut Model,
    data: &PreparedData<'_>,
    adam: &mut Adam,
    rngs: &mut EpochRngs,
) -> Result<(f64, f64), TrainError> {
    let mut order = data.dataset.splits.train.clone();
    if order.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let chunk = if data.task().is_node_level() {
        order.len()
    } else {
        order.shuffle(&mut rngs.shuffle);
        model.arch.config.batch_size
    };
    let (mut loss, mut metric) = (0.0, 0.0);
    for part in order.chunks(chunk) {
        let batch = data.batch(part);
        let mut tape = Tape::new();
        let mut mode = ForwardMode {
            training: true,
            rng: &mut rngs.dropout,
        };
        let rec = model
            .arch
            .record_loss(&mut tape, &model.params, &batch, &mut mode)?;
        let total = tape.scalar(rec.loss);
        let data_loss = tape.scalar(rec.data_loss);
        let w = part.len() as f64;
        loss += w * total;
        metric += w * metric_of(&batch, tape.value(rec.output), data_loss);
        if !total.is_finite() {
            return Ok((f64::NAN, f64::NAN));
        }
        tape.backward(rec.loss, &mut model.params)?;
        adam.step(&mut model.params);
    }
    let n = order.len() as f64;
    Ok((loss / n, metric / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_metric: f64,
    pub val_loss: f64,
    pub val_metric: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub dataset: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub metric: String,
    pub n_parameters: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_metric: f64,
    pub test_metric: Option<f64>,
    pub stopped_early: bool,
    pub diverged: bool,
}

impl TrainReport {
    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for e in &mut r.epochs {
            e.seconds = 0.0;
        }
        r
    }

    pub fn write_curves_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epoch",
            "train_loss",
            "train_metric",
            "val_loss",
            "val_metric",
            "seconds",
        ])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:?}", e.train_loss),
                format!("{:?}", e.train_metric),
                format!("{:?}", e.val_loss),
                format!("{:?}", e.val_metric),
                format!("{:?}", e.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Classification improves upward, regression downward; equal metrics
/// defer to the lower validation loss.
fn improves(
    classification: bool,
    metric: f64,
    loss: f64,
    best_metric: f64,
    best_loss: f64,
) -> bool {
    let (m, b) = if classification {
        (metric, best_metric)
    } else {
        (-metric, -best_metric)
    };
    m > b || (m == b && loss < best_loss)
}

/// Trains with early stopping on the validation metric (training metric
/// when there is no validation split), restores the best parameters and
/// scores the test split.
pub fn train(
    model: &mut Model,
    dataset: &GraphDataset,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    dataset.validate()?;
    let config = model.arch.config.clone();
    let data = PreparedData::new(dataset, &config)?;
    let classification = dataset.task.is_classification();
    let mut adam = Adam::new(&model.params, config.learning_rate);
    let mut rngs = EpochRngs::new(seed);
    let has_val = !dataset.splits.val.is_empty();
    let mut report = TrainReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: dataset.name.clone(),
        seed,
        config: config.clone(),
        metric: if classification { "accuracy" } else { "mse" }.into(),
        n_parameters: model.n_parameters(),
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_metric: if classification {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        },
        test_metric: None,
        stopped_early: false,
        diverged: false,
    };
    let mut best_loss = f64::INFINITY;
    let mut best_params: ParamSet = model.params.clone();
    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let (train_loss, train_metric) = train_epoch(model, &data, &mut adam, &mut rngs)?;
        let (val_loss, val_metric) = if has_val {
            let e = evaluate(model, &data, Split::Val)?;
            (e.loss, e.metric)
        } else {
            (train_loss, train_metric)
        };
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_metric,
            val_loss,
            val_metric,
            seconds: start.elapsed().as_secs_f64(),
        });
        if !train_loss.is_finite() || !val_loss.is_finite() {
            report.diverged = true;
            return Err(TrainError::Diverged {
                epoch,
                report: Box::new(report),
            });
        }
        if improves(
            classification,
            val_metric,
            val_loss,
            report.best_val_metric,
            best_loss,
        ) {
            report.best_epoch = epoch;
            report.best_val_metric = val_metric;
            best_loss = val_loss;
            best_params.copy_values_from(&model.params);
        } else if epoch - report.best_epoch >= config.patience {
            report.stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    model.params.copy_values_from(&best_params);
    if !dataset.splits.test.is_empty() {
        report.test_metric = Some(evaluate(model, &data, Split::Test)?.metric);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub samples_ms: Vec<f64>,
    pub median_ms: f64,
    pub iqr_ms: f64,
    /// Stored entries of each operator the model reads.
    pub operator_nnz: Vec<(String, usize)>,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Wall-clock of full training epochs on a copy of `model`, after `warmup`
/// untimed epochs.
pub fn benchmark_epoch(
    model: &Model,
    dataset: &GraphDataset,
    repeats: usize,
    warmup: usize,
) -> Result<EpochTiming, TrainError> {
    assert!(repeats >= 1, "need at least one timed epoch");
    let mut model = model.clone();
    let data = PreparedData::new(dataset, &model.arch.config)?;
    let mut adam = Adam::new(&model.params, model.arch.config.learning_rate);
    let mut rngs = EpochRngs::new(model.seed);
    for _ in 0..warmup {
        train_epoch(&mut model, &data, &mut adam, &mut rngs)?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        train_epoch(&mut model, &data, &mut adam, &mut rngs)?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let op = &data.ops[0];
    let operator_nnz = match model.arch.config.layer {
        super::LayerKind::Arma => vec![("modified_laplacian".to_string(), op.modified.nnz())],
        super::LayerKind::Gcn => vec![("gcn_adjacency".to_string(), op.gcn.nnz())],
        super::LayerKind::Cheb => vec![("scaled_laplacian".to_string(), op.scaled.nnz())],
    };
    Ok(EpochTiming {
        median_ms: quantile(&sorted, 0.5),
        iqr_ms: quantile(&sorted, 0.75) - quantile(&sorted, 0.25),
        samples_ms: samples,
        operator_nnz,
    })
}
