use std::collections::HashMap;
use std::sync::Arc;

use crate::autodiff::{Activation, AutodiffError, ParamId, ParamSet, Tape, Var};
use crate::data::{GraphDataset, Targets, TaskKind};
use crate::layers::{
    glorot, ArmaLayer, ArmaLayerConfig, ChebConfig, ChebLayer, ForwardMode, GcnConfig, GcnLayer,
    GraphLayer, GraphOperators,
};
use crate::linalg::DenseMatrix;
use crate::rng::{stream_rng, STREAM_INIT};

use super::{LayerKind, ModelConfig, Readout, TrainError};

/// What a model needs to know about its data before seeing any of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetShape {
    pub task: TaskKind,
    pub n_features: usize,
    /// Class count, or regression target count.
    pub n_outputs: usize,
}

impl DatasetShape {
    pub fn of(dataset: &GraphDataset) -> Self {
        Self {
            task: dataset.task,
            n_features: dataset.n_features(),
            n_outputs: if dataset.task.is_classification() {
                dataset.n_classes
            } else {
                dataset.n_targets()
            },
        }
    }
}

/// Layer structure plus the ids of its parameters; values live in a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub config: ModelConfig,
    pub shape: DatasetShape,
    pub blocks: Vec<GraphLayer>,
    pub readout: Option<(ParamId, ParamId)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub params: ParamSet,
    pub seed: u64,
}

#[allow(clippy::too_many_arguments)]
fn build_block(
    kind: LayerKind,
    config: &ModelConfig,
    params: &mut ParamSet,
    prefix: &str,
    f_in: usize,
    f_out: usize,
    activation: Activation,
    rng: &mut crate::rng::Rng,
) -> GraphLayer {
    match kind {
        LayerKind::Arma => GraphLayer::Arma(ArmaLayer::new(
            params,
            prefix,
            ArmaLayerConfig {
                stacks: config.arma.stacks,
                depth: config.arma.depth,
                f_in,
                f_out,
                activation,
                skip_dropout: config.arma.skip_dropout,
                bias: config.arma.bias,
            },
            rng,
        )),
        LayerKind::Gcn => GraphLayer::Gcn(GcnLayer::new(
            params,
            prefix,
            GcnConfig {
                gamma: config.operators.gamma,
                f_in,
                f_out,
                activation,
                bias: config.gcn.bias,
            },
            rng,
        )),
        LayerKind::Cheb => GraphLayer::Cheb(ChebLayer::new(
            params,
            prefix,
            ChebConfig {
                order: config.cheb.order,
                f_in,
                f_out,
                activation,
                bias: config.cheb.bias,
            },
            rng,
        )),
    }
}

/// Initializes parameters from the `seed`'s init stream.
pub fn build_model(
    config: &ModelConfig,
    shape: DatasetShape,
    seed: u64,
) -> Result<Model, TrainError> {
    config.validate().map_err(TrainError::Config)?;
    if config.task != shape.task {
        return Err(TrainError::Config(format!(
            "config task {:?} does not match dataset task {:?}",
            config.task, shape.task
        )));
    }
    if shape.n_features == 0 || shape.n_outputs == 0 {
        return Err(TrainError::Config(
            "dataset has no features or no outputs".into(),
        ));
    }
    let mut rng = stream_rng(seed, STREAM_INIT);
    let mut params = ParamSet::new();
    let mut blocks = Vec::new();
    let mut width = shape.n_features;
    for (i, &h) in config.hidden.iter().enumerate() {
        blocks.push(build_block(
            config.layer,
            config,
            &mut params,
            &format!("block{i}"),
            width,
            h,
            config.activation,
            &mut rng,
        ));
        width = h;
    }
    let readout = match config.resolved_readout() {
        Readout::None => {
            let i = blocks.len();
            blocks.push(build_block(
                config.layer,
                config,
                &mut params,
                &format!("block{i}"),
                width,
                shape.n_outputs,
                Activation::Identity,
                &mut rng,
            ));
            None
        }
        Readout::GlobalAverageThenDense => {
            let w = params.weight("readout.w", glorot(width, shape.n_outputs, &mut rng));
            let b = params.bias("readout.b", DenseMatrix::zeros(1, shape.n_outputs));
            Some((w, b))
        }
    };
    Ok(Model {
        arch: Architecture {
            config: config.clone(),
            shape,
            blocks,
            readout,
        },
        params,
        seed,
    })
}

/// One forward unit: a graph (or block-diagonal union of graphs) with the
/// rows of its output that are scored.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ops: GraphOperators,
    pub x: DenseMatrix,
    /// Graph boundaries in `x` for graph-level readout.
    pub segments: Option<Vec<usize>>,
    /// Output rows entering loss and metric.
    pub rows: Vec<usize>,
    /// One class per output row.
    pub labels: Vec<usize>,
    /// Regression targets of the scored rows.
    pub targets: Option<DenseMatrix>,
}

/// Dataset with graph operators precomputed once per distinct adjacency.
pub struct PreparedData<'a> {
    pub dataset: &'a GraphDataset,
    pub ops: Vec<Arc<GraphOperators>>,
}

impl<'a> PreparedData<'a> {
    pub fn new(dataset: &'a GraphDataset, config: &ModelConfig) -> Result<Self, TrainError> {
        let mut cache: HashMap<*const crate::linalg::SparseMatrix, Arc<GraphOperators>> =
            HashMap::new();
        let mut ops = Vec::with_capacity(dataset.graphs.len());
        for g in &dataset.graphs {
            let key = Arc::as_ptr(&g.adjacency);
            let entry = match cache.get(&key) {
                Some(o) => Arc::clone(o),
                None => {
                    let o = Arc::new(GraphOperators::new(&g.adjacency, &config.operators)?);
                    cache.insert(key, Arc::clone(&o));
                    o
                }
            };
            ops.push(entry);
        }
        Ok(Self { dataset, ops })
    }

    pub fn task(&self) -> TaskKind {
        self.dataset.task
    }

    /// Node tasks: the whole graph, scoring `indices`. Graph-level tasks: the
    /// union of graphs `indices`.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let d = self.dataset;
        if d.task.is_node_level() {
            let labels = d
                .targets
                .classes()
                .map(<[usize]>::to_vec)
                .unwrap_or_default();
            return Batch {
                ops: (*self.ops[0]).clone(),
                x: d.graphs[0].features.clone(),
                segments: None,
                rows: indices.to_vec(),
                labels,
                targets: None,
            };
        }
        let parts: Vec<&GraphOperators> = indices.iter().map(|&g| &*self.ops[g]).collect();
        let feats: Vec<&DenseMatrix> = indices.iter().map(|&g| &d.graphs[g].features).collect();
        let mut segments = vec![0];
        for &g in indices {
            segments.push(segments.last().unwrap() + d.graphs[g].n_nodes());
        }
        let (labels, targets) = match &d.targets {
            Targets::Classes(c) => (indices.iter().map(|&g| c[g]).collect(), None),
            Targets::Values(v) => (Vec::new(), Some(v.select_rows(indices))),
        };
        Batch {
            ops: GraphOperators::block_diagonal(&parts),
            x: DenseMatrix::vstack(&feats).expect("dataset validation guarantees equal widths"),
            segments: Some(segments),
            rows: (0..indices.len()).collect(),
            labels,
            targets,
        }
    }
}

/// Output of a recorded forward pass.
pub struct Recorded {
    pub output: Var,
    pub data_loss: Var,
    pub loss: Var,
}

impl Architecture {
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        batch: &Batch,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Var, AutodiffError> {
        let mut h = tape.constant(batch.x.clone());
        for block in &self.blocks {
            h = tape.dropout(h, self.config.dropout, mode.training, mode.rng)?;
            h = block.forward(tape, params, &batch.ops, h, mode)?;
        }
        if let Some((w, b)) = self.readout {
            let segments = batch
                .segments
                .as_deref()
                .ok_or(AutodiffError::InvalidSegments)?;
            h = tape.segment_mean(h, segments)?;
            let w = tape.param(params, w);
            h = tape.matmul(h, w)?;
            let b = tape.param(params, b);
            h = tape.add_row(h, b)?;
        }
        Ok(h)
    }

    /// Forward pass plus data loss and, when configured, the L2 penalty on
    /// every weight matrix.
    pub fn record_loss(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        batch: &Batch,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Recorded, AutodiffError> {
        let output = self.forward(tape, params, batch, mode)?;
        let data_loss = match &batch.targets {
            Some(t) => tape.mse(output, t)?,
            None => tape.masked_softmax_xent(output, &batch.labels, &batch.rows)?,
        };
        let loss = if self.config.l2_weight > 0.0 {
            let weights: Vec<Var> = params
                .weight_ids()
                .into_iter()
                .map(|id| tape.param(params, id))
                .collect();
            let penalty = tape.l2_penalty(&weights, self.config.l2_weight);
            tape.add(data_loss, penalty)?
        } else {
            data_loss
        };
        Ok(Recorded {
            output,
            data_loss,
            loss,
        })
    }
}

impl Model {
    pub fn n_parameters(&self) -> usize {
        self.params.scalar_count()
    }
}
