//! Trainable graph layers: GCS/ARMA, GCN and Chebyshev, recorded on a [`Tape`].
//!
//! Layers hold [`ParamId`]s into a caller-owned [`ParamSet`]; the same layer
//! can be replayed on any number of tapes.

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, AutodiffError, ParamId, ParamSet, Tape, Var};
use crate::linalg::{
    estimate_lambda_max, gcn_adjacency, modified_laplacian, normalized_laplacian, scaled_laplacian,
    DenseMatrix, LinalgError, PowerIterationOptions, SparseMatrix,
};
use crate::rng::Rng;

/// Uniform Glorot initialization, `±√(6/(fan_in + fan_out))`.
pub fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols).map(|_| rng.random_range(-r..r)).collect();
    DenseMatrix::from_vec(rows, cols, values).expect("length matches shape")
}

/// `S · X · W`, multiplying by `W` first when that shrinks the sparse product.
fn propagate(
    tape: &mut Tape,
    op: &Arc<SparseMatrix>,
    x: Var,
    w: Var,
) -> Result<Var, AutodiffError> {
    let (f_in, f_out) = tape.value(w).shape();
    if f_out <= f_in {
        let xw = tape.matmul(x, w)?;
        tape.spmm(op, xw)
    } else {
        let sx = tape.spmm(op, x)?;
        tape.matmul(sx, w)
    }
}

fn maybe_bias(
    tape: &mut Tape,
    params: &ParamSet,
    x: Var,
    bias: Option<ParamId>,
) -> Result<Var, AutodiffError> {
    match bias {
        Some(b) => {
            let b = tape.param(params, b);
            tape.add_row(x, b)
        }
        None => Ok(x),
    }
}

/// Every operator a layer may ask for, built once per graph.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    pub laplacian: Arc<SparseMatrix>,
    /// `I − L`.
    pub modified: Arc<SparseMatrix>,
    /// `D̃^{-1/2}(A + γI)D̃^{-1/2}`.
    pub gcn: Arc<SparseMatrix>,
    /// `2L/λ_max − I`.
    pub scaled: Arc<SparseMatrix>,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorOptions {
    pub gamma: f64,
    pub lambda_max: f64,
    /// Replace `lambda_max` by a power-iteration estimate per graph.
    pub estimate_lambda_max: bool,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda_max: 2.0,
            estimate_lambda_max: false,
        }
    }
}

impl GraphOperators {
    pub fn new(adjacency: &SparseMatrix, opts: &OperatorOptions) -> Result<Self, LinalgError> {
        let laplacian = normalized_laplacian(adjacency);
        let lambda_max = if opts.estimate_lambda_max {
            estimate_lambda_max(&laplacian, &PowerIterationOptions::default())?
        } else {
            opts.lambda_max
        };
        Ok(Self {
            modified: Arc::new(modified_laplacian(&laplacian)),
            gcn: Arc::new(gcn_adjacency(adjacency, opts.gamma)?),
            scaled: Arc::new(scaled_laplacian(&laplacian, lambda_max)?),
            laplacian: Arc::new(laplacian),
            lambda_max,
        })
    }

    /// Operators of the disjoint union of several graphs. Each block keeps
    /// its own `λ_max` scaling.
    pub fn block_diagonal(parts: &[&GraphOperators]) -> Self {
        fn stack(
            parts: &[&GraphOperators],
            f: impl Fn(&GraphOperators) -> &SparseMatrix,
        ) -> Arc<SparseMatrix> {
            let blocks: Vec<&SparseMatrix> = parts.iter().map(|p| f(p)).collect();
            Arc::new(SparseMatrix::block_diagonal(&blocks))
        }
        Self {
            laplacian: stack(parts, |p| &p.laplacian),
            modified: stack(parts, |p| &p.modified),
            gcn: stack(parts, |p| &p.gcn),
            scaled: stack(parts, |p| &p.scaled),
            lambda_max: parts.iter().map(|p| p.lambda_max).fold(0.0, f64::max),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.laplacian.n_rows()
    }

    /// Same operators on nodes relabelled by `perm` (node `i` becomes `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            laplacian: Arc::new(self.laplacian.permute_symmetric(perm)),
            modified: Arc::new(self.modified.permute_symmetric(perm)),
            gcn: Arc::new(self.gcn.permute_symmetric(perm)),
            scaled: Arc::new(self.scaled.permute_symmetric(perm)),
            lambda_max: self.lambda_max,
        }
    }
}

/// Parameters of one GCS stack. `W_in` drives step 1, `W_shared` every later
/// step, and `V` the skip term of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct GcsParams {
    pub w_in: ParamId,
    pub w_shared: Option<ParamId>,
    pub v: ParamId,
    pub bias: Option<ParamId>,
}

impl GcsParams {
    fn weight_at(&self, t: usize) -> ParamId {
        if t == 1 {
            self.w_in
        } else {
            self.w_shared
                .expect("stack built with depth 1 has no shared weight")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaLayerConfig {
    pub stacks: usize,
    pub depth: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub activation: Activation,
    pub skip_dropout: f64,
    pub bias: bool,
}

/// Weight count of an ARMA layer, biases excluded.
pub fn param_count(config: &ArmaLayerConfig) -> usize {
    let per_stack = 2 * config.f_in * config.f_out
        + if config.depth >= 2 {
            config.f_out * config.f_out
        } else {
            0
        };
    config.stacks * per_stack
}

/// Per-call forward settings.
pub struct ForwardMode<'a> {
    pub training: bool,
    pub rng: &'a mut Rng,
}

/// One GCS step: `σ(L̃ X̄ W + dropout(X) V)`.
#[allow(clippy::too_many_arguments)]
pub fn gcs_forward(
    tape: &mut Tape,
    params: &ParamSet,
    l_tilde: &Arc<SparseMatrix>,
    x_prev: Var,
    x_skip: Var,
    gcs: &GcsParams,
    t: usize,
    activation: Activation,
    skip_dropout: f64,
    mode: &mut ForwardMode<'_>,
) -> Result<Var, AutodiffError> {
    let w = tape.param(params, gcs.weight_at(t));
    let prop = propagate(tape, l_tilde, x_prev, w)?;
    gcs_finish(
        tape,
        params,
        prop,
        x_skip,
        gcs,
        activation,
        skip_dropout,
        mode,
    )
}

/// Adds the skip term, bias and activation to a propagated `L̃X̄W`.
#[allow(clippy::too_many_arguments)]
fn gcs_finish(
    tape: &mut Tape,
    params: &ParamSet,
    prop: Var,
    x_skip: Var,
    gcs: &GcsParams,
    activation: Activation,
    skip_dropout: f64,
    mode: &mut ForwardMode<'_>,
) -> Result<Var, AutodiffError> {
    let v = tape.param(params, gcs.v);
    let skip_in = tape.dropout(x_skip, skip_dropout, mode.training, mode.rng)?;
    let skip = tape.matmul(skip_in, v)?;
    let pre = tape.add(prop, skip)?;
    let pre = maybe_bias(tape, params, pre, gcs.bias)?;
    Ok(tape.activation(pre, activation))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmaLayer {
    pub config: ArmaLayerConfig,
    pub stacks: Vec<GcsParams>,
}

impl ArmaLayer {
    /// Registers `K` Glorot-initialized stacks under `prefix`.
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        config: ArmaLayerConfig,
        rng: &mut Rng,
    ) -> Self {
        assert!(
            config.stacks >= 1 && config.depth >= 1,
            "ARMA layer needs K ≥ 1 and T ≥ 1"
        );
        let (fi, fo) = (config.f_in, config.f_out);
        let stacks = (0..config.stacks)
            .map(|k| {
                let p = format!("{prefix}.stack{k}");
                let w_in = params.weight(format!("{p}.w_in"), glorot(fi, fo, rng));
                let w_shared = (config.depth >= 2)
                    .then(|| params.weight(format!("{p}.w_shared"), glorot(fo, fo, rng)));
                let v = params.weight(format!("{p}.v"), glorot(fi, fo, rng));
                let bias = config
                    .bias
                    .then(|| params.bias(format!("{p}.bias"), DenseMatrix::zeros(1, fo)));
                GcsParams {
                    w_in,
                    w_shared,
                    v,
                    bias,
                }
            })
            .collect();
        Self { config, stacks }
    }

    /// Outputs of stack `k` after each of its `T` steps.
    pub fn stack_depths(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        l_tilde: &Arc<SparseMatrix>,
        x: Var,
        k: usize,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Vec<Var>, AutodiffError> {
        self.run_stack(tape, params, l_tilde, x, None, k, mode)
    }

    /// `lx`, when given, is `L̃X` shared by the first step of every stack.
    #[allow(clippy::too_many_arguments)]
    fn run_stack(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        l_tilde: &Arc<SparseMatrix>,
        x: Var,
        lx: Option<Var>,
        k: usize,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Vec<Var>, AutodiffError> {
        let c = &self.config;
        let gcs = &self.stacks[k];
        let mut outs = Vec::with_capacity(c.depth);
        let mut cur = x;
        for t in 1..=c.depth {
            cur = match lx {
                Some(lx) if t == 1 => {
                    let w = tape.param(params, gcs.w_in);
                    let prop = tape.matmul(lx, w)?;
                    gcs_finish(
                        tape,
                        params,
                        prop,
                        x,
                        gcs,
                        c.activation,
                        c.skip_dropout,
                        mode,
                    )?
                }
                _ => gcs_forward(
                    tape,
                    params,
                    l_tilde,
                    cur,
                    x,
                    gcs,
                    t,
                    c.activation,
                    c.skip_dropout,
                    mode,
                )?,
            };
            outs.push(cur);
        }
        Ok(outs)
    }

    /// `(1/K) Σ_k X̄_k⁽ᵀ⁾`, summed in stack order.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        l_tilde: &Arc<SparseMatrix>,
        x: Var,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Var, AutodiffError> {
        let k_count = self.stacks.len();
        // Every stack starts by propagating the same X; one shared L̃X beats
        // K products L̃(XW_k) unless the layer narrows the features K-fold.
        let lx = if k_count > 1 && self.config.f_in <= k_count * self.config.f_out {
            Some(tape.spmm(l_tilde, x)?)
        } else {
            None
        };
        let mut acc: Option<Var> = None;
        for k in 0..k_count {
            let last = *self
                .run_stack(tape, params, l_tilde, x, lx, k, mode)?
                .last()
                .expect("depth ≥ 1");
            acc = Some(match acc {
                None => last,
                Some(a) => tape.add(a, last)?,
            });
        }
        let sum = acc.expect("K ≥ 1");
        Ok(if k_count == 1 {
            sum
        } else {
            tape.scale(sum, 1.0 / k_count as f64)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub gamma: f64,
    pub f_in: usize,
    pub f_out: usize,
    pub activation: Activation,
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub config: GcnConfig,
    pub w: ParamId,
    pub bias: Option<ParamId>,
}

impl GcnLayer {
    pub fn new(params: &mut ParamSet, prefix: &str, config: GcnConfig, rng: &mut Rng) -> Self {
        let w = params.weight(
            format!("{prefix}.w"),
            glorot(config.f_in, config.f_out, rng),
        );
        let bias = config.bias.then(|| {
            params.bias(
                format!("{prefix}.bias"),
                DenseMatrix::zeros(1, config.f_out),
            )
        });
        Self { config, w, bias }
    }

    /// `σ(Â X W)`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        a_hat: &Arc<SparseMatrix>,
        x: Var,
    ) -> Result<Var, AutodiffError> {
        let w = tape.param(params, self.w);
        let out = propagate(tape, a_hat, x, w)?;
        let out = maybe_bias(tape, params, out, self.bias)?;
        Ok(tape.activation(out, self.config.activation))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChebConfig {
    /// Number of Chebyshev terms, one weight matrix each.
    pub order: usize,
    pub f_in: usize,
    pub f_out: usize,
    pub activation: Activation,
    pub bias: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebLayer {
    pub config: ChebConfig,
    pub weights: Vec<ParamId>,
    pub bias: Option<ParamId>,
}

impl ChebLayer {
    pub fn new(params: &mut ParamSet, prefix: &str, config: ChebConfig, rng: &mut Rng) -> Self {
        assert!(config.order >= 1, "Chebyshev layer needs at least one term");
        let weights = (0..config.order)
            .map(|k| {
                params.weight(
                    format!("{prefix}.w{k}"),
                    glorot(config.f_in, config.f_out, rng),
                )
            })
            .collect();
        let bias = config.bias.then(|| {
            params.bias(
                format!("{prefix}.bias"),
                DenseMatrix::zeros(1, config.f_out),
            )
        });
        Self {
            config,
            weights,
            bias,
        }
    }

    /// `σ(Σ_k T_k(L̂) X W_k)` with `L̂` the scaled Laplacian.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        l_scaled: &Arc<SparseMatrix>,
        x: Var,
    ) -> Result<Var, AutodiffError> {
        let w0 = tape.param(params, self.weights[0]);
        let mut out = tape.matmul(x, w0)?;
        let mut prev = x;
        let mut cur = x;
        for (k, &wk) in self.weights.iter().enumerate().skip(1) {
            let next = if k == 1 {
                tape.spmm(l_scaled, x)?
            } else {
                let lt = tape.spmm(l_scaled, cur)?;
                let lt2 = tape.scale(lt, 2.0);
                tape.sub(lt2, prev)?
            };
            let w = tape.param(params, wk);
            let term = tape.matmul(next, w)?;
            out = tape.add(out, term)?;
            prev = cur;
            cur = next;
        }
        let out = maybe_bias(tape, params, out, self.bias)?;
        Ok(tape.activation(out, self.config.activation))
    }
}

/// Any of the three layer kinds, dispatched onto the matching operator.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphLayer {
    Arma(ArmaLayer),
    Gcn(GcnLayer),
    Cheb(ChebLayer),
}

impl GraphLayer {
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        ops: &GraphOperators,
        x: Var,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Var, AutodiffError> {
        match self {
            GraphLayer::Arma(l) => l.forward(tape, params, &ops.modified, x, mode),
            GraphLayer::Gcn(l) => l.forward(tape, params, &ops.gcn, x),
            GraphLayer::Cheb(l) => l.forward(tape, params, &ops.scaled, x),
        }
    }

    pub fn f_out(&self) -> usize {
        match self {
            GraphLayer::Arma(l) => l.config.f_out,
            GraphLayer::Gcn(l) => l.config.f_out,
            GraphLayer::Cheb(l) => l.config.f_out,
        }
    }
}
