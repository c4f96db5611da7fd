use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::{Activation, AutodiffError, ParamId, ParamSet};
use crate::linalg::{spmm, spmm_transpose, DenseMatrix, SparseMatrix};

/// Handle to a recorded value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Spmm(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Dropout(Var, Vec<f64>),
    SegmentMean(Var, Vec<usize>),
    AddRow(Var, Var),
    Sum(Var),
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        rows: Vec<usize>,
        probs: DenseMatrix,
    },
    Mse {
        pred: Var,
        target: DenseMatrix,
    },
    L2(Vec<Var>, f64),
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward pass. Nodes are pushed after their
/// inputs, so reverse insertion order is a valid backward schedule.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    consumed: bool,
}

fn shape_err(op: &'static str, a: &DenseMatrix, b: &DenseMatrix) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    /// Which inputs of recorded ReLUs are positive, in recording order.
    /// Two passes with different patterns lie on opposite sides of a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Act(a, Activation::Relu) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.nodes[a.0].value.values().iter().map(|&v| v > 0.0))
            .collect()
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.get(0, 0)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Leaf bound to a parameter. Repeated calls return the same node.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(params.get(id).value.clone(), Op::Param(id), true);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va.matmul(vb).map_err(|_| shape_err("matmul", va, vb))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Product with a constant sparse operator.
    pub fn spmm(&mut self, s: &Arc<SparseMatrix>, x: Var) -> Result<Var, AutodiffError> {
        let vx = self.value(x);
        let out = spmm(s, vx).map_err(|_| AutodiffError::ShapeMismatch {
            op: "spmm",
            left: (s.n_rows(), s.n_cols()),
            right: vx.shape(),
        })?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Spmm(Arc::clone(s), x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va.add(vb).map_err(|_| shape_err("add", va, vb))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// `a − b`, recorded as `a + (−1)·b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scale(c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        if kind == Activation::Identity {
            return a;
        }
        let out = self.value(a).map(|v| kind.apply(v));
        let rg = self.rg(a);
        self.push(out, Op::Act(a, kind), rg)
    }

    /// Inverted dropout: kept entries are scaled by `1/(1−rate)` during
    /// training; outside training (or at rate 0) the input is returned as is.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, AutodiffError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::InvalidDropoutRate(rate));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let va = self.value(a);
        let mut out = va.clone();
        for (o, m) in out.values_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::Dropout(a, mask), rg))
    }

    /// Mean over all rows, giving a `1×F` row.
    pub fn row_mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let n = self.value(a).n_rows();
        self.segment_mean(a, &[0, n])
    }

    /// Per-segment row means. `offsets` has one more entry than there are
    /// segments; segment `g` covers rows `offsets[g]..offsets[g+1]`.
    pub fn segment_mean(&mut self, a: Var, offsets: &[usize]) -> Result<Var, AutodiffError> {
        let va = self.value(a);
        let valid = offsets.len() >= 2
            && offsets[0] == 0
            && *offsets.last().unwrap() == va.n_rows()
            && offsets.windows(2).all(|w| w[0] < w[1]);
        if !valid {
            return Err(AutodiffError::InvalidSegments);
        }
        let f = va.n_cols();
        let mut out = DenseMatrix::zeros(offsets.len() - 1, f);
        for g in 0..offsets.len() - 1 {
            let inv = 1.0 / (offsets[g + 1] - offsets[g]) as f64;
            for r in offsets[g]..offsets[g + 1] {
                for (o, &x) in out.row_mut(g).iter_mut().zip(va.row(r)) {
                    *o += x * inv;
                }
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::SegmentMean(a, offsets.to_vec()), rg))
    }

    /// Adds the `1×F` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb.n_rows() != 1 || vb.n_cols() != va.n_cols() {
            return Err(shape_err("add_row", va, vb));
        }
        let mut out = va.clone();
        for i in 0..out.n_rows() {
            for (o, &x) in out.row_mut(i).iter_mut().zip(vb.values()) {
                *o += x;
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::AddRow(a, b), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(DenseMatrix::filled(1, 1, s), Op::Sum(a), rg)
    }

    /// Mean cross-entropy of `softmax(logits)` over the rows listed in
    /// `mask`; `labels` holds one class index per logits row.
    pub fn masked_softmax_xent(
        &mut self,
        logits: Var,
        labels: &[usize],
        mask: &[usize],
    ) -> Result<Var, AutodiffError> {
        let vl = self.value(logits);
        let (n, c) = vl.shape();
        if labels.len() != n {
            return Err(AutodiffError::ShapeMismatch {
                op: "masked_softmax_xent",
                left: vl.shape(),
                right: (labels.len(), 1),
            });
        }
        if mask.is_empty() {
            return Err(AutodiffError::EmptyMask);
        }
        let mut probs = DenseMatrix::zeros(mask.len(), c);
        let mut loss = 0.0;
        for (k, &r) in mask.iter().enumerate() {
            if r >= n {
                return Err(AutodiffError::IndexOutOfRange { index: r, len: n });
            }
            let label = labels[r];
            if label >= c {
                return Err(AutodiffError::IndexOutOfRange {
                    index: label,
                    len: c,
                });
            }
            let row = vl.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|&z| (z - max).exp()).sum();
            for (p, &z) in probs.row_mut(k).iter_mut().zip(row) {
                *p = (z - max).exp() / denom;
            }
            loss += denom.ln() - (row[label] - max);
        }
        loss /= mask.len() as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            DenseMatrix::filled(1, 1, loss),
            Op::SoftmaxXent {
                logits,
                labels: mask.iter().map(|&r| labels[r]).collect(),
                rows: mask.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Mean squared error over every entry.
    pub fn mse(&mut self, pred: Var, target: &DenseMatrix) -> Result<Var, AutodiffError> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(shape_err("mse", vp, target));
        }
        if vp.is_empty() {
            return Err(AutodiffError::EmptyMask);
        }
        let loss = vp
            .values()
            .iter()
            .zip(target.values())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / vp.len() as f64;
        let rg = self.rg(pred);
        Ok(self.push(
            DenseMatrix::filled(1, 1, loss),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// `weight · Σ ‖θ‖²` over the given nodes.
    pub fn l2_penalty(&mut self, vars: &[Var], weight: f64) -> Var {
        let s: f64 = vars
            .iter()
            .map(|&v| self.value(v).values().iter().map(|x| x * x).sum::<f64>())
            .sum();
        let rg = vars.iter().any(|&v| self.rg(v));
        self.push(
            DenseMatrix::filled(1, 1, weight * s),
            Op::L2(vars.to_vec(), weight),
            rg,
        )
    }

    /// Propagates `d loss / d node` back through the tape and adds the
    /// parameter gradients into `params`. A tape supports one backward pass.
    pub fn backward(&mut self, loss: Var, params: &mut ParamSet) -> Result<(), AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::StaleTape);
        }
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss { shape });
        }
        self.consumed = true;

        let mut grads: Vec<Option<DenseMatrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let node = &self.nodes[idx];
            let acc = |grads: &mut Vec<Option<DenseMatrix>>, v: Var, contrib: DenseMatrix| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.axpy(1.0, &contrib).expect("gradient shapes agree"),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    let p = params.get_mut(*id);
                    p.grad
                        .axpy(1.0, &g)
                        .map_err(|_| AutodiffError::ShapeMismatch {
                            op: "param_grad",
                            left: p.grad.shape(),
                            right: g.shape(),
                        })?;
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        acc(&mut grads, *a, g.matmul_nt(vb).expect("matmul grad"));
                    }
                    if self.rg(*b) {
                        #[allow(unused_mut)]
                        let mut gb = va.matmul_tn(&g).expect("matmul grad");
                        #[cfg(feature = "fault-injection")]
                        if super::fault::corrupt_backward() {
                            gb.scale_in_place(1.1);
                        }
                        acc(&mut grads, *b, gb);
                    }
                }
                Op::Spmm(s, x) => {
                    acc(&mut grads, *x, spmm_transpose(s, &g).expect("spmm grad"));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.scale(*c)),
                Op::Act(a, kind) => {
                    let y = &node.value;
                    let mut ga = g;
                    for (gv, &yv) in ga.values_mut().iter_mut().zip(y.values()) {
                        *gv *= kind.derivative_from_output(yv);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Dropout(a, mask) => {
                    let mut ga = g;
                    for (gv, m) in ga.values_mut().iter_mut().zip(mask) {
                        *gv *= m;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SegmentMean(a, offsets) => {
                    let va = self.value(*a);
                    let mut ga = DenseMatrix::zeros(va.n_rows(), va.n_cols());
                    for seg in 0..offsets.len() - 1 {
                        let inv = 1.0 / (offsets[seg + 1] - offsets[seg]) as f64;
                        for r in offsets[seg]..offsets[seg + 1] {
                            for (o, &x) in ga.row_mut(r).iter_mut().zip(g.row(seg)) {
                                *o = x * inv;
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::AddRow(a, b) => {
                    if self.rg(*b) {
                        let mut gb = DenseMatrix::zeros(1, g.n_cols());
                        for i in 0..g.n_rows() {
                            for (o, &x) in gb.values_mut().iter_mut().zip(g.row(i)) {
                                *o += x;
                            }
                        }
                        acc(&mut grads, *b, gb);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, DenseMatrix::filled(r, c, g.get(0, 0)));
                }
                Op::SoftmaxXent {
                    logits,
                    labels,
                    rows,
                    probs,
                } => {
                    let (n, c) = self.value(*logits).shape();
                    let scale = g.get(0, 0) / rows.len() as f64;
                    let mut gl = DenseMatrix::zeros(n, c);
                    for (k, (&r, &label)) in rows.iter().zip(labels).enumerate() {
                        for (j, (o, &p)) in gl.row_mut(r).iter_mut().zip(probs.row(k)).enumerate() {
                            let onehot = if j == label { 1.0 } else { 0.0 };
                            *o += scale * (p - onehot);
                        }
                    }
                    acc(&mut grads, *logits, gl);
                }
                Op::Mse { pred, target } => {
                    let vp = self.value(*pred);
                    let scale = 2.0 * g.get(0, 0) / vp.len() as f64;
                    let gp = vp.sub(target).expect("mse shapes").scale(scale);
                    acc(&mut grads, *pred, gp);
                }
                Op::L2(vars, weight) => {
                    let scale = 2.0 * weight * g.get(0, 0);
                    for v in vars {
                        acc(&mut grads, *v, self.value(*v).scale(scale));
                    }
                }
            }
        }
        Ok(())
    }
}
