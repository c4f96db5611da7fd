//! Empirical frequency responses `h̃_m = u_mᵀx̄ / u_mᵀx` of arbitrary,
//! possibly nonlinear, single-channel filters.

use std::io::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::autodiff::{AutodiffError, ParamSet, Tape};
use crate::layers::{ArmaLayer, ForwardMode, GcnLayer};
use crate::linalg::{DenseMatrix, LinalgError, SparseMatrix, SpectralDecomposition};
use crate::rng::stream_rng;

/// Components with `|u_mᵀx| < DEFAULT_RELATIVE_THRESHOLD · ‖x‖₂` are masked.
pub const DEFAULT_RELATIVE_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("probe signals must be single columns of length {expected}, got {got:?}")]
    Shape {
        expected: usize,
        got: (usize, usize),
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseReport {
    pub eigenvalues: Vec<f64>,
    pub input_coefficients: Vec<f64>,
    pub output_coefficients: Vec<f64>,
    /// `None` where the input coefficient is below threshold.
    pub empirical: Vec<Option<f64>>,
    pub analytic: Option<Vec<f64>>,
}

impl ResponseReport {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn valid(&self) -> impl Iterator<Item = bool> + '_ {
        self.empirical.iter().map(Option::is_some)
    }

    pub fn valid_count(&self) -> usize {
        self.valid().filter(|&v| v).count()
    }

    /// Attaches an analytic curve evaluated at each eigenvalue.
    pub fn with_analytic(mut self, h: impl Fn(f64) -> f64) -> Self {
        self.analytic = Some(self.eigenvalues.iter().map(|&l| h(l)).collect());
        self
    }

    /// Largest `|h̃_m − h_m|` over valid components; `None` without an analytic curve.
    pub fn max_gap(&self) -> Option<f64> {
        let analytic = self.analytic.as_ref()?;
        Some(
            self.empirical
                .iter()
                .zip(analytic)
                .filter_map(|(e, a)| e.map(|e| (e - a).abs()))
                .fold(0.0, f64::max),
        )
    }

    /// Columns `lambda, mu, in_coeff, out_coeff, h_emp, valid[, h_analytic]`.
    /// Invalid rows leave `h_emp` empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ProbeError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["lambda", "mu", "in_coeff", "out_coeff", "h_emp", "valid"];
        if self.analytic.is_some() {
            header.push("h_analytic");
        }
        w.write_record(&header)?;
        for m in 0..self.len() {
            let lambda = self.eigenvalues[m];
            let mut row = vec![
                format!("{lambda:?}"),
                format!("{:?}", 1.0 - lambda),
                format!("{:?}", self.input_coefficients[m]),
                format!("{:?}", self.output_coefficients[m]),
                self.empirical[m]
                    .map(|h| format!("{h:?}"))
                    .unwrap_or_default(),
                self.empirical[m].is_some().to_string(),
            ];
            if let Some(a) = &self.analytic {
                row.push(format!("{:?}", a[m]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_signal(decomp: &SpectralDecomposition, x: &DenseMatrix) -> Result<(), ProbeError> {
    if x.shape() != (decomp.n(), 1) {
        return Err(ProbeError::Shape {
            expected: decomp.n(),
            got: x.shape(),
        });
    }
    Ok(())
}

/// Projects input and output on the eigenbasis and forms their ratio on
/// components whose input coefficient clears `relative_threshold · ‖x‖₂`.
pub fn empirical_response(
    decomp: &SpectralDecomposition,
    x: &DenseMatrix,
    x_bar: &DenseMatrix,
    relative_threshold: f64,
) -> Result<ResponseReport, ProbeError> {
    check_signal(decomp, x)?;
    check_signal(decomp, x_bar)?;
    let cut = relative_threshold * x.frobenius_norm();
    let input = decomp.project(x)?.into_values();
    let output = decomp.project(x_bar)?.into_values();
    let empirical = input
        .iter()
        .zip(&output)
        .map(|(&i, &o)| {
            let h = o / i;
            (i.abs() >= cut && i != 0.0 && h.is_finite()).then_some(h)
        })
        .collect();
    Ok(ResponseReport {
        eigenvalues: decomp.eigenvalues.clone(),
        input_coefficients: input,
        output_coefficients: output,
        empirical,
        analytic: None,
    })
}

/// `(1 − λ)^T`, the response of `T` linear GCN steps without self-loops.
pub fn gcn_linear_response(lambda: f64, depth: u32) -> f64 {
    (1.0 - lambda).powi(depth as i32)
}

/// A filter that exposes its output after every depth.
pub trait DepthwiseFilter {
    fn depth_outputs(&self, x: &DenseMatrix) -> Result<Vec<DenseMatrix>, ProbeError>;
}

/// Passes the signal through unchanged at every depth.
pub struct IdentityStack {
    pub depth: usize,
}

impl DepthwiseFilter for IdentityStack {
    fn depth_outputs(&self, x: &DenseMatrix) -> Result<Vec<DenseMatrix>, ProbeError> {
        Ok(vec![x.clone(); self.depth])
    }
}

/// One GCS stack of an ARMA layer, run in evaluation mode.
pub struct GcsStack<'a> {
    pub layer: &'a ArmaLayer,
    pub params: &'a ParamSet,
    pub stack: usize,
    pub l_tilde: Arc<SparseMatrix>,
}

impl DepthwiseFilter for GcsStack<'_> {
    fn depth_outputs(&self, x: &DenseMatrix) -> Result<Vec<DenseMatrix>, ProbeError> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mut rng = stream_rng(0, 0);
        let mut mode = ForwardMode {
            training: false,
            rng: &mut rng,
        };
        let outs = self.layer.stack_depths(
            &mut tape,
            self.params,
            &self.l_tilde,
            xv,
            self.stack,
            &mut mode,
        )?;
        Ok(outs.into_iter().map(|v| tape.value(v).clone()).collect())
    }
}

/// Consecutive GCN layers; depth `t` is the output of the first `t` layers.
pub struct GcnStack<'a> {
    pub layers: &'a [GcnLayer],
    pub params: &'a ParamSet,
    pub a_hat: Arc<SparseMatrix>,
}

impl DepthwiseFilter for GcnStack<'_> {
    fn depth_outputs(&self, x: &DenseMatrix) -> Result<Vec<DenseMatrix>, ProbeError> {
        let mut tape = Tape::new();
        let mut cur = tape.constant(x.clone());
        let mut outs = Vec::with_capacity(self.layers.len());
        for layer in self.layers {
            cur = layer.forward(&mut tape, self.params, &self.a_hat, cur)?;
            outs.push(tape.value(cur).clone());
        }
        Ok(outs)
    }
}

/// One report per depth of `filter`.
pub fn probe_stack(
    filter: &dyn DepthwiseFilter,
    decomp: &SpectralDecomposition,
    x: &DenseMatrix,
    relative_threshold: f64,
) -> Result<Vec<ResponseReport>, ProbeError> {
    check_signal(decomp, x)?;
    filter
        .depth_outputs(x)?
        .iter()
        .map(|out| empirical_response(decomp, x, out, relative_threshold))
        .collect()
}
