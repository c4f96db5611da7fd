use std::sync::Arc;

use arma_core::autodiff::{Activation, ParamSet};
use arma_core::layers::{
    ArmaLayer, ArmaLayerConfig, GcnConfig, GcnLayer, GraphOperators, OperatorOptions,
};
use arma_core::linalg::{modified_laplacian, DenseMatrix, LinalgError, DEFAULT_DENSE_CAP};
use arma_core::probe::{
    gcn_linear_response, probe_stack, DepthwiseFilter, GcnStack, GcsStack, IdentityStack,
    ResponseReport, DEFAULT_RELATIVE_THRESHOLD,
};
use arma_core::rng::{stream_rng, STREAM_INIT};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cache::decompose;
use crate::error::CliError;
use crate::output::{num, Format, RunDir};
use crate::source::load_dataset;
use crate::{read_json, ProbeArgs};

/// Single-channel linear stacks with known responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeStack {
    Identity,
    /// One GCS stack with scalar weights: `X̄ ← w L̃ X̄ + v X`.
    Gcs {
        w: f64,
        v: f64,
    },
    /// GCN layers with unit weights on `Â` with `gamma` self-loops.
    Gcn {
        #[serde(default)]
        gamma: f64,
    },
}

fn default_threshold() -> f64 {
    DEFAULT_RELATIVE_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub stack: ProbeStack,
    pub depth: usize,
    #[serde(default = "default_threshold")]
    pub relative_threshold: f64,
}

/// `(wμ)^t + v Σ_{s<t} (wμ)^s`, the depth-`t` response of a linear GCS stack.
fn gcs_depth_response(w: f64, v: f64, mu: f64, t: usize) -> f64 {
    let wm = w * mu;
    let mut h = 1.0;
    for _ in 0..t {
        h = wm * h + v;
    }
    h
}

fn set_scalar(params: &mut ParamSet, id: arma_core::autodiff::ParamId, v: f64) {
    params.get_mut(id).value = DenseMatrix::filled(1, 1, v);
}

fn report_rows(r: &ResponseReport) -> Vec<Vec<String>> {
    (0..r.len())
        .map(|m| {
            let lambda = r.eigenvalues[m];
            let mut row = vec![
                num(lambda),
                num(1.0 - lambda),
                num(r.input_coefficients[m]),
                num(r.output_coefficients[m]),
                r.empirical[m].map(num).unwrap_or_default(),
                r.empirical[m].is_some().to_string(),
            ];
            if let Some(a) = &r.analytic {
                row.push(num(a[m]));
            }
            row
        })
        .collect()
}

pub fn run(args: &ProbeArgs, format: Format) -> Result<(), CliError> {
    let spec: ProbeSpec = read_json(&args.config)?;
    if spec.depth == 0 {
        return Err(CliError::config("invalid_probe", "depth must be at least 1").at(&args.config));
    }
    let ds = load_dataset(&args.data, args.seed)?;
    let x = super::feature_signal(&ds, args.graph, args.feature)?;
    let n = x.n_rows();
    if n > DEFAULT_DENSE_CAP {
        return Err(LinalgError::TooLarge {
            n,
            cap: DEFAULT_DENSE_CAP,
        }
        .into());
    }
    let adj = &ds.graphs[args.graph].adjacency;
    let gamma = match spec.stack {
        ProbeStack::Gcn { gamma } => gamma,
        _ => 0.0,
    };
    let ops = GraphOperators::new(
        adj,
        &OperatorOptions {
            gamma,
            ..OperatorOptions::default()
        },
    )?;

    let mut params = ParamSet::new();
    let mut rng = stream_rng(0, STREAM_INIT);
    let depth = spec.depth;
    // GCN responses are read on the spectrum of I − Â, which is L itself when gamma = 0.
    let (basis, analytic): (_, Box<dyn Fn(f64, usize) -> f64>) = match spec.stack {
        ProbeStack::Identity => (Arc::clone(&ops.laplacian), Box::new(|_, _| 1.0)),
        ProbeStack::Gcs { w, v } => (
            Arc::clone(&ops.laplacian),
            Box::new(move |lambda, t| gcs_depth_response(w, v, 1.0 - lambda, t)),
        ),
        ProbeStack::Gcn { .. } => (
            Arc::new(modified_laplacian(&ops.gcn)),
            Box::new(|lambda, t| gcn_linear_response(lambda, t as u32)),
        ),
    };
    let (decomp, cache_hit) = decompose(&basis)?;

    let arma_layer;
    let gcn_layers: Vec<GcnLayer>;
    let filter: Box<dyn DepthwiseFilter + '_> = match spec.stack {
        ProbeStack::Identity => Box::new(IdentityStack { depth }),
        ProbeStack::Gcs { w, v } => {
            let cfg = ArmaLayerConfig {
                stacks: 1,
                depth,
                f_in: 1,
                f_out: 1,
                activation: Activation::Identity,
                skip_dropout: 0.0,
                bias: false,
            };
            arma_layer = ArmaLayer::new(&mut params, "probe", cfg, &mut rng);
            let s = &arma_layer.stacks[0];
            set_scalar(&mut params, s.w_in, w);
            if let Some(shared) = s.w_shared {
                set_scalar(&mut params, shared, w);
            }
            set_scalar(&mut params, s.v, v);
            Box::new(GcsStack {
                layer: &arma_layer,
                params: &params,
                stack: 0,
                l_tilde: Arc::clone(&ops.modified),
            })
        }
        ProbeStack::Gcn { gamma } => {
            gcn_layers = (0..depth)
                .map(|i| {
                    let cfg = GcnConfig {
                        gamma,
                        f_in: 1,
                        f_out: 1,
                        activation: Activation::Identity,
                        bias: false,
                    };
                    let layer = GcnLayer::new(&mut params, &format!("probe{i}"), cfg, &mut rng);
                    set_scalar(&mut params, layer.w, 1.0);
                    layer
                })
                .collect();
            Box::new(GcnStack {
                layers: &gcn_layers,
                params: &params,
                a_hat: Arc::clone(&ops.gcn),
            })
        }
    };

    let reports = probe_stack(filter.as_ref(), &decomp, &x, spec.relative_threshold)?;
    let mut out = RunDir::create(&args.out, format)?;
    let header = [
        "lambda",
        "mu",
        "in_coeff",
        "out_coeff",
        "h_emp",
        "valid",
        "h_analytic",
    ];
    let mut depths = Vec::new();
    for (i, report) in reports.into_iter().enumerate() {
        let t = i + 1;
        let report = report.with_analytic(|lambda| analytic(lambda, t));
        let file = out.write_table(
            &format!("response_depth_{t}"),
            &header,
            &report_rows(&report),
        )?;
        let min_emp = report
            .empirical
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        depths.push(json!({
            "depth": t,
            "file": file,
            "valid": report.valid_count(),
            "min_h_emp": min_emp.is_finite().then_some(min_emp),
            "max_gap_to_analytic": report.max_gap(),
        }));
    }
    if let ProbeStack::Gcs { w, v } = spec.stack {
        // Limit of the recursion as the depth grows.
        let rows: Vec<Vec<String>> = decomp
            .eigenvalues
            .iter()
            .map(|&lambda| {
                let denom = 1.0 - w * (1.0 - lambda);
                let h = if denom != 0.0 {
                    num(v / denom)
                } else {
                    String::new()
                };
                vec![num(lambda), num(1.0 - lambda), h]
            })
            .collect();
        out.write_table("response_limit", &["lambda", "mu", "h_analytic"], &rows)?;
    }
    let summary = json!({
        "command": "probe",
        "n_nodes": n,
        "eigen_cache_hit": cache_hit,
        "depths": depths,
    });
    out.write_json("summary.json", &summary)?;
    let resolved = json!({ "spec": spec, "feature": args.feature, "graph": args.graph });
    out.finish(super::manifest(
        "probe",
        Some(&args.config),
        resolved,
        Some(&args.data),
        Some(args.seed),
    ))?;
    println!("{summary}");
    Ok(())
}
