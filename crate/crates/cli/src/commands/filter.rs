use arma_core::filters::{
    arma1_recursion, arma_k_apply, cheb_filter_apply, poly_filter_apply, rational_filter_exact,
    Arma1Params, PolyFilterSpec, RationalFilterSpec, RecursionOptions,
};
use arma_core::linalg::{modified_laplacian, normalized_laplacian, scaled_laplacian};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::CliError;
use crate::output::{num, Format, RunDir};
use crate::source::load_dataset;
use crate::{read_json, FilterArgs};

fn default_lambda_max() -> f64 {
    2.0
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recursion {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for Recursion {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// Polynomial and rational filters act on the normalized Laplacian `L`,
/// Chebyshev filters on `2L/λmax − I` and ARMA recursions on `I − L`.
/// Rational denominators are read as `I − Σ_k q_k L^k`, `k ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum FilterSpec {
    #[serde(rename = "poly")]
    Poly { weights: Vec<f64> },
    #[serde(rename = "cheb")]
    Cheb {
        weights: Vec<f64>,
        #[serde(default = "default_lambda_max")]
        lambda_max: f64,
    },
    #[serde(rename = "arma1")]
    Arma1 {
        a: f64,
        b: f64,
        #[serde(default)]
        recursion: Recursion,
    },
    #[serde(rename = "armaK")]
    ArmaK {
        branches: Vec<Arma1Params>,
        #[serde(default)]
        recursion: Recursion,
    },
    #[serde(rename = "rational_exact")]
    RationalExact {
        numerator: Vec<f64>,
        denominator: Vec<f64>,
    },
}

pub fn run(args: &FilterArgs, format: Format) -> Result<(), CliError> {
    let spec: FilterSpec = read_json(&args.config)?;
    let ds = load_dataset(&args.data, args.seed)?;
    let x = super::feature_signal(&ds, args.graph, args.column)?;
    let l = normalized_laplacian(&ds.graphs[args.graph].adjacency);
    let opts = |r: &Recursion| RecursionOptions {
        tol: r.tol,
        max_iter: r.max_iter,
    };

    let (y, iterations) = match &spec {
        FilterSpec::Poly { weights } => (
            poly_filter_apply(&l, &PolyFilterSpec::new(weights.clone())?, &x)?,
            None,
        ),
        FilterSpec::Cheb {
            weights,
            lambda_max,
        } => {
            let s = scaled_laplacian(&l, *lambda_max)?;
            (
                cheb_filter_apply(&s, &PolyFilterSpec::new(weights.clone())?, &x)?,
                None,
            )
        }
        FilterSpec::Arma1 { a, b, recursion } => {
            let out = arma1_recursion(
                &modified_laplacian(&l),
                Arma1Params::new(*a, *b),
                &x,
                &opts(recursion),
            )?;
            (out.output, Some(out.iterations))
        }
        FilterSpec::ArmaK {
            branches,
            recursion,
        } => {
            let out = arma_k_apply(&modified_laplacian(&l), branches, &x, &opts(recursion))?;
            (out.output, Some(out.iterations))
        }
        FilterSpec::RationalExact {
            numerator,
            denominator,
        } => {
            let r = RationalFilterSpec::new(numerator.clone(), denominator.clone())?;
            (rational_filter_exact(&l, &r, &x)?, None)
        }
    };

    let mut out = RunDir::create(&args.out, format)?;
    let rows: Vec<Vec<String>> = (0..x.n_rows())
        .map(|i| vec![i.to_string(), num(x.get(i, 0)), num(y.get(i, 0))])
        .collect();
    let table = out.write_table("filtered", &["node_id", "input", "output"], &rows)?;
    let summary = json!({
        "command": "filter",
        "kind": serde_json::to_value(&spec).ok().and_then(|v| v.get("kind").cloned()),
        "n_nodes": x.n_rows(),
        "iterations": iterations,
        "output": table,
    });
    out.write_json("summary.json", &summary)?;
    let resolved = json!({ "spec": spec, "column": args.column, "graph": args.graph });
    out.finish(super::manifest(
        "filter",
        Some(&args.config),
        resolved,
        Some(&args.data),
        Some(args.seed),
    ))?;
    println!("{summary}");
    Ok(())
}
