//! Seeded synthetic datasets.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{knn_graph, DataError, Graph, GraphDataset, Splits, Targets, TaskKind};
use crate::linalg::{build_csr, normalized_laplacian, symmetric_eig, DenseMatrix, SparseMatrix};
use crate::rng::{stream_rng, Rng, STREAM_DATA};

/// Two nodes, one edge, one labelled node per class.
pub fn toy_p2() -> GraphDataset {
    GraphDataset {
        name: "toy-p2".into(),
        task: TaskKind::NodeClassification,
        n_classes: 2,
        graphs: vec![Graph {
            adjacency: Arc::new(build_csr(2, &[(0, 1, 1.0)]).expect("valid edge")),
            features: DenseMatrix::identity(2),
        }],
        targets: Targets::Classes(vec![0, 1]),
        splits: Splits {
            train: vec![0],
            val: vec![],
            test: vec![1],
        },
        seed: None,
        extra: BTreeMap::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbmConfig {
    pub n_per_class: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_noise: f64,
    pub train_per_class: usize,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            n_per_class: 100,
            classes: 3,
            p_in: 0.1,
            p_out: 0.01,
            feature_noise: 1.0,
            train_per_class: 20,
            seed: 0,
        }
    }
}

/// One-hot class centroid plus `N(0, noise²)` in the first `classes`
/// columns, pure noise elsewhere.
fn class_features(labels: &[usize], width: usize, noise: f64, rng: &mut Rng) -> DenseMatrix {
    let mut x = DenseMatrix::zeros(labels.len(), width);
    for (i, &y) in labels.iter().enumerate() {
        let row = x.row_mut(i);
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = noise * z;
        }
        row[y] += 1.0;
    }
    x
}

/// `train_per_class` training nodes per class; the remainder is shuffled
/// and split one third validation, two thirds test.
fn per_class_splits(
    labels: &[usize],
    classes: usize,
    train_per_class: usize,
    rng: &mut Rng,
) -> Splits {
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for c in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let k = train_per_class.min(members.len());
        train.extend_from_slice(&members[..k]);
        rest.extend_from_slice(&members[k..]);
    }
    rest.shuffle(rng);
    let n_val = rest.len() / 3;
    let test = rest.split_off(n_val);
    Splits {
        train,
        val: rest,
        test,
    }
    .sorted()
}

/// Stochastic block model with contiguous class blocks.
pub fn synth_sbm(cfg: &SbmConfig) -> Result<GraphDataset, DataError> {
    if !(cfg.p_in > cfg.p_out) || !(0.0..=1.0).contains(&cfg.p_in) || !(cfg.p_out >= 0.0) {
        return Err(DataError::Invalid(format!(
            "need 0 ≤ p_out < p_in ≤ 1, got p_in = {}, p_out = {}",
            cfg.p_in, cfg.p_out
        )));
    }
    if cfg.classes < 2 || cfg.n_per_class <= cfg.train_per_class {
        return Err(DataError::Invalid(
            "need at least two classes and more nodes per class than training labels".into(),
        ));
    }
    let mut rng = stream_rng(cfg.seed, STREAM_DATA);
    let n = cfg.n_per_class * cfg.classes;
    let labels: Vec<usize> = (0..n).map(|i| i / cfg.n_per_class).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if rng.random_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    let features = class_features(&labels, cfg.classes, cfg.feature_noise, &mut rng);
    let splits = per_class_splits(&labels, cfg.classes, cfg.train_per_class, &mut rng);
    Ok(GraphDataset {
        name: "sbm".into(),
        task: TaskKind::NodeClassification,
        n_classes: cfg.classes,
        graphs: vec![Graph {
            adjacency: Arc::new(build_csr(n, &edges).expect("generated indices are in range")),
            features,
        }],
        targets: Targets::Classes(labels),
        splits,
        seed: Some(cfg.seed),
        extra: BTreeMap::new(),
    })
}

/// Block model with an exact undirected edge count, for timing sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeBudgetConfig {
    pub n_nodes: usize,
    pub classes: usize,
    pub n_edges: usize,
    /// Fraction of edges placed inside a class.
    pub in_fraction: f64,
    pub n_features: usize,
    pub seed: u64,
}

impl Default for EdgeBudgetConfig {
    fn default() -> Self {
        Self {
            n_nodes: 1000,
            classes: 4,
            n_edges: 4000,
            in_fraction: 0.8,
            n_features: 16,
            seed: 0,
        }
    }
}

pub fn sbm_with_edges(cfg: &EdgeBudgetConfig) -> Result<GraphDataset, DataError> {
    let n = cfg.n_nodes;
    let c = cfg.classes.max(1);
    if n < 2 * c || cfg.n_features < c || !(0.0..=1.0).contains(&cfg.in_fraction) {
        return Err(DataError::Invalid(
            "edge-budget SBM needs n ≥ 2·classes, features ≥ classes".into(),
        ));
    }
    let block = n / c;
    let labels: Vec<usize> = (0..n).map(|i| (i / block).min(c - 1)).collect();
    let n_in = (cfg.n_edges as f64 * cfg.in_fraction).round() as usize;
    let n_out = cfg.n_edges - n_in;
    let in_capacity = c * block * (block - 1) / 2;
    let out_capacity = n * (n - 1) / 2 - in_capacity;
    // Rejection sampling stays cheap while each pool is at most half full.
    if 2 * n_in > in_capacity || 2 * n_out > out_capacity {
        return Err(DataError::Invalid(format!(
            "{} edges do not fit comfortably on {n} nodes",
            cfg.n_edges
        )));
    }
    let mut rng = stream_rng(cfg.seed, STREAM_DATA);
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(cfg.n_edges);
    let mut edges = Vec::with_capacity(cfg.n_edges);
    let (mut got_in, mut got_out) = (0, 0);
    while got_in < n_in || got_out < n_out {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j {
            continue;
        }
        let same = labels[i] == labels[j];
        if (same && got_in == n_in) || (!same && got_out == n_out) {
            continue;
        }
        let key = (i.min(j), i.max(j));
        if seen.insert(key) {
            edges.push((key.0, key.1, 1.0));
            if same {
                got_in += 1;
            } else {
                got_out += 1;
            }
        }
    }
    let features = class_features(&labels, cfg.n_features, 1.0, &mut rng);
    let splits = per_class_splits(&labels, c, 20.min(block / 2), &mut rng);
    Ok(GraphDataset {
        name: format!("sbm-{}e", cfg.n_edges),
        task: TaskKind::NodeClassification,
        n_classes: c,
        graphs: vec![Graph {
            adjacency: Arc::new(build_csr(n, &edges).expect("generated indices are in range")),
            features,
        }],
        targets: Targets::Classes(labels),
        splits,
        seed: Some(cfg.seed),
        extra: BTreeMap::new(),
    })
}

/// k-NN graph over `n` uniform points in the unit square, `σ = √(k/n)`.
pub fn random_knn_graph(n: usize, k: usize, seed: u64) -> Result<SparseMatrix, DataError> {
    let mut rng = stream_rng(seed, STREAM_DATA);
    let pts = DenseMatrix::from_vec(n, 2, (0..2 * n).map(|_| rng.random::<f64>()).collect())
        .expect("length matches shape");
    knn_graph(&pts, k, (k as f64 / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandConfig {
    pub count: usize,
    /// Fraction of the spectrum each class draws from.
    pub band_fraction: f64,
    /// Expected norm of the additive white noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            count: 400,
            band_fraction: 0.25,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Single-channel signals on one shared graph. Class 0 lives on the lowest
/// `band_fraction` of Laplacian eigenvectors, class 1 on the highest; each
/// clean signal has unit norm. Split 70/15/15.
pub fn synth_band_signals(
    adjacency: Arc<SparseMatrix>,
    cfg: &BandConfig,
) -> Result<GraphDataset, DataError> {
    let n = adjacency.n_rows();
    if cfg.count < 2 || !(cfg.band_fraction > 0.0 && cfg.band_fraction <= 0.5) {
        return Err(DataError::Invalid(
            "need count ≥ 2 and band_fraction in (0, 0.5]".into(),
        ));
    }
    let decomp = symmetric_eig(&normalized_laplacian(&adjacency).to_dense())
        .map_err(|e| DataError::Invalid(format!("eigendecomposition failed: {e}")))?;
    let q = ((n as f64 * cfg.band_fraction).floor() as usize).max(1);
    let mut rng = stream_rng(cfg.seed, STREAM_DATA);
    let mut labels: Vec<usize> = (0..cfg.count)
        .map(|i| usize::from(i >= cfg.count / 2))
        .collect();
    labels.shuffle(&mut rng);
    let noise_sd = cfg.noise / (n as f64).sqrt();
    let graphs = labels
        .iter()
        .map(|&y| {
            let band = if y == 0 { 0..q } else { n - q..n };
            let coeffs: Vec<f64> = band
                .clone()
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = coeffs
                .iter()
                .map(|c| c * c)
                .sum::<f64>()
                .sqrt()
                .max(f64::MIN_POSITIVE);
            let mut x = vec![0.0; n];
            for (c, m) in coeffs.iter().zip(band) {
                let u = decomp.eigenvectors.column(m);
                for (xi, ui) in x.iter_mut().zip(&u) {
                    *xi += c / norm * ui;
                }
            }
            for xi in &mut x {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xi += noise_sd * z;
            }
            Graph {
                adjacency: Arc::clone(&adjacency),
                features: DenseMatrix::column_vector(&x),
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..cfg.count).collect();
    order.shuffle(&mut rng);
    let n_train = cfg.count * 70 / 100;
    let n_val = cfg.count * 15 / 100;
    let splits = Splits {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    }
    .sorted();
    Ok(GraphDataset {
        name: "band-signals".into(),
        task: TaskKind::SignalClassification,
        n_classes: 2,
        graphs,
        targets: Targets::Classes(labels),
        splits,
        seed: Some(cfg.seed),
        extra: BTreeMap::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_without_cross_edges_or_noise() {
        let d = synth_sbm(&SbmConfig {
            n_per_class: 30,
            p_out: 0.0,
            feature_noise: 0.0,
            ..SbmConfig::default()
        })
        .unwrap();
        d.validate().unwrap();
        let labels = d.targets.classes().unwrap();
        let a = &d.graphs[0].adjacency;
        assert!(a.triplets().all(|(i, j, _)| labels[i] == labels[j]));
        for (i, &y) in labels.iter().enumerate() {
            assert_eq!(d.graphs[0].features.row(i)[y], 1.0);
        }
        assert_eq!(d.splits.train.len(), 60);
    }

    #[test]
    fn sbm_is_seed_deterministic() {
        let cfg = SbmConfig::default();
        assert_eq!(synth_sbm(&cfg).unwrap(), synth_sbm(&cfg).unwrap());
        assert_ne!(
            synth_sbm(&cfg).unwrap(),
            synth_sbm(&SbmConfig { seed: 1, ..cfg }).unwrap()
        );
    }

    #[test]
    fn edge_budget_is_exact() {
        let d = sbm_with_edges(&EdgeBudgetConfig {
            n_nodes: 300,
            n_edges: 1234,
            ..EdgeBudgetConfig::default()
        })
        .unwrap();
        assert_eq!(d.graphs[0].adjacency.nnz(), 2 * 1234);
        d.validate().unwrap();
    }

    #[test]
    fn noiseless_bands_are_spectrally_disjoint() {
        let a = Arc::new(random_knn_graph(40, 5, 3).unwrap());
        let d = synth_band_signals(
            Arc::clone(&a),
            &BandConfig {
                count: 10,
                noise: 0.0,
                ..BandConfig::default()
            },
        )
        .unwrap();
        d.validate().unwrap();
        let labels = d.targets.classes().unwrap();
        assert_eq!(labels.iter().filter(|&&y| y == 0).count(), 5);
        let i0 = labels.iter().position(|&y| y == 0).unwrap();
        let i1 = labels.iter().position(|&y| y == 1).unwrap();
        let x0 = d.graphs[i0].features.values();
        let x1 = d.graphs[i1].features.values();
        let dot: f64 = x0.iter().zip(x1).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
        let norm: f64 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-10);
    }
}
