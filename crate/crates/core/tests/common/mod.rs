#![allow(dead_code)]

use arma_core::linalg::{build_csr, DenseMatrix, SparseMatrix};
use arma_core::rng::{stream_rng, Rng, STREAM_DATA};
use rand::Rng as _;

pub fn rng(seed: u64) -> Rng {
    stream_rng(seed, STREAM_DATA)
}

/// Erdős–Rényi graph with weights in [0.5, 1.5); a path keeps it connected.
pub fn random_graph(n: usize, p: f64, rng: &mut Rng) -> SparseMatrix {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.random::<f64>() < p {
                edges.push((i, j, rng.random_range(0.5..1.5)));
            }
        }
    }
    build_csr(n, &edges).unwrap()
}

pub fn random_signal(n: usize, f: usize, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::from_vec(
        n,
        f,
        (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Uniform permutation by Fisher-Yates.
pub fn random_permutation(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}
