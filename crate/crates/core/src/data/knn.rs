use std::collections::BTreeSet;

use crate::linalg::{build_csr, DenseMatrix, SparseMatrix};

use super::DataError;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian-weighted k-nearest-neighbour graph over the rows of `points`.
///
/// Each point links to its `k` nearest other points (equal distances resolve
/// to the lower index) with weight `exp(−‖p_i − p_j‖²/σ²)`; the result is the
/// union of these directed neighbourhoods.
pub fn knn_graph(points: &DenseMatrix, k: usize, sigma: f64) -> Result<SparseMatrix, DataError> {
    let n = points.n_rows();
    if k == 0 || k >= n {
        return Err(DataError::Invalid(format!("k = {k} must lie in 1..{n}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(DataError::Invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let sigma2 = sigma * sigma;
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut candidates: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        candidates.clear();
        candidates.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(points.row(i), points.row(j)), j)),
        );
        candidates.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &candidates[..k] {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    let edges: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .map(|(i, j)| {
            (
                i,
                j,
                (-squared_distance(points.row(i), points.row(j)) / sigma2).exp(),
            )
        })
        .collect();
    Ok(build_csr(n, &edges).expect("indices in range and weights positive"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_at_distance_sigma() {
        let p = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 2.0]]);
        let a = knn_graph(&p, 1, 2.0).unwrap();
        assert_eq!(a.nnz(), 2);
        assert!((a.get(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn coincident_points_get_unit_weight() {
        let p = DenseMatrix::from_rows(&[vec![1.0], vec![1.0], vec![5.0]]);
        let a = knn_graph(&p, 1, 1.0).unwrap();
        assert_eq!(a.get(0, 1), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]);
        assert!(knn_graph(&p, 2, 1.0).is_err());
        assert!(knn_graph(&p, 1, 0.0).is_err());
    }
}
