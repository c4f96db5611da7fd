//! Graph operators derived from a symmetric, non-negative adjacency matrix.
//!
//! Zero-degree nodes use `d^{-1/2} = 0`: they keep a unit diagonal in the
//! normalized Laplacian and contribute nothing off the diagonal.

use super::{LinalgError, SparseMatrix};

/// `D^{-1/2} S D^{-1/2}`, computed as `s_ij / √(d_i d_j)`.
fn symmetric_scale(s: &SparseMatrix, degrees: &[f64]) -> SparseMatrix {
    SparseMatrix::from_triplets(
        s.n_rows(),
        s.n_cols(),
        s.triplets().map(|(i, j, v)| {
            let (di, dj) = (degrees[i], degrees[j]);
            let scaled = if di > 0.0 && dj > 0.0 {
                v / (di * dj).sqrt()
            } else {
                0.0
            };
            (i, j, scaled)
        }),
    )
    .expect("indices come from a valid matrix")
}

/// `L = I − D^{-1/2} A D^{-1/2}`.
pub fn normalized_laplacian(adj: &SparseMatrix) -> SparseMatrix {
    let n = adj.n_rows();
    let normalized = symmetric_scale(adj, &adj.row_sums());
    SparseMatrix::from_triplets(
        n,
        n,
        (0..n)
            .map(|i| (i, i, 1.0))
            .chain(normalized.triplets().map(|(i, j, v)| (i, j, -v))),
    )
    .expect("indices come from a valid matrix")
}

/// `L̃ = I − L`, the propagation operator of the GCS layer and the `M` of the
/// first-order ARMA recursion with `λ_min = 0`, `λ_max = 2`.
pub fn modified_laplacian(laplacian: &SparseMatrix) -> SparseMatrix {
    SparseMatrix::identity(laplacian.n_rows())
        .linear_combination(1.0, laplacian, -1.0)
        .expect("square operands of equal size")
}

/// `Â = D̃^{-1/2}(A + γI)D̃^{-1/2}` with `D̃` the degree matrix of `A + γI`.
/// Rows with zero augmented degree stay empty.
pub fn gcn_adjacency(adj: &SparseMatrix, gamma: f64) -> Result<SparseMatrix, LinalgError> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(LinalgError::InvalidParameter(format!(
            "self-loop weight must be finite and non-negative, got {gamma}"
        )));
    }
    let augmented = adj.linear_combination(1.0, &SparseMatrix::identity(adj.n_rows()), gamma)?;
    Ok(symmetric_scale(&augmented, &augmented.row_sums()))
}

/// `2L/λ_max − I`, the Chebyshev argument mapping `[0, λ_max]` onto `[−1, 1]`.
pub fn scaled_laplacian(
    laplacian: &SparseMatrix,
    lambda_max: f64,
) -> Result<SparseMatrix, LinalgError> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(LinalgError::InvalidParameter(format!(
            "lambda_max must be positive, got {lambda_max}"
        )));
    }
    laplacian.linear_combination(
        2.0 / lambda_max,
        &SparseMatrix::identity(laplacian.n_rows()),
        -1.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{build_csr, symmetric_eig, DenseMatrix};
    use proptest::prelude::*;

    fn p2() -> SparseMatrix {
        build_csr(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn triangle() -> SparseMatrix {
        build_csr(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn sorted_eigs(m: &SparseMatrix) -> Vec<f64> {
        symmetric_eig(&m.to_dense()).unwrap().eigenvalues
    }

    #[test]
    fn laplacian_of_p2_and_empty_graph() {
        let l = normalized_laplacian(&p2());
        assert_eq!(
            l.to_dense(),
            DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]])
        );
        let empty = normalized_laplacian(&build_csr(3, &[]).unwrap());
        assert_eq!(empty.to_dense(), DenseMatrix::identity(3));
    }

    #[test]
    fn triangle_spectrum() {
        // Characteristic polynomial of I − A/2 on K3: eigenvalues of A are
        // {2, −1, −1}, so L has {0, 1.5, 1.5} and I − L has {1, −0.5, −0.5}.
        let l = normalized_laplacian(&triangle());
        let ev = sorted_eigs(&l);
        for (got, want) in ev.iter().zip([0.0, 1.5, 1.5]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
        let ev_mod = sorted_eigs(&modified_laplacian(&l));
        for (got, want) in ev_mod.iter().zip([-0.5, -0.5, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{ev_mod:?}");
        }
    }

    #[test]
    fn modified_laplacian_small_cases() {
        let m = modified_laplacian(&normalized_laplacian(&p2()));
        assert_eq!(
            m.to_dense(),
            DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])
        );
        let zero = modified_laplacian(&SparseMatrix::identity(3));
        assert_eq!(zero.nnz(), 0);
    }

    #[test]
    fn gcn_adjacency_small_cases() {
        let a = gcn_adjacency(&p2(), 1.0).unwrap();
        assert_eq!(a.to_dense(), DenseMatrix::filled(2, 2, 0.5));
        let id = gcn_adjacency(&build_csr(2, &[]).unwrap(), 1.0).unwrap();
        assert_eq!(id.to_dense(), DenseMatrix::identity(2));
        // Star with centre 0: augmented degrees 4 (centre) and 2 (leaves).
        let star = build_csr(4, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        let s = gcn_adjacency(&star, 1.0).unwrap();
        assert!((s.get(0, 1) - 1.0 / (4.0_f64 * 2.0).sqrt()).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.353_553_390_593_273_8).abs() < 1e-15);
        let isolated = gcn_adjacency(&build_csr(2, &[]).unwrap(), 0.0).unwrap();
        assert_eq!(isolated.nnz(), 0);
        assert!(gcn_adjacency(&p2(), -1.0).is_err());
    }

    #[test]
    fn scaled_laplacian_small_cases() {
        let l = normalized_laplacian(&p2());
        let s = scaled_laplacian(&l, 2.0).unwrap();
        assert_eq!(
            s.to_dense(),
            DenseMatrix::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]])
        );
        assert_eq!(
            scaled_laplacian(&SparseMatrix::identity(2), 2.0)
                .unwrap()
                .nnz(),
            0
        );
        let s15 = scaled_laplacian(&l, 1.5).unwrap().to_dense();
        let oracle =
            DenseMatrix::from_rows(&[vec![1.0 / 3.0, -4.0 / 3.0], vec![-4.0 / 3.0, 1.0 / 3.0]]);
        assert!(s15.max_abs_diff(&oracle) < 1e-15);
        assert!(scaled_laplacian(&l, 0.0).is_err());
    }

    fn random_adjacency() -> impl Strategy<Value = SparseMatrix> {
        (2usize..40).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n, 0.1f64..3.0), 0..(4 * n))
                .prop_map(move |edges| build_csr(n, &edges).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn laplacian_spectrum_in_unit_interval_times_two(adj in random_adjacency()) {
            let l = normalized_laplacian(&adj);
            prop_assert!(l.is_symmetric(1e-12));
            let ev = sorted_eigs(&l);
            prop_assert!(ev[0] >= -1e-9);
            prop_assert!(*ev.last().unwrap() <= 2.0 + 1e-9);
        }

        #[test]
        fn scaled_at_two_is_negated_modified(adj in random_adjacency()) {
            let l = normalized_laplacian(&adj);
            let scaled = scaled_laplacian(&l, 2.0).unwrap().to_dense();
            let modified = modified_laplacian(&l).to_dense();
            prop_assert!(scaled.max_abs_diff(&modified.scale(-1.0)) <= 1e-15);
        }

        #[test]
        fn gcn_rescaled_row_sums_are_augmented_degrees(adj in random_adjacency(), gamma in 0.0f64..2.0) {
            let a_hat = gcn_adjacency(&adj, gamma).unwrap();
            let deg: Vec<f64> = adj.row_sums().iter().map(|d| d + gamma).collect();
            let sqrt_deg: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
            for i in 0..adj.n_rows() {
                let (cols, vals) = a_hat.row(i);
                let s: f64 = cols.iter().zip(vals).map(|(&j, &v)| sqrt_deg[i] * v * sqrt_deg[j]).sum();
                prop_assert!((s - deg[i]).abs() <= 1e-9 * deg[i].max(1.0));
            }
        }
    }
}
