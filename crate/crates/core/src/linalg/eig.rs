use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{spmm, DenseMatrix, LinalgError, SparseMatrix};

/// Largest matrix accepted by the dense eigensolver and the dense oracles.
pub const DEFAULT_DENSE_CAP: usize = 4000;

/// Eigenpairs of a symmetric matrix, eigenvalues ascending and eigenvectors
/// stored as the columns of `eigenvectors`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, m: usize) -> Vec<f64> {
        self.eigenvectors.column(m)
    }

    /// `U diag(h) Uᵀ`
    pub fn reconstruct_with(&self, response: &[f64]) -> DenseMatrix {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for i in 0..u.n_rows() {
            for (v, h) in scaled.row_mut(i).iter_mut().zip(response) {
                *v *= h;
            }
        }
        scaled.matmul_nt(u).expect("square factors")
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(&self.eigenvalues)
    }

    /// Coefficients `Uᵀ X` of a signal in the eigenbasis.
    pub fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        self.eigenvectors.matmul_tn(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigOptions {
    /// Convergence threshold on the off-diagonal Frobenius norm, relative to
    /// `max(1, ‖M‖_F)`.
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_dim: usize,
    pub symmetry_tol: f64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_sweeps: 100,
            max_dim: DEFAULT_DENSE_CAP,
            symmetry_tol: 1e-10,
        }
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations with default options.
pub fn symmetric_eig(m: &DenseMatrix) -> Result<SpectralDecomposition, LinalgError> {
    symmetric_eig_with(m, &EigOptions::default())
}

pub fn symmetric_eig_with(
    m: &DenseMatrix,
    opts: &EigOptions,
) -> Result<SpectralDecomposition, LinalgError> {
    let n = m.n_rows();
    if n != m.n_cols() {
        return Err(LinalgError::DimensionMismatch {
            op: "symmetric_eig",
            left: m.shape(),
            right: (m.n_cols(), m.n_rows()),
        });
    }
    if n > opts.max_dim {
        return Err(LinalgError::TooLarge {
            n,
            cap: opts.max_dim,
        });
    }
    let asym = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .fold(0.0_f64, |acc, (i, j)| {
            acc.max((m.get(i, j) - m.get(j, i)).abs())
        });
    if asym > opts.symmetry_tol {
        return Err(LinalgError::NotSymmetric {
            max_asymmetry: asym,
        });
    }

    // Work on the symmetrized copy so rounding in the input cannot bias the result.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (m.get(i, j) + m.get(j, i));
        }
    }
    let mut v = DenseMatrix::identity(n).into_values();
    let threshold = opts.tol * m.frobenius_norm().max(1.0);

    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        if off_norm(&a) <= threshold {
            converged = true;
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_norm(&a) > threshold {
        return Err(LinalgError::NotConverged {
            iterations: sweeps,
            last_estimate: off_norm(&a),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        // Sign convention: the largest-magnitude entry of each eigenvector is positive.
        let mut pivot = 0;
        for k in 0..n {
            if v[k * n + src].abs() > v[pivot * n + src].abs() {
                pivot = k;
            }
        }
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            eigenvectors.set(k, dst, sign * v[k * n + src]);
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct PowerIterationOptions {
    /// Stop once `‖Sv − ρv‖₂ ≤ tol` for the unit iterate `v`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            seed: 0,
        }
    }
}

/// Power-iteration estimate of the largest eigenvalue of a symmetric PSD
/// operator. The start vector is drawn from `opts.seed`.
pub fn estimate_lambda_max(
    s: &SparseMatrix,
    opts: &PowerIterationOptions,
) -> Result<f64, LinalgError> {
    let n = s.n_rows();
    if n != s.n_cols() {
        return Err(LinalgError::DimensionMismatch {
            op: "estimate_lambda_max",
            left: (s.n_rows(), s.n_cols()),
            right: (s.n_cols(), s.n_rows()),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = DenseMatrix::from_vec(n, 1, (0..n).map(|_| rng.random_range(0.5..1.5)).collect())
        .expect("n×1");
    let norm = v.frobenius_norm();
    v.scale_in_place(1.0 / norm);
    let mut rho = 0.0;
    for _ in 0..opts.max_iter {
        let w = spmm(s, &v)?;
        rho = v.values().iter().zip(w.values()).map(|(a, b)| a * b).sum();
        let residual = w
            .values()
            .iter()
            .zip(v.values())
            .map(|(wi, vi)| (wi - rho * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= opts.tol {
            return Ok(rho);
        }
        let w_norm = w.frobenius_norm();
        if w_norm == 0.0 {
            return Ok(0.0);
        }
        v = w.scale(1.0 / w_norm);
    }
    Err(LinalgError::NotConverged {
        iterations: opts.max_iter,
        last_estimate: rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{build_csr, normalized_laplacian};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn p2_laplacian_eigenpairs() {
        let l = normalized_laplacian(&build_csr(2, &[(0, 1, 1.0)]).unwrap());
        let d = symmetric_eig(&l.to_dense()).unwrap();
        assert!((d.eigenvalues[0] - 0.0).abs() < 1e-14);
        assert!((d.eigenvalues[1] - 2.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let u0 = d.eigenvector(0);
        let u1 = d.eigenvector(1);
        assert!((u0[0].abs() - r).abs() < 1e-14 && (u0[0] - u0[1]).abs() < 1e-14);
        assert!((u1[0].abs() - r).abs() < 1e-14 && (u1[0] + u1[1]).abs() < 1e-14);
    }

    #[test]
    fn diagonal_is_sorted() {
        let d = symmetric_eig(&DenseMatrix::from_diagonal(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(d.eigenvalues, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn rejects_asymmetric_and_oversized() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(
            symmetric_eig(&m),
            Err(LinalgError::NotSymmetric { .. })
        ));
        let opts = EigOptions {
            max_dim: 2,
            ..Default::default()
        };
        assert!(matches!(
            symmetric_eig_with(&DenseMatrix::identity(3), &opts),
            Err(LinalgError::TooLarge { n: 3, cap: 2 })
        ));
    }

    #[test]
    fn power_iteration_known_spectra() {
        let l = normalized_laplacian(&build_csr(2, &[(0, 1, 1.0)]).unwrap());
        let opts = PowerIterationOptions {
            tol: 1e-10,
            ..Default::default()
        };
        assert!((estimate_lambda_max(&l, &opts).unwrap() - 2.0).abs() < 1e-10);
        assert_eq!(
            estimate_lambda_max(&SparseMatrix::identity(4), &opts).unwrap(),
            1.0
        );
    }

    #[test]
    fn power_iteration_reports_last_iterate() {
        let l = normalized_laplacian(&build_csr(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap());
        let opts = PowerIterationOptions {
            tol: 0.0,
            max_iter: 3,
            seed: 1,
        };
        match estimate_lambda_max(&l, &opts) {
            Err(LinalgError::NotConverged {
                iterations: 3,
                last_estimate,
            }) => {
                assert!(last_estimate > 0.0 && last_estimate <= 2.0)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn power_iteration_matches_dense_solver_on_random_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mut edges = Vec::new();
        for i in 0..50 {
            for j in i + 1..50 {
                if rng.random_bool(0.1) {
                    edges.push((i, j, rng.random_range(0.5..2.0)));
                }
            }
        }
        let l = normalized_laplacian(&build_csr(50, &edges).unwrap());
        let exact = *symmetric_eig(&l.to_dense())
            .unwrap()
            .eigenvalues
            .last()
            .unwrap();
        let est = estimate_lambda_max(
            &l,
            &PowerIterationOptions {
                tol: 1e-7,
                max_iter: 1_000_000,
                seed: 3,
            },
        )
        .unwrap();
        assert!((est - exact).abs() <= 1e-6, "{est} vs {exact}");
    }

    fn random_symmetric() -> impl Strategy<Value = DenseMatrix> {
        (1usize..30).prop_flat_map(|n| {
            proptest::collection::vec(-5.0f64..5.0, n * n).prop_map(move |xs| {
                let m = DenseMatrix::from_vec(n, n, xs).unwrap();
                m.add(&m.transpose()).unwrap().scale(0.5)
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn jacobi_invariants(m in random_symmetric()) {
            let d = symmetric_eig(&m).unwrap();
            let n = d.n();
            prop_assert!(d.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            let utu = d.eigenvectors.matmul_tn(&d.eigenvectors).unwrap();
            prop_assert!(utu.max_abs_diff(&DenseMatrix::identity(n)) <= 1e-8);
            let lu = m.matmul(&d.eigenvectors).unwrap();
            for k in 0..n {
                for i in 0..n {
                    prop_assert!((lu.get(i, k) - d.eigenvalues[k] * d.eigenvectors.get(i, k)).abs() <= 1e-8);
                }
            }
            prop_assert!(d.reconstruct().max_abs_diff(&m) <= 1e-7);
        }
    }
}
