use super::{DenseMatrix, LinalgError};

/// LU factorization with partial pivoting, `P A = L U` packed in one matrix.
#[derive(Debug, Clone)]
pub struct LuDecomposition {
    n: usize,
    lu: Vec<f64>,
    pivots: Vec<usize>,
}

impl LuDecomposition {
    pub fn new(a: &DenseMatrix) -> Result<Self, LinalgError> {
        let n = a.n_rows();
        if n != a.n_cols() {
            return Err(LinalgError::DimensionMismatch {
                op: "lu",
                left: a.shape(),
                right: (a.n_cols(), a.n_rows()),
            });
        }
        let mut lu = a.values().to_vec();
        let mut pivots: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        let singular_below = scale * f64::EPSILON * n as f64;
        for k in 0..n {
            let (p, pivot) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].abs()))
                    .fold(
                        (k, -1.0),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pivot <= singular_below {
                return Err(LinalgError::Singular { column: k });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                pivots.swap(k, p);
            }
            let diag = lu[k * n + k];
            for i in k + 1..n {
                let factor = lu[i * n + k] / diag;
                lu[i * n + k] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= factor * lu[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu, pivots })
    }

    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let n = self.n;
        if b.n_rows() != n {
            return Err(LinalgError::DimensionMismatch {
                op: "lu_solve",
                left: (n, n),
                right: b.shape(),
            });
        }
        let m = b.n_cols();
        let mut x = b.select_rows(&self.pivots);
        for i in 0..n {
            for k in 0..i {
                let l = self.lu[i * n + k];
                if l != 0.0 {
                    for c in 0..m {
                        let v = x.get(k, c);
                        x.row_mut(i)[c] -= l * v;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu[i * n + k];
                if u != 0.0 {
                    for c in 0..m {
                        let v = x.get(k, c);
                        x.row_mut(i)[c] -= u * v;
                    }
                }
            }
            let d = self.lu[i * n + i];
            for v in x.row_mut(i) {
                *v /= d;
            }
        }
        Ok(x)
    }
}

/// Solves `A X = B` densely.
pub fn solve_dense(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    LuDecomposition::new(a)?.solve(b)
}
