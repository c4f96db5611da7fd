use serde::{Deserialize, Serialize};

use super::LinalgError;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn filled(n_rows: usize, n_cols: usize, value: f64) -> Self {
        Self {
            n_rows,
            n_cols,
            values: vec![value; n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self, LinalgError> {
        if values.len() != n_rows * n_cols {
            return Err(LinalgError::DimensionMismatch {
                op: "from_vec",
                left: (n_rows, n_cols),
                right: (values.len(), 1),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }

    /// Builds a matrix from equally sized rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged rows");
            values.extend_from_slice(row);
        }
        Self {
            n_rows,
            n_cols,
            values,
        }
    }

    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            n_rows: values.len(),
            n_cols: 1,
            values: values.to_vec(),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.values[i * n + i] = *d;
        }
        m
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.values[i * self.n_cols + j] = value;
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out.values[j * self.n_rows + i] = self.values[i * self.n_cols + j];
            }
        }
        out
    }

    fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<(), LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same_shape(other, "add")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(self.with_values(values))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same_shape(other, "sub")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(self.with_values(values))
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<(), LinalgError> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            values,
        }
    }

    /// Dense product `self · other`. Zero entries of `self` are skipped, so
    /// sparse-ish left operands (bag-of-words features, dropout masks) are cheap.
    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.n_cols != other.n_rows {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let m = other.n_cols;
        let mut out = Self::zeros(self.n_rows, m);
        if m == 0 || self.n_cols == 0 {
            return Ok(out);
        }
        for (out_row, a_row) in out
            .values
            .chunks_exact_mut(m)
            .zip(self.values.chunks_exact(self.n_cols))
        {
            for (&a, b_row) in a_row.iter().zip(other.values.chunks_exact(m)) {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.n_rows != other.n_rows {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul_tn",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let m = other.n_cols;
        let mut out = Self::zeros(self.n_cols, m);
        if m == 0 || self.n_cols == 0 {
            return Ok(out);
        }
        for (a_row, b_row) in self
            .values
            .chunks_exact(self.n_cols)
            .zip(other.values.chunks_exact(m))
        {
            for (&a, out_row) in a_row.iter().zip(out.values.chunks_exact_mut(m)) {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.n_cols != other.n_cols {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul_nt",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Self::zeros(self.n_rows, other.n_rows);
        for i in 0..self.n_rows {
            let a_row = self.row(i);
            for j in 0..other.n_rows {
                out.values[i * other.n_rows + j] =
                    a_row.iter().zip(other.row(j)).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        (0..self.n_rows)
            .all(|i| (i + 1..self.n_cols).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Row `i` of `self` becomes row `perm[i]` of the result.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n_rows);
        let mut out = Self::zeros(self.n_rows, self.n_cols);
        for (i, &p) in perm.iter().enumerate() {
            out.row_mut(p).copy_from_slice(self.row(i));
        }
        out
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), self.n_cols);
        for (dst, &src) in rows.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[&DenseMatrix]) -> Result<Self, LinalgError> {
        let n_cols = blocks.first().map_or(0, |b| b.n_cols);
        let mut values = Vec::new();
        let mut n_rows = 0;
        for b in blocks {
            if b.n_cols != n_cols {
                return Err(LinalgError::DimensionMismatch {
                    op: "vstack",
                    left: (n_rows, n_cols),
                    right: b.shape(),
                });
            }
            values.extend_from_slice(&b.values);
            n_rows += b.n_rows;
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree_with_explicit_transpose() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![-1.0, 0.5, 3.0]]);
        let b = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, -1.0], vec![4.0, 0.25]]);
        let ab = a.matmul(&b).unwrap();
        assert_eq!(
            ab,
            DenseMatrix::from_rows(&[vec![2.0, -1.0], vec![10.0, -0.75]])
        );
        let atb = a.transpose().matmul_tn(&b).unwrap();
        assert_eq!(atb, ab);
        let abt = a.matmul_nt(&b.transpose()).unwrap();
        assert_eq!(abt, ab);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&b),
            Err(LinalgError::DimensionMismatch { op: "matmul", .. })
        ));
        assert!(a.add(&DenseMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn permute_rows_moves_row_i_to_perm_i() {
        let a = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let p = a.permute_rows(&[2, 0, 1]);
        assert_eq!(p.column(0), vec![2.0, 3.0, 1.0]);
    }
}
