use rayon::prelude::*;

use super::{DenseMatrix, LinalgError};

/// Rows above this count are split across the rayon pool in `spmm`. Each
/// output row is accumulated by exactly one worker in column order, so the
/// result does not depend on the thread count.
const PARALLEL_ROW_THRESHOLD: usize = 4096;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Empty (all-zero) matrix.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_triplets(
            diag.len(),
            diag.len(),
            diag.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
        .expect("diagonal indices are in range")
    }

    /// Assembles a matrix from `(row, col, value)` triplets. Duplicates are
    /// summed, rows sorted, and entries that end up exactly zero dropped. No
    /// symmetrization happens here.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, LinalgError> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for (i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(LinalgError::IndexOutOfRange {
                    row: i,
                    col: j,
                    n_rows,
                    n_cols,
                });
            }
            rows[i].push((j, v));
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut iter = row.into_iter().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Wraps raw CSR arrays after validating the structural invariants.
    pub fn from_csr_parts(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        let m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Checks offsets, per-row column ordering and index bounds.
    pub fn validate(&self) -> Result<(), LinalgError> {
        let bad = |reason: &str| Err(LinalgError::InvalidCsr(reason.to_string()));
        if self.row_offsets.len() != self.n_rows + 1 || self.row_offsets[0] != 0 {
            return bad("row_offsets must have n_rows+1 entries starting at 0");
        }
        if *self.row_offsets.last().unwrap() != self.col_indices.len()
            || self.col_indices.len() != self.values.len()
        {
            return bad("last row offset must equal the number of stored entries");
        }
        for i in 0..self.n_rows {
            let (start, end) = (self.row_offsets[i], self.row_offsets[i + 1]);
            if end < start {
                return bad("row_offsets must be non-decreasing");
            }
            let cols = &self.col_indices[start..end];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad("column indices must be strictly increasing within a row");
            }
            if cols.iter().any(|&j| j >= self.n_cols) {
                return bad("column index out of range");
            }
        }
        Ok(())
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
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            d.set(i, j, v);
        }
        d
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.n_cols,
            self.n_rows,
            self.triplets().map(|(i, j, v)| (j, i, v)),
        )
        .expect("transposed indices are in range")
    }

    /// Entry `(i,j)` present iff `(j,i)` is, with values equal within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.n_rows == self.n_cols
            && self.triplets().all(|(i, j, v)| {
                let (cols, vals) = self.row(j);
                cols.binary_search(&i)
                    .is_ok_and(|k| (vals[k] - v).abs() <= tol)
            })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// `alpha·self + beta·other`, with exact zeros dropped.
    pub fn linear_combination(
        &self,
        alpha: f64,
        other: &Self,
        beta: f64,
    ) -> Result<Self, LinalgError> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(LinalgError::DimensionMismatch {
                op: "linear_combination",
                left: (self.n_rows, self.n_cols),
                right: (other.n_rows, other.n_cols),
            });
        }
        Self::from_triplets(
            self.n_rows,
            self.n_cols,
            self.triplets()
                .map(|(i, j, v)| (i, j, alpha * v))
                .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v))),
        )
    }

    /// Relabels nodes: entry `(i,j)` moves to `(perm[i], perm[j])`, i.e. `P S Pᵀ`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n_rows);
        assert_eq!(self.n_rows, self.n_cols);
        Self::from_triplets(
            self.n_rows,
            self.n_cols,
            self.triplets().map(|(i, j, v)| (perm[i], perm[j], v)),
        )
        .expect("permutation stays in range")
    }

    /// Block-diagonal concatenation of square blocks.
    pub fn block_diagonal(blocks: &[&SparseMatrix]) -> Self {
        let n: usize = blocks.iter().map(|b| b.n_rows).sum();
        let m: usize = blocks.iter().map(|b| b.n_cols).sum();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(blocks.iter().map(|b| b.nnz()).sum());
        let mut values = Vec::with_capacity(col_indices.capacity());
        row_offsets.push(0);
        let mut col_shift = 0;
        for b in blocks {
            for i in 0..b.n_rows {
                let (cols, vals) = b.row(i);
                col_indices.extend(cols.iter().map(|j| j + col_shift));
                values.extend_from_slice(vals);
                row_offsets.push(col_indices.len());
            }
            col_shift += b.n_cols;
        }
        Self {
            n_rows: n,
            n_cols: m,
            row_offsets,
            col_indices,
            values,
        }
    }
}

/// Exact sparse-dense product `S · X`.
pub fn spmm(s: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if s.n_cols != x.n_rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "spmm",
            left: (s.n_rows, s.n_cols),
            right: x.shape(),
        });
    }
    let f = x.n_cols();
    let mut out = DenseMatrix::zeros(s.n_rows, f);
    if f == 0 {
        return Ok(out);
    }
    let kernel = |(i, out_row): (usize, &mut [f64])| {
        let (cols, vals) = s.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            for (o, &xv) in out_row.iter_mut().zip(x.row(j)) {
                *o += v * xv;
            }
        }
    };
    if s.n_rows >= PARALLEL_ROW_THRESHOLD {
        out.values_mut()
            .par_chunks_mut(f)
            .enumerate()
            .for_each(kernel);
    } else {
        out.values_mut().chunks_mut(f).enumerate().for_each(kernel);
    }
    Ok(out)
}

/// `Sᵀ · X` by scattering rows, without building the transpose.
pub fn spmm_transpose(s: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if s.n_rows != x.n_rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "spmm_transpose",
            left: (s.n_cols, s.n_rows),
            right: x.shape(),
        });
    }
    let f = x.n_cols();
    let mut out = DenseMatrix::zeros(s.n_cols, f);
    for i in 0..s.n_rows {
        let (cols, vals) = s.row(i);
        let x_row = x.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            for (o, &xv) in out.row_mut(j).iter_mut().zip(x_row) {
                *o += v * xv;
            }
        }
    }
    Ok(out)
}

/// Builds a symmetric adjacency matrix from an undirected edge list.
///
/// Every `(src, dst, w)` contributes `w` to both `(src,dst)` and `(dst,src)`
/// (once for self-loops); repeated edges accumulate.
pub fn build_csr(
    n_nodes: usize,
    edges: &[(usize, usize, f64)],
) -> Result<SparseMatrix, LinalgError> {
    let mut triplets = Vec::with_capacity(edges.len() * 2);
    for &(src, dst, w) in edges {
        if src >= n_nodes || dst >= n_nodes {
            return Err(LinalgError::IndexOutOfRange {
                row: src,
                col: dst,
                n_rows: n_nodes,
                n_cols: n_nodes,
            });
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(LinalgError::InvalidWeight {
                src,
                dst,
                weight: w,
            });
        }
        triplets.push((src, dst, w));
        if src != dst {
            triplets.push((dst, src, w));
        }
    }
    SparseMatrix::from_triplets(n_nodes, n_nodes, triplets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_edge_is_symmetrized() {
        let a = build_csr(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(
            a.to_dense(),
            DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])
        );
        assert_eq!(a.row_offsets(), &[0, 1, 2]);
    }

    #[test]
    fn empty_graph_has_flat_offsets() {
        let a = build_csr(3, &[]).unwrap();
        assert_eq!(a.row_offsets(), &[0, 0, 0, 0]);
        assert_eq!(a.nnz(), 0);
    }

    #[test]
    fn duplicates_accumulate_like_dense_accumulation() {
        let edges = [(0, 1, 1.0), (1, 0, 1.0), (0, 1, 0.5)];
        let a = build_csr(3, &edges).unwrap();
        // Oracle: accumulate into a plain array, both directions per edge.
        let mut dense = [[0.0_f64; 3]; 3];
        for &(s, d, w) in &edges {
            dense[s][d] += w;
            dense[d][s] += w;
        }
        for (i, row) in dense.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(a.get(i, j), v);
            }
        }
        assert_eq!(a.get(0, 1), 2.5);
        assert_eq!(a.get(1, 0), 2.5);
    }

    #[test]
    fn build_rejects_bad_input() {
        assert!(matches!(
            build_csr(2, &[(0, 2, 1.0)]),
            Err(LinalgError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            build_csr(2, &[(0, 1, -1.0)]),
            Err(LinalgError::InvalidWeight { .. })
        ));
    }

    #[test]
    fn explicit_zeros_are_dropped() {
        let a = build_csr(3, &[(0, 1, 0.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        a.validate().unwrap();
    }

    #[test]
    fn spmm_small_cases() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(spmm(&SparseMatrix::identity(2), &x).unwrap(), x);
        let p2 = build_csr(2, &[(0, 1, 1.0)]).unwrap();
        let e0 = DenseMatrix::column_vector(&[1.0, 0.0]);
        assert_eq!(spmm(&p2, &e0).unwrap().column(0), vec![0.0, 1.0]);
        assert!(spmm(&p2, &DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn from_csr_parts_validates() {
        assert!(
            SparseMatrix::from_csr_parts(2, 2, vec![0, 1, 2], vec![1, 0], vec![1.0, 1.0]).is_ok()
        );
        assert!(
            SparseMatrix::from_csr_parts(2, 2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err()
        );
        assert!(
            SparseMatrix::from_csr_parts(2, 2, vec![0, 1, 2], vec![1, 2], vec![1.0, 1.0]).is_err()
        );
    }

    fn random_sparse_and_dense() -> impl Strategy<Value = (SparseMatrix, DenseMatrix)> {
        (1usize..50, 1usize..5).prop_flat_map(|(n, f)| {
            (
                proptest::collection::vec((0..n, 0..n, -2.0f64..2.0), 0..(3 * n)),
                proptest::collection::vec(-3.0f64..3.0, n * f),
            )
                .prop_map(move |(trip, xs)| {
                    (
                        SparseMatrix::from_triplets(n, n, trip).unwrap(),
                        DenseMatrix::from_vec(n, f, xs).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn spmm_matches_dense_product((s, x) in random_sparse_and_dense()) {
            let oracle = s.to_dense().matmul(&x).unwrap();
            prop_assert!(spmm(&s, &x).unwrap().max_abs_diff(&oracle) <= 1e-12);
            let oracle_t = s.to_dense().transpose().matmul(&x).unwrap();
            prop_assert!(spmm_transpose(&s, &x).unwrap().max_abs_diff(&oracle_t) <= 1e-12);
        }

        #[test]
        fn triplet_assembly_is_valid_csr((s, _x) in random_sparse_and_dense()) {
            prop_assert!(s.validate().is_ok());
            prop_assert!(s.values().iter().all(|v| *v != 0.0));
        }
    }
}
