//! Fixed-coefficient graph filters and their frequency responses.
//!
//! Two sign conventions exist for rational filters. [`rational_response`]
//! evaluates `Σ p_k λ^k / (1 + Σ q_k λ^k)`, while [`rational_filter_exact`]
//! solves `(I − Σ q_k L^k) X̄ = (Σ p_k L^k) X`. Neither is silently rewritten
//! into the other; [`RationalFilterSpec::with_negated_denominator`] converts.
//!
//! ARMA₁ recursions run on `M = I − L`, whose eigenvalues are `μ = 1 − λ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    solve_dense, spmm, DenseMatrix, LinalgError, SparseMatrix, SpectralDecomposition,
    DEFAULT_DENSE_CAP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("|a| = {a} must be below 1 for the recursion to converge")]
    UnstableCoefficient { a: f64 },
    #[error("recursion did not reach tolerance within {iterations} iterations")]
    NotConverged {
        iterations: usize,
        last: Box<DenseMatrix>,
    },
    #[error("response has a pole at {at}")]
    Pole { at: f64 },
    #[error("expected length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid filter specification: {0}")]
    InvalidSpec(String),
}

/// Polynomial filter weights `w_0..w_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFilterSpec {
    pub weights: Vec<f64>,
}

impl PolyFilterSpec {
    pub fn new(weights: Vec<f64>) -> Result<Self, FilterError> {
        let spec = Self { weights };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.weights.is_empty() {
            return Err(FilterError::InvalidSpec(
                "at least one weight required".into(),
            ));
        }
        if !self.weights.iter().all(|w| w.is_finite()) {
            return Err(FilterError::InvalidSpec("weights must be finite".into()));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.weights.len() - 1
    }
}

/// Numerator `p_0..p_K` and denominator `q_1..q_K` of a rational filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalFilterSpec {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

impl RationalFilterSpec {
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self, FilterError> {
        let spec = Self {
            numerator,
            denominator,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.numerator.is_empty() {
            return Err(FilterError::InvalidSpec("numerator needs p_0".into()));
        }
        if !self
            .numerator
            .iter()
            .chain(&self.denominator)
            .all(|c| c.is_finite())
        {
            return Err(FilterError::InvalidSpec(
                "coefficients must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        (self.numerator.len() - 1).max(self.denominator.len())
    }

    /// Same coefficients with `q_k → −q_k`: moves a filter between the
    /// `1 + Σ q_k λ^k` and `1 − Σ q_k L^k` denominator conventions.
    pub fn with_negated_denominator(&self) -> Self {
        Self {
            numerator: self.numerator.clone(),
            denominator: self.denominator.iter().map(|q| -q).collect(),
        }
    }
}

/// First-order ARMA coefficients of `X̄ ← a·M·X̄ + b·X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arma1Params {
    pub a: f64,
    pub b: f64,
}

impl Arma1Params {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    /// Residue `r = −b/a` of the pole-residue form `r/(μ − p)`.
    pub fn residue(&self) -> f64 {
        -self.b / self.a
    }

    /// Pole `p = 1/a`.
    pub fn pole(&self) -> f64 {
        1.0 / self.a
    }

    fn check_stable(&self) -> Result<(), FilterError> {
        if !(self.a.abs() < 1.0) {
            return Err(FilterError::UnstableCoefficient { a: self.a });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionOptions {
    /// Stop once `‖X̄⁽ᵗ⁺¹⁾ − X̄⁽ᵗ⁾‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RecursionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionOutput {
    pub output: DenseMatrix,
    /// Updates performed (per ARMA₁ branch for sums of recursions).
    pub iterations: Vec<usize>,
}

fn check_square_match(
    op: &'static str,
    s: &SparseMatrix,
    x: &DenseMatrix,
) -> Result<(), FilterError> {
    if s.n_rows() != s.n_cols() || s.n_cols() != x.n_rows() {
        return Err(LinalgError::DimensionMismatch {
            op,
            left: (s.n_rows(), s.n_cols()),
            right: x.shape(),
        }
        .into());
    }
    Ok(())
}

fn check_dense_cap(n: usize) -> Result<(), FilterError> {
    if n > DEFAULT_DENSE_CAP {
        return Err(LinalgError::TooLarge {
            n,
            cap: DEFAULT_DENSE_CAP,
        }
        .into());
    }
    Ok(())
}

/// `U diag(h) Uᵀ X` for a response sampled at each eigenvalue.
pub fn spectral_filter_apply(
    decomp: &SpectralDecomposition,
    response: &[f64],
    x: &DenseMatrix,
) -> Result<DenseMatrix, FilterError> {
    if response.len() != decomp.n() {
        return Err(FilterError::LengthMismatch {
            expected: decomp.n(),
            got: response.len(),
        });
    }
    let mut coeffs = decomp.project(x)?;
    for (m, h) in response.iter().enumerate() {
        for v in coeffs.row_mut(m) {
            *v *= h;
        }
    }
    Ok(decomp.eigenvectors.matmul(&coeffs)?)
}

/// `Σ_k w_k L^k X` by Horner's rule over sparse products.
pub fn poly_filter_apply(
    l: &SparseMatrix,
    spec: &PolyFilterSpec,
    x: &DenseMatrix,
) -> Result<DenseMatrix, FilterError> {
    spec.validate()?;
    check_square_match("poly_filter_apply", l, x)?;
    let mut iter = spec.weights.iter().rev();
    let mut acc = x.scale(*iter.next().expect("validated non-empty"));
    for &w in iter {
        acc = spmm(l, &acc)?;
        acc.axpy(w, x)?;
    }
    Ok(acc)
}

/// `Σ_k w_k T_k(L̃) X` with `T_0 = X`, `T_1 = L̃X`, `T_k = 2L̃T_{k−1} − T_{k−2}`.
pub fn cheb_filter_apply(
    l_scaled: &SparseMatrix,
    spec: &PolyFilterSpec,
    x: &DenseMatrix,
) -> Result<DenseMatrix, FilterError> {
    spec.validate()?;
    check_square_match("cheb_filter_apply", l_scaled, x)?;
    let mut out = x.scale(spec.weights[0]);
    if spec.weights.len() == 1 {
        return Ok(out);
    }
    let mut prev = x.clone();
    let mut cur = spmm(l_scaled, x)?;
    out.axpy(spec.weights[1], &cur)?;
    for &w in &spec.weights[2..] {
        let mut next = spmm(l_scaled, &cur)?.scale(2.0);
        next.axpy(-1.0, &prev)?;
        out.axpy(w, &next)?;
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(out)
}

/// Iterates `X̄ ← a·M·X̄ + b·X` from `X̄⁽⁰⁾ = X` until successive iterates
/// differ by at most `opts.tol` in max-norm.
pub fn arma1_recursion(
    m: &SparseMatrix,
    params: Arma1Params,
    x: &DenseMatrix,
    opts: &RecursionOptions,
) -> Result<RecursionOutput, FilterError> {
    params.check_stable()?;
    check_square_match("arma1_recursion", m, x)?;
    let bx = x.scale(params.b);
    let mut cur = x.clone();
    for it in 1..=opts.max_iter {
        let mut next = spmm(m, &cur)?.scale(params.a);
        next.axpy(1.0, &bx)?;
        let diff = next.max_abs_diff(&cur);
        cur = next;
        if diff <= opts.tol {
            return Ok(RecursionOutput {
                output: cur,
                iterations: vec![it],
            });
        }
    }
    Err(FilterError::NotConverged {
        iterations: opts.max_iter,
        last: Box::new(cur),
    })
}

/// Limit of the ARMA₁ recursion, `b (I − aM)⁻¹ X`, by dense LU.
pub fn arma1_closed_form(
    m: &SparseMatrix,
    params: Arma1Params,
    x: &DenseMatrix,
) -> Result<DenseMatrix, FilterError> {
    check_square_match("arma1_closed_form", m, x)?;
    check_dense_cap(m.n_rows())?;
    let mut system = m.to_dense().scale(-params.a);
    for i in 0..system.n_rows() {
        system.row_mut(i)[i] += 1.0;
    }
    Ok(solve_dense(&system, &x.scale(params.b))?)
}

/// Sum of `K` parallel ARMA₁ recursions.
pub fn arma_k_apply(
    m: &SparseMatrix,
    params: &[Arma1Params],
    x: &DenseMatrix,
    opts: &RecursionOptions,
) -> Result<RecursionOutput, FilterError> {
    if params.is_empty() {
        return Err(FilterError::InvalidSpec(
            "ARMA_K needs at least one branch".into(),
        ));
    }
    check_square_match("arma_k_apply", m, x)?;
    let mut out = DenseMatrix::zeros(x.n_rows(), x.n_cols());
    let mut iterations = Vec::with_capacity(params.len());
    for &p in params {
        let branch = arma1_recursion(m, p, x, opts)?;
        out.axpy(1.0, &branch.output)?;
        iterations.extend(branch.iterations);
    }
    Ok(RecursionOutput {
        output: out,
        iterations,
    })
}

/// Dense solve of `(I − Σ_k q_k L^k) X̄ = (Σ_k p_k L^k) X`.
pub fn rational_filter_exact(
    l: &SparseMatrix,
    spec: &RationalFilterSpec,
    x: &DenseMatrix,
) -> Result<DenseMatrix, FilterError> {
    spec.validate()?;
    check_square_match("rational_filter_exact", l, x)?;
    let n = l.n_rows();
    check_dense_cap(n)?;
    let rhs = poly_filter_apply(
        l,
        &PolyFilterSpec {
            weights: spec.numerator.clone(),
        },
        x,
    )?;
    let mut system = DenseMatrix::identity(n);
    let dense_l = l.to_dense();
    let mut power = DenseMatrix::identity(n);
    for &q in &spec.denominator {
        power = power.matmul(&dense_l)?;
        if q != 0.0 {
            system.axpy(-q, &power)?;
        }
    }
    Ok(solve_dense(&system, &rhs)?)
}

/// `Σ w_k λ^k`.
pub fn poly_response(spec: &PolyFilterSpec, lambda: f64) -> f64 {
    spec.weights
        .iter()
        .rev()
        .fold(0.0, |acc, w| acc * lambda + w)
}

/// `Σ w_k T_k(2λ/λ_max − 1)`.
pub fn cheb_response(spec: &PolyFilterSpec, lambda: f64, lambda_max: f64) -> f64 {
    let t = 2.0 * lambda / lambda_max - 1.0;
    let (mut prev, mut cur) = (1.0, t);
    let mut out = spec.weights[0];
    if let Some(w1) = spec.weights.get(1) {
        out += w1 * t;
    }
    for w in spec.weights.iter().skip(2) {
        let next = 2.0 * t * cur - prev;
        out += w * next;
        prev = cur;
        cur = next;
    }
    out
}

fn denominator_check(den: f64, at: f64) -> Result<(), FilterError> {
    if den == 0.0 || !den.is_finite() {
        return Err(FilterError::Pole { at });
    }
    Ok(())
}

/// `Σ p_k λ^k / (1 + Σ q_k λ^k)`.
pub fn rational_response(spec: &RationalFilterSpec, lambda: f64) -> Result<f64, FilterError> {
    let num = spec
        .numerator
        .iter()
        .rev()
        .fold(0.0, |acc, p| acc * lambda + p);
    let den = 1.0
        + spec
            .denominator
            .iter()
            .rev()
            .fold(0.0, |acc, q| (acc + q) * lambda);
    denominator_check(den, lambda)?;
    Ok(num / den)
}

/// `b / (1 − aμ)`, equivalently `r / (μ − p)`.
pub fn arma1_response(params: Arma1Params, mu: f64) -> Result<f64, FilterError> {
    let den = 1.0 - params.a * mu;
    denominator_check(den, mu)?;
    Ok(params.b / den)
}

/// `Σ_k b_k / (1 − a_k μ)`.
pub fn arma_k_response(params: &[Arma1Params], mu: f64) -> Result<f64, FilterError> {
    params.iter().map(|&p| arma1_response(p, mu)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{build_csr, modified_laplacian, normalized_laplacian, symmetric_eig};

    fn p2() -> SparseMatrix {
        build_csr(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn e0() -> DenseMatrix {
        DenseMatrix::column_vector(&[1.0, 0.0])
    }

    #[test]
    fn spectral_apply_small_cases() {
        let l = normalized_laplacian(&p2());
        let d = symmetric_eig(&l.to_dense()).unwrap();
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]);
        let id = spectral_filter_apply(&d, &[1.0, 1.0], &x).unwrap();
        assert!(id.max_abs_diff(&x) <= 1e-10);
        assert!(
            spectral_filter_apply(&d, &[0.0, 0.0], &x)
                .unwrap()
                .max_abs()
                == 0.0
        );
        // h(0) = 2, h(2) = 2/3: the ARMA₁ response b/(1 − aμ) with a=0.5, b=1.
        let y = spectral_filter_apply(&d, &[2.0, 2.0 / 3.0], &e0()).unwrap();
        assert!(y.max_abs_diff(&DenseMatrix::column_vector(&[4.0 / 3.0, 2.0 / 3.0])) <= 1e-12);
        assert!(matches!(
            spectral_filter_apply(&d, &[1.0], &x),
            Err(FilterError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn poly_small_cases() {
        let l = normalized_laplacian(&p2());
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]);
        let id = PolyFilterSpec::new(vec![1.0]).unwrap();
        assert_eq!(poly_filter_apply(&l, &id, &x).unwrap(), x);
        let lin = PolyFilterSpec::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(
            poly_filter_apply(&l, &lin, &x).unwrap(),
            spmm(&l, &x).unwrap()
        );
        assert!(PolyFilterSpec::new(vec![]).is_err());
    }

    #[test]
    fn cheb_small_cases() {
        let l = normalized_laplacian(&p2());
        let x = DenseMatrix::column_vector(&[0.3, -1.0]);
        let id = PolyFilterSpec::new(vec![1.0]).unwrap();
        assert_eq!(cheb_filter_apply(&l, &id, &x).unwrap(), x);
        // T_2(0.5) = 2·0.25 − 1.
        let op = SparseMatrix::from_diagonal(&[0.5]);
        let t2 = PolyFilterSpec::new(vec![0.0, 0.0, 1.0]).unwrap();
        let y = cheb_filter_apply(&op, &t2, &DenseMatrix::column_vector(&[1.0])).unwrap();
        assert!((y.get(0, 0) + 0.5).abs() < 1e-15);
        assert!((cheb_response(&t2, 1.5, 2.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn arma1_small_cases() {
        let m = modified_laplacian(&normalized_laplacian(&p2()));
        let x = e0();
        let trivial = arma1_recursion(
            &m,
            Arma1Params::new(0.0, 1.0),
            &x,
            &RecursionOptions::default(),
        )
        .unwrap();
        assert_eq!(trivial.output, x);
        assert_eq!(trivial.iterations, vec![1]);

        // (I − 0.5A)⁻¹ = (1/0.75)[[1, 0.5], [0.5, 1]] on P2.
        let expected = DenseMatrix::column_vector(&[4.0 / 3.0, 2.0 / 3.0]);
        let params = Arma1Params::new(0.5, 1.0);
        let closed = arma1_closed_form(&m, params, &x).unwrap();
        assert!(closed.max_abs_diff(&expected) <= 1e-15);
        let opts = RecursionOptions::default();
        let rec = arma1_recursion(&m, params, &x, &opts).unwrap();
        assert!(rec.output.max_abs_diff(&expected) <= opts.tol * params.b / (1.0 - params.a));

        assert_eq!(
            arma1_closed_form(&m, Arma1Params::new(0.0, 2.5), &x).unwrap(),
            x.scale(2.5)
        );
    }

    #[test]
    fn arma1_rejects_unstable_and_reports_last_iterate() {
        let m = modified_laplacian(&normalized_laplacian(&p2()));
        assert!(matches!(
            arma1_recursion(
                &m,
                Arma1Params::new(1.0, 1.0),
                &e0(),
                &RecursionOptions::default()
            ),
            Err(FilterError::UnstableCoefficient { .. })
        ));
        let opts = RecursionOptions {
            tol: 1e-12,
            max_iter: 3,
        };
        match arma1_recursion(&m, Arma1Params::new(0.9, 1.0), &e0(), &opts) {
            Err(FilterError::NotConverged {
                iterations: 3,
                last,
            }) => assert_eq!(last.shape(), (2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn arma_k_small_cases() {
        let m = modified_laplacian(&normalized_laplacian(&p2()));
        let x = DenseMatrix::column_vector(&[0.2, 0.9]);
        let opts = RecursionOptions::default();
        let p = Arma1Params::new(0.4, 0.7);
        let single = arma1_recursion(&m, p, &x, &opts).unwrap();
        assert_eq!(arma_k_apply(&m, &[p], &x, &opts).unwrap(), single);
        let cancel = arma_k_apply(&m, &[p, Arma1Params::new(0.4, -0.7)], &x, &opts).unwrap();
        // Both branches start from X, so they cancel only up to the stopping tolerance.
        assert!(cancel.output.max_abs() <= 2.0 * opts.tol / (1.0 - 0.4));
    }

    #[test]
    fn rational_exact_small_cases() {
        let l = normalized_laplacian(&p2());
        let x = DenseMatrix::column_vector(&[0.25, -1.5]);
        let id = RationalFilterSpec::new(vec![1.0], vec![]).unwrap();
        assert_eq!(rational_filter_exact(&l, &id, &x).unwrap(), x);
        // Numerator and denominator cancel: (I − 0.25L)⁻¹(I − 0.25L) X = X.
        let cancel = RationalFilterSpec::new(vec![1.0, -0.25], vec![0.25]).unwrap();
        assert!(
            rational_filter_exact(&l, &cancel, &x)
                .unwrap()
                .max_abs_diff(&x)
                <= 1e-15
        );
        // 1 − 0.5λ vanishes at λ = 2, an eigenvalue of the P2 Laplacian.
        let singular = RationalFilterSpec::new(vec![1.0], vec![0.5]).unwrap();
        assert!(matches!(
            rational_filter_exact(&l, &singular, &x),
            Err(FilterError::Linalg(LinalgError::Singular { .. }))
        ));
    }

    #[test]
    fn responses() {
        let p = Arma1Params::new(0.5, 1.0);
        assert_eq!(arma1_response(p, 0.0).unwrap(), 1.0);
        assert_eq!(arma1_response(p, 1.0).unwrap(), 2.0);
        assert!(matches!(
            arma1_response(p, 2.0),
            Err(FilterError::Pole { .. })
        ));
        let mu = 0.3;
        let pole_residue = p.residue() / (mu - p.pole());
        assert!((arma1_response(p, mu).unwrap() - pole_residue).abs() < 1e-15);
        let r = RationalFilterSpec::new(vec![0.0, 1.0], vec![0.5]).unwrap();
        assert!((rational_response(&r, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let node = r.with_negated_denominator();
        assert_eq!(node.denominator, vec![-0.5]);
        assert_eq!(node.with_negated_denominator(), r);
        assert!(
            (poly_response(&PolyFilterSpec::new(vec![1.0, 2.0, 3.0]).unwrap(), 2.0) - 17.0).abs()
                < 1e-15
        );
    }
}
