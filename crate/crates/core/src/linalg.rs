//! Dense symmetric linear algebra and subspace geometry.
//!
//! Everything here is a pure function over `nalgebra` dense matrices. The
//! eigensolver output is normalized (descending order, deterministic sign)
//! so that downstream fits are reproducible bit-for-bit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SirError};

/// Relative tolerance used when accepting an input as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Default eigenvalue floor for whitening, relative to the largest eigenvalue.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-12;

/// A finite symmetric matrix. Construction symmetrizes the input.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates that `m` is square, finite and symmetric to within
    /// [`SYMMETRY_TOL`] relative to its largest entry, then replaces it by
    /// `(m + mᵀ) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(SirError::invalid(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SirError::invalid("matrix has non-finite entries"));
        }
        let scale = m.amax().max(1.0);
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(SirError::invalid(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without the tolerance check. Used for matrices that are
    /// symmetric by construction up to rounding.
    pub(crate) fn symmetrized(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Principal submatrix on the given (sorted or unsorted) index set.
    pub fn restrict(&self, idx: &[usize]) -> SymMatrix {
        let k = idx.len();
        SymMatrix(DMatrix::from_fn(k, k, |i, j| self.0[(idx[i], idx[j])]))
    }

    /// Congruence `Wᵀ A W`, symmetrized.
    pub fn congruence(&self, w: &DMatrix<f64>) -> SymMatrix {
        SymMatrix::symmetrized(w.transpose() * &self.0 * w)
    }
}

/// Eigenvalues in nonincreasing order with column-orthonormal eigenvectors.
///
/// Each eigenvector's largest-magnitude entry is nonnegative (ties resolved
/// by the smallest row index).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    /// Leading `k` eigenvectors as a `dim x k` matrix.
    pub fn top_vectors(&self, k: usize) -> DMatrix<f64> {
        self.eigenvectors.columns(0, k).into_owned()
    }

    pub fn top_values(&self, k: usize) -> Vec<f64> {
        self.eigenvalues.iter().take(k).copied().collect()
    }

    /// `Q diag(λ) Qᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let q = &self.eigenvectors;
        q * DMatrix::from_diagonal(&self.eigenvalues) * q.transpose()
    }
}

/// Symmetric eigendecomposition, sorted descending with deterministic signs.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenDecomposition> {
    let m = a.as_matrix();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SirError::invalid("sym_eig: non-finite entries"));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    // total_cmp keeps the ordering deterministic even for repeated values
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(&mut col);
        eigenvectors.set_column(dst, &col);
    }
    Ok(EigenDecomposition { eigenvalues, eigenvectors })
}

// Near-ties in magnitude (within rounding) go to the smallest row index.
fn fix_sign(v: &mut DVector<f64>) {
    if v.is_empty() {
        return;
    }
    let amax = v.amax();
    let lead = v
        .iter()
        .position(|x| x.abs() >= amax * (1.0 - 1e-10))
        .unwrap_or(0);
    if v[lead] < 0.0 {
        v.neg_mut();
    }
}

/// `A^{-1/2}` through the eigendecomposition, with eigenvalues clamped
/// below at `floor * λ_max(A)`.
pub fn spd_inv_sqrt(a: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    if !(floor > 0.0) {
        return Err(SirError::invalid(format!("eigenvalue floor must be positive, got {floor}")));
    }
    let eig = sym_eig(a)?;
    let lmax = eig.eigenvalues.get(0).copied().unwrap_or(0.0);
    if !(lmax > 0.0) {
        return Err(SirError::SingularCovariance(format!(
            "largest eigenvalue {lmax} is not positive"
        )));
    }
    let clamp = floor * lmax;
    let scaled = eig.eigenvalues.map(|l| 1.0 / l.max(clamp).sqrt());
    let q = &eig.eigenvectors;
    Ok(SymMatrix::symmetrized(q * DMatrix::from_diagonal(&scaled) * q.transpose()))
}

/// Column means of an `n x p` matrix.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Sample covariance with divisor `n`.
pub fn sample_covariance(x: &DMatrix<f64>) -> Result<SymMatrix> {
    let n = x.nrows();
    if n < 2 {
        return Err(SirError::invalid(format!("sample_covariance needs n >= 2, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SirError::invalid("sample_covariance: non-finite entries"));
    }
    let mean = column_means(x);
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    let cov = centered.tr_mul(&centered) / n as f64;
    Ok(SymMatrix::symmetrized(cov))
}

/// A `p x d` matrix of basis columns, `d <= p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis(DMatrix<f64>);

impl Basis {
    /// Accepts a `p x d` matrix with `1 <= d <= p`, finite entries and full
    /// column rank.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let (p, d) = m.shape();
        if d == 0 || d > p {
            return Err(SirError::invalid(format!("basis shape {p}x{d} needs 1 <= d <= p")));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SirError::invalid("basis has non-finite entries"));
        }
        let sv = m.clone().singular_values();
        let smax = sv.max();
        let smin = sv.min();
        if !(smin > 1e-10 * smax.max(f64::MIN_POSITIVE)) {
            return Err(SirError::invalid(format!(
                "basis is column-rank deficient (singular values {smin:e} .. {smax:e})"
            )));
        }
        Ok(Basis(m))
    }

    /// Wraps a matrix known to have full column rank by construction.
    pub(crate) fn from_trusted(m: DMatrix<f64>) -> Self {
        Basis(m)
    }

    /// The first `d` standard basis vectors of `ℝᵖ`.
    pub fn standard(p: usize, d: usize) -> Result<Self> {
        if d == 0 || d > p {
            return Err(SirError::invalid(format!("standard basis {p}x{d} needs 1 <= d <= p")));
        }
        Ok(Basis(DMatrix::from_fn(p, d, |i, j| if i == j { 1.0 } else { 0.0 })))
    }

    /// Uniformly distributed point of the Stiefel manifold `O(p, d)`.
    pub fn random_orthonormal<R: Rng + ?Sized>(p: usize, d: usize, rng: &mut R) -> Result<Self> {
        if d == 0 || d > p {
            return Err(SirError::invalid(format!("random basis {p}x{d} needs 1 <= d <= p")));
        }
        let g = DMatrix::from_fn(p, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        // Haar measure needs the diag(R) > 0 convention
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Ok(Basis(q))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Euclidean-orthonormal basis of the same column span (thin QR).
    pub fn orthonormalized(&self) -> Basis {
        let mut q = self.0.clone().qr().q();
        for j in 0..q.ncols() {
            fix_sign_col(&mut q, j);
        }
        Basis(q)
    }

    /// `max |BᵀMB − I|` for a metric `M` (use the identity for Euclidean
    /// orthonormality).
    pub fn gram_deviation(&self, metric: &SymMatrix) -> f64 {
        let g = self.0.transpose() * metric.as_matrix() * &self.0;
        let d = g.nrows();
        (g - DMatrix::<f64>::identity(d, d)).amax()
    }

    pub fn orthonormality_error(&self) -> f64 {
        let g = self.0.tr_mul(&self.0);
        let d = g.nrows();
        (g - DMatrix::<f64>::identity(d, d)).amax()
    }

    /// `B Bᵀ`.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }
}

fn fix_sign_col(m: &mut DMatrix<f64>, j: usize) {
    let mut col = m.column(j).into_owned();
    fix_sign(&mut col);
    m.set_column(j, &col);
}

/// `‖B1 B1ᵀ − B2 B2ᵀ‖²_F`.
///
/// Evaluated as `‖B1ᵀB1‖² + ‖B2ᵀB2‖² − 2‖B1ᵀB2‖²`, which is exact for any
/// pair of matrices and costs `O(p d²)`.
pub fn general_loss(b1: &Basis, b2: &Basis) -> Result<f64> {
    if b1.rows() != b2.rows() || b1.cols() != b2.cols() {
        return Err(SirError::invalid(format!(
            "general_loss shape mismatch: {}x{} vs {}x{}",
            b1.rows(),
            b1.cols(),
            b2.rows(),
            b2.cols()
        )));
    }
    let g11 = b1.0.tr_mul(&b1.0).norm_squared();
    let g22 = b2.0.tr_mul(&b2.0).norm_squared();
    let g12 = b1.0.tr_mul(&b2.0).norm_squared();
    Ok((g11 + g22 - 2.0 * g12).max(0.0))
}
