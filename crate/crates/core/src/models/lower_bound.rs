//! The adversarial lower-bound distribution and its analytic quantities.
//!
//! `X ~ N(0, I_p)`, `Z = ρBᵀX + √(1−ρ²)ξ`, `W = ψ(Z)`, `Y = W + η` with
//! `η ~ Unif(−σ, σ)`. `ψ` returns the signed 1-based index of the unique
//! largest `|z_i|` inside the ball `‖z‖² ≤ m_d` (the χ²_d median) and 0
//! otherwise, so `P(W = 0) = 1/2` and `P(W = ±i) = 1/(4d)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use statrs::function::gamma::gamma_lr;

use crate::error::{Result, SirError};
use crate::linalg::Basis;
use crate::models::synthetic::{standard_normal_matrix, LabeledSample};
use crate::models::SimRng;
use crate::slicing::Dataset;
use crate::stats::McEstimate;

/// Default half-width of the uniform response noise.
pub const DEFAULT_SIGMA: f64 = 0.5;

/// Minimum draw count accepted by the λ₀,d estimator.
pub const MIN_LAMBDA0_SAMPLES: usize = 100_000;

/// Median of the χ²_d distribution by bisection on the regularized lower
/// incomplete gamma function, to `|CDF(m) − 1/2| ≤ 1e-10`.
pub fn chi2_median(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(SirError::invalid("chi2_median needs d >= 1"));
    }
    let a = d as f64 / 2.0;
    let cdf = |x: f64| gamma_lr(a, x / 2.0);
    let mut lo = 0.0;
    let mut hi = d as f64 + 10.0 * (d as f64).sqrt() + 10.0;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let f = cdf(mid) - 0.5;
        if f.abs() <= 1e-13 || hi - lo <= 1e-15 * hi {
            break;
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Signed 1-based index of the unique largest `|z_i|`, or 0 on a tie.
pub fn psi0(z: &[f64]) -> i32 {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    let mut tied = false;
    for (i, v) in z.iter().enumerate() {
        let a = v.abs();
        if a > best_abs {
            best = i;
            best_abs = a;
            tied = false;
        } else if a == best_abs {
            tied = true;
        }
    }
    if z.is_empty() || tied {
        return 0;
    }
    let idx = (best + 1) as i32;
    if z[best] > 0.0 {
        idx
    } else if z[best] < 0.0 {
        -idx
    } else {
        0
    }
}

/// `ψ⁰` restricted to the ball `‖z‖² ≤ m`.
pub fn psi(z: &[f64], m: f64) -> i32 {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    if r2 > m {
        0
    } else {
        psi0(z)
    }
}

/// Parameters of the lower-bound construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundModel {
    basis: Basis,
    rho: f64,
    sigma: f64,
    median: f64,
    coordinate: bool,
}

impl LowerBoundModel {
    pub fn new(basis: Basis, rho: f64, sigma: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(SirError::invalid(format!("rho must lie in (0, 1), got {rho}")));
        }
        if !(sigma > 0.0 && sigma <= 0.5) {
            return Err(SirError::invalid(format!("sigma must lie in (0, 1/2], got {sigma}")));
        }
        let err = basis.orthonormality_error();
        if err > 1e-8 {
            return Err(SirError::invalid(format!("basis is not orthonormal (|BᵀB − I| = {err:e})")));
        }
        let d = basis.cols();
        let median = chi2_median(d)?;
        let m = basis.as_matrix();
        let coordinate = (0..m.nrows())
            .all(|i| (0..d).all(|j| m[(i, j)] == if i == j { 1.0 } else { 0.0 }));
        Ok(LowerBoundModel { basis, rho, sigma, median, coordinate })
    }

    /// `B = [I_d; 0]`.
    pub fn standard(p: usize, d: usize, rho: f64, sigma: f64) -> Result<Self> {
        Self::new(Basis::standard(p, d)?, rho, sigma)
    }

    pub fn p(&self) -> usize {
        self.basis.rows()
    }

    pub fn d(&self) -> usize {
        self.basis.cols()
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// χ²_d median `m_d`.
    pub fn median(&self) -> f64 {
        self.median
    }

    /// Population `Cov(E[X|Y]) = ρ² λ₀,d B Bᵀ` for a given `λ₀,d`.
    pub fn candidate_matrix(&self, lambda0: f64) -> DMatrix<f64> {
        self.basis.projection() * (self.rho * self.rho * lambda0)
    }
}

/// Draws `n` observations and the latent labels `W`.
pub fn sample_lower_bound(model: &LowerBoundModel, n: usize, rng: &mut SimRng) -> Result<LabeledSample> {
    if n == 0 {
        return Err(SirError::invalid("sample size must be at least 1"));
    }
    let d = model.d();
    let x = standard_normal_matrix(n, model.p(), rng);
    let index = if model.coordinate {
        x.columns(0, d).into_owned()
    } else {
        &x * model.basis.as_matrix()
    };
    let rho = model.rho;
    let tail = (1.0 - rho * rho).sqrt();
    let noise = Uniform::new(-model.sigma, model.sigma).map_err(|e| SirError::Internal(e.to_string()))?;
    let mut z = vec![0.0; d];
    let mut latent = Vec::with_capacity(n);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        for (j, v) in z.iter_mut().enumerate() {
            let xi: f64 = rng.sample(StandardNormal);
            *v = rho * index[(i, j)] + tail * xi;
        }
        let w = psi(&z, model.median);
        latent.push(i64::from(w));
        y[i] = f64::from(w) + noise.sample(rng);
    }
    Ok(LabeledSample { data: Dataset::new(x, y)?, latent })
}

/// Monte Carlo `λ₀,d = (2d)⁻¹ E(Z₁ | Z ∈ A₁)²` with `A₁ = ψ⁻¹(1)`.
///
/// The conditional mean is the ratio `E[Z₁ 1_{A₁}] / P(A₁)` of two sample
/// means; the standard error comes from the delta method.
pub fn lambda_0d<R: Rng + ?Sized>(d: usize, samples: usize, rng: &mut R) -> Result<McEstimate> {
    if samples < MIN_LAMBDA0_SAMPLES {
        return Err(SirError::invalid(format!(
            "lambda_0d needs at least {MIN_LAMBDA0_SAMPLES} draws, got {samples}"
        )));
    }
    let m = chi2_median(d)?;
    let mut z = vec![0.0; d];
    let (mut s1, mut s2, mut cnt) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..samples {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if psi(&z, m) == 1 {
            s1 += z[0];
            s2 += z[0] * z[0];
            cnt += 1;
        }
    }
    if cnt < 2 {
        return Err(SirError::Internal("no draws landed in A1".into()));
    }
    let c = cnt as f64;
    let r = s1 / c;
    // conditional variance of Z₁ on A₁, divided by the number of hits
    let var_r = (s2 / c - r * r) / c;
    let value = r * r / (2.0 * d as f64);
    let stderr = r.abs() / d as f64 * var_r.sqrt();
    Ok(McEstimate::new(value, stderr))
}

/// Monte Carlo `E[max_i |Z_i| 1{‖Z‖² ≤ m_d}]` for `Z ~ N(0, I_d)`.
pub fn max_abs_in_ball<R: Rng + ?Sized>(d: usize, samples: usize, rng: &mut R) -> Result<McEstimate> {
    if d == 0 || samples < 2 {
        return Err(SirError::invalid("max_abs_in_ball needs d >= 1 and at least 2 draws"));
    }
    let m = chi2_median(d)?;
    let mut z = vec![0.0; d];
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let mut r2 = 0.0;
        let mut amax = 0.0f64;
        for v in z.iter_mut() {
            let x: f64 = rng.sample(StandardNormal);
            *v = x;
            r2 += x * x;
            amax = amax.max(x.abs());
        }
        let t = if r2 <= m { amax } else { 0.0 };
        s1 += t;
        s2 += t * t;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(McEstimate::new(mean, (var / n).sqrt()))
}

/// Closed-form gSNR `2 d⁻¹ ρ² (E[max|Z_i| 1{‖Z‖² ≤ m_d}])²`, by Monte Carlo.
pub fn gsnr_formula<R: Rng + ?Sized>(d: usize, rho: f64, samples: usize, rng: &mut R) -> Result<McEstimate> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(SirError::invalid(format!("rho must lie in (0, 1], got {rho}")));
    }
    let e = max_abs_in_ball(d, samples, rng)?;
    let k = 2.0 * rho * rho / d as f64;
    Ok(McEstimate::new(k * e.value * e.value, 2.0 * k * e.value.abs() * e.stderr))
}

/// `ρ = θ √d / E[max|Z_i| 1{‖Z‖² ≤ m_d}]`, which makes the gSNR `2θ²`.
pub fn theta_to_rho<R: Rng + ?Sized>(theta: f64, d: usize, samples: usize, rng: &mut R) -> Result<f64> {
    if !(theta >= 0.0) {
        return Err(SirError::invalid(format!("theta must be nonnegative, got {theta}")));
    }
    let e = max_abs_in_ball(d, samples, rng)?;
    let rho = theta * (d as f64).sqrt() / e.value;
    if !(rho < 1.0) {
        return Err(SirError::ThetaTooLarge { theta, rho });
    }
    Ok(rho)
}

/// `Cov(X, Z)` joint covariance `[[I_p, ρB], [ρBᵀ, I_d]]`.
pub fn joint_xz_covariance(basis: &Basis, rho: f64) -> DMatrix<f64> {
    let (p, d) = (basis.rows(), basis.cols());
    let mut c = DMatrix::identity(p + d, p + d);
    let b = basis.as_matrix() * rho;
    c.view_mut((0, p), (p, d)).copy_from(&b);
    c.view_mut((p, 0), (d, p)).copy_from(&b.transpose());
    c
}

/// `KL(N(0, Σ₁) ‖ N(0, Σ₂))` through Cholesky factors.
pub fn gaussian_kl_zero_mean(cov1: &DMatrix<f64>, cov2: &DMatrix<f64>) -> Result<f64> {
    let k = cov1.nrows();
    if !cov1.is_square() || cov1.shape() != cov2.shape() {
        return Err(SirError::invalid("covariances must be square and of equal shape"));
    }
    let c1 = cov1
        .clone()
        .cholesky()
        .ok_or_else(|| SirError::Degenerate("first covariance is not positive definite".into()))?;
    let c2 = cov2
        .clone()
        .cholesky()
        .ok_or_else(|| SirError::Degenerate("second covariance is not positive definite".into()))?;
    let logdet = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = c2.solve(cov1).trace();
    Ok(0.5 * (trace - k as f64 + logdet(&c2.l()) - logdet(&c1.l())))
}

/// KL divergence between the `(X, Z)` joints of two lower-bound models,
/// computed from the multivariate Gaussian formula.
pub fn exact_kl_xz(b1: &Basis, b2: &Basis, rho: f64) -> Result<f64> {
    if b1.rows() != b2.rows() || b1.cols() != b2.cols() {
        return Err(SirError::invalid("bases must have the same shape"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(SirError::invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    for (k, b) in [b1, b2].iter().enumerate() {
        if b.orthonormality_error() > 1e-8 {
            return Err(SirError::invalid(format!("basis {} is not orthonormal", k + 1)));
        }
    }
    gaussian_kl_zero_mean(&joint_xz_covariance(b1, rho), &joint_xz_covariance(b2, rho))
}

/// `ρ² ‖B₁ − B₂‖²_F / (2(1 − ρ²))`.
pub fn kl_closed_form(b1: &Basis, b2: &Basis, rho: f64) -> f64 {
    let diff = (b1.as_matrix() - b2.as_matrix()).norm_squared();
    rho * rho * diff / (2.0 * (1.0 - rho * rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn chi2_median_against_closed_forms() {
        // m₁ = Φ⁻¹(3/4)²
        let q = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.75);
        assert_abs_diff_eq!(chi2_median(1).unwrap(), q * q, epsilon = 1e-9);
        assert_abs_diff_eq!(chi2_median(1).unwrap(), 0.454936, epsilon = 1e-6);
        // χ²₂ is exponential with mean 2
        assert_abs_diff_eq!(chi2_median(2).unwrap(), 2.0 * 2f64.ln(), epsilon = 1e-10);
        for d in 1..=60 {
            let m = chi2_median(d).unwrap();
            assert!((gamma_lr(d as f64 / 2.0, m / 2.0) - 0.5).abs() <= 1e-10);
        }
        assert!(chi2_median(0).is_err());
    }

    #[test]
    fn psi_rules() {
        let m3 = chi2_median(3).unwrap();
        assert_abs_diff_eq!(m3, 2.365974, epsilon = 1e-5);
        assert_eq!(psi(&[0.0, 0.0, 0.0], m3), 0);
        assert_eq!(psi(&[1.0, 0.0, 0.0], m3), 1);
        assert_eq!(psi(&[-1.0, 0.0, 0.0], m3), -1);
        assert_eq!(psi(&[2.0, 0.0, 0.0], m3), 0);
        assert_eq!(psi0(&[2.0, 0.0, 0.0]), 1);
        assert_eq!(psi0(&[0.1, -0.5, 0.5]), 0);
        assert_eq!(psi0(&[0.1, -0.6, 0.5]), -2);
    }

    #[test]
    fn model_validation() {
        assert!(LowerBoundModel::standard(5, 2, 0.0, 0.5).is_err());
        assert!(LowerBoundModel::standard(5, 2, 1.0, 0.5).is_err());
        assert!(LowerBoundModel::standard(5, 2, 0.5, 0.6).is_err());
        let skew = Basis::new(DMatrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap();
        assert!(LowerBoundModel::new(skew, 0.5, 0.5).is_err());
        let m = LowerBoundModel::standard(5, 2, 0.5, 0.5).unwrap();
        assert!(m.median() < 2.0 * (-1.0f64 / 6.0).exp());
    }

    #[test]
    fn kl_two_by_one_example() {
        let e1 = Basis::standard(3, 1).unwrap();
        let e2 = Basis::new(DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0])).unwrap();
        let direct = exact_kl_xz(&e1, &e2, 0.3).unwrap();
        assert_abs_diff_eq!(direct, 0.09 / (2.0 * 0.91) * 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(direct, kl_closed_form(&e1, &e2, 0.3), epsilon = 1e-12);
        assert_abs_diff_eq!(exact_kl_xz(&e1, &e1, 0.3).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn theta_zero_and_too_large() {
        let mut rng = SimRng::new(1, 1);
        assert_eq!(theta_to_rho(0.0, 3, 1000, &mut rng).unwrap(), 0.0);
        assert!(matches!(
            theta_to_rho(5.0, 3, 1000, &mut rng),
            Err(SirError::ThetaTooLarge { .. })
        ));
    }

    #[test]
    fn lambda0_requires_enough_draws() {
        assert!(lambda_0d(2, 10, &mut SimRng::new(0, 0)).is_err());
    }
}
