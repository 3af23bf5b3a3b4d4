use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SirError};
use crate::models::synthetic::{standard_normal_matrix, NOISE_SD, SYNTHETIC_P};
use crate::models::SimRng;
use crate::slicing::Dataset;

/// Default sample-size cap for exact GP draws (dense `O(n³)` Cholesky).
pub const DEFAULT_GP_CAP: usize = 20_000;

const MAX_JITTER: f64 = 1e-6;

/// GP link `f ~ GP(0, exp(−‖x − x′‖²/2))` evaluated on `BᵀX`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpLinkSpec {
    pub noise_sd: f64,
    /// Diagonal jitter added to the kernel matrix; escalated ×10 on
    /// factorization failure up to `1e-6`.
    pub jitter: f64,
    pub cap: usize,
}

impl Default for GpLinkSpec {
    fn default() -> Self {
        GpLinkSpec { noise_sd: NOISE_SD, jitter: 1e-10, cap: DEFAULT_GP_CAP }
    }
}

/// M3: `X ~ N(0, I₁₅)`, `Y = f(X₁..X_d) + noise_sd·ε` with `f` drawn jointly
/// at the sample points through a Cholesky factor of the kernel matrix.
pub fn sample_gp_model(n: usize, d: usize, rng: &mut SimRng, spec: &GpLinkSpec) -> Result<Dataset> {
    if n == 0 || d == 0 || d > SYNTHETIC_P {
        return Err(SirError::invalid(format!("GP model needs n >= 1 and 1 <= d <= {SYNTHETIC_P}")));
    }
    if n > spec.cap {
        return Err(SirError::ResourceLimit(format!(
            "GP sample size {n} exceeds cap {} (dense O(n^3) factorization)",
            spec.cap
        )));
    }
    let x = standard_normal_matrix(n, SYNTHETIC_P, rng);
    let f = sample_gp_values(&x.columns(0, d).into_owned(), spec.jitter, rng)?;
    let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y = f + DVector::from_vec(eps) * spec.noise_sd;
    Dataset::new(x, y)
}

/// Joint draw of `f(x₁), …, f(xₙ)` for the unit-lengthscale squared
/// exponential kernel at the rows of `points`.
pub fn sample_gp_values<R: Rng + ?Sized>(points: &DMatrix<f64>, jitter: f64, rng: &mut R) -> Result<DVector<f64>> {
    if !(jitter > 0.0) {
        return Err(SirError::invalid("GP jitter must be positive"));
    }
    let (n, d) = points.shape();
    let kernel = |i: usize, j: usize| {
        let mut r2 = 0.0;
        for k in 0..d {
            let t = points[(i, k)] - points[(j, k)];
            r2 += t * t;
        }
        (-0.5 * r2).exp()
    };
    let mut jitter = jitter;
    let llt = loop {
        let k = Mat::<f64>::from_fn(n, n, |i, j| kernel(i, j) + if i == j { jitter } else { 0.0 });
        match k.llt(Side::Lower) {
            Ok(l) => break l,
            Err(_) if jitter * 10.0 <= MAX_JITTER * (1.0 + 1e-12) => jitter *= 10.0,
            Err(e) => {
                return Err(SirError::FactorizationFailed(format!(
                    "kernel Cholesky failed at jitter {jitter:e}: {e:?}"
                )))
            }
        }
    };
    let l = llt.L();
    let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(DVector::from_fn(n, |i, _| {
        let mut f = 0.0;
        for (j, gj) in g.iter().enumerate().take(i + 1) {
            f += l[(i, j)] * gj;
        }
        f
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_variance() {
        // f₁ ~ N(0, 1 + jitter), so Y has variance ≈ 1 + 1e-4
        let spec = GpLinkSpec::default();
        let ys: Vec<f64> = (0..4000)
            .map(|r| sample_gp_model(1, 2, &mut SimRng::new(9, r), &spec).unwrap().y()[0])
            .collect();
        let var = ys.iter().map(|v| v * v).sum::<f64>() / ys.len() as f64;
        assert!((var - 1.0001).abs() < 0.08, "variance {var}");
    }

    #[test]
    fn duplicate_points_get_nearly_equal_values() {
        let pts = DMatrix::from_row_slice(3, 2, &[0.3, -1.0, 0.3, -1.0, 1.5, 0.2]);
        for r in 0..20 {
            let f = sample_gp_values(&pts, 1e-10, &mut SimRng::new(5, r)).unwrap();
            assert!((f[0] - f[1]).abs() < 1e-3, "{} vs {}", f[0], f[1]);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let spec = GpLinkSpec { cap: 10, ..GpLinkSpec::default() };
        assert!(matches!(
            sample_gp_model(11, 1, &mut SimRng::new(0, 0), &spec),
            Err(SirError::ResourceLimit(_))
        ));
    }

    #[test]
    fn deterministic_given_stream() {
        let spec = GpLinkSpec::default();
        let a = sample_gp_model(40, 3, &mut SimRng::new(3, 1), &spec).unwrap();
        let b = sample_gp_model(40, 3, &mut SimRng::new(3, 1), &spec).unwrap();
        assert_eq!(a, b);
    }
}
