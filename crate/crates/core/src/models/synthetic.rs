use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Result, SirError};
use crate::models::lower_bound::psi0;
use crate::models::SimRng;
use crate::slicing::Dataset;

/// Ambient dimension of the synthetic multiple-index models.
pub const SYNTHETIC_P: usize = 15;

/// Structural dimension of M1 and M2.
pub const SYNTHETIC_D: usize = 5;

/// Noise scale of the synthetic and GP models.
pub const NOISE_SD: f64 = 0.01;

/// `n x p` matrix of independent standard normals, filled column by column.
pub fn standard_normal_matrix<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let data: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_vec(n, p, data)
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Link of M1 at the first five coordinates.
pub fn m1_link(x: &[f64]) -> f64 {
    x[0] + x[1].exp() + ((x[2] + 1.0).abs() + 1.0).ln() + x[3].sin() + x[4].atan()
}

/// Link of M2 at the first five coordinates. `(1 + x₃)⁻²` is not clipped.
pub fn m2_link(x: &[f64]) -> f64 {
    x[0].powi(3) + x[1] / (1.0 + x[2]).powi(2) + sgn(x[3]) * ((x[4] + 0.02).abs() + 5.0).ln()
}

fn sample_index_model(n: usize, rng: &mut SimRng, link: fn(&[f64]) -> f64) -> Result<Dataset> {
    if n == 0 {
        return Err(SirError::invalid("sample size must be at least 1"));
    }
    let x = standard_normal_matrix(n, SYNTHETIC_P, rng);
    let mut row = [0.0; SYNTHETIC_D];
    let y = DVector::from_fn(n, |i, _| {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        let eps: f64 = rng.sample(StandardNormal);
        link(&row) + NOISE_SD * eps
    });
    Dataset::new(x, y)
}

/// `X ~ N(0, I₁₅)`, `Y = X₁ + exp(X₂) + log(|X₃+1|+1) + sin(X₄) + arctan(X₅) + 0.01ε`.
pub fn sample_m1(n: usize, rng: &mut SimRng) -> Result<Dataset> {
    sample_index_model(n, rng, m1_link)
}

/// `X ~ N(0, I₁₅)`, `Y = X₁³ + X₂/(1+X₃)² + sgn(X₄)·log(|X₅+0.02|+5) + 0.01ε`.
pub fn sample_m2(n: usize, rng: &mut SimRng) -> Result<Dataset> {
    sample_index_model(n, rng, m2_link)
}

/// Sparse single-index model: `X ~ N(0, I_p)`, `β = s^{-1/2}(1, …, 1, 0, …, 0)`
/// with support `{0, …, s−1}`, `Y = sin(2βᵀX) + 0.1ε`.
pub fn sample_sparse_sin(n: usize, p: usize, s: usize, rng: &mut SimRng) -> Result<Dataset> {
    if n == 0 || s == 0 || s > p {
        return Err(SirError::invalid(format!("sparse model needs n >= 1 and 1 <= s <= p (p={p}, s={s})")));
    }
    let x = standard_normal_matrix(n, p, rng);
    let scale = 1.0 / (s as f64).sqrt();
    let y = DVector::from_fn(n, |i, _| {
        let index: f64 = (0..s).map(|j| x[(i, j)]).sum::<f64>() * scale;
        let eps: f64 = rng.sample(StandardNormal);
        (2.0 * index).sin() + 0.1 * eps
    });
    Dataset::new(x, y)
}

/// A sample with its discrete latent label.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub data: Dataset,
    pub latent: Vec<i64>,
}

/// `X ~ N(0, I_p)`, `Y = ψ⁰(X₁..X_d) + η` with `η ~ Unif(−1/2, 1/2)`.
///
/// Its candidate matrix is `d⁻¹ (E max|Z_i|)² I_d` on the first `d`
/// coordinates.
pub fn sample_joint_basic(p: usize, d: usize, n: usize, rng: &mut SimRng) -> Result<LabeledSample> {
    if d == 0 || d > p || n == 0 {
        return Err(SirError::invalid(format!("joint-basic model needs 1 <= d <= p and n >= 1 (p={p}, d={d}, n={n})")));
    }
    let x = standard_normal_matrix(n, p, rng);
    let noise = Uniform::new(-0.5, 0.5).map_err(|e| SirError::Internal(e.to_string()))?;
    let mut z = vec![0.0; d];
    let mut latent = Vec::with_capacity(n);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        for (j, v) in z.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        let w = psi0(&z);
        latent.push(i64::from(w));
        y[i] = f64::from(w) + noise.sample(rng);
    }
    Ok(LabeledSample { data: Dataset::new(x, y)?, latent })
}
