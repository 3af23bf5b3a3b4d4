//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use sirlab::models::SimRng;
use sirlab::Dataset;

pub fn rng(seed: u64, stream: u64) -> SimRng {
    SimRng::new(seed, stream)
}

pub fn normals(n: usize, p: usize, rng: &mut SimRng) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))
}

/// `(1/H) Σ_h x̄_h x̄_hᵀ` computed directly: sort indices by `y` (stable),
/// cut into `H` runs with the first `n mod H` runs one longer, and average
/// globally centred rows.
pub fn naive_candidate(x: &DMatrix<f64>, y: &DVector<f64>, h: usize) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].partial_cmp(&y[b]).unwrap());
    let mean: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let (base, extra) = (n / h, n % h);
    let mut out = DMatrix::zeros(p, p);
    let mut start = 0;
    for s in 0..h {
        let len = base + usize::from(s < extra);
        let mut m = DVector::zeros(p);
        for &i in &order[start..start + len] {
            for j in 0..p {
                m[j] += x[(i, j)] - mean[j];
            }
        }
        m /= len as f64;
        out += &m * m.transpose();
        start += len;
    }
    out / h as f64
}

pub fn naive_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut c = x.clone();
    for j in 0..p {
        let m = c.column(j).sum() / n as f64;
        c.column_mut(j).add_scalar_mut(-m);
    }
    c.transpose() * &c / n as f64
}

/// Restricted fit through a Cholesky factor `Σ_L = LLᵀ`: the top-`d`
/// eigenvectors `V` of `L⁻¹ Λ_L L⁻ᵀ` give `B = L⁻ᵀ V`. Returns the score
/// `Tr(Bᵀ Λ2_L B)`.
pub fn cholesky_restricted_score(
    lambda1: &DMatrix<f64>,
    sigma1: &DMatrix<f64>,
    lambda2: &DMatrix<f64>,
    support: &[usize],
    d: usize,
) -> f64 {
    let pick = |m: &DMatrix<f64>| DMatrix::from_fn(support.len(), support.len(), |i, j| m[(support[i], support[j])]);
    let chol = pick(sigma1).cholesky().expect("restricted covariance is positive definite");
    let l = chol.l();
    let l_inv = l.clone().try_inverse().unwrap();
    let m = &l_inv * pick(lambda1) * l_inv.transpose();
    let eig = m.symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let v = DMatrix::from_fn(support.len(), d, |i, j| eig.eigenvectors[(i, idx[j])]);
    let b = l_inv.transpose() * v;
    (b.transpose() * pick(lambda2) * b).trace()
}

/// Lower-bound label `ψ(z)` computed from scratch: the signed index (1-based)
/// of the largest `|z_i|` if `‖z‖² ≤ m` and that maximum is unique, else 0.
pub fn label_of(z: &[f64], m: f64) -> i64 {
    if z.iter().map(|v| v * v).sum::<f64>() > m {
        return 0;
    }
    let (mut best, mut arg, mut ties) = (-1.0f64, 0usize, 0usize);
    for (i, v) in z.iter().enumerate() {
        let a = v.abs();
        if a > best {
            best = a;
            arg = i;
            ties = 1;
        } else if a == best {
            ties += 1;
        }
    }
    if ties > 1 {
        return 0;
    }
    let s = if z[arg] > 0.0 { 1 } else { -1 };
    s * (arg as i64 + 1)
}

pub fn linear_dataset(n: usize, p: usize, beta: &DVector<f64>, noise: f64, rng: &mut SimRng) -> Dataset {
    let x = normals(n, p, rng);
    let mut y = &x * beta;
    for v in y.iter_mut() {
        *v += noise * rng.sample::<f64, _>(StandardNormal);
    }
    Dataset::new(x, y).unwrap()
}
