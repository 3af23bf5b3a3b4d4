//! Sliced inverse regression.
//!
//! Two modes: with `Σ = I` known, the fit is the top-`d` eigenvectors of
//! `Λ̂_H`. With `Σ` estimated, the fit maximizes `Tr(BᵀΛ̂_H B)` subject to
//! `BᵀΣ̂B = I_d` by eigendecomposing `Σ̂^{-1/2} Λ̂_H Σ̂^{-1/2}` and mapping the
//! leading eigenvectors back through `Σ̂^{-1/2}`.

use rayon::prelude::*;

use crate::error::{Result, SirError};
use crate::linalg::{sample_covariance, spd_inv_sqrt, sym_eig, Basis, EigenDecomposition, SymMatrix, DEFAULT_EIG_FLOOR};
use crate::models::{label_tag, sample_lower_bound, stream_id, LowerBoundModel, SimRng};
use crate::slicing::{candidate_matrix, slice, CandidateMatrix, Dataset};

/// Relative threshold below which an eigenvalue of `Λ̂_H` counts as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    /// `Cov(X) = I` is known; no whitening.
    Identity,
    /// Whiten with the sample covariance.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirConfig {
    pub slices: usize,
    pub d: usize,
    pub sigma_mode: SigmaMode,
    pub eig_floor: f64,
}

impl SirConfig {
    pub fn new(slices: usize, d: usize, sigma_mode: SigmaMode) -> Self {
        SirConfig { slices, d, sigma_mode, eig_floor: DEFAULT_EIG_FLOOR }
    }

    /// `H = min(10d, n/10)`, but never below `d`.
    pub fn default_slices(d: usize, n: usize) -> usize {
        (10 * d).min(n / 10).max(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SirWarning {
    /// `d` exceeds the numerical rank of the (whitened) candidate matrix;
    /// the trailing columns span an arbitrary part of its null space.
    RankDeficient { rank: usize, d: usize },
}

impl std::fmt::Display for SirWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SirWarning::RankDeficient { rank, d } => {
                write!(f, "candidate matrix has numerical rank {rank} < d = {d}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SirFit {
    /// `p x d`; Euclidean-orthonormal in identity mode, `Σ̂`-orthonormal in
    /// estimated mode.
    pub basis: Basis,
    pub candidate: CandidateMatrix,
    /// Eigendecomposition the basis was read from (whitened in estimated mode).
    pub fitted_eig: EigenDecomposition,
    /// `λ_d` of the fitted eigenproblem.
    pub gsnr_hat: f64,
    /// Leading `min(H, p)` eigenvalues of the fitted eigenproblem.
    pub top_eigenvalues: Vec<f64>,
    /// `λ₁ / λ_d`; infinite when `λ_d ≤ 0`.
    pub kappa_hat: f64,
    pub sigma_hat: Option<SymMatrix>,
    pub warnings: Vec<SirWarning>,
}

impl SirFit {
    /// Euclidean-orthonormal basis of the fitted span.
    pub fn span(&self) -> Basis {
        match self.sigma_hat {
            None => self.basis.clone(),
            Some(_) => self.basis.orthonormalized(),
        }
    }
}

fn validate(data: &Dataset, cfg: &SirConfig) -> Result<()> {
    let (n, p) = (data.n(), data.p());
    if cfg.d == 0 || cfg.d > p {
        return Err(SirError::invalid(format!("d = {} must lie in 1..={p}", cfg.d)));
    }
    if cfg.slices < cfg.d {
        return Err(SirError::invalid(format!("H = {} must be at least d = {}", cfg.slices, cfg.d)));
    }
    if cfg.slices > n {
        return Err(SirError::invalid(format!("H = {} exceeds n = {n}", cfg.slices)));
    }
    if !(cfg.eig_floor > 0.0) {
        return Err(SirError::invalid("eig_floor must be positive"));
    }
    Ok(())
}

fn numerical_rank(eigenvalues: &[f64]) -> usize {
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return 0;
    }
    eigenvalues.iter().filter(|&&l| l > RANK_TOL * top).count()
}

/// Fits the SIR estimate of the central space.
pub fn fit_sir(data: &Dataset, cfg: &SirConfig) -> Result<SirFit> {
    validate(data, cfg)?;
    let (n, p, d) = (data.n(), data.p(), cfg.d);
    let part = slice(data, cfg.slices)?;
    let candidate = candidate_matrix(data, &part)?;

    let (basis, fitted_eig, sigma_hat) = match cfg.sigma_mode {
        SigmaMode::Identity => {
            let eig = candidate.eig.clone();
            (Basis::from_trusted(eig.top_vectors(d)), eig, None)
        }
        SigmaMode::Estimated => {
            if n <= p {
                return Err(SirError::SingularCovariance(format!(
                    "estimated-covariance SIR needs n > p (n = {n}, p = {p})"
                )));
            }
            let sigma = sample_covariance(data.x())?;
            let w = spd_inv_sqrt(&sigma, cfg.eig_floor)?;
            let eig = sym_eig(&candidate.lambda_hat.congruence(w.as_matrix()))?;
            let b = w.as_matrix() * eig.top_vectors(d);
            (Basis::from_trusted(b), eig, Some(sigma))
        }
    };

    let k = cfg.slices.min(p);
    let top_eigenvalues = fitted_eig.top_values(k);
    let gsnr_hat = fitted_eig.eigenvalues[d - 1];
    let kappa_hat = if gsnr_hat > 0.0 { fitted_eig.eigenvalues[0] / gsnr_hat } else { f64::INFINITY };
    let rank = numerical_rank(fitted_eig.eigenvalues.as_slice());
    let mut warnings = Vec::new();
    if rank < d {
        warnings.push(SirWarning::RankDeficient { rank, d });
    }
    Ok(SirFit { basis, candidate, fitted_eig, gsnr_hat, top_eigenvalues, kappa_hat, sigma_hat, warnings })
}

/// `λ_d` of the (whitened, in estimated mode) candidate matrix, clamped at 0.
pub fn estimate_gsnr(data: &Dataset, cfg: &SirConfig) -> Result<f64> {
    Ok(fit_sir(data, cfg)?.gsnr_hat.max(0.0))
}

/// Result of [`deviation_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub pass_fraction: f64,
    pub reps: usize,
    /// `βᵀΛβ` for the tested direction.
    pub population: f64,
    /// `βᵀΛ̂_Hβ` of every replication.
    pub estimates: Vec<f64>,
}

/// Fraction of replications in which `|βᵀ(Λ̂_H − Λ)β| ≤ βᵀΛβ / 2` for
/// `β` the first column of the model basis, with `Λ = ρ²λ₀,d BBᵀ`.
///
/// Requires `n ≥ 1 + 4H/γ`. Replications use streams derived from `seed`
/// and run on the current rayon pool.
pub fn deviation_check(
    model: &LowerBoundModel,
    n: usize,
    slices: usize,
    reps: usize,
    gamma: f64,
    lambda0: f64,
    seed: u64,
) -> Result<DeviationReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(SirError::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let min_n = 1.0 + 4.0 * slices as f64 / gamma;
    if (n as f64) < min_n {
        return Err(SirError::PreconditionViolated(format!(
            "n = {n} is below 1 + 4H/gamma = {min_n}"
        )));
    }
    if reps == 0 || slices == 0 {
        return Err(SirError::invalid("deviation_check needs reps >= 1 and H >= 1"));
    }
    let beta = model.basis().as_matrix().column(0).into_owned();
    let population = model.rho() * model.rho() * lambda0;
    let tag = label_tag("deviation-check");
    let estimates = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = SimRng::new(seed, stream_id(&[tag, n as u64, slices as u64, r as u64]));
            let sample = sample_lower_bound(model, n, &mut rng)?;
            let part = slice(&sample.data, slices)?;
            let cand = candidate_matrix(&sample.data, &part)?;
            Ok((beta.transpose() * cand.lambda_hat.as_matrix() * &beta)[(0, 0)])
        })
        .collect::<Result<Vec<f64>>>()?;
    let passed = estimates.iter().filter(|&&q| (q - population).abs() <= 0.5 * population).count();
    Ok(DeviationReport { pass_fraction: passed as f64 / reps as f64, reps, population, estimates })
}
