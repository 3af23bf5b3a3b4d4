//! Two-fold aggregation estimator for sparse SIR, and the oracle estimator
//! with a known support.
//!
//! The sample is split in two halves by a seeded permutation. For every
//! size-`s` support `L`, half one gives `B̂_L = argmax Tr(BᵀΛ̂⁽¹⁾B)` subject
//! to `BᵀΣ̂⁽¹⁾B = I_d` and `supp(B) ⊆ L`; half two scores each candidate by
//! `Tr(B̂_Lᵀ Λ̂⁽²⁾ B̂_L)` and the best-scoring support wins.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Result, SirError};
use crate::linalg::{sample_covariance, spd_inv_sqrt, sym_eig, Basis, SymMatrix, DEFAULT_EIG_FLOOR};
use crate::models::{label_tag, stream_id, SimRng};
use crate::slicing::{candidate_matrix, slice, Dataset};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Restricted covariances with `λ_min ≤ SINGULAR_TOL · λ_max` are rejected.
const SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseConfig {
    pub s: usize,
    pub d: usize,
    pub slices: usize,
    pub enumeration_cap: u128,
}

impl SparseConfig {
    pub fn new(s: usize, d: usize, slices: usize) -> Self {
        SparseConfig { s, d, slices, enumeration_cap: DEFAULT_ENUMERATION_CAP }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationFit {
    /// `p x d`, exactly zero outside `selected_support`.
    pub basis: Basis,
    pub selected_support: Vec<usize>,
    /// `Tr(B̂ᵀ Λ̂⁽²⁾ B̂)` at the selected support.
    pub oracle_score: f64,
    pub candidates: usize,
}

/// `C(p, s)`, saturating at `u128::MAX`.
pub fn binomial(p: usize, s: usize) -> u128 {
    if s > p {
        return 0;
    }
    let s = s.min(p - s);
    let mut acc: u128 = 1;
    for i in 0..s {
        // exact: acc * (p - i) is divisible by (i + 1)
        acc = match acc.checked_mul((p - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Equal halves by a seeded random permutation; with odd `n` the last
/// observation is dropped first.
pub fn split_halves(data: &Dataset, split_seed: u64) -> Result<(Dataset, Dataset)> {
    let m = data.n() - data.n() % 2;
    if m < 2 {
        return Err(SirError::invalid("sample splitting needs at least 2 observations"));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let mut rng = SimRng::new(split_seed, stream_id(&[label_tag("sample-split"), m as u64]));
    perm.shuffle(&mut rng);
    let (a, b) = perm.split_at(m / 2);
    Ok((data.select_rows(a), data.select_rows(b)))
}

struct Halves {
    p: usize,
    lambda1: SymMatrix,
    sigma1: SymMatrix,
    lambda2: SymMatrix,
}

fn prepare(data: &Dataset, slices: usize, min_half: usize, split_seed: u64) -> Result<Halves> {
    let (h1, h2) = split_halves(data, split_seed)?;
    if h1.n() <= min_half {
        return Err(SirError::invalid(format!(
            "each half has {} observations, need more than {min_half}",
            h1.n()
        )));
    }
    let lambda1 = candidate_matrix(&h1, &slice(&h1, slices)?)?.lambda_hat;
    let lambda2 = candidate_matrix(&h2, &slice(&h2, slices)?)?.lambda_hat;
    let sigma1 = sample_covariance(h1.x())?;
    Ok(Halves { p: data.p(), lambda1, sigma1, lambda2 })
}

/// Restricted whitened fit on `support`; returns the `s x d` block.
fn restricted_fit(lambda: &SymMatrix, sigma: &SymMatrix, support: &[usize], d: usize) -> Result<DMatrix<f64>> {
    let sig = sigma.restrict(support);
    let eig = sym_eig(&sig)?;
    let (lmax, lmin) = (eig.eigenvalues[0], eig.eigenvalues[eig.eigenvalues.len() - 1]);
    if !(lmax > 0.0) || lmin <= SINGULAR_TOL * lmax {
        return Err(SirError::SingularCovariance(format!(
            "restricted covariance on support {support:?} is singular (eigenvalues {lmin:e} .. {lmax:e})"
        )));
    }
    let w = spd_inv_sqrt(&sig, DEFAULT_EIG_FLOOR)?;
    let inner = sym_eig(&lambda.restrict(support).congruence(w.as_matrix()))?;
    Ok(w.as_matrix() * inner.top_vectors(d))
}

fn trace_score(lambda: &SymMatrix, support: &[usize], block: &DMatrix<f64>) -> f64 {
    let l = lambda.restrict(support);
    (block.transpose() * l.as_matrix() * block).trace()
}

fn embed(p: usize, support: &[usize], block: &DMatrix<f64>) -> Basis {
    let mut full = DMatrix::zeros(p, block.ncols());
    for (r, &i) in support.iter().enumerate() {
        full.row_mut(i).copy_from(&block.row(r));
    }
    Basis::from_trusted(full)
}

/// Aggregation estimator over all size-`s` supports.
pub fn fit_aggregation(data: &Dataset, cfg: &SparseConfig, split_seed: u64) -> Result<AggregationFit> {
    let p = data.p();
    let SparseConfig { s, d, slices, enumeration_cap } = *cfg;
    if d == 0 || d >= s || s > p {
        return Err(SirError::invalid(format!("need 0 < d < s <= p (d = {d}, s = {s}, p = {p})")));
    }
    let subsets = binomial(p, s);
    if subsets > enumeration_cap {
        return Err(SirError::EnumerationTooLarge { subsets, cap: enumeration_cap });
    }
    let halves = prepare(data, slices, s, split_seed)?;
    let supports: Vec<Vec<usize>> = (0..p).combinations(s).collect();
    let scored = supports
        .par_iter()
        .map(|l| {
            let block = restricted_fit(&halves.lambda1, &halves.sigma1, l, d)?;
            Ok(trace_score(&halves.lambda2, l, &block))
        })
        .collect::<Result<Vec<f64>>>()?;

    // first strict maximum in lexicographic order
    let mut best = 0usize;
    for (i, &sc) in scored.iter().enumerate().skip(1) {
        if sc > scored[best] {
            best = i;
        }
    }
    let support = supports[best].clone();
    let block = restricted_fit(&halves.lambda1, &halves.sigma1, &support, d)?;
    Ok(AggregationFit {
        basis: embed(halves.p, &support, &block),
        oracle_score: scored[best],
        selected_support: support,
        candidates: supports.len(),
    })
}

/// Restricted SIR fit on half one of the split with the support fixed,
/// zero-padded to `p` rows.
pub fn fit_oracle(data: &Dataset, support: &[usize], d: usize, slices: usize, split_seed: u64) -> Result<Basis> {
    let p = data.p();
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != support.len() || sorted.iter().any(|&i| i >= p) {
        return Err(SirError::invalid(format!("support {support:?} must be distinct indices below {p}")));
    }
    if d == 0 || support.len() < d {
        return Err(SirError::invalid(format!("need 1 <= d <= |support| (d = {d}, |S| = {})", support.len())));
    }
    let halves = prepare(data, slices, sorted.len(), split_seed)?;
    let block = restricted_fit(&halves.lambda1, &halves.sigma1, &sorted, d)?;
    Ok(embed(p, &sorted, &block))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn toy(n: usize, p: usize) -> Dataset {
        let x = DMatrix::from_fn(n, p, |i, j| (((i * 7 + j * 13) % 17) as f64 - 8.0) / 5.0 + (i as f64 * 0.37 + j as f64).sin());
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] + 0.5 * x[(i, 1)]);
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(12, 4), 495);
        assert_eq!(binomial(50, 5), 2_118_760);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(200, 100), u128::MAX);
    }

    #[test]
    fn cap_exceeded_reports_count() {
        let data = toy(40, 50);
        match fit_aggregation(&data, &SparseConfig::new(5, 1, 4), 0) {
            Err(SirError::EnumerationTooLarge { subsets, .. }) => assert_eq!(subsets, 2_118_760),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn odd_n_drops_last_sample() {
        let data = toy(101, 5);
        let a = fit_aggregation(&data, &SparseConfig::new(3, 1, 5), 9).unwrap();
        let b = fit_aggregation(&data.truncated(100), &SparseConfig::new(3, 1, 5), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn off_support_rows_are_zero_and_config_checked() {
        let data = toy(200, 6);
        let fit = fit_aggregation(&data, &SparseConfig::new(3, 2, 5), 1).unwrap();
        for i in 0..6 {
            if !fit.selected_support.contains(&i) {
                assert!(fit.basis.as_matrix().row(i).iter().all(|&v| v == 0.0));
            }
        }
        assert_eq!(fit.candidates, 20);
        assert!(fit_aggregation(&data, &SparseConfig::new(2, 2, 5), 1).is_err());
        assert!(fit_aggregation(&data, &SparseConfig::new(7, 2, 5), 1).is_err());
        assert!(fit_oracle(&data, &[0, 0], 1, 5, 1).is_err());
        assert!(fit_oracle(&data, &[0, 9], 1, 5, 1).is_err());
        assert!(fit_oracle(&data, &[0], 2, 5, 1).is_err());
    }

    #[test]
    fn singular_restriction_names_support() {
        let mut data = toy(60, 4);
        let mut x = data.x().clone();
        let c0 = x.column(0).into_owned();
        x.set_column(3, &(c0 * 2.0));
        data = Dataset::new(x, data.y().clone()).unwrap();
        let err = fit_oracle(&data, &[0, 3], 1, 3, 0).unwrap_err();
        assert!(matches!(err, SirError::SingularCovariance(ref m) if m.contains("[0, 3]")), "{err}");
    }
}
