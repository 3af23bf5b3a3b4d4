//! Conditional-mean covariances of a Gaussian index given a discrete label,
//! label entropy, and Monte Carlo checks of the gSNR decay bounds.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SirError};
use crate::linalg::{sym_eig, SymMatrix};
use crate::stats::{mean_and_se, McEstimate};

/// Number of contiguous blocks used for the batch standard error of `λ_min`.
pub const SE_BLOCKS: usize = 20;

/// Label hypothesis tolerance: `p̂_w` may exceed 1/2 by this many binomial
/// standard errors before the check is rejected.
const MASS_SE_SLACK: f64 = 3.0;

/// Per-label counts and means of `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteConditional {
    pub labels: Vec<i64>,
    pub counts: Vec<usize>,
    pub group_means: Vec<DVector<f64>>,
}

impl DiscreteConditional {
    pub fn new(z: &DMatrix<f64>, w: &[i64]) -> Result<Self> {
        let (n, d) = z.shape();
        if n != w.len() {
            return Err(SirError::invalid(format!("Z has {n} rows but W has {} labels", w.len())));
        }
        if n == 0 || d == 0 {
            return Err(SirError::invalid("conditional means need n >= 1 and d >= 1"));
        }
        let mut index: BTreeMap<i64, usize> = BTreeMap::new();
        for &l in w {
            let next = index.len();
            index.entry(l).or_insert(next);
        }
        let k = index.len();
        let mut sums = DMatrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        let slot: Vec<usize> = w.iter().map(|l| index[l]).collect();
        for j in 0..d {
            let col = z.column(j);
            for (i, &g) in slot.iter().enumerate() {
                sums[(g, j)] += col[i];
            }
        }
        for &g in &slot {
            counts[g] += 1;
        }
        // report labels in ascending order
        let mut labels = Vec::with_capacity(k);
        let mut out_counts = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        for (&l, &g) in &index {
            labels.push(l);
            out_counts.push(counts[g]);
            means.push(sums.row(g).transpose() / counts[g] as f64);
        }
        if means.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(SirError::invalid("Z contains non-finite values"));
        }
        Ok(DiscreteConditional { labels, counts: out_counts, group_means: means })
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `Σ_w p̂_w (z̄_w − z̄)(z̄_w − z̄)ᵀ`.
    pub fn covariance(&self) -> SymMatrix {
        let n = self.n() as f64;
        let d = self.group_means[0].len();
        let mut grand = DVector::zeros(d);
        for (m, &c) in self.group_means.iter().zip(&self.counts) {
            grand += m * (c as f64 / n);
        }
        let mut cov = DMatrix::zeros(d, d);
        for (m, &c) in self.group_means.iter().zip(&self.counts) {
            let dev = m - &grand;
            cov += &dev * dev.transpose() * (c as f64 / n);
        }
        SymMatrix::symmetrized(cov)
    }

    pub fn entropy(&self) -> f64 {
        entropy_of_counts(&self.counts)
    }
}

/// Plug-in `Cov(E[Z | W])`.
pub fn cov_conditional_mean(z: &DMatrix<f64>, w: &[i64]) -> Result<SymMatrix> {
    if z.nrows() < 2 {
        return Err(SirError::invalid("cov_conditional_mean needs n >= 2"));
    }
    Ok(DiscreteConditional::new(z, w)?.covariance())
}

fn entropy_of_counts(counts: &[usize]) -> f64 {
    let n = counts.iter().sum::<usize>() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Plug-in entropy `Σ_w p̂_w log(1/p̂_w)` in nats.
pub fn entropy(w: &[i64]) -> Result<f64> {
    if w.is_empty() {
        return Err(SirError::invalid("entropy needs at least one label"));
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in w {
        *counts.entry(l).or_default() += 1;
    }
    Ok(entropy_of_counts(&counts.into_values().collect::<Vec<_>>()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyBoundCheck {
    /// `λ_min(Cov(E[Z|W]))`
    pub lhs: f64,
    /// `37 Ent(W) / d`
    pub rhs: f64,
    /// Batch standard error of `lhs`.
    pub stderr: f64,
    pub passed: bool,
}

impl EntropyBoundCheck {
    /// `rhs + 3 SE − lhs`; nonnegative iff the check passed.
    pub fn margin(&self) -> f64 {
        self.rhs + 3.0 * self.stderr - self.lhs
    }
}

fn lambda_min(z: &DMatrix<f64>, w: &[i64]) -> Result<f64> {
    let eig = sym_eig(&cov_conditional_mean(z, w)?)?;
    Ok(eig.eigenvalues[eig.eigenvalues.len() - 1])
}

/// `λ_min(Cov(E[Z|W])) ≤ 37 Ent(W)/d`, with 3 batch standard errors of slack.
///
/// Labels whose empirical mass is at least `1/2` beyond binomial noise
/// violate the hypothesis.
pub fn entropy_bound_check(z: &DMatrix<f64>, w: &[i64]) -> Result<EntropyBoundCheck> {
    let (n, d) = z.shape();
    if n < 2 * SE_BLOCKS {
        return Err(SirError::invalid(format!("entropy bound check needs n >= {}", 2 * SE_BLOCKS)));
    }
    let cond = DiscreteConditional::new(z, w)?;
    let nf = n as f64;
    for (l, &c) in cond.labels.iter().zip(&cond.counts) {
        let p = c as f64 / nf;
        let se = (0.25 / nf).sqrt();
        if p >= 0.5 + MASS_SE_SLACK * se {
            return Err(SirError::HypothesisViolated(format!(
                "label {l} has empirical mass {p:.4} >= 1/2"
            )));
        }
    }
    let eig = sym_eig(&cond.covariance())?;
    let lhs = eig.eigenvalues[d - 1];
    let rhs = 37.0 * cond.entropy() / d as f64;

    let block = n / SE_BLOCKS;
    let mut mins = Vec::with_capacity(SE_BLOCKS);
    for b in 0..SE_BLOCKS {
        let rows = z.rows(b * block, block).into_owned();
        mins.push(lambda_min(&rows, &w[b * block..(b + 1) * block])?);
    }
    // each block has 1/SE_BLOCKS of the data, so its spread overstates the
    // full-sample SE by √SE_BLOCKS; mean_and_se divides by exactly that
    let stderr = mean_and_se(&mins).stderr;
    Ok(EntropyBoundCheck { lhs, rhs, stderr, passed: lhs <= rhs + 3.0 * stderr })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBoundCheck {
    pub d: usize,
    /// `d⁻¹ (E max|Z_i|)²`
    pub gsnr: McEstimate,
    /// `2 log(2d) / d`
    pub bound: f64,
}

impl DecayBoundCheck {
    pub fn passed(&self) -> bool {
        self.gsnr.value <= self.bound
    }
}

/// Monte Carlo `E max_i |Z_i|` for every `d` in `1..=d_max`, from shared
/// draws: dimension `d` uses the first `d` coordinates of each draw.
pub fn expected_max_abs_curve<R: Rng + ?Sized>(d_max: usize, samples: usize, rng: &mut R) -> Result<Vec<McEstimate>> {
    if d_max == 0 || samples < 2 {
        return Err(SirError::invalid("need d_max >= 1 and at least 2 draws"));
    }
    let mut s1 = vec![0.0f64; d_max];
    let mut s2 = vec![0.0f64; d_max];
    for _ in 0..samples {
        let mut m = 0.0f64;
        for k in 0..d_max {
            let v: f64 = rng.sample(StandardNormal);
            m = m.max(v.abs());
            s1[k] += m;
            s2[k] += m * m;
        }
    }
    let n = samples as f64;
    Ok((0..d_max)
        .map(|k| {
            let mean = s1[k] / n;
            let var = (s2[k] / n - mean * mean).max(0.0) * n / (n - 1.0);
            McEstimate::new(mean, (var / n).sqrt())
        })
        .collect())
}

fn decay_from_max(d: usize, e: McEstimate) -> DecayBoundCheck {
    let df = d as f64;
    DecayBoundCheck {
        d,
        gsnr: McEstimate::new(e.value * e.value / df, 2.0 * e.value * e.stderr / df),
        bound: 2.0 * (2.0 * df).ln() / df,
    }
}

/// gSNR `d⁻¹ (E max|Z_i|)²` of the `ψ⁰` construction against `2 log(2d)/d`.
pub fn decay_bound_check<R: Rng + ?Sized>(d: usize, samples: usize, rng: &mut R) -> Result<DecayBoundCheck> {
    if d < 2 {
        return Err(SirError::invalid(format!("decay bound check needs d >= 2, got {d}")));
    }
    let curve = expected_max_abs_curve(d, samples, rng)?;
    Ok(decay_from_max(d, curve[d - 1]))
}

/// [`decay_bound_check`] for every `d` in `2..=d_max` from shared draws.
pub fn decay_bound_curve<R: Rng + ?Sized>(d_max: usize, samples: usize, rng: &mut R) -> Result<Vec<DecayBoundCheck>> {
    if d_max < 2 {
        return Err(SirError::invalid("decay bound curve needs d_max >= 2"));
    }
    let curve = expected_max_abs_curve(d_max, samples, rng)?;
    Ok((2..=d_max).map(|d| decay_from_max(d, curve[d - 1])).collect())
}
