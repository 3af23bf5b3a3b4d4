//! The analytic bound checks run by `check-bounds`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::analysis::{decay_bound_curve, entropy_bound_check};
use crate::error::{Result, SirError};
use crate::linalg::Basis;
use crate::models::{
    chi2_median, exact_kl_xz, gsnr_formula, kl_closed_form, label_tag, lambda_0d, max_abs_in_ball, psi,
    sample_lower_bound, stream_id, LowerBoundModel, SimRng,
};
use crate::sir::{fit_sir, SigmaMode, SirConfig};

use super::Settings;

/// Relative tolerance between the closed-form gSNR and `λ_d(Λ̂_H)`.
pub const GSNR_MATCH_TOL: f64 = 0.25;
pub const KL_TOL: f64 = 1e-8;
const KL_PAIRS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub d: Option<usize>,
    pub value: f64,
    pub stderr: f64,
    pub passed: bool,
    pub detail: String,
}

impl BoundCheck {
    fn new(name: &'static str, d: Option<usize>, value: f64, stderr: f64, passed: bool, detail: String) -> Self {
        BoundCheck { name, d, value, stderr, passed, detail }
    }
}

/// `λ₀,₁` from the one-dimensional Gaussian integral:
/// `A₁ = (0, √m₁]`, `E(Z | A₁) = (φ(0) − φ(√m₁)) / (Φ(√m₁) − 1/2)`.
pub fn lambda0_one_dim() -> Result<f64> {
    let a = chi2_median(1)?.sqrt();
    let std = Normal::standard();
    let cond_mean = (std.pdf(0.0) - std.pdf(a)) / (std.cdf(a) - 0.5);
    Ok(cond_mean * cond_mean / 2.0)
}

struct Ctx<'a> {
    s: &'a Settings,
    tag: u64,
}

impl Ctx<'_> {
    fn rng(&self, tags: &[u64]) -> SimRng {
        let mut all = vec![self.tag];
        all.extend_from_slice(tags);
        SimRng::new(self.s.seed, stream_id(&all))
    }
}

/// `1/(100d) ≤ λ₀,d ≤ 4 log(2d)/d` for `d = 1..=10`, and `λ₀,₁` against
/// the exact integral within 3 standard errors.
pub fn lambda0_checks(s: &Settings) -> Result<Vec<BoundCheck>> {
    let ctx = Ctx { s, tag: label_tag("lambda0") };
    let mut out = Vec::new();
    for d in 1..=10usize {
        let est = lambda_0d(d, s.mc_samples, &mut ctx.rng(&[d as u64]))?;
        let (lo, hi) = (1.0 / (100.0 * d as f64), 4.0 * (2.0 * d as f64).ln() / d as f64);
        out.push(BoundCheck::new(
            "lambda0_range",
            Some(d),
            est.value,
            est.stderr,
            est.value >= lo && est.value <= hi,
            format!("[{lo:.6}, {hi:.6}]"),
        ));
        if d == 1 {
            let exact = lambda0_one_dim()?;
            out.push(BoundCheck::new(
                "lambda0_d1_exact",
                Some(1),
                est.value,
                est.stderr,
                est.within_se(exact, 3.0),
                format!("exact {exact:.6}"),
            ));
        }
    }
    Ok(out)
}

/// `P(W = i) = 1/(4d)` for every nonzero label, within 3 binomial SEs.
pub fn label_mass_checks(s: &Settings) -> Result<Vec<BoundCheck>> {
    let ctx = Ctx { s, tag: label_tag("label-mass") };
    let n = s.n[0];
    let mut out = Vec::new();
    for d in [2usize, 5] {
        let model = LowerBoundModel::standard(d, d, 0.5, s.sigma)?;
        let sample = sample_lower_bound(&model, n, &mut ctx.rng(&[d as u64]))?;
        let target = 1.0 / (4.0 * d as f64);
        let se = (target * (1.0 - target) / n as f64).sqrt();
        let mut worst = 0.0f64;
        for i in 1..=d as i64 {
            for label in [i, -i] {
                let p = sample.latent.iter().filter(|&&w| w == label).count() as f64 / n as f64;
                worst = worst.max((p - target).abs());
            }
        }
        out.push(BoundCheck::new(
            "label_mass",
            Some(d),
            worst,
            se,
            worst <= 3.0 * se,
            format!("max |P(W=i) - {target:.5}|"),
        ));
    }
    Ok(out)
}

/// Closed-form gSNR against `λ_d(Λ̂_H)` at `d = 3`, gSNR `0.05`; and the
/// `θ → ρ` map giving `2θ²` at `d ∈ {2, 10}`.
pub fn gsnr_checks(s: &Settings) -> Result<Vec<BoundCheck>> {
    let ctx = Ctx { s, tag: label_tag("gsnr") };
    let mut out = Vec::new();

    let d = 3usize;
    let theta = (0.05f64 / 2.0).sqrt();
    let e = max_abs_in_ball(d, s.mc_samples, &mut ctx.rng(&[1, d as u64]))?;
    let rho = theta * (d as f64).sqrt() / e.value;
    let formula = gsnr_formula(d, rho, s.mc_samples, &mut ctx.rng(&[2, d as u64]))?;
    let p = s.p[0].max(d);
    let model = LowerBoundModel::standard(p, d, rho, s.sigma)?;
    let sample = sample_lower_bound(&model, s.n[0], &mut ctx.rng(&[3, d as u64]))?;
    let fit = fit_sir(&sample.data, &SirConfig::new(s.h[0], d, SigmaMode::Identity))?;
    let rel = (fit.gsnr_hat - formula.value).abs() / formula.value;
    out.push(BoundCheck::new(
        "gsnr_formula_vs_lambda_d",
        Some(d),
        fit.gsnr_hat,
        0.0,
        rel <= GSNR_MATCH_TOL,
        format!("formula {:.6}, relative gap {rel:.4}", formula.value),
    ));

    let theta = 0.05;
    for d in [2usize, 10] {
        let e1 = max_abs_in_ball(d, s.mc_samples, &mut ctx.rng(&[4, d as u64]))?;
        let rho = theta * (d as f64).sqrt() / e1.value;
        if !(rho < 1.0) {
            return Err(SirError::ThetaTooLarge { theta, rho });
        }
        let g = gsnr_formula(d, rho, s.mc_samples, &mut ctx.rng(&[5, d as u64]))?;
        // ρ carries its own Monte Carlo error: g ∝ (Ê₂/Ê₁)²
        let se = g.value * 2.0 * ((e1.stderr / e1.value).powi(2) + (g.stderr / (2.0 * g.value)).powi(2)).sqrt();
        let target = 2.0 * theta * theta;
        out.push(BoundCheck::new(
            "theta_map_gsnr",
            Some(d),
            g.value,
            se,
            (g.value - target).abs() <= 3.0 * se,
            format!("target {target}"),
        ));
    }
    Ok(out)
}

/// Gaussian KL of the `(X, Z)` joints against `ρ²‖ΔB‖²/(2(1−ρ²))` on random
/// orthonormal pairs.
pub fn kl_checks(s: &Settings) -> Result<Vec<BoundCheck>> {
    let ctx = Ctx { s, tag: label_tag("kl") };
    let mut rng = ctx.rng(&[]);
    let mut worst = 0.0f64;
    let (p, d) = (s.p[0].max(4), 3usize);
    for _ in 0..KL_PAIRS {
        let b1 = Basis::random_orthonormal(p, d, &mut rng)?;
        let b2 = Basis::random_orthonormal(p, d, &mut rng)?;
        let rho = rng.random_range(0.05..0.95);
        let gap = (exact_kl_xz(&b1, &b2, rho)? - kl_closed_form(&b1, &b2, rho)).abs();
        worst = worst.max(gap);
    }
    Ok(vec![BoundCheck::new(
        "kl_identity",
        Some(d),
        worst,
        0.0,
        worst <= KL_TOL,
        format!("max gap over {KL_PAIRS} pairs"),
    )])
}

fn lower_bound_labels(d: usize, n: usize, rng: &mut SimRng) -> Result<(DMatrix<f64>, Vec<i64>)> {
    let m = chi2_median(d)?;
    let z = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut row = vec![0.0; d];
    let w = (0..n)
        .map(|i| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = z[(i, j)];
            }
            i64::from(psi(&row, m))
        })
        .collect();
    Ok((z, w))
}

/// `λ_min(Cov(E[Z|W])) ≤ 37 Ent(W)/d` at `d ∈ {2, 5, 10}`, and the
/// chi-square median bound `m_d ≤ d e^{−1/(3d)}` for `d = 1..=50`.
pub fn entropy_checks(s: &Settings) -> Result<Vec<BoundCheck>> {
    let ctx = Ctx { s, tag: label_tag("entropy") };
    let mut out = Vec::new();
    for d in [2usize, 5, 10] {
        let (z, w) = lower_bound_labels(d, s.n[0], &mut ctx.rng(&[d as u64]))?;
        let c = entropy_bound_check(&z, &w)?;
        out.push(BoundCheck::new(
            "entropy_bound",
            Some(d),
            c.lhs,
            c.stderr,
            c.passed,
            format!("37 Ent(W)/d = {:.6}", c.rhs),
        ));
    }
    let mut worst = f64::NEG_INFINITY;
    for d in 1..=50usize {
        let df = d as f64;
        worst = worst.max(chi2_median(d)? - df * (-1.0 / (3.0 * df)).exp());
    }
    out.push(BoundCheck::new(
        "chi2_median_bound",
        None,
        worst,
        0.0,
        worst <= 0.0,
        "max over d = 1..50 of m_d - d exp(-1/(3d))".into(),
    ));
    Ok(out)
}

/// `d⁻¹ (E max|Z_i|)² ≤ 2 log(2d)/d` for `d = 2..=20`.
pub fn decay_checks(s: &Settings) -> Result<Vec<BoundCheck>> {
    let ctx = Ctx { s, tag: label_tag("decay") };
    let curve = decay_bound_curve(20, s.mc_samples, &mut ctx.rng(&[]))?;
    Ok(curve
        .into_iter()
        .map(|c| {
            BoundCheck::new(
                "decay_bound",
                Some(c.d),
                c.gsnr.value,
                c.gsnr.stderr,
                c.passed(),
                format!("bound {:.6}", c.bound),
            )
        })
        .collect())
}

pub fn all_checks(s: &Settings) -> Result<Vec<BoundCheck>> {
    let mut out = lambda0_checks(s)?;
    out.extend(label_mass_checks(s)?);
    out.extend(gsnr_checks(s)?);
    out.extend(kl_checks(s)?);
    out.extend(entropy_checks(s)?);
    out.extend(decay_checks(s)?);
    Ok(out)
}
