//! Seeded, parallel experiment harness.
//!
//! Every replication draws from its own stream
//! `stream_id(experiment, model, grid cell, rep)`, so results do not depend
//! on the number of worker threads or on scheduling. Replications of one
//! grid cell run on a pool of `threads` workers; means are Kahan-summed in
//! replication order.

mod bounds;
mod config;
mod output;

use std::collections::HashMap;

use nalgebra::DVector;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Result, SirError};
use crate::linalg::{general_loss, Basis};
use crate::models::{
    chi2_median, label_tag, max_abs_in_ball, psi, sample_gp_model, sample_lower_bound, sample_m1, sample_m2,
    sample_sparse_sin, standard_normal_matrix, stream_id, GpLinkSpec, LowerBoundModel, SimRng,
};
use crate::sir::{estimate_gsnr, fit_sir, SigmaMode, SirConfig};
use crate::slicing::{candidate_matrix, slice, Dataset};
use crate::sparse::{binomial, fit_aggregation, fit_oracle, SparseConfig};
use crate::stats::{fit_line, mean_and_se, LineFit, McEstimate};

pub use bounds::{
    all_checks, decay_checks, entropy_checks, gsnr_checks, kl_checks, label_mass_checks, lambda0_checks,
    lambda0_one_dim, BoundCheck, GSNR_MATCH_TOL, KL_TOL,
};
pub use config::{ExperimentConfig, ExperimentKind, Grid, ModelKind, Settings};
pub use output::{format_sig, to_csv_string, write_csv, ResultRow, CSV_HEADER};

/// Settings plus the worker pool replications run on.
pub struct Harness {
    settings: Settings,
    pool: ThreadPool,
}

impl Harness {
    pub fn new(settings: Settings) -> Result<Self> {
        let pool = ThreadPoolBuilder::new()
            .num_threads(settings.threads)
            .build()
            .map_err(|e| SirError::Internal(format!("thread pool: {e}")))?;
        Ok(Harness { settings, pool })
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    fn model_name(&self) -> &'static str {
        self.settings.model.map_or("single-index", |m| m.name())
    }

    fn stream(&self, cell: &[u64], rep: u64) -> SimRng {
        let mut tags = vec![label_tag(self.settings.kind.name()), label_tag(self.model_name())];
        tags.extend_from_slice(cell);
        tags.push(rep);
        SimRng::new(self.settings.seed, stream_id(&tags))
    }

    /// Runs `reps` replications of `f` for one grid cell; results are in
    /// replication order.
    fn replicate<T, F>(&self, cell: &[u64], f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut SimRng) -> Result<T> + Sync,
    {
        self.pool.install(|| {
            (0..self.settings.reps as u64)
                .into_par_iter()
                .map(|r| f(&mut self.stream(cell, r)))
                .collect()
        })
    }

    /// Rejects cells whose concurrent working set exceeds the memory budget.
    fn check_memory(&self, n: usize, p: usize, dense_kernel: bool) -> Result<()> {
        let threads = self.settings.threads.min(self.settings.reps) as u128;
        let (n, p) = (n as u128, p as u128);
        let mut bytes = threads * n * p * 8 * 3;
        if dense_kernel {
            bytes += threads * n * n * 8 * 2;
        }
        if bytes > self.settings.memory_bytes {
            return Err(SirError::ResourceLimit(format!(
                "n = {n}, p = {p} needs about {} MiB with {threads} workers; budget is {} MiB",
                bytes >> 20,
                self.settings.memory_bytes >> 20
            )));
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        n: Option<usize>,
        p: Option<usize>,
        d: Option<usize>,
        h: Option<usize>,
        theta: Option<f64>,
        statistic: impl Into<String>,
        est: McEstimate,
    ) -> ResultRow {
        ResultRow {
            experiment: self.settings.kind.name().into(),
            model: self.model_name().into(),
            n,
            p,
            d,
            h,
            theta,
            rep_count: self.settings.reps,
            statistic: statistic.into(),
            value: est.value,
            stderr: est.stderr,
        }
    }
}

fn sample_synthetic(model: ModelKind, n: usize, rng: &mut SimRng) -> Result<Dataset> {
    match model {
        ModelKind::M1 => sample_m1(n, rng),
        ModelKind::M2 => sample_m2(n, rng),
        other => Err(SirError::invalid(format!("model '{other}' is not a synthetic index model"))),
    }
}

fn log_floor(v: f64) -> f64 {
    v.max(f64::MIN_POSITIVE).ln()
}

/// Mean general loss of identity-mode SIR (`d = 5`) against `[e₁..e₅]` for
/// M1 or M2, per `(n, H)`.
pub fn run_loss_table(hx: &Harness) -> Result<Vec<ResultRow>> {
    let s = hx.settings();
    let model = s.model.ok_or_else(|| SirError::invalid("model is required"))?;
    let (p, d) = (s.p[0], s.d[0]);
    let truth = Basis::standard(p, d)?;
    let mut rows = Vec::new();
    for &n in &s.n {
        hx.check_memory(n, p, false)?;
        for &h in &s.h {
            let cfg = SirConfig::new(h, d, s.sigma_mode);
            let losses = hx.replicate(&[n as u64, h as u64], |rng| {
                let data = sample_synthetic(model, n, rng)?;
                general_loss(&fit_sir(&data, &cfg)?.span(), &truth)
            })?;
            rows.push(hx.row(Some(n), Some(p), Some(d), Some(h), None, "loss", mean_and_se(&losses)));
        }
    }
    Ok(rows)
}

/// Mean log eigenvalues `log λ_i(Λ̂_H)`, `i = 1..=d`, and the mean of
/// `log λ_d − log λ₁`, per `(n, H)`.
pub fn run_eigen_table(hx: &Harness) -> Result<Vec<ResultRow>> {
    let s = hx.settings();
    let model = s.model.ok_or_else(|| SirError::invalid("model is required"))?;
    let (p, d) = (s.p[0], s.d[0]);
    let mut rows = Vec::new();
    for &n in &s.n {
        hx.check_memory(n, p, false)?;
        for &h in &s.h {
            let k = d.min(h).min(p);
            let logs = hx.replicate(&[n as u64, h as u64], |rng| {
                let data = sample_synthetic(model, n, rng)?;
                let cand = candidate_matrix(&data, &slice(&data, h)?)?;
                Ok(cand.eig.top_values(k).into_iter().map(log_floor).collect::<Vec<f64>>())
            })?;
            for i in 0..k {
                let col: Vec<f64> = logs.iter().map(|l| l[i]).collect();
                rows.push(hx.row(Some(n), Some(p), Some(d), Some(h), None, format!("log_lambda_{}", i + 1), mean_and_se(&col)));
            }
            let gap: Vec<f64> = logs.iter().map(|l| l[k - 1] - l[0]).collect();
            rows.push(hx.row(Some(n), Some(p), Some(d), Some(h), None, format!("log_lambda_{k}_minus_log_lambda_1"), mean_and_se(&gap)));
        }
    }
    Ok(rows)
}

/// Mean log estimated gSNR of the GP-link model per `(d, n, H)`; each
/// replication is a fresh function draw.
pub fn run_gsnr_decay(hx: &Harness) -> Result<Vec<ResultRow>> {
    let s = hx.settings();
    let spec = GpLinkSpec { cap: s.gp_cap, ..GpLinkSpec::default() };
    let p = crate::models::SYNTHETIC_P;
    let mut rows = Vec::new();
    for &d in &s.d {
        for &n in &s.n {
            if n > s.gp_cap {
                return Err(SirError::ResourceLimit(format!("GP sample size {n} exceeds gp_cap {}", s.gp_cap)));
            }
            hx.check_memory(n, p, true)?;
            for &h in &s.h {
                let cfg = SirConfig::new(h, d, s.sigma_mode);
                let logs = hx.replicate(&[d as u64, n as u64, h as u64], |rng| {
                    let data = sample_gp_model(n, d, rng, &spec)?;
                    Ok(log_floor(estimate_gsnr(&data, &cfg)?))
                })?;
                rows.push(hx.row(Some(n), Some(p), Some(d), Some(h), None, "log_gsnr", mean_and_se(&logs)));
            }
        }
    }
    Ok(rows)
}

/// Lower-bound sampler with `ρ = 0`: `Y` is independent of `X`.
fn sample_null(p: usize, d: usize, sigma: f64, n: usize, rng: &mut SimRng) -> Result<Dataset> {
    let x = standard_normal_matrix(n, p, rng);
    let m = chi2_median(d)?;
    let noise = Uniform::new(-sigma, sigma).map_err(|e| SirError::Internal(e.to_string()))?;
    let mut z = vec![0.0; d];
    let y = DVector::from_fn(n, |_, _| {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        f64::from(psi(&z, m)) + noise.sample(rng)
    });
    Dataset::new(x, y)
}

/// Fitted lines of [`run_d_lambda`].
#[derive(Debug, Clone, PartialEq)]
pub struct DLambdaReport {
    pub rows: Vec<ResultRow>,
    /// Mean log loss against `log θ` at `d = d_fixed` (cells with `θ > 0`).
    pub theta_fit: Option<LineFit>,
    /// Mean loss against `d` at `θ = theta_fixed`.
    pub d_fit: Option<LineFit>,
}

fn slope_stderr(fit: &LineFit, k: usize) -> f64 {
    if k <= 2 || fit.r_squared <= 0.0 {
        return f64::NAN;
    }
    fit.slope.abs() * ((1.0 / fit.r_squared - 1.0).max(0.0) / (k - 2) as f64).sqrt()
}

/// Lower-bound model loss as a function of the dimension `d` (at
/// `θ = theta_fixed`) and of the signal level `θ` (at `d = d_fixed`), with
/// `ρ` chosen so that the gSNR equals `2θ²`.
pub fn run_d_lambda(hx: &Harness) -> Result<DLambdaReport> {
    let s = hx.settings();
    let (n, p, h) = (s.n[0], s.p[0], s.h[0]);
    hx.check_memory(n, p, false)?;

    let mut ds: Vec<usize> = s.d.clone();
    ds.push(s.d_fixed);
    ds.sort_unstable();
    ds.dedup();
    if let Some(&bad) = ds.iter().find(|&&d| d > p || d > h) {
        return Err(SirError::invalid(format!("d = {bad} must not exceed p = {p} or H = {h}")));
    }
    // E[max|Z_i| 1{‖Z‖² ≤ m_d}] per d, shared by every θ
    let mut ball = HashMap::new();
    for &d in &ds {
        let mut rng = SimRng::new(s.seed, stream_id(&[label_tag("theta-map"), d as u64]));
        ball.insert(d, max_abs_in_ball(d, s.mc_samples, &mut rng)?.value);
    }

    let mut cells: Vec<(usize, f64)> = s.d.iter().map(|&d| (d, s.theta_fixed)).collect();
    cells.extend(s.theta.iter().map(|&t| (s.d_fixed, t)));
    let mut cache: HashMap<(usize, u64), (McEstimate, McEstimate)> = HashMap::new();
    for &(d, theta) in &cells {
        let key = (d, theta.to_bits());
        if cache.contains_key(&key) {
            continue;
        }
        let rho = theta * (d as f64).sqrt() / ball[&d];
        if !(rho < 1.0) {
            return Err(SirError::ThetaTooLarge { theta, rho });
        }
        let model = if rho > 0.0 { Some(LowerBoundModel::standard(p, d, rho, s.sigma)?) } else { None };
        let truth = Basis::standard(p, d)?;
        let cfg = SirConfig::new(h, d, s.sigma_mode);
        let losses = hx.replicate(&[d as u64, theta.to_bits(), n as u64, p as u64, h as u64], |rng| {
            let data = match &model {
                Some(m) => sample_lower_bound(m, n, rng)?.data,
                None => sample_null(p, d, s.sigma, n, rng)?,
            };
            general_loss(&fit_sir(&data, &cfg)?.span(), &truth)
        })?;
        let logs: Vec<f64> = losses.iter().map(|&l| log_floor(l)).collect();
        cache.insert(key, (mean_and_se(&losses), mean_and_se(&logs)));
    }

    let mut rows = Vec::new();
    let emit = |d: usize, theta: f64, rows: &mut Vec<ResultRow>| {
        let (loss, log_loss) = cache[&(d, theta.to_bits())];
        rows.push(hx.row(Some(n), Some(p), Some(d), Some(h), Some(theta), "loss", loss));
        rows.push(hx.row(Some(n), Some(p), Some(d), Some(h), Some(theta), "log_loss", log_loss));
        (loss.value, log_loss.value)
    };
    let mut by_d = (Vec::new(), Vec::new());
    for &d in &s.d {
        let (loss, _) = emit(d, s.theta_fixed, &mut rows);
        by_d.0.push(d as f64);
        by_d.1.push(loss);
    }
    let mut by_theta = (Vec::new(), Vec::new());
    for &t in &s.theta {
        let (_, log_loss) = emit(s.d_fixed, t, &mut rows);
        if t > 0.0 {
            by_theta.0.push(t.ln());
            by_theta.1.push(log_loss);
        }
    }
    let d_fit = fit_line(&by_d.0, &by_d.1);
    let theta_fit = fit_line(&by_theta.0, &by_theta.1);
    if let Some(f) = &d_fit {
        let k = by_d.0.len();
        rows.push(hx.row(Some(n), Some(p), None, Some(h), Some(s.theta_fixed), "slope_loss_vs_d", McEstimate::new(f.slope, slope_stderr(f, k))));
        rows.push(hx.row(Some(n), Some(p), None, Some(h), Some(s.theta_fixed), "r_squared_loss_vs_d", McEstimate::new(f.r_squared, 0.0)));
    }
    if let Some(f) = &theta_fit {
        let k = by_theta.0.len();
        rows.push(hx.row(Some(n), Some(p), Some(s.d_fixed), Some(h), None, "slope_log_loss_vs_log_theta", McEstimate::new(f.slope, slope_stderr(f, k))));
        rows.push(hx.row(Some(n), Some(p), Some(s.d_fixed), Some(h), None, "r_squared_log_loss_vs_log_theta", McEstimate::new(f.r_squared, 0.0)));
    }
    Ok(DLambdaReport { rows, theta_fit, d_fit })
}

/// Every analytic bound check; see [`all_checks`].
pub fn run_check_bounds(hx: &Harness) -> Result<Vec<BoundCheck>> {
    let s = hx.settings();
    hx.check_memory(s.n[0], s.p[0].max(10), false)?;
    hx.pool.install(|| all_checks(s))
}

pub fn bound_rows(hx: &Harness, checks: &[BoundCheck]) -> Vec<ResultRow> {
    let s = hx.settings();
    let mut rows = Vec::new();
    for c in checks {
        let mut r = hx.row(Some(s.n[0]), Some(s.p[0]), c.d, Some(s.h[0]), None, c.name, McEstimate::new(c.value, c.stderr));
        r.rep_count = 1;
        rows.push(r.clone());
        r.statistic = format!("{}:pass", c.name);
        r.value = if c.passed { 1.0 } else { 0.0 };
        r.stderr = 0.0;
        rows.push(r);
    }
    rows
}

/// Sparse single-index model (`support = {0..s−1}`): support recovery and
/// loss of the aggregation estimator (when `C(p, s)` is within the cap),
/// the oracle estimator with the true support, and full-`p` SIR with
/// estimated covariance.
pub fn run_sparse_demo(hx: &Harness) -> Result<Vec<ResultRow>> {
    let st = hx.settings();
    let mut rows = Vec::new();
    for &d in &st.d {
        if d != 1 {
            return Err(SirError::invalid("the sparse demo model is single-index; d must be 1"));
        }
    }
    for &p in &st.p {
        for &s in &st.s {
            if s <= 1 || s > p {
                return Err(SirError::invalid(format!("need 1 < s <= p (s = {s}, p = {p})")));
            }
            let truth = {
                let mut b = nalgebra::DMatrix::zeros(p, 1);
                for i in 0..s {
                    b[(i, 0)] = 1.0 / (s as f64).sqrt();
                }
                Basis::new(b)?
            };
            let support: Vec<usize> = (0..s).collect();
            let aggregate = binomial(p, s) <= crate::sparse::DEFAULT_ENUMERATION_CAP;
            for &n in &st.n {
                hx.check_memory(n, p, false)?;
                for &h in &st.h {
                    let per_rep = hx.replicate(&[p as u64, s as u64, n as u64, h as u64], |rng| {
                        let data = sample_sparse_sin(n, p, s, rng)?;
                        let split_seed = rng.next_u64();
                        let oracle = fit_oracle(&data, &support, 1, h, split_seed)?.orthonormalized();
                        let vanilla = fit_sir(&data, &SirConfig::new(h, 1, SigmaMode::Estimated))?.span();
                        let mut out = vec![general_loss(&oracle, &truth)?, general_loss(&vanilla, &truth)?];
                        if aggregate {
                            let fit = fit_aggregation(&data, &SparseConfig::new(s, 1, h), split_seed)?;
                            let hit = support.iter().all(|i| fit.selected_support.contains(i));
                            out.push(if hit { 1.0 } else { 0.0 });
                            out.push(general_loss(&fit.basis.orthonormalized(), &truth)?);
                        }
                        Ok(out)
                    })?;
                    let col = |i: usize| mean_and_se(&per_rep.iter().map(|v| v[i]).collect::<Vec<_>>());
                    let mut push = |stat: &str, est| rows.push(hx.row(Some(n), Some(p), Some(1), Some(h), None, format!("{stat}_s{s}"), est));
                    push("oracle_loss", col(0));
                    push("sir_loss", col(1));
                    if aggregate {
                        push("support_recovery", col(2));
                        push("aggregation_loss", col(3));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Output of [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub checks: Vec<BoundCheck>,
}

impl RunOutput {
    pub fn failed_checks(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Resolves `cfg` for `kind` and runs the experiment.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let hx = Harness::new(Settings::resolve(kind, cfg)?)?;
    let (rows, checks) = match kind {
        ExperimentKind::LossTable => (run_loss_table(&hx)?, vec![]),
        ExperimentKind::EigenTable => (run_eigen_table(&hx)?, vec![]),
        ExperimentKind::GsnrDecay => (run_gsnr_decay(&hx)?, vec![]),
        ExperimentKind::DLambda => (run_d_lambda(&hx)?.rows, vec![]),
        ExperimentKind::CheckBounds => {
            let checks = run_check_bounds(&hx)?;
            (bound_rows(&hx, &checks), checks)
        }
        ExperimentKind::SparseDemo => (run_sparse_demo(&hx)?, vec![]),
    };
    Ok(RunOutput { rows, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    #[test]
    fn loss_table_is_deterministic_across_threads() {
        let a = run(ExperimentKind::LossTable, &cfg(r#"{"n": 300, "H": [5, 10], "reps": 6, "threads": 1}"#)).unwrap();
        let b = run(ExperimentKind::LossTable, &cfg(r#"{"n": 300, "H": [5, 10], "reps": 6, "threads": 4}"#)).unwrap();
        assert_eq!(to_csv_string(&a.rows).unwrap(), to_csv_string(&b.rows).unwrap());
        assert_eq!(a.rows.len(), 2);
        assert!(a.rows.iter().all(|r| r.value > 0.0 && r.value <= 10.0 && r.stderr > 0.0));
    }

    #[test]
    fn seed_changes_results() {
        let a = run(ExperimentKind::LossTable, &cfg(r#"{"n": 300, "H": 5, "reps": 3, "seed": 1}"#)).unwrap();
        let b = run(ExperimentKind::LossTable, &cfg(r#"{"n": 300, "H": 5, "reps": 3, "seed": 2}"#)).unwrap();
        assert_ne!(a.rows[0].value, b.rows[0].value);
    }

    #[test]
    fn memory_budget_enforced() {
        let err = run(ExperimentKind::LossTable, &cfg(r#"{"n": 100000000, "H": 5, "reps": 1}"#)).unwrap_err();
        assert!(matches!(err, SirError::ResourceLimit(_)));
        assert_eq!(err.exit_code(), 2);
        let err = run(ExperimentKind::GsnrDecay, &cfg(r#"{"n": 30000, "d": 1, "reps": 1}"#)).unwrap_err();
        assert!(matches!(err, SirError::ResourceLimit(_)));
    }

    #[test]
    fn eigen_table_rows() {
        let out = run(ExperimentKind::EigenTable, &cfg(r#"{"n": 2000, "H": 10, "reps": 2}"#)).unwrap();
        let names: Vec<&str> = out.rows.iter().map(|r| r.statistic.as_str()).collect();
        assert_eq!(names, ["log_lambda_1", "log_lambda_2", "log_lambda_3", "log_lambda_4", "log_lambda_5", "log_lambda_5_minus_log_lambda_1"]);
    }

    #[test]
    fn d_lambda_shares_cell_and_handles_zero_theta() {
        let out = run(
            ExperimentKind::DLambda,
            &cfg(r#"{"n": 4000, "p": 10, "H": 20, "d": [2, 3], "theta": [0, 0.05, 0.07], "d_fixed": 3, "reps": 2, "mc_samples": 20000}"#),
        )
        .unwrap();
        let loss = |d: usize, t: f64| {
            out.rows
                .iter()
                .find(|r| r.statistic == "loss" && r.d == Some(d) && r.theta == Some(t))
                .unwrap()
                .value
        };
        let shared = out.rows.iter().filter(|r| r.statistic == "loss" && r.d == Some(3) && r.theta == Some(0.05)).count();
        assert_eq!(shared, 2);
        assert!(loss(3, 0.0) > 0.0);
        assert!(out.rows.iter().any(|r| r.statistic == "slope_log_loss_vs_log_theta"));
    }

    #[test]
    fn gsnr_decay_small() {
        let out = run(ExperimentKind::GsnrDecay, &cfg(r#"{"n": 200, "d": [1, 2], "H": 10, "reps": 2}"#)).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert!(out.rows.iter().all(|r| r.value.is_finite()));
    }

    #[test]
    fn sparse_demo_small() {
        let out = run(ExperimentKind::SparseDemo, &cfg(r#"{"n": 400, "p": 6, "s": 3, "reps": 2}"#)).unwrap();
        let names: Vec<&str> = out.rows.iter().map(|r| r.statistic.as_str()).collect();
        assert_eq!(names, ["oracle_loss_s3", "sir_loss_s3", "support_recovery_s3", "aggregation_loss_s3"]);
    }

    #[test]
    fn lambda0_exact_value() {
        assert!((lambda0_one_dim().unwrap() - 0.052703).abs() < 5e-6);
    }
}
