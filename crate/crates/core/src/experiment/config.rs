use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SirError};
use crate::models::{DEFAULT_GP_CAP, DEFAULT_SIGMA};
use crate::sir::SigmaMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    LossTable,
    EigenTable,
    GsnrDecay,
    DLambda,
    CheckBounds,
    SparseDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::LossTable,
        ExperimentKind::EigenTable,
        ExperimentKind::GsnrDecay,
        ExperimentKind::DLambda,
        ExperimentKind::CheckBounds,
        ExperimentKind::SparseDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::LossTable => "loss-table",
            ExperimentKind::EigenTable => "eigen-table",
            ExperimentKind::GsnrDecay => "gsnr-decay",
            ExperimentKind::DLambda => "d-lambda",
            ExperimentKind::CheckBounds => "check-bounds",
            ExperimentKind::SparseDemo => "sparse-demo",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = SirError;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SirError::invalid(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    M1,
    M2,
    Gp,
    LowerBound,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::M1 => "m1",
            ModelKind::M2 => "m2",
            ModelKind::Gp => "gp",
            ModelKind::LowerBound => "lower-bound",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = SirError;

    fn from_str(s: &str) -> Result<Self> {
        [ModelKind::M1, ModelKind::M2, ModelKind::Gp, ModelKind::LowerBound]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SirError::invalid(format!("unknown model '{s}'")))
    }
}

/// A single value or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Grid<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Grid::One(v) => vec![v.clone()],
            Grid::Many(v) => v.clone(),
        }
    }
}

impl<T> From<Vec<T>> for Grid<T> {
    fn from(v: Vec<T>) -> Self {
        Grid::Many(v)
    }
}

/// Experiment configuration as read from JSON. Absent fields take the
/// per-experiment defaults of [`Settings::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub model: Option<ModelKind>,
    pub n: Option<Grid<usize>>,
    pub p: Option<Grid<usize>>,
    pub d: Option<Grid<usize>>,
    #[serde(rename = "H")]
    pub h: Option<Grid<usize>>,
    pub theta: Option<Grid<f64>>,
    pub s: Option<Grid<usize>>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// Half-width of the uniform response noise of the lower-bound model.
    pub sigma: Option<f64>,
    pub sigma_mode: Option<SigmaMode>,
    /// Monte Carlo draws for the analytic constants.
    pub mc_samples: Option<usize>,
    pub gp_cap: Option<usize>,
    pub theta_fixed: Option<f64>,
    pub d_fixed: Option<usize>,
    pub memory_mb: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SirError::invalid(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SirError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&text).map_err(|e| SirError::invalid(format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merged(mut self, other: ExperimentConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            experiment, model, n, p, d, h, theta, s, reps, seed, threads, out, sigma, sigma_mode, mc_samples,
            gp_cap, theta_fixed, d_fixed, memory_mb
        );
        self
    }
}

/// Fully resolved experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub kind: ExperimentKind,
    pub model: Option<ModelKind>,
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub d: Vec<usize>,
    pub h: Vec<usize>,
    pub theta: Vec<f64>,
    pub s: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub threads: usize,
    pub sigma: f64,
    pub sigma_mode: SigmaMode,
    pub mc_samples: usize,
    pub gp_cap: usize,
    pub theta_fixed: f64,
    pub d_fixed: usize,
    pub memory_bytes: u128,
}

const DEFAULT_MEMORY_MB: usize = 2048;

struct Defaults {
    model: Option<ModelKind>,
    n: Vec<usize>,
    p: Vec<usize>,
    d: Vec<usize>,
    h: Vec<usize>,
    theta: Vec<f64>,
    s: Vec<usize>,
    reps: usize,
}

fn defaults(kind: ExperimentKind) -> Defaults {
    let thetas = vec![0.03, 0.04, 0.05, 0.06, 0.07];
    match kind {
        ExperimentKind::LossTable => Defaults {
            model: Some(ModelKind::M1),
            n: vec![1_000, 10_000],
            p: vec![15],
            d: vec![5],
            h: vec![5, 10, 20],
            theta: vec![],
            s: vec![],
            reps: 100,
        },
        ExperimentKind::EigenTable => Defaults {
            model: Some(ModelKind::M1),
            n: vec![100_000],
            p: vec![15],
            d: vec![5],
            h: vec![10],
            theta: vec![],
            s: vec![],
            reps: 20,
        },
        ExperimentKind::GsnrDecay => Defaults {
            model: Some(ModelKind::Gp),
            n: vec![2_000],
            p: vec![15],
            d: vec![1, 2, 3, 4, 5],
            h: vec![15],
            theta: vec![],
            s: vec![],
            reps: 20,
        },
        ExperimentKind::DLambda => Defaults {
            model: Some(ModelKind::LowerBound),
            n: vec![100_000],
            p: vec![50],
            d: vec![2, 4, 6, 8, 10],
            h: vec![100],
            theta: thetas,
            s: vec![],
            reps: 50,
        },
        ExperimentKind::CheckBounds => Defaults {
            model: Some(ModelKind::LowerBound),
            n: vec![1_000_000],
            p: vec![10],
            d: vec![],
            h: vec![100],
            theta: vec![],
            s: vec![],
            reps: 1,
        },
        ExperimentKind::SparseDemo => Defaults {
            model: None,
            n: vec![4_000],
            p: vec![12],
            d: vec![1],
            h: vec![10],
            theta: vec![],
            s: vec![4],
            reps: 50,
        },
    }
}

fn nonempty<T>(name: &str, v: Vec<T>) -> Result<Vec<T>> {
    if v.is_empty() {
        Err(SirError::invalid(format!("grid '{name}' is empty")))
    } else {
        Ok(v)
    }
}

impl Settings {
    /// Fills absent fields with the defaults of `kind` and validates.
    pub fn resolve(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(k) = cfg.experiment {
            if k != kind {
                return Err(SirError::invalid(format!("config is for experiment '{k}', not '{kind}'")));
            }
        }
        let def = defaults(kind);
        let grid = |g: &Option<Grid<usize>>, dv: Vec<usize>| g.as_ref().map_or(dv, |g| g.values());
        let n = grid(&cfg.n, def.n);
        let p = grid(&cfg.p, def.p);
        let d = grid(&cfg.d, def.d);
        let h = grid(&cfg.h, def.h);
        let s = grid(&cfg.s, def.s);
        let theta = cfg.theta.as_ref().map_or(def.theta, |g| g.values());
        let model = cfg.model.or(def.model);

        let allowed: &[ModelKind] = match kind {
            ExperimentKind::LossTable | ExperimentKind::EigenTable => &[ModelKind::M1, ModelKind::M2],
            ExperimentKind::GsnrDecay => &[ModelKind::Gp],
            ExperimentKind::DLambda | ExperimentKind::CheckBounds => &[ModelKind::LowerBound],
            ExperimentKind::SparseDemo => &[],
        };
        match model {
            Some(m) if !allowed.contains(&m) => {
                return Err(SirError::invalid(format!("experiment '{kind}' does not support model '{m}'")))
            }
            None if !allowed.is_empty() => return Err(SirError::invalid("model is required")),
            _ => {}
        }

        let settings = Settings {
            kind,
            model,
            n: nonempty("n", n)?,
            p: nonempty("p", p)?,
            d: if kind == ExperimentKind::CheckBounds { d } else { nonempty("d", d)? },
            h: nonempty("H", h)?,
            theta: if kind == ExperimentKind::DLambda { nonempty("theta", theta)? } else { theta },
            s: if kind == ExperimentKind::SparseDemo { nonempty("s", s)? } else { s },
            reps: cfg.reps.unwrap_or(def.reps),
            seed: cfg.seed.unwrap_or(0),
            threads: cfg.threads.unwrap_or(1),
            sigma: cfg.sigma.unwrap_or(DEFAULT_SIGMA),
            sigma_mode: cfg.sigma_mode.unwrap_or(SigmaMode::Identity),
            mc_samples: cfg.mc_samples.unwrap_or(1_000_000),
            gp_cap: cfg.gp_cap.unwrap_or(DEFAULT_GP_CAP),
            theta_fixed: cfg.theta_fixed.unwrap_or(0.05),
            d_fixed: cfg.d_fixed.unwrap_or(10),
            memory_bytes: cfg.memory_mb.unwrap_or(DEFAULT_MEMORY_MB) as u128 * (1 << 20),
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SirError::invalid(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        if self.n.iter().chain(&self.p).chain(&self.d).chain(&self.h).any(|&v| v == 0) {
            return bad("n, p, d and H must be positive".into());
        }
        if self.theta.iter().chain([&self.theta_fixed]).any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("theta values must be finite and nonnegative".into());
        }
        if !(self.sigma > 0.0 && self.sigma <= 0.5) {
            return bad(format!("sigma must lie in (0, 1/2], got {}", self.sigma));
        }
        if self.mc_samples < 2 {
            return bad("mc_samples must be at least 2".into());
        }
        if self.d_fixed == 0 {
            return bad("d_fixed must be positive".into());
        }
        if matches!(self.model, Some(ModelKind::M1 | ModelKind::M2)) && (self.p != [15] || self.d != [5]) {
            return bad("models m1 and m2 have p = 15 and d = 5".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_accept_scalars_and_lists() {
        let cfg = ExperimentConfig::from_json(r#"{"n": 1000, "H": [5, 10], "model": "m2", "sigma_mode": "estimated"}"#)
            .unwrap();
        let s = Settings::resolve(ExperimentKind::LossTable, &cfg).unwrap();
        assert_eq!(s.n, vec![1000]);
        assert_eq!(s.h, vec![5, 10]);
        assert_eq!(s.model, Some(ModelKind::M2));
        assert_eq!(s.sigma_mode, SigmaMode::Estimated);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"n": 10, "slices": 3}"#).is_err());
    }

    #[test]
    fn validation_errors() {
        let resolve = |json: &str, kind| Settings::resolve(kind, &ExperimentConfig::from_json(json).unwrap());
        assert!(resolve(r#"{"model": "gp"}"#, ExperimentKind::LossTable).is_err());
        assert!(resolve(r#"{"n": []}"#, ExperimentKind::LossTable).is_err());
        assert!(resolve(r#"{"reps": 0}"#, ExperimentKind::LossTable).is_err());
        assert!(resolve(r#"{"p": 20}"#, ExperimentKind::LossTable).is_err());
        assert!(resolve(r#"{"experiment": "d-lambda"}"#, ExperimentKind::LossTable).is_err());
        assert!(resolve(r#"{"sigma": 0.7}"#, ExperimentKind::DLambda).is_err());
        assert!(resolve(r#"{"model": "m1"}"#, ExperimentKind::SparseDemo).is_err());
        assert!(resolve("{}", ExperimentKind::SparseDemo).is_ok());
    }

    #[test]
    fn merge_prefers_override() {
        let base = ExperimentConfig { reps: Some(10), seed: Some(1), ..Default::default() };
        let over = ExperimentConfig { seed: Some(7), ..Default::default() };
        let m = base.merged(over);
        assert_eq!((m.reps, m.seed), (Some(10), Some(7)));
    }

    #[test]
    fn names_round_trip() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert_eq!("lower-bound".parse::<ModelKind>().unwrap(), ModelKind::LowerBound);
    }
}
