use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sirlab::experiment::{run, write_csv, ExperimentConfig, ExperimentKind, Grid, ModelKind, RunOutput};
use sirlab::{SigmaMode, SirError};

const EXIT_BOUND_FAILURE: u8 = 3;

/// Sliced inverse regression experiments.
///
/// Every config field can be overridden by the flag of the same name; list
/// fields take comma-separated values.
#[derive(Debug, Parser)]
#[command(name = "sirlab", version)]
struct Cli {
    /// loss-table, eigen-table, gsnr-decay, d-lambda, check-bounds or sparse-demo
    experiment: String,
    /// JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// m1, m2, gp or lower-bound
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    /// number of slices
    #[arg(long = "H", value_delimiter = ',')]
    h: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    /// support size of the sparse demo
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// CSV output path; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// half-width of the lower-bound model's uniform noise
    #[arg(long)]
    sigma: Option<f64>,
    /// identity or estimated
    #[arg(long = "sigma_mode")]
    sigma_mode: Option<String>,
    #[arg(long = "mc_samples")]
    mc_samples: Option<usize>,
    #[arg(long = "gp_cap")]
    gp_cap: Option<usize>,
    #[arg(long = "theta_fixed")]
    theta_fixed: Option<f64>,
    #[arg(long = "d_fixed")]
    d_fixed: Option<usize>,
    #[arg(long = "memory_mb")]
    memory_mb: Option<usize>,
}

impl Cli {
    fn overrides(&self) -> Result<ExperimentConfig, SirError> {
        let sigma_mode = match self.sigma_mode.as_deref() {
            None => None,
            Some("identity") => Some(SigmaMode::Identity),
            Some("estimated") => Some(SigmaMode::Estimated),
            Some(other) => return Err(SirError::InvalidInput(format!("unknown sigma_mode '{other}'"))),
        };
        Ok(ExperimentConfig {
            experiment: None,
            model: self.model.as_deref().map(str::parse::<ModelKind>).transpose()?,
            n: self.n.clone().map(Grid::from),
            p: self.p.clone().map(Grid::from),
            d: self.d.clone().map(Grid::from),
            h: self.h.clone().map(Grid::from),
            theta: self.theta.clone().map(Grid::from),
            s: self.s.clone().map(Grid::from),
            reps: self.reps,
            seed: self.seed,
            threads: self.threads,
            out: self.out.clone(),
            sigma: self.sigma,
            sigma_mode,
            mc_samples: self.mc_samples,
            gp_cap: self.gp_cap,
            theta_fixed: self.theta_fixed,
            d_fixed: self.d_fixed,
            memory_mb: self.memory_mb,
        })
    }
}

fn emit(output: &RunOutput, out: Option<&PathBuf>) -> Result<(), SirError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|source| SirError::Io { path: path.display().to_string(), source })?;
            write_csv(&output.rows, BufWriter::new(file))
        }
        None => write_csv(&output.rows, io::stdout().lock()),
    }
}

fn report_checks(output: &RunOutput) {
    let mut err = io::stderr().lock();
    for c in &output.checks {
        let d = c.d.map(|d| format!("d={d}")).unwrap_or_default();
        let _ = writeln!(
            err,
            "{} {:<26} {:<5} value={:.6e} se={:.2e} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            d,
            c.value,
            c.stderr,
            c.detail
        );
    }
}

fn execute(cli: &Cli) -> Result<bool, SirError> {
    let kind: ExperimentKind = cli.experiment.parse()?;
    let base = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = base.merged(cli.overrides()?);
    let output = run(kind, &cfg)?;
    emit(&output, cfg.out.as_ref())?;
    report_checks(&output);
    let all_passed = output.failed_checks().next().is_none();
    Ok(all_passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_BOUND_FAILURE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
