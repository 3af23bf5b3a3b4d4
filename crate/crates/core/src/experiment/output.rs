use std::io::Write;

use crate::error::{Result, SirError};

pub const CSV_HEADER: [&str; 11] =
    ["experiment", "model", "n", "p", "d", "H", "theta", "rep_count", "statistic", "value", "stderr"];

/// One output line: a statistic of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub model: String,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub d: Option<usize>,
    pub h: Option<usize>,
    pub theta: Option<f64>,
    pub rep_count: usize,
    pub statistic: String,
    pub value: f64,
    pub stderr: f64,
}

/// `%.9g`-style formatting: nine significant digits, no trailing zeros.
pub fn format_sig(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.8e}");
        let (mant, e) = s.split_once('e').unwrap_or((&s, "0"));
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{e}")
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    fn record(&self) -> [String; 11] {
        [
            self.experiment.clone(),
            self.model.clone(),
            opt(self.n),
            opt(self.p),
            opt(self.d),
            opt(self.h),
            self.theta.map(format_sig).unwrap_or_default(),
            self.rep_count.to_string(),
            self.statistic.clone(),
            format_sig(self.value),
            format_sig(self.stderr),
        ]
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let io = |e: csv::Error| SirError::Internal(format!("csv output: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.record()).map_err(io)?;
    }
    w.flush().map_err(|e| SirError::Internal(format!("csv output: {e}")))
}

pub fn to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| SirError::Internal(e.to_string()))
}
