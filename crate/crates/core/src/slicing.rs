//! Sliced partitions of a sample by the order of `Y`, slice means, and the
//! candidate matrix `Λ̂_H = (1/H) Σ_h x̄_h x̄_hᵀ`.
//!
//! Also hosts the empirical partition checks: the γ-balance of slice masses
//! against an independent reference sample, and the weak sliced stability
//! ratio of a curve `κ(Y)`.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SirError};
use crate::linalg::{column_means, sym_eig, Basis, EigenDecomposition, SymMatrix};

/// Default balance tolerance for γ-partition checks.
pub const DEFAULT_GAMMA: f64 = 0.1;

/// `n` paired observations of `(X ∈ ℝᵖ, Y ∈ ℝ)`.
///
/// `X` must be finite. `Y` may not be NaN but may be infinite: heavy-tailed
/// links can overflow, and such samples simply land in the extreme slices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(SirError::invalid("dataset needs at least one observation"));
        }
        if x.nrows() != y.len() {
            return Err(SirError::invalid(format!(
                "X has {} rows but Y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % x.nrows(), pos / x.nrows());
            return Err(SirError::invalid(format!("X[{i}, {j}] is not finite")));
        }
        if let Some(i) = y.iter().position(|v| v.is_nan()) {
            return Err(SirError::invalid(format!("Y[{i}] is NaN")));
        }
        Ok(Dataset { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Rows in the given order (indices may repeat).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
        }
    }

    /// The first `n` observations.
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.n());
        Dataset {
            x: self.x.rows(0, n).into_owned(),
            y: self.y.rows(0, n).into_owned(),
        }
    }

    /// `X B`, the `n x d` matrix of index values.
    pub fn project(&self, basis: &Basis) -> DMatrix<f64> {
        &self.x * basis.as_matrix()
    }

    /// Reads a CSV with header `x1,...,xp,y`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| SirError::invalid(format!("CSV header: {e}")))?
            .clone();
        let ncol = headers.len();
        if ncol < 2 {
            return Err(SirError::invalid("CSV needs columns x1..xp,y"));
        }
        for (j, name) in headers.iter().enumerate() {
            let expected = if j + 1 == ncol { "y".to_string() } else { format!("x{}", j + 1) };
            if name != expected {
                return Err(SirError::invalid(format!(
                    "CSV header column {} is {name:?}, expected {expected:?}",
                    j + 1
                )));
            }
        }
        let p = ncol - 1;
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            // 1-based line numbers with the header on line 1
            let line = r + 2;
            let rec = rec.map_err(|e| SirError::invalid(format!("CSV row {line}: {e}")))?;
            if rec.len() != ncol {
                return Err(SirError::invalid(format!(
                    "CSV row {line}: {} fields, expected {ncol}",
                    rec.len()
                )));
            }
            for (j, cell) in rec.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    SirError::invalid(format!(
                        "CSV row {line}, column {} ({}): non-numeric cell {cell:?}",
                        j + 1,
                        &headers[j]
                    ))
                })?;
                if j < p {
                    xs.push(v);
                } else {
                    ys.push(v);
                }
            }
        }
        let n = ys.len();
        Dataset::new(DMatrix::from_row_slice(n, p, &xs), DVector::from_vec(ys))
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|source| SirError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_reader(std::io::BufReader::new(f))
    }
}

/// Assignment of the sample to `H` slices by the (stable) order of `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedPartition {
    h: usize,
    assignment: Vec<usize>,
    boundaries: Vec<f64>,
    sizes: Vec<usize>,
}

impl SlicedPartition {
    pub fn slices(&self) -> usize {
        self.h
    }

    /// Slice id of every observation, in input order.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// The `H − 1` upper boundaries `Y_(h, c)`: slice `h` is
    /// `(b_{h−1}, b_h]`, the first slice is unbounded below and the last
    /// unbounded above.
    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Slice of an arbitrary response value under the interval partition.
    pub fn slice_of(&self, y: f64) -> usize {
        self.boundaries.partition_point(|&b| b < y)
    }
}

/// Splits the sample into `h` slices of consecutive order statistics.
///
/// Slices have size `⌊n/H⌋` or `⌊n/H⌋ + 1`, the larger ones first. Ties in
/// `Y` are broken by original index.
pub fn slice(data: &Dataset, h: usize) -> Result<SlicedPartition> {
    let n = data.n();
    if h == 0 || h > n {
        return Err(SirError::invalid(format!("slice count H = {h} must lie in 1..={n}")));
    }
    let y = data.y();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));

    let base = n / h;
    let extra = n % h;
    let sizes: Vec<usize> = (0..h).map(|s| base + usize::from(s < extra)).collect();
    let mut assignment = vec![0usize; n];
    let mut boundaries = Vec::with_capacity(h - 1);
    let mut pos = 0;
    for (s, &size) in sizes.iter().enumerate() {
        for &i in &order[pos..pos + size] {
            assignment[i] = s;
        }
        pos += size;
        if s + 1 < h {
            boundaries.push(y[order[pos - 1]]);
        }
    }
    Ok(SlicedPartition { h, assignment, boundaries, sizes })
}

/// `Λ̂_H` with its slice means and eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMatrix {
    pub lambda_hat: SymMatrix,
    /// `H x p`, one globally-centered slice mean per row.
    pub slice_means: DMatrix<f64>,
    pub eig: EigenDecomposition,
}

/// Candidate matrix from globally centered `X`.
pub fn candidate_matrix(data: &Dataset, part: &SlicedPartition) -> Result<CandidateMatrix> {
    let n = data.n();
    let p = data.p();
    let h = part.slices();
    if part.assignment().len() != n {
        return Err(SirError::invalid(format!(
            "partition covers {} observations, dataset has {n}",
            part.assignment().len()
        )));
    }
    if let Some(s) = part.sizes().iter().position(|&c| c == 0) {
        return Err(SirError::Internal(format!("slice {s} is empty")));
    }
    let means = column_means(data.x());
    let assign = part.assignment();
    let mut slice_means = DMatrix::zeros(h, p);
    let mut acc = vec![0.0; h];
    for j in 0..p {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let col = data.x().column(j);
        for (i, &s) in assign.iter().enumerate() {
            acc[s] += col[i];
        }
        for s in 0..h {
            slice_means[(s, j)] = acc[s] / part.sizes()[s] as f64 - means[j];
        }
    }
    let lambda = SymMatrix::symmetrized(slice_means.tr_mul(&slice_means) / h as f64);
    let eig = sym_eig(&lambda)?;
    Ok(CandidateMatrix { lambda_hat: lambda, slice_means, eig })
}

/// Outcome of a γ-partition check.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCheck {
    pub passed: bool,
    /// Estimated probability mass of every slice interval.
    pub masses: Vec<f64>,
}

/// Whether every slice interval of `part` carries mass in
/// `[(1−γ)/H, (1+γ)/H]`, with masses estimated on `ref_sample`.
///
/// `data` is the sample the partition was built from; only its size is
/// checked.
pub fn gamma_partition_check(
    data: &Dataset,
    part: &SlicedPartition,
    gamma: f64,
    ref_sample: &Dataset,
) -> Result<GammaCheck> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(SirError::invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if part.assignment().len() != data.n() {
        return Err(SirError::invalid("partition does not match dataset"));
    }
    let h = part.slices();
    let mut counts = vec![0usize; h];
    for &y in ref_sample.y().iter() {
        counts[part.slice_of(y)] += 1;
    }
    let m = ref_sample.n() as f64;
    let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / m).collect();
    let lo = (1.0 - gamma) / h as f64;
    let hi = (1.0 + gamma) / h as f64;
    let passed = masses.iter().all(|&q| q >= lo && q <= hi);
    Ok(GammaCheck { passed, masses })
}

/// Largest ratio, over `directions`, of the average within-slice variance of
/// `βᵀκ(Y)` to its total variance.
///
/// `curve` holds `κ(Y_i)` row by row, aligned with the partitioned sample.
/// The weak sliced stability condition with parameter `τ` holds empirically
/// when the ratio is at most `1/τ`.
pub fn wssc_ratio(curve: &DMatrix<f64>, part: &SlicedPartition, directions: &[DVector<f64>]) -> Result<f64> {
    let n = curve.nrows();
    if part.assignment().len() != n {
        return Err(SirError::invalid(format!(
            "curve has {n} rows, partition covers {}",
            part.assignment().len()
        )));
    }
    if directions.is_empty() {
        return Err(SirError::invalid("wssc_ratio needs at least one direction"));
    }
    let h = part.slices();
    let sizes = part.sizes();
    let mut worst = 0.0f64;
    for (k, beta) in directions.iter().enumerate() {
        if beta.len() != curve.ncols() {
            return Err(SirError::invalid(format!(
                "direction {k} has length {}, curve has {} columns",
                beta.len(),
                curve.ncols()
            )));
        }
        let proj = curve * beta;
        let mean = proj.mean();
        let total = proj.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if !(total > 0.0) {
            return Err(SirError::DegenerateDirection(format!(
                "direction {k} has zero total variance"
            )));
        }
        let mut sum = vec![0.0; h];
        for (i, &s) in part.assignment().iter().enumerate() {
            sum[s] += proj[i];
        }
        let slice_mean: Vec<f64> = sum.iter().zip(sizes).map(|(s, &c)| s / c as f64).collect();
        let mut ss = vec![0.0; h];
        for (i, &s) in part.assignment().iter().enumerate() {
            ss[s] += (proj[i] - slice_mean[s]).powi(2);
        }
        let within = ss.iter().zip(sizes).map(|(s, &c)| s / c as f64).sum::<f64>() / h as f64;
        worst = worst.max(within / total);
    }
    Ok(worst)
}
