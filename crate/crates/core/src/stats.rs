//! Small summary-statistics helpers shared by the checks and the harness.

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
}

impl McEstimate {
    pub fn new(value: f64, stderr: f64) -> Self {
        McEstimate { value, stderr }
    }

    /// `|value − target| ≤ k · stderr`.
    pub fn within_se(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Compensated (Kahan–Babuška) sum; result does not depend on thread
/// scheduling as long as the input order is fixed.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Sample mean and standard error of the mean (`sd / √n`, `n − 1` divisor).
///
/// A single value has standard error 0.
pub fn mean_and_se(values: &[f64]) -> McEstimate {
    let n = values.len();
    if n == 0 {
        return McEstimate::new(f64::NAN, f64::NAN);
    }
    let mean = kahan_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return McEstimate::new(mean, 0.0);
    }
    let ss = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    McEstimate::new(mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Ordinary least-squares line `y ≈ intercept + slope·x` with its `R²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = kahan_sum(x.iter().copied()) / n as f64;
    let my = kahan_sum(y.iter().copied()) / n as f64;
    let sxx = kahan_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let sxy = kahan_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let syy = kahan_sum(y.iter().map(|b| (b - my) * (b - my)));
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(LineFit { slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kahan_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(kahan_sum(v), 2.0);
    }

    #[test]
    fn mean_se_known_values() {
        let e = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(e.value, 2.5);
        // sd = sqrt(5/3)
        assert_abs_diff_eq!(e.stderr, (5.0f64 / 3.0).sqrt() / 2.0, epsilon = 1e-15);
        assert_eq!(mean_and_se(&[7.0]).stderr, 0.0);
    }

    #[test]
    fn exact_line() {
        let f = fit_line(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert_abs_diff_eq!(f.slope, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.intercept, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.r_squared, 1.0, epsilon = 1e-14);
        assert!(fit_line(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }
}
