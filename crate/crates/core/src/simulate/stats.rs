//! Summary statistics for Monte-Carlo output.

use serde::{Deserialize, Serialize};

/// Which replications the trimmed moments discard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrimMode {
    /// Drop the `ceil(trim N)` errors with the largest absolute value.
    #[default]
    Absolute,
    /// Drop `ceil(trim N / 2)` errors from each tail of the signed errors.
    PerTail,
}

impl std::str::FromStr for TrimMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "absolute" => Ok(TrimMode::Absolute),
            "per-tail" => Ok(TrimMode::PerTail),
            other => Err(crate::Error::InvalidInput(format!("unknown trim mode '{other}'"))),
        }
    }
}

/// Neumaier-compensated sum.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
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

pub fn mean(values: &[f64]) -> f64 {
    neumaier_sum(values.iter().copied()) / values.len() as f64
}

/// Sample standard deviation (denominator `n - 1`); 0 for fewer than two values.
pub fn sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (neumaier_sum(values.iter().map(|v| (v - m).powi(2))) / (values.len() - 1) as f64).sqrt()
}

fn drop_count(n: usize, frac: f64) -> usize {
    // The small offset keeps exact products such as 0.2 * 5 from rounding up.
    ((frac * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n.saturating_sub(1))
}

/// Retained errors after trimming, in their original order.
pub fn trimmed(errors: &[f64], trim: f64, mode: TrimMode) -> Vec<f64> {
    let n = errors.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let keep: Vec<usize> = match mode {
        TrimMode::Absolute => {
            let d = drop_count(n, trim);
            idx.sort_by(|&a, &b| errors[a].abs().total_cmp(&errors[b].abs()).then(a.cmp(&b)));
            idx.truncate(n - d);
            idx
        }
        TrimMode::PerTail => {
            let d = drop_count(n, 0.5 * trim).min(n.saturating_sub(1) / 2);
            idx.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)));
            idx[d..n - d].to_vec()
        }
    };
    let mut keep = keep;
    keep.sort_unstable();
    keep.into_iter().map(|i| errors[i]).collect()
}

/// Trimmed bias and RMSE of `τ̂ - τ`.
pub fn trimmed_moments(errors: &[f64], trim: f64, mode: TrimMode) -> (f64, f64) {
    let kept = trimmed(errors, trim, mode);
    let bias = mean(&kept);
    let rmse = (neumaier_sum(kept.iter().map(|e| e * e)) / kept.len() as f64).sqrt();
    (bias, rmse)
}

/// Empirical CDF of `values` evaluated at each grid point.
pub fn ecdf(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    grid.iter()
        .map(|t| v.partition_point(|x| x <= t) as f64 / v.len() as f64)
        .collect()
}

/// Median with the average of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
