use serde::{Deserialize, Serialize};

/// Mean and population standard deviation, ignoring NaN. Infinite entries
/// propagate into the result. Returns `(NaN, NaN)` when nothing remains.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let kept: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if kept.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return (mean, f64::NAN);
    }
    let var = kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Box-plot summary of a score distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    /// Non-NaN entries summarised below.
    pub count: usize,
    pub nan_count: usize,
    pub neg_inf_count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear interpolation between closest ranks; a step touching -inf yields -inf.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        return a;
    }
    if !a.is_finite() {
        return a;
    }
    a + (b - a) * (pos - lo as f64)
}

/// Quartiles of the non-NaN values.
pub fn quartiles(values: &[f64]) -> Distribution {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    sorted.sort_by(f64::total_cmp);
    let nan_count = values.len() - sorted.len();
    let neg_inf_count = sorted.iter().filter(|v| **v == f64::NEG_INFINITY).count();
    if sorted.is_empty() {
        return Distribution {
            count: 0,
            nan_count,
            neg_inf_count,
            min: f64::NAN,
            q1: f64::NAN,
            median: f64::NAN,
            q3: f64::NAN,
            max: f64::NAN,
            mean: f64::NAN,
        };
    }
    Distribution {
        count: sorted.len(),
        nan_count,
        neg_inf_count,
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean: mean_std(&sorted).0,
    }
}
