//! Median and median absolute deviation.

use super::StatsError;

/// Sample median; the midpoint of the middle two values for even sizes.
pub fn median(sample: &[f64]) -> f64 {
    assert!(!sample.is_empty(), "median of an empty sample");
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Median absolute deviation from the median, unscaled.
pub fn mad(sample: &[f64]) -> f64 {
    let m = median(sample);
    let deviations: Vec<f64> = sample.iter().map(|&x| (x - m).abs()).collect();
    median(&deviations)
}

/// (median, MAD) of a sample.
pub fn robust_stats(sample: &[f64]) -> Result<(f64, f64), StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    Ok((median(sample), mad(sample)))
}
