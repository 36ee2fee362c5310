//! Permutation tests, PCA, and line fits.
//!
//! The permutation engine favors exactness: arrangements are enumerated
//! exhaustively whenever there are no more of them than the requested number
//! of random draws, and Monte-Carlo p-values use the add-one estimator so a
//! reported p can never be zero. Every test reproduces bit-identically from
//! (inputs, seed, B).

mod linefit;
mod pca;
mod perm;
mod rank;
mod robust;
mod spearman;

pub use linefit::{linear_fit, FitMethod, LineFit};
pub use pca::{pca, PcaResult};
pub use perm::{npc_anova, partial_perm_test, NpcAnovaResult, TestKind};
pub use rank::mid_ranks;
pub use robust::{mad, median, robust_stats};
pub use spearman::spearman_perm_test;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("each group needs at least {needed} observations, got {got}")]
    GroupTooSmall { needed: usize, got: usize },
    #[error("at least one permutation is required")]
    NoPermutations,
    #[error("need at least 3 regions, got {0}")]
    TooFewRegions(usize),
    #[error("series lengths differ: {0} vs {1}")]
    SeriesLengthMismatch(usize, usize),
    #[error("column {column} has zero variance and cannot be standardized")]
    ZeroVariance { column: usize },
    #[error("need at least 2 rows and 2 columns, got {rows}x{cols}")]
    BadShape { rows: usize, cols: usize },
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("x values are constant; no line is identified")]
    ConstantX,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("smoothing failed: {0}")]
    Smoothing(#[from] crate::model::ModelError),
}

/// How a p-value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMode {
    /// Every arrangement enumerated; p is the exact tie-inclusive ratio.
    Exhaustive,
    /// Random relabelings; p uses the add-one estimator.
    MonteCarlo,
}

/// Outcome of a single permutation test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Arrangements evaluated: the full count in exhaustive mode, B otherwise.
    pub n_permutations: usize,
    pub seed: u64,
    pub mode: PValueMode,
    /// Set when the inputs admit only one statistic value, forcing p = 1.
    pub degenerate: bool,
}

/// Empirical quantile with linear interpolation between order statistics
/// (the convention where the k-th of n sorted values sits at probability
/// (k-1)/(n-1)).
pub fn quantile_type7(data: &[f64], q: f64) -> f64 {
    assert!(!data.is_empty(), "quantile of an empty sample");
    assert!((0.0..=1.0).contains(&q), "quantile level must lie in [0,1]");
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates_between_order_statistics() {
        let data: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(quantile_type7(&data, 0.9), 8.1);
        assert_eq!(quantile_type7(&data, 0.0), 0.0);
        assert_eq!(quantile_type7(&data, 1.0), 9.0);
    }

    #[test]
    fn quantile_of_singleton_is_the_value() {
        assert_eq!(quantile_type7(&[3.5], 0.25), 3.5);
    }

    #[test]
    fn quantile_ignores_input_order() {
        let a = quantile_type7(&[3.0, 1.0, 2.0], 0.5);
        let b = quantile_type7(&[1.0, 2.0, 3.0], 0.5);
        assert_eq!(a, b);
        assert_eq!(a, 2.0);
    }
}
