//! Permutation test for rank correlation between two families of yearly
//! series observed on the same regions.
//!
//! Each region's series is smoothed on the shared year grid, reduced to the
//! integral of the smooth, and the integrals are mid-ranked. The statistic
//! is the absolute Pearson correlation of the two rank vectors; the null
//! distribution permutes which region of the second family is paired with
//! which region of the first.

use rand::seq::SliceRandom;

use crate::model::spline::smooth_series;

use super::rank::mid_ranks;
use super::{PValueMode, StatsError, TestResult};

/// Knot budget for the per-region smooths.
const N_KNOTS: usize = 10;

fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| (g[1] - g[0]) * (v[0] + v[1]) / 2.0)
        .sum()
}

fn pearson(a: &[f64], b: &[f64], ma: f64, mb: f64) -> f64 {
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    num / (da * db).sqrt()
}

fn factorial_at_most(n: usize, cap: usize) -> Option<usize> {
    let mut f: usize = 1;
    for k in 2..=n {
        f = f.checked_mul(k)?;
        if f > cap {
            return None;
        }
    }
    Some(f)
}

/// Visits every permutation of `0..n` exactly once (Heap's algorithm),
/// starting from the identity.
fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize])) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    visit(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            visit(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Runs the functional rank-correlation permutation test. `xs[i]` and
/// `ys[i]` are region `i`'s series on `years`; `lambda` controls the
/// smoothing; `b` caps the number of permutations (all `n!` are enumerated
/// when they fit inside the cap, otherwise `b` sampled relabelings are used
/// with the add-one estimate).
pub fn spearman_perm_test(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    years: &[f64],
    lambda: f64,
    b: usize,
    seed: u64,
) -> Result<TestResult, StatsError> {
    if b == 0 {
        return Err(StatsError::NoPermutations);
    }
    if xs.len() != ys.len() {
        return Err(StatsError::SeriesLengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(StatsError::TooFewRegions(n));
    }
    if years.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StatsError::Degenerate(
            "years must be strictly increasing".to_string(),
        ));
    }
    for series in xs.iter().chain(ys) {
        if series.len() != years.len() {
            return Err(StatsError::SeriesLengthMismatch(series.len(), years.len()));
        }
    }

    let integrate = |series: &Vec<f64>| -> Result<f64, StatsError> {
        let smoothed = smooth_series(years, series, lambda, N_KNOTS)?;
        Ok(trapezoid(years, &smoothed))
    };
    let ix: Vec<f64> = xs.iter().map(integrate).collect::<Result<_, _>>()?;
    let iy: Vec<f64> = ys.iter().map(integrate).collect::<Result<_, _>>()?;
    let rx = mid_ranks(&ix);
    let ry = mid_ranks(&iy);

    let mean = (n as f64 + 1.0) / 2.0;
    let spread = |r: &[f64]| r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    if spread(&rx) == 0.0 || spread(&ry) == 0.0 {
        return Ok(TestResult {
            statistic: 0.0,
            p_value: 1.0,
            n_permutations: 0,
            seed,
            mode: PValueMode::Exhaustive,
            degenerate: true,
        });
    }

    let observed = pearson(&rx, &ry, mean, mean).abs();
    let stat_for = |perm: &[usize]| -> f64 {
        let permuted: Vec<f64> = perm.iter().map(|&j| ry[j]).collect();
        pearson(&rx, &permuted, mean, mean).abs()
    };

    if let Some(total) = factorial_at_most(n, b) {
        let mut exceed = 0usize;
        for_each_permutation(n, |perm| {
            if stat_for(perm) >= observed {
                exceed += 1;
            }
        });
        Ok(TestResult {
            statistic: observed,
            p_value: exceed as f64 / total as f64,
            n_permutations: total,
            seed,
            mode: PValueMode::Exhaustive,
            degenerate: false,
        })
    } else {
        let mut exceed = 0usize;
        let mut perm: Vec<usize> = (0..n).collect();
        for r in 0..b {
            let mut rng = crate::rng::stream(seed, r as u64);
            perm.shuffle(&mut rng);
            if stat_for(&perm) >= observed {
                exceed += 1;
            }
        }
        Ok(TestResult {
            statistic: observed,
            p_value: (1 + exceed) as f64 / (1 + b) as f64,
            n_permutations: b,
            seed,
            mode: PValueMode::MonteCarlo,
            degenerate: false,
        })
    }
}
