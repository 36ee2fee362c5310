//! Ordinary and least-trimmed-squares line fits.

use super::StatsError;
use rand::Rng;

/// Fitting method for [`linear_fit`].
#[derive(Debug, Clone, Copy)]
pub enum FitMethod {
    Ols,
    /// Least trimmed squares over `h` points; `None` means ceil(0.75 n).
    Lts { h: Option<usize>, seed: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// For LTS this is computed on the h retained points.
    pub r_squared: f64,
}

/// Exhaustive subset search is exact and affordable up to this size.
const EXHAUSTIVE_LIMIT: usize = 12;
const RANDOM_STARTS: usize = 500;
const MAX_CONCENTRATION_STEPS: usize = 50;

fn ols_on(x: &[f64], y: &[f64], idx: &[usize]) -> Option<(f64, f64)> {
    let n = idx.len() as f64;
    let mx = idx.iter().map(|&i| x[i]).sum::<f64>() / n;
    let my = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    let sxx: f64 = idx.iter().map(|&i| (x[i] - mx) * (x[i] - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = idx.iter().map(|&i| (x[i] - mx) * (y[i] - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Indices of the h smallest squared residuals, ties broken by index.
fn best_h_subset(x: &[f64], y: &[f64], slope: f64, intercept: f64, h: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    let r2 = |i: usize| {
        let r = y[i] - slope * x[i] - intercept;
        r * r
    };
    order.sort_by(|&a, &b| r2(a).total_cmp(&r2(b)).then(a.cmp(&b)));
    order.truncate(h);
    order.sort_unstable();
    order
}

fn trimmed_objective(x: &[f64], y: &[f64], slope: f64, intercept: f64, h: usize) -> f64 {
    let mut r2: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - slope * xi - intercept;
            r * r
        })
        .collect();
    r2.sort_by(f64::total_cmp);
    r2[..h].iter().sum()
}

fn r_squared_on(x: &[f64], y: &[f64], idx: &[usize], slope: f64, intercept: f64) -> f64 {
    let n = idx.len() as f64;
    let my = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    let tss: f64 = idx.iter().map(|&i| (y[i] - my) * (y[i] - my)).sum();
    if tss == 0.0 {
        return 0.0;
    }
    let rss: f64 = idx
        .iter()
        .map(|&i| {
            let r = y[i] - slope * x[i] - intercept;
            r * r
        })
        .sum();
    1.0 - rss / tss
}

fn fit_ols(x: &[f64], y: &[f64]) -> Result<LineFit, StatsError> {
    let all: Vec<usize> = (0..x.len()).collect();
    let (slope, intercept) = ols_on(x, y, &all).ok_or(StatsError::ConstantX)?;
    Ok(LineFit { slope, intercept, r_squared: r_squared_on(x, y, &all, slope, intercept) })
}

fn fit_lts(x: &[f64], y: &[f64], h: usize, seed: u64) -> Result<LineFit, StatsError> {
    let n = x.len();
    let mut best: Option<(f64, f64, f64)> = None;
    let mut consider = |slope: f64, intercept: f64| {
        let obj = trimmed_objective(x, y, slope, intercept, h);
        if best.map_or(true, |(b, _, _)| obj < b) {
            best = Some((obj, slope, intercept));
        }
    };

    if n <= EXHAUSTIVE_LIMIT {
        // Every h-subset's own OLS fit; the true optimum is among them.
        let mut subset: Vec<usize> = (0..h).collect();
        loop {
            if let Some((s, c)) = ols_on(x, y, &subset) {
                consider(s, c);
            }
            let mut i = h;
            while i > 0 && subset[i - 1] == i - 1 + n - h {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            subset[i - 1] += 1;
            for j in i..h {
                subset[j] = subset[j - 1] + 1;
            }
        }
    } else {
        let mut rng = crate::rng::stream(seed, 0);
        for _ in 0..RANDOM_STARTS {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if x[a] == x[b] {
                continue;
            }
            let mut slope = (y[b] - y[a]) / (x[b] - x[a]);
            let mut intercept = y[a] - slope * x[a];
            let mut subset = best_h_subset(x, y, slope, intercept, h);
            for _ in 0..MAX_CONCENTRATION_STEPS {
                let Some((s, c)) = ols_on(x, y, &subset) else { break };
                slope = s;
                intercept = c;
                let next = best_h_subset(x, y, slope, intercept, h);
                if next == subset {
                    break;
                }
                subset = next;
            }
            consider(slope, intercept);
        }
    }

    let (_, slope, intercept) = best.ok_or(StatsError::ConstantX)?;
    let kept = best_h_subset(x, y, slope, intercept, h);
    Ok(LineFit { slope, intercept, r_squared: r_squared_on(x, y, &kept, slope, intercept) })
}

/// Straight-line fit of y on x.
pub fn linear_fit(x: &[f64], y: &[f64], method: FitMethod) -> Result<LineFit, StatsError> {
    assert_eq!(x.len(), y.len(), "x and y must pair up");
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints(n));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(StatsError::ConstantX);
    }
    match method {
        FitMethod::Ols => fit_ols(x, y),
        FitMethod::Lts { h, seed } => {
            let h = h.unwrap_or((3 * n + 3) / 4).clamp(3, n);
            fit_lts(x, y, h, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_line_is_recovered_by_both_methods() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        for method in [FitMethod::Ols, FitMethod::Lts { h: None, seed: 0 }] {
            let fit = linear_fit(&x, &y, method).unwrap();
            assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(fit.intercept, 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn one_gross_outlier_breaks_ols_but_not_lts() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        y[9] = 500.0;
        let ols = linear_fit(&x, &y, FitMethod::Ols).unwrap();
        assert!((ols.slope - 2.0).abs() > 1.0, "OLS should chase the outlier");
        let lts = linear_fit(&x, &y, FitMethod::Lts { h: Some(9), seed: 0 }).unwrap();
        assert_abs_diff_eq!(lts.slope, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(lts.intercept, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn random_start_search_finds_the_clean_line_past_the_exhaustive_limit() {
        // 13 points exceed the exhaustive limit, forcing the random-start
        // path. Eleven clean points with h = 10 admit a zero objective, so
        // the search must recover the clean line exactly.
        let x: Vec<f64> = (0..13).map(|i| i as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| -1.5 * v + 4.0).collect();
        y[0] = 80.0;
        y[7] = -60.0;
        let fit = linear_fit(&x, &y, FitMethod::Lts { h: Some(10), seed: 11 }).unwrap();
        assert_abs_diff_eq!(fit.slope, -1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.intercept, 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_y_gives_flat_line_with_zero_r_squared() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [5.0, 5.0, 5.0, 5.0];
        let fit = linear_fit(&x, &y, FitMethod::Ols).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn constant_x_is_rejected() {
        let err = linear_fit(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], FitMethod::Ols).unwrap_err();
        assert!(matches!(err, StatsError::ConstantX));
    }

    #[test]
    fn too_few_points_is_rejected() {
        let err = linear_fit(&[1.0, 2.0], &[1.0, 2.0], FitMethod::Ols).unwrap_err();
        assert!(matches!(err, StatsError::TooFewPoints(2)));
    }

    #[test]
    fn lts_is_deterministic_for_a_seed() {
        let mut rng = crate::rng::stream(9, 0);
        let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 2.0 + rng.gen_range(-0.1..0.1)).collect();
        let a = linear_fit(&x, &y, FitMethod::Lts { h: None, seed: 4 }).unwrap();
        let b = linear_fit(&x, &y, FitMethod::Lts { h: None, seed: 4 }).unwrap();
        assert_eq!(a.slope, b.slope);
        assert_eq!(a.intercept, b.intercept);
    }
}
