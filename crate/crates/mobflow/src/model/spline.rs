//! Clamped cubic B-spline bases with an exact integrated-curvature penalty.
//!
//! Breakpoints are placed at quantiles of the distinct covariate values, so
//! repeated observations do not pile knots onto a single point. The penalty
//! integrates products of second derivatives with a two-point Gauss-Legendre
//! rule per knot interval, which is exact because the second derivative of a
//! cubic B-spline is piecewise linear.

use nalgebra::DMatrix;

use super::ModelError;

/// Cubic splines: order four, degree three.
const ORDER: usize = 4;

#[derive(Debug, Clone)]
pub struct SplineBasis {
    /// Full clamped knot vector: the first and last breakpoints repeated
    /// four times, interior breakpoints once.
    knots: Vec<f64>,
    /// Strictly increasing breakpoints.
    breaks: Vec<f64>,
}

impl SplineBasis {
    /// Builds a basis whose breakpoints sit at evenly spaced quantiles of the
    /// distinct values. `term` names the smooth in error messages.
    pub fn from_quantiles(term: &str, values: &[f64], n_knots: usize) -> Result<Self, ModelError> {
        if n_knots < 2 {
            return Err(ModelError::InvalidSmooth(format!(
                "term '{term}' needs at least 2 knots, got {n_knots}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(format!("values of term '{term}'")));
        }
        let mut distinct = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 4 {
            return Err(ModelError::TooFewDistinct {
                term: term.to_string(),
                got: distinct.len(),
            });
        }
        let k = n_knots.min(distinct.len());
        let mut breaks: Vec<f64> = (0..k)
            .map(|j| crate::stats::quantile_type7(&distinct, j as f64 / (k - 1) as f64))
            .collect();
        // Quantiles of distinct values at steps of at least one order
        // statistic are strictly increasing; dedup is a guard only.
        breaks.dedup();
        if breaks.len() < 2 {
            return Err(ModelError::InvalidSmooth(format!(
                "term '{term}' has a degenerate breakpoint sequence"
            )));
        }
        let mut knots = Vec::with_capacity(breaks.len() + 6);
        for _ in 0..ORDER - 1 {
            knots.push(breaks[0]);
        }
        knots.extend_from_slice(&breaks);
        for _ in 0..ORDER - 1 {
            knots.push(*breaks.last().expect("breaks is non-empty"));
        }
        Ok(SplineBasis { knots, breaks })
    }

    /// Number of basis functions: breakpoints plus two for a cubic basis.
    pub fn n_basis(&self) -> usize {
        self.breaks.len() + 2
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breaks[0], *self.breaks.last().expect("non-empty"))
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    /// Index of the knot interval containing `x` among the breakpoints,
    /// clamped so boundary and exterior points map to the nearest interval.
    fn interval(&self, x: f64) -> usize {
        let idx = self.breaks.partition_point(|v| *v <= x);
        idx.saturating_sub(1).min(self.breaks.len() - 2)
    }

    fn clamp(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain();
        x.clamp(lo, hi)
    }

    /// Values of all basis functions at `x`, with `x` clamped to the domain.
    pub fn eval_row(&self, x: f64) -> Vec<f64> {
        let x = self.clamp(x);
        let span = self.interval(x) + ORDER - 1;
        let vals = basis_funs(&self.knots, ORDER, span, x);
        let mut out = vec![0.0; self.n_basis()];
        for (r, v) in vals.into_iter().enumerate() {
            out[span - (ORDER - 1) + r] = v;
        }
        out
    }

    /// Second derivatives of all basis functions at `x`. The second
    /// derivative of an order-four B-spline expands over order-two splines on
    /// the same knot vector with knot-difference coefficients.
    pub fn eval_d2_row(&self, x: f64) -> Vec<f64> {
        let nb = self.n_basis();
        let t = &self.knots;
        let x = self.clamp(x);
        let span = self.interval(x) + ORDER - 1;
        let vals2 = basis_funs(t, 2, span, x);
        let mut b2 = vec![0.0; nb + 2];
        b2[span - 1] = vals2[0];
        b2[span] = vals2[1];
        let ratio = |num: f64, lo: f64, hi: f64| if hi > lo { num / (hi - lo) } else { 0.0 };
        let mut out = vec![0.0; nb];
        for i in 0..nb {
            let a1 = ratio(3.0, t[i], t[i + 3]);
            let a2 = ratio(3.0, t[i + 1], t[i + 4]);
            let c1 = ratio(2.0, t[i], t[i + 2]);
            let c2 = ratio(2.0, t[i + 1], t[i + 3]);
            let c3 = ratio(2.0, t[i + 2], t[i + 4]);
            out[i] = a1 * (c1 * b2[i] - c2 * b2[i + 1]) - a2 * (c2 * b2[i + 1] - c3 * b2[i + 2]);
        }
        out
    }

    /// Design matrix with one row per value.
    pub fn design(&self, xs: &[f64]) -> DMatrix<f64> {
        let nb = self.n_basis();
        let mut m = DMatrix::zeros(xs.len(), nb);
        for (r, &x) in xs.iter().enumerate() {
            for (c, v) in self.eval_row(x).into_iter().enumerate() {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Exact integrated-curvature penalty: entry (a, b) holds the integral of
    /// the product of second derivatives of basis functions a and b over the
    /// domain.
    pub fn penalty(&self) -> DMatrix<f64> {
        let nb = self.n_basis();
        let mut p = DMatrix::zeros(nb, nb);
        let gauss_offset = 1.0 / 3.0_f64.sqrt();
        for w in self.breaks.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let half = (hi - lo) / 2.0;
            let mid = (lo + hi) / 2.0;
            for &xg in &[mid - half * gauss_offset, mid + half * gauss_offset] {
                let d2 = self.eval_d2_row(xg);
                for a in 0..nb {
                    if d2[a] == 0.0 {
                        continue;
                    }
                    for b in a..nb {
                        p[(a, b)] += half * d2[a] * d2[b];
                    }
                }
            }
        }
        for a in 0..nb {
            for b in 0..a {
                p[(a, b)] = p[(b, a)];
            }
        }
        p
    }

    /// Penalty rescaled to unit Frobenius norm, so smoothing parameters mean
    /// the same thing regardless of the covariate's measurement scale.
    pub fn scaled_penalty(&self) -> DMatrix<f64> {
        let p = self.penalty();
        let norm = p.norm();
        if norm > 0.0 {
            p / norm
        } else {
            p
        }
    }

    /// Greville abscissae; coefficients equal to these reproduce the
    /// identity function.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.n_basis())
            .map(|i| (self.knots[i + 1] + self.knots[i + 2] + self.knots[i + 3]) / 3.0)
            .collect()
    }
}

/// Values of the `order` basis functions that are nonzero on the knot span
/// starting at `span`, by the triangular de Boor recursion. The result holds
/// functions `span - order + 1 ..= span`.
fn basis_funs(knots: &[f64], order: usize, span: usize, x: f64) -> Vec<f64> {
    let mut vals = vec![0.0; order];
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    vals[0] = 1.0;
    for j in 1..order {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = vals[r] / (right[r + 1] + left[j - r]);
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }
    vals
}

/// Smooths one series on its own grid by penalized least squares with the
/// curvature penalty rescaled to unit Frobenius norm. Returns fitted values
/// at the input grid points.
pub fn smooth_series(
    grid: &[f64],
    values: &[f64],
    lambda: f64,
    n_knots: usize,
) -> Result<Vec<f64>, ModelError> {
    if grid.len() != values.len() {
        return Err(ModelError::SizeMismatch {
            design: grid.len(),
            response: values.len(),
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(ModelError::InvalidSmooth(format!(
            "smoothing parameter must be finite and non-negative, got {lambda}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite("series values".to_string()));
    }
    let basis = SplineBasis::from_quantiles("series", grid, n_knots)?;
    let b = basis.design(grid);
    let y = nalgebra::DVector::from_column_slice(values);
    // Rotating the columns into the penalty eigenbasis makes the penalty
    // diagonal, so a large smoothing parameter only rescales diagonal entries
    // and cannot round away the data half of the normal equations.
    let eig = basis.scaled_penalty().symmetric_eigen();
    let rotated = b * &eig.eigenvectors;
    let floor = 1e-12 * eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let mut a = rotated.transpose() * &rotated;
    for i in 0..a.nrows() {
        // Eigenvalues at rounding level are true null directions; keeping
        // them would ridge the unpenalized part in proportion to lambda.
        if eig.eigenvalues[i] > floor {
            a[(i, i)] += lambda * eig.eigenvalues[i];
        }
    }
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| ModelError::InvalidSmooth("smoothing system is singular".to_string()))?;
    let rhs = rotated.transpose() * &y;
    let mut coef = chol.solve(&rhs);
    // Two steps of iterative refinement keep the solve accurate when a large
    // smoothing parameter makes the system badly conditioned.
    for _ in 0..2 {
        let residual = &rhs - &a * &coef;
        coef += chol.solve(&residual);
    }
    Ok((rotated * coef).iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample_basis() -> SplineBasis {
        let xs: Vec<f64> = (0..25).map(|i| (i as f64).sqrt() * 1.7 - 3.0).collect();
        SplineBasis::from_quantiles("x", &xs, 8).expect("basis builds")
    }

    #[test]
    fn partition_of_unity_holds_across_the_domain() {
        let basis = sample_basis();
        let (lo, hi) = basis.domain();
        for i in 0..=200 {
            let x = lo + (hi - lo) * i as f64 / 200.0;
            let sum: f64 = basis.eval_row(x).iter().sum();
            assert!(
                (sum - 1.0).abs() < 1e-12,
                "basis values at {x} sum to {sum}, not 1"
            );
        }
    }

    #[test]
    fn basis_reproduces_a_global_cubic_exactly() {
        let basis = sample_basis();
        let (lo, hi) = basis.domain();
        let cubic = |x: f64| 0.5 * x * x * x - 2.0 * x * x + x - 1.0;
        let xs: Vec<f64> = (0..40).map(|i| lo + (hi - lo) * i as f64 / 39.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| cubic(x)).collect();
        let b = basis.design(&xs);
        let y = nalgebra::DVector::from_column_slice(&ys);
        let coef = (b.transpose() * &b)
            .cholesky()
            .expect("normal equations are positive definite")
            .solve(&(b.transpose() * &y));
        let fitted = b * coef;
        for (f, t) in fitted.iter().zip(&ys) {
            assert!(
                (f - t).abs() < 1e-9,
                "cubic not reproduced: fitted {f}, true {t}"
            );
        }
    }

    #[test]
    fn greville_coefficients_reproduce_the_identity() {
        let basis = sample_basis();
        let (lo, hi) = basis.domain();
        let greville = basis.greville();
        for i in 0..=50 {
            let x = lo + (hi - lo) * i as f64 / 50.0;
            let val: f64 = basis
                .eval_row(x)
                .iter()
                .zip(&greville)
                .map(|(b, g)| b * g)
                .sum();
            assert!(
                (val - x).abs() < 1e-10,
                "identity not reproduced at {x}: got {val}"
            );
        }
    }

    #[test]
    fn penalty_vanishes_exactly_on_constant_and_linear_coefficients() {
        let basis = sample_basis();
        let p = basis.penalty();
        let norm = p.norm();
        let ones = nalgebra::DVector::from_element(basis.n_basis(), 1.0);
        let lin = nalgebra::DVector::from_column_slice(&basis.greville());
        let q_const = (ones.transpose() * &p * &ones)[(0, 0)];
        let q_lin = (lin.transpose() * &p * &lin)[(0, 0)];
        assert!(
            q_const.abs() < 1e-10 * norm,
            "constant function should carry no curvature, got {q_const}"
        );
        assert!(
            q_lin.abs() < 1e-9 * norm,
            "linear function should carry no curvature, got {q_lin}"
        );
        let mut bumpy = nalgebra::DVector::zeros(basis.n_basis());
        for i in 0..basis.n_basis() {
            bumpy[i] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let q_bumpy = (bumpy.transpose() * &p * &bumpy)[(0, 0)];
        assert!(
            q_bumpy > 1e-6 * norm,
            "alternating coefficients should carry curvature, got {q_bumpy}"
        );
    }

    #[test]
    fn penalty_matches_the_exact_curvature_of_a_quadratic() {
        let basis = sample_basis();
        let t = basis.knots.clone();
        // Marsden's identity gives the coefficients representing x^2.
        let coef: Vec<f64> = (0..basis.n_basis())
            .map(|i| (t[i + 1] * t[i + 2] + t[i + 1] * t[i + 3] + t[i + 2] * t[i + 3]) / 3.0)
            .collect();
        let c = nalgebra::DVector::from_column_slice(&coef);
        let q = (c.transpose() * basis.penalty() * &c)[(0, 0)];
        let (lo, hi) = basis.domain();
        // The second derivative of x^2 is 2, so the integral of its square
        // over the domain is 4 times the domain length.
        assert_relative_eq!(q, 4.0 * (hi - lo), max_relative = 1e-9);
    }

    #[test]
    fn penalty_is_symmetric_and_positive_semidefinite() {
        let basis = sample_basis();
        let p = basis.penalty();
        assert_eq!(p, p.transpose(), "penalty must be exactly symmetric");
        let eig = p.symmetric_eigen();
        for ev in eig.eigenvalues.iter() {
            assert!(*ev > -1e-9, "penalty eigenvalue {ev} is negative");
        }
    }

    #[test]
    fn evaluation_clamps_outside_the_domain() {
        let basis = sample_basis();
        let (lo, hi) = basis.domain();
        assert_eq!(basis.eval_row(lo - 5.0), basis.eval_row(lo));
        assert_eq!(basis.eval_row(hi + 5.0), basis.eval_row(hi));
    }

    #[test]
    fn too_few_distinct_values_is_an_error() {
        let err = SplineBasis::from_quantiles("x", &[1.0, 1.0, 2.0, 3.0], 10).unwrap_err();
        match err {
            ModelError::TooFewDistinct { term, got } => {
                assert_eq!(term, "x");
                assert_eq!(got, 3);
            }
            other => panic!("expected TooFewDistinct, got {other:?}"),
        }
    }

    #[test]
    fn heavy_smoothing_collapses_to_the_least_squares_line() {
        let grid: Vec<f64> = (0..12).map(f64::from).collect();
        let values: Vec<f64> = grid.iter().map(|t| 2.0 * t - 3.0 + (t * 1.3).sin()).collect();
        let fitted = smooth_series(&grid, &values, 1e12, 10).expect("smooth succeeds");
        let (slope, intercept) = {
            let n = grid.len() as f64;
            let mx = grid.iter().sum::<f64>() / n;
            let my = values.iter().sum::<f64>() / n;
            let sxy: f64 = grid.iter().zip(&values).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = grid.iter().map(|x| (x - mx) * (x - mx)).sum();
            (sxy / sxx, my - sxy / sxx * mx)
        };
        for (t, f) in grid.iter().zip(&fitted) {
            let line = slope * t + intercept;
            assert!(
                (f - line).abs() < 1e-6,
                "heavy smoothing should give the least squares line: got {f}, line {line}"
            );
        }
    }

    #[test]
    fn light_smoothing_tracks_a_smooth_signal() {
        let grid: Vec<f64> = (0..20).map(f64::from).collect();
        let values: Vec<f64> = grid.iter().map(|t| (t / 3.0).sin()).collect();
        let fitted = smooth_series(&grid, &values, 1e-4, 10).expect("smooth succeeds");
        for (v, f) in values.iter().zip(&fitted) {
            assert!(
                (v - f).abs() < 0.05,
                "light smoothing should track the signal: value {v}, fitted {f}"
            );
        }
    }

    #[test]
    fn smooth_series_rejects_mismatched_lengths() {
        let err = smooth_series(&[1.0, 2.0, 3.0], &[1.0], 1.0, 5).unwrap_err();
        assert!(matches!(err, ModelError::SizeMismatch { .. }));
    }
}
