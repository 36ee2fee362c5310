//! Imputes a missing education share from a country-level attainment series
//! by smoothing the observed (attainment, education) pairs.

use super::pgam::{fit_pgam, FitOptions, GamFit, GamSpec, Lambda, TermSpec};
use super::ModelError;

/// Minimum number of observed pairs before the relation is trusted.
const MIN_PAIRS: usize = 20;

pub struct EduImputer {
    fit: GamFit,
    domain: (f64, f64),
    intercept: f64,
}

impl std::fmt::Debug for EduImputer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EduImputer")
            .field("domain", &self.domain)
            .field("r_squared", &self.fit.r_squared)
            .finish_non_exhaustive()
    }
}

/// Fits a smooth of education share on attainment over the observed pairs.
pub fn fit_edu_imputer(
    attainment: &[f64],
    edu: &[f64],
    opts: &FitOptions,
) -> Result<EduImputer, ModelError> {
    if attainment.len() != edu.len() {
        return Err(ModelError::SizeMismatch {
            design: attainment.len(),
            response: edu.len(),
        });
    }
    if attainment.len() < MIN_PAIRS {
        return Err(ModelError::TooFewPairs(attainment.len()));
    }
    let spec = GamSpec {
        terms: vec![
            TermSpec::Intercept,
            TermSpec::Smooth {
                name: "s(attainment)".to_string(),
                values: attainment.to_vec(),
                n_knots: 10,
                mask: None,
                drop_linear: false,
                lambda: Lambda::Gcv,
            },
        ],
    };
    let fit = fit_pgam(&spec, edu, opts)?;
    let lo = attainment.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = attainment.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let intercept = fit.coefficients[0];
    Ok(EduImputer {
        fit,
        domain: (lo, hi),
        intercept,
    })
}

impl EduImputer {
    /// Predicted education share at an attainment value. The input is
    /// clamped to the observed attainment range and the output to the unit
    /// interval, since the response is a share.
    pub fn predict(&self, attainment: f64) -> f64 {
        let x = attainment.clamp(self.domain.0, self.domain.1);
        let curve = self
            .fit
            .term_curve("s(attainment)", &[x])
            .expect("the smooth is part of the fitted model");
        (self.intercept + curve[0].fit).clamp(0.0, 1.0)
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn r_squared(&self) -> f64 {
        self.fit.r_squared
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_pairs_are_rejected() {
        let x: Vec<f64> = (0..19).map(f64::from).collect();
        let err = fit_edu_imputer(&x, &x, &FitOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::TooFewPairs(19)));
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let err =
            fit_edu_imputer(&[1.0, 2.0], &[0.5], &FitOptions::default()).unwrap_err();
        assert!(matches!(err, ModelError::SizeMismatch { .. }));
    }

    #[test]
    fn smooth_relation_is_recovered() {
        let attainment: Vec<f64> = (0..40).map(|i| 10.0 + i as f64).collect();
        let edu: Vec<f64> = attainment.iter().map(|&a| 0.1 + 0.012 * a).collect();
        let imputer =
            fit_edu_imputer(&attainment, &edu, &FitOptions::default()).expect("fit succeeds");
        for (&a, &e) in attainment.iter().zip(&edu) {
            let p = imputer.predict(a);
            assert!(
                (p - e).abs() < 0.01,
                "prediction at {a} should be near {e}, got {p}"
            );
        }
        assert!(imputer.r_squared() > 0.99);
    }

    #[test]
    fn predictions_stay_inside_the_unit_interval() {
        let attainment: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let edu: Vec<f64> = attainment.iter().map(|&a| 0.5 + 0.025 * a).collect();
        let imputer =
            fit_edu_imputer(&attainment, &edu, &FitOptions::default()).expect("fit succeeds");
        assert_eq!(imputer.predict(29.0), 1.0, "shares cannot exceed one");
        assert!(imputer.predict(0.0) >= 0.0);
    }

    #[test]
    fn out_of_range_attainment_is_clamped_to_the_observed_domain() {
        let attainment: Vec<f64> = (0..25).map(|i| 20.0 + i as f64).collect();
        let edu: Vec<f64> = attainment.iter().map(|&a| 0.3 + 0.005 * a).collect();
        let imputer =
            fit_edu_imputer(&attainment, &edu, &FitOptions::default()).expect("fit succeeds");
        assert_eq!(imputer.predict(-100.0), imputer.predict(20.0));
        assert_eq!(imputer.predict(1000.0), imputer.predict(44.0));
        assert_eq!(imputer.domain(), (20.0, 44.0));
    }
}
