//! Penalized additive models and the gravity/mobility model family.
//!
//! The engine fits sums of cubic-spline smooths, linear terms, fixed factor
//! intercepts, and ridge-penalized random intercepts by penalized least
//! squares, selecting smoothing parameters by generalized cross-validation.
//! On top of it sit the dyadic flow models, the region-year mobility models,
//! the permutational F-test for added smooth terms, and the
//! attainment-based education imputer.

mod edu;
pub mod families;
mod geo;
mod gravity;
mod pgam;
pub mod spline;

pub use edu::{fit_edu_imputer, EduImputer};
pub use families::LanguageFamilies;
pub use geo::haversine_km;
pub use gravity::{
    build_dyad_frame, build_mobility_frame, fit_mobility_model, fit_network_model,
    mobility_model_spec, mobility_response, network_model_spec, network_response, DyadFrame,
    DyadRow, MobilityFrame, MobilityResponse, MobilityRow, MobilityVariant, NetworkVariant,
    INDICATOR_KEYS,
};
pub use pgam::PermFResult;
pub use pgam::{
    fit_pgam, perm_f_test, CurvePoint, FitOptions, GamFit, GamSpec, Lambda, TermReport,
    TermSpec,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid coordinate: latitude {lat}, longitude {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("smooth term '{term}' needs at least 4 distinct values, got {got}")]
    TooFewDistinct { term: String, got: usize },
    #[error("design is rank deficient; confounded terms: {}", terms.join(", "))]
    RankDeficient { terms: Vec<String> },
    #[error("extended design does not nest the null design: {0}")]
    NotNested(String),
    #[error("at least one permutation is required")]
    NoPermutations,
    #[error("missing covariate {indicator} for {region} in {year}")]
    MissingCovariate { region: String, year: i32, indicator: String },
    #[error("no coordinates recorded for region {0}")]
    MissingCoordinates(String),
    #[error("regions {a} and {b} have coincident centroids; log-distance is undefined")]
    DegenerateDistance { a: String, b: String },
    #[error("frame must cover at least 2 years, got {0}")]
    TooFewYears(usize),
    #[error("unsuitable flow table: {0}")]
    BadFlowTable(String),
    #[error("need at least 20 paired observations, got {0}")]
    TooFewPairs(usize),
    #[error("design has {design} rows but the response has {response}")]
    SizeMismatch { design: usize, response: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unknown term '{0}'")]
    UnknownTerm(String),
    #[error("invalid smoothing setup: {0}")]
    InvalidSmooth(String),
}
