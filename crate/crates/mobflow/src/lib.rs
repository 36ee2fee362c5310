//! Turns person-level affiliation histories into region-to-region migration
//! flow networks and runs the full analysis stack on top of them:
//!
//! * **ingest**: affiliation records -> migration events -> flow tables
//!   (aggregation, normalization by population or researcher counts);
//! * **covariates**: regional indicator panels built from university rankings,
//!   procurement notices, GDP series and education indices, with deterministic
//!   gap filling;
//! * **network**: weighted directed mobility networks, HITS hub/authority
//!   scores, s-core decomposition, score partitions, edge-betweenness and
//!   map-equation community detection;
//! * **stats**: rank-based multi-aspect permutation tests with nonparametric
//!   combination, a functional Spearman permutation test, PCA, and robust
//!   line fitting;
//! * **model**: penalized cubic-spline additive models for dyadic flow and
//!   region-level mobility regressions, with random intercepts and a
//!   permutational F test for added smooth terms;
//! * **synth** / **pipeline**: a seeded synthetic-data generator and a
//!   deterministic end-to-end run that writes every artifact plus a manifest.
//!
//! Everything downstream of a seed is reproducible: the same configuration and
//! inputs produce byte-identical artifacts.

pub mod covariates;
pub mod ingest;
pub mod io;
pub mod model;
pub mod network;
pub mod pipeline;
pub mod rng;
pub mod stats;
pub mod synth;
