//! Partisan polarization index over labeled embedding cohorts.

pub mod affiliation;
pub mod analytics;
pub mod approx;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod exact_sum;
pub mod geo;
pub mod metric;
pub mod mlp;
pub mod rng;
pub mod synth;
pub mod topics;

pub use approx::{poli_approx, poli_approx_with, sample_cohort, ApproxConfig, ApproxRound, ApproxTrace};
pub use embedding::{pairwise_distance, EmbeddingVector, LabeledCohort};
pub use error::{Error, Result};
pub use metric::{
    extremal_sums, poli_exact, poli_exact_with, within_group_sum, ExactOptions, PoliResult, StatsScope,
};
