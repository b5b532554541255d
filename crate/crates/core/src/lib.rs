//! Quantifies qualitative spatial relations ("North", "Near", "NextTo", ...)
//! as bivariate probability distributions over distance and orientation.
//!
//! The pipeline: annotated observation tuples yield spatial feature vectors
//! ([`geo`]); a kernel density estimate augments the small observed sets
//! with semi-synthetic samples ([`kde`]); greedy Expectation-Maximization
//! grows a Gaussian mixture per relation ([`gmm`], [`greedy`]); trained
//! relations are compared by Monte Carlo Kullback-Leibler divergence
//! ([`divergence`]) and turned into grid-based positional-probability maps
//! and fused location estimates for unknown points ([`grid`]). File formats
//! live in [`data_io`].
//!
//! Everything randomized takes an explicit seed and is reproducible
//! bit-for-bit; internal parallelism never changes results.

pub mod data_io;
pub mod divergence;
pub mod error;
pub mod geo;
pub mod gmm;
pub mod greedy;
pub mod grid;
pub mod kde;
mod seeding;

pub use divergence::{kl_divergence, kl_symmetric, KlEstimate};
pub use error::{Error, Result};
pub use geo::{
    extract_feature, feature_to_point, project, CartesianPoint, GeoPoint, ProjectionConfig,
    ProjectionMode, SpatialFeature,
};
pub use gmm::{
    em_fit, gaussian_pdf, log_likelihood, CovarianceMode, EmConfig, GaussianComponent, GmmModel,
    SymMat2,
};
pub use greedy::{
    fit_greedy, fit_one_component, propose_candidates, CandidateComponent, GreedyConfig,
    GreedyStep, GreedyTrace,
};
pub use grid::{
    infer_location, relation_heatmap, sweep_components, GridSpec, Observation, ProbabilityGrid,
    SweepRow,
};
pub use kde::{rule_of_thumb_bandwidth, KdeModel};
