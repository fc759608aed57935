//! Knowledge-graph-based app recommendation engine.
//!
//! The pipeline turns an app catalogue plus a user-app rating log into
//! personalized top-K recommendations:
//!
//! 1. [`dataset`] ingests and validates the raw CSV data and applies
//!    cold-start filtering.
//! 2. [`text`] and [`lda`] turn app description text into a topic model;
//!    each app is assigned its dominant content topic.
//! 3. [`kg`] assembles the attribute-rich knowledge graph: users, apps,
//!    content topics, and bucketed side information, connected by typed
//!    relations (including similarity relations between users, topics,
//!    and adjacent attribute buckets).
//! 4. [`transd`] learns translation-based embeddings of that graph with
//!    dynamic per-pair projection.
//! 5. [`propagation`] refines entity representations by user-personalized,
//!    relation-weighted neighborhood aggregation.
//! 6. [`recommender`] combines both representations and trains the final
//!    click-through scorer.
//! 7. [`eval`] holds the split/metrics harness, two baselines, and a
//!    synthetic data generator.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the precision used by the shipped pipeline.

mod binio;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kg;
pub mod lda;
pub mod propagation;
pub mod recommender;
pub mod scalar;
pub mod similarity;
pub mod text;
pub mod transd;
pub mod vecmath;

pub use config::EngineConfig;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar precision used by the shipped pipeline and all file formats.
pub type Real = f64;

/// Topic model at pipeline precision.
pub type TopicModel = lda::TopicModel<Real>;
/// Translation-embedding parameters at pipeline precision.
pub type TransDParams = transd::TransDParams<Real>;
/// Propagation-layer parameters at pipeline precision.
pub type PropagationParams = propagation::PropagationParams<Real>;
/// Full recommender checkpoint at pipeline precision.
pub type Checkpoint = recommender::Checkpoint<Real>;
