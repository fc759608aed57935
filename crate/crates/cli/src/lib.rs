//! Pipeline orchestration for the app-recommender engine: a JSON config,
//! a manifest-cached stage runner over a work directory, and the pieces
//! the `kgep` binary wires together.

pub mod config;
pub mod manifest;
pub mod stages;
