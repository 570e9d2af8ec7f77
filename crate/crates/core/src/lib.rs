//! Two-view match verification for precomputed local features.
pub mod cli;
pub mod config;
pub mod evalharness;
pub mod featureio;
pub mod fusion;
pub mod geometry;
pub mod matching;
pub mod model;
pub mod pipeline;
pub mod synthetic;
