//! Stylometric classification of commingled texts, with a hypothesis test
//! that separates style-driven classifications from ones driven by
//! sequentially correlated properties such as theme.
//!
//! The pipeline runs `corpus` (load, normalize, segment, commingle) into
//! `features` (n-gram counts, tf-idf, Z-scores, external embeddings), then
//! `classifiers` produce label sequences which `nullmodel` scores against
//! autocovariance-matched surrogate labelings. `experiments` drives the
//! parameter grid and `report` serializes the results.

pub mod classifiers;
pub mod corpus;
pub mod error;
pub mod experiments;
pub mod features;
pub mod labels;
pub mod nullmodel;
pub mod report;
pub mod seed;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
pub use labels::LabelSequence;
