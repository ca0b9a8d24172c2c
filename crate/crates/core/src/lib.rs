//! Entailment generation from premises and image features.
//!
//! The crate trains GRU encoder-decoders that generate a hypothesis entailed by
//! a premise sentence, an image feature vector, or both, and evaluates them
//! against groups of reference hypotheses.

pub mod analysis;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod evalharness;
pub mod metrics;
pub mod models;
pub mod numcore;
pub mod par;

pub use error::{Error, Result};
