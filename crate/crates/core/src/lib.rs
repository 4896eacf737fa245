//! Span-ranking coreference resolution with four higher-order inference
//! methods, plus the evaluation and analysis tools used to compare them.

pub mod analysis;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod hoi;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ranker;
pub mod trainer;

pub use error::{Error, Result};
