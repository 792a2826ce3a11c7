//! Cross-lingual hate speech classification toolkit: corpus preparation,
//! frozen-encoder feature caching, a trainable classification head, grid
//! training, evaluation tables and error analysis.

pub mod corpus;
pub mod digest;
pub mod encoding;
pub mod error;
pub mod error_analysis;
pub mod evaluation;
pub mod model;
pub mod runs;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
