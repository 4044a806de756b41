//! Memory-bank industrial anomaly detection with cross-modal distillation.
//!
//! The crate trains on paired RGB / point-cloud data and infers with only one
//! of them: a distillation network hallucinates the missing modality's
//! features, both feature maps are scored against coreset memory banks, and
//! the two scores are fused by one-class linear decision functions.

pub mod bank;
pub mod data;
pub mod distill;
pub mod error;
pub mod extractor;
mod greedy;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod score;

pub use error::{Error, Result};
