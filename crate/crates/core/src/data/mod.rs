//! Core data types, the `CMFT` tensor format, dataset layout and synthetic data.

pub mod cmft;
pub mod layout;
pub mod synth;
mod types;

pub use cmft::{read_feature_tensor, write_feature_tensor};
pub use synth::{generate_synthetic_dataset, generate_synthetic_raw_dataset, RawSynthConfig, SynthConfig};
pub use types::*;
