//! Nearest-neighbour anomaly scores, cross-modal score fusion and inference.

mod fusion;
mod infer;
mod phi;
mod postprocess;

pub use fusion::{correction_factor, fit_correction, fit_one_class, CorrectionRule, OneClass, OneClassConfig};
pub use infer::{AnomalyResult, Banks, FusionModel, InferenceMode, ModalityScores, ResultSummary, Scorer};
pub use phi::{phi, phi_psi, psi, Psi};
pub use postprocess::{gaussian_blur, upsample_bilinear, PostprocessConfig};
