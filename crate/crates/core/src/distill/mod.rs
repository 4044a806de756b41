//! Cross-modal distillation networks: dense layers, backpropagation, Adam
//! with linear warm-up, and hallucination of a missing modality.

mod adam;
mod checkpoint;
mod hallucinate;
mod net;
mod pairs;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use hallucinate::{hallucinate, hallucinate_features, hallucinate_from_raw, hallucinate_raw};
pub use net::{net_forward, net_gradient, Activation, DenseNet, Gradients, Layer, Route};
pub use pairs::{build_pairs, TrainingPairs};
pub use train::{train_distiller, train_net, train_on_pairs, warmup_lr, Checkpoint, TrainConfig, TrainOutcome};
