//! Coreset memory banks: distance metrics, sparse random projection,
//! greedy max-min selection and exact nearest-neighbour queries.

mod coreset;
mod memory;
mod metric;
mod projection;

pub use coreset::{coreset_select, coreset_select_from, coreset_size, PatchSet, PatchSource};
pub use memory::{
    build_bank, collect_patches, nn_query, BankConfig, BankManifest, MemoryBank, ProjectionConfig,
};
pub use metric::{distance, DistanceMetric};
pub use projection::{make_projection, ProjectionMatrix, ProjectionSpec};
