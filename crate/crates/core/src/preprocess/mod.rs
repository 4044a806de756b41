//! Background-plane removal and point-cloud-to-grid plumbing.

mod grouping;
pub mod io;
mod pool;
mod ransac;

pub use grouping::{
    farthest_point_sample, farthest_point_sample_from, idw_interpolate, knn_group, seeded_start,
    GroupingConfig,
};
pub use pool::{pool_align, PoolMode};
pub use ransac::{fit_background_plane, remove_background, Plane, RansacConfig, BACKGROUND_THRESHOLD};

use crate::data::{RgbImage, StructuredPointCloud};
use crate::error::Result;

/// Per-sample preprocessing: fit the background plane, then zero every pixel
/// within `cfg.inlier_threshold` of it in both modalities.
pub fn preprocess_pair(
    pc: &StructuredPointCloud,
    rgb: &RgbImage,
    cfg: &RansacConfig,
) -> Result<(Plane, StructuredPointCloud, RgbImage)> {
    let plane = fit_background_plane(pc, cfg)?;
    let (pc, rgb) = remove_background(pc, rgb, &plane, cfg.inlier_threshold)?;
    Ok((plane, pc, rgb))
}
