//! Feature extractors for both modalities.
//!
//! A *precomputed* extractor only loads `CMFT` files written by an external
//! exporter; it never fabricates values. A *synthetic* extractor is a fixed,
//! seeded random linear map followed by `tanh`, with no positional signal, so
//! that end-to-end runs need no pretrained networks.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::cmft::load_feature_map;
use crate::data::{FeatureMap, Modality, RgbImage, Sample, StructuredPointCloud, FEATURE_DIM, GRID_SIZE};
use crate::error::{Error, Result};
use crate::preprocess::{farthest_point_sample, idw_interpolate, knn_group, pool_align, GroupingConfig, PoolMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExtractorKind {
    Precomputed { feature_root: PathBuf },
    Synthetic {
        seed: u64,
        /// Multiplier applied to point-cloud statistics (meters) before the
        /// random map; 100 reads them in centimeters.
        #[serde(default = "default_gain")]
        input_gain: f64,
    },
}

fn default_gain() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub modality: Modality,
    #[serde(flatten)]
    pub kind: ExtractorKind,
    pub out_rows: usize,
    pub out_cols: usize,
    pub out_dim: usize,
}

impl ExtractorSpec {
    pub fn synthetic(modality: Modality, seed: u64) -> Self {
        Self {
            modality,
            kind: ExtractorKind::Synthetic {
                seed,
                input_gain: default_gain(),
            },
            out_rows: GRID_SIZE,
            out_cols: GRID_SIZE,
            out_dim: FEATURE_DIM,
        }
    }

    pub fn precomputed(modality: Modality, feature_root: impl Into<PathBuf>) -> Self {
        Self {
            modality,
            kind: ExtractorKind::Precomputed {
                feature_root: feature_root.into(),
            },
            out_rows: GRID_SIZE,
            out_cols: GRID_SIZE,
            out_dim: FEATURE_DIM,
        }
    }

    pub fn with_shape(mut self, rows: usize, cols: usize, dim: usize) -> Self {
        self.out_rows = rows;
        self.out_cols = cols;
        self.out_dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_rows == 0 || self.out_cols == 0 || self.out_dim == 0 {
            return Err(Error::Config("extractor output shape must be non-zero".into()));
        }
        Ok(())
    }

    fn expect_modality(&self, modality: Modality) -> Result<()> {
        if self.modality != modality {
            return Err(Error::Usage(format!(
                "{} extractor used for {modality} input",
                self.modality
            )));
        }
        Ok(())
    }

    fn check_shape(&self, map: &FeatureMap) -> Result<()> {
        let want = (self.out_rows, self.out_cols, self.out_dim);
        if map.shape() != want {
            return Err(Error::Shape(format!(
                "precomputed {} features have shape {:?}, expected {want:?}",
                self.modality,
                map.shape()
            )));
        }
        Ok(())
    }
}

/// Location of a precomputed feature file: `<root>/feat/<modality>/<id>.cmft`.
pub fn feature_path(root: &Path, modality: Modality, sample_id: &str) -> PathBuf {
    root.join("feat").join(modality.as_str()).join(format!("{sample_id}.cmft"))
}

fn load_precomputed(root: &Path, sub: &str, sample_id: &str) -> Result<FeatureMap> {
    let path = root.join("feat").join(sub).join(format!("{sample_id}.cmft"));
    if !path.is_file() {
        return Err(Error::Lookup(path));
    }
    load_feature_map(&path)
}

/// Seeded `in_dim x out_dim` Gaussian matrix scaled by `1/sqrt(in_dim)`.
fn random_map(seed: u64, stream: u64, in_dim: usize, out_dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let scale = 1.0 / (in_dim as f64).sqrt();
    (0..in_dim * out_dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .map(|v: f64| v * scale)
        .collect()
}

fn project_tanh(input: &[f64], weights: &[f64], out: &mut [f32]) {
    let out_dim = out.len();
    let mut acc = vec![0.0f64; out_dim];
    for (i, x) in input.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        let row = &weights[i * out_dim..(i + 1) * out_dim];
        for (a, w) in acc.iter_mut().zip(row) {
            *a += x * w;
        }
    }
    for (o, a) in out.iter_mut().zip(acc) {
        *o = a.tanh() as f32;
    }
}

const RGB_STREAM: u64 = 1;
const PC_STREAM: u64 = 2;
const PC_STATS: usize = 10;

/// RGB feature map of `image`.
pub fn extract_rgb(spec: &ExtractorSpec, image: &RgbImage, sample_id: &str) -> Result<FeatureMap> {
    spec.expect_modality(Modality::Rgb)?;
    match &spec.kind {
        ExtractorKind::Precomputed { feature_root } => {
            let map = load_precomputed(feature_root, Modality::Rgb.as_str(), sample_id)?;
            spec.check_shape(&map)?;
            Ok(map)
        }
        ExtractorKind::Synthetic { seed, .. } => {
            if image.height % spec.out_rows != 0 || image.width % spec.out_cols != 0 {
                return Err(Error::Shape(format!(
                    "image {}x{} does not tile into a {}x{} grid",
                    image.height, image.width, spec.out_rows, spec.out_cols
                )));
            }
            let ph = image.height / spec.out_rows;
            let pw = image.width / spec.out_cols;
            let in_dim = ph * pw * 3;
            let weights = random_map(*seed, RGB_STREAM, in_dim, spec.out_dim);
            let mut map = FeatureMap::zeros(spec.out_rows, spec.out_cols, spec.out_dim);
            let mut patch = vec![0.0f64; in_dim];
            for r in 0..spec.out_rows {
                for c in 0..spec.out_cols {
                    patchify(image, r, c, ph, pw, &mut patch);
                    project_tanh(&patch, &weights, map.cell_mut(r, c));
                }
            }
            Ok(map)
        }
    }
}

/// Flattens the `ph x pw x 3` pixel block of cell `(r, c)`.
pub(crate) fn patchify(grid: &crate::data::PixelGrid, r: usize, c: usize, ph: usize, pw: usize, out: &mut [f64]) {
    let mut k = 0;
    for y in r * ph..(r + 1) * ph {
        for x in c * pw..(c + 1) * pw {
            for v in grid.pixel(y, x) {
                out[k] = v as f64;
                k += 1;
            }
        }
    }
}

/// Translation-invariant shape statistics of one point group.
fn group_statistics(points: &[[f64; 3]], group: &[usize]) -> [f64; PC_STATS] {
    let n = group.len() as f64;
    let mut mean = [0.0; 3];
    for &i in group {
        for k in 0..3 {
            mean[k] += points[i][k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = [0.0; 6];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut radius = 0.0;
    for &i in group {
        let d = [points[i][0] - mean[0], points[i][1] - mean[1], points[i][2] - mean[2]];
        cov[0] += d[0] * d[0];
        cov[1] += d[1] * d[1];
        cov[2] += d[2] * d[2];
        cov[3] += d[0] * d[1];
        cov[4] += d[0] * d[2];
        cov[5] += d[1] * d[2];
        radius += (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        for k in 0..3 {
            lo[k] = lo[k].min(d[k]);
            hi[k] = hi[k].max(d[k]);
        }
    }
    let mut stats = [0.0; PC_STATS];
    stats[0] = radius / n;
    for k in 0..3 {
        stats[1 + k] = hi[k] - lo[k];
    }
    for k in 0..6 {
        let v = cov[k] / n;
        stats[4 + k] = v.signum() * v.abs().sqrt();
    }
    stats
}

/// Per-group embeddings as an `n_groups x 1 x out_dim` map.
pub fn extract_pc(
    spec: &ExtractorSpec,
    points: &[[f64; 3]],
    groups: &[Vec<usize>],
    sample_id: &str,
) -> Result<FeatureMap> {
    spec.expect_modality(Modality::Pc)?;
    match &spec.kind {
        ExtractorKind::Precomputed { feature_root } => {
            let map = load_precomputed(feature_root, "pc_groups", sample_id)?;
            if map.cols() != 1 || map.dim() != spec.out_dim || map.rows() != groups.len() {
                return Err(Error::Shape(format!(
                    "precomputed group embeddings {:?} do not match {} groups of dim {}",
                    map.shape(),
                    groups.len(),
                    spec.out_dim
                )));
            }
            Ok(map)
        }
        ExtractorKind::Synthetic { seed, input_gain } => {
            let weights = random_map(*seed, PC_STREAM, PC_STATS, spec.out_dim);
            let mut out = FeatureMap::zeros(groups.len(), 1, spec.out_dim);
            for (g, group) in groups.iter().enumerate() {
                if group.is_empty() || group.iter().any(|&i| i >= points.len()) {
                    return Err(Error::Shape(format!("group {g} is empty or out of range")));
                }
                let stats: Vec<f64> = group_statistics(points, group)
                    .iter()
                    .map(|s| s * input_gain)
                    .collect();
                project_tanh(&stats, &weights, out.cell_mut(g, 0));
            }
            Ok(out)
        }
    }
}

/// Dense PC feature map of a structured point cloud: FPS centers, KNN groups,
/// group embeddings, IDW onto a `2 rows x 2 cols` grid restricted to
/// foreground cells, then 2x2 average pooling.
pub fn pc_feature_map(
    spec: &ExtractorSpec,
    pc: &StructuredPointCloud,
    grouping: &GroupingConfig,
    fps_seed: u64,
    sample_id: &str,
) -> Result<FeatureMap> {
    spec.expect_modality(Modality::Pc)?;
    if let ExtractorKind::Precomputed { feature_root } = &spec.kind {
        let map = load_precomputed(feature_root, Modality::Pc.as_str(), sample_id)?;
        spec.check_shape(&map)?;
        return Ok(map);
    }
    grouping.validate()?;
    let (points, pixels) = pc.foreground();
    let (rows2, cols2) = (spec.out_rows * 2, spec.out_cols * 2);
    if points.is_empty() {
        return Ok(FeatureMap::zeros(spec.out_rows, spec.out_cols, spec.out_dim));
    }
    let n_centers = grouping.n_groups.min(points.len());
    let centers = farthest_point_sample(&points, n_centers, fps_seed)?;
    let groups = knn_group(&points, &centers, grouping.group_size.min(points.len()))?;
    let embeddings = extract_pc(spec, &points, &groups, sample_id)?;

    let to_grid = |(pr, pcol): (usize, usize)| {
        [
            (pr as f64 + 0.5) * rows2 as f64 / pc.height as f64 - 0.5,
            (pcol as f64 + 0.5) * cols2 as f64 / pc.width as f64 - 0.5,
        ]
    };
    let positions: Vec<[f64; 2]> = centers.iter().map(|&i| to_grid(pixels[i])).collect();
    let mut dense = idw_interpolate(
        &positions,
        embeddings.data(),
        spec.out_dim,
        rows2,
        cols2,
        grouping.idw_neighbors.min(positions.len()),
        grouping.idw_power,
    )?;
    let mut foreground = vec![false; rows2 * cols2];
    for &(pr, pcol) in &pixels {
        let r = pr * rows2 / pc.height;
        let c = pcol * cols2 / pc.width;
        foreground[r * cols2 + c] = true;
    }
    for r in 0..rows2 {
        for c in 0..cols2 {
            if !foreground[r * cols2 + c] {
                dense.cell_mut(r, c).fill(0.0);
            }
        }
    }
    pool_align(&dense, PoolMode::Down2)
}

/// Extractor pair plus the point-grouping settings used for PC features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extractors {
    pub rgb: ExtractorSpec,
    pub pc: ExtractorSpec,
    #[serde(default)]
    pub grouping: GroupingConfig,
    #[serde(default)]
    pub fps_seed: u64,
}

impl Extractors {
    pub fn synthetic(seed: u64) -> Self {
        Self {
            rgb: ExtractorSpec::synthetic(Modality::Rgb, seed),
            pc: ExtractorSpec::synthetic(Modality::Pc, seed.wrapping_add(1)),
            grouping: GroupingConfig::default(),
            fps_seed: seed,
        }
    }

    pub fn spec(&self, modality: Modality) -> &ExtractorSpec {
        match modality {
            Modality::Rgb => &self.rgb,
            Modality::Pc => &self.pc,
        }
    }

    /// Features of `modality` for `sample`: stored features if present,
    /// otherwise extracted from the raw input.
    pub fn features<'a>(&self, sample: &'a Sample, modality: Modality) -> Result<Cow<'a, FeatureMap>> {
        if let Some(map) = sample.features(modality) {
            return Ok(Cow::Borrowed(map));
        }
        let map = match modality {
            Modality::Rgb => match &sample.rgb {
                Some(img) => extract_rgb(&self.rgb, img, &sample.id)?,
                None => return Err(missing(sample, modality)),
            },
            Modality::Pc => match &sample.pc {
                Some(pc) => pc_feature_map(&self.pc, pc, &self.grouping, self.fps_seed, &sample.id)?,
                None => return Err(missing(sample, modality)),
            },
        };
        Ok(Cow::Owned(map))
    }
}

fn missing(sample: &Sample, modality: Modality) -> Error {
    Error::Data(format!("sample `{}` has no {modality} input or features", sample.id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_rgb(seed: u64) -> ExtractorSpec {
        ExtractorSpec::synthetic(Modality::Rgb, seed).with_shape(4, 4, 8)
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
        RgbImage::new(h, w, (0..h * w * 3).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn synthetic_rgb_is_deterministic_and_zero_on_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 16, 16);
        let spec = small_rgb(3);
        assert_eq!(extract_rgb(&spec, &img, "a").unwrap(), extract_rgb(&spec, &img, "a").unwrap());
        let zero = extract_rgb(&spec, &RgbImage::zeros(16, 16), "z").unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_pixel_changes_one_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 16, 16);
        let spec = small_rgb(5);
        let base = extract_rgb(&spec, &img, "a").unwrap();
        for (y, x) in [(0, 0), (5, 9), (15, 15), (7, 3)] {
            let mut changed = img.clone();
            let mut p = changed.pixel(y, x);
            p[1] = 1.0 - p[1];
            changed.set_pixel(y, x, p);
            let out = extract_rgb(&spec, &changed, "a").unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    let differs = out.cell(r, c) != base.cell(r, c);
                    assert_eq!(differs, (r, c) == (y / 4, x / 4), "pixel ({y},{x}) cell ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn permuted_patches_permute_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 8, 8);
        let spec = ExtractorSpec::synthetic(Modality::Rgb, 9).with_shape(2, 2, 6);
        // swap patch (0,0) with (1,1)
        let mut swapped = img.clone();
        for y in 0..4 {
            for x in 0..4 {
                swapped.set_pixel(y, x, img.pixel(y + 4, x + 4));
                swapped.set_pixel(y + 4, x + 4, img.pixel(y, x));
            }
        }
        let a = extract_rgb(&spec, &img, "a").unwrap();
        let b = extract_rgb(&spec, &swapped, "b").unwrap();
        assert_eq!(a.cell(0, 0), b.cell(1, 1));
        assert_eq!(a.cell(1, 1), b.cell(0, 0));
        assert_eq!(a.cell(0, 1), b.cell(0, 1));
        assert!(a.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn pc_embeddings_are_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts: Vec<[f64; 3]> = (0..40)
            .map(|_| [rng.random_range(0.0..0.05), rng.random_range(0.0..0.05), rng.random_range(0.0..0.01)])
            .collect();
        let moved: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] + 1.0, p[1] + 2.0, p[2] + 3.0]).collect();
        let groups = vec![(0..10).collect::<Vec<_>>(), (5..25).collect(), (0..10).collect()];
        let spec = ExtractorSpec::synthetic(Modality::Pc, 2).with_shape(1, 1, 16);
        let a = extract_pc(&spec, &pts, &groups, "a").unwrap();
        let b = extract_pc(&spec, &moved, &groups, "a").unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
        assert_eq!(a.cell(0, 0), a.cell(2, 0));
    }

    #[test]
    fn group_spread_changes_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = ExtractorSpec::synthetic(Modality::Pc, 3).with_shape(1, 1, 32);
        let mut distinct = 0;
        for _ in 0..100 {
            let pts: Vec<[f64; 3]> = (0..20)
                .map(|_| [rng.random_range(0.0..0.02), rng.random_range(0.0..0.02), rng.random_range(0.0..0.02)])
                .collect();
            let scale = rng.random_range(1.5..3.0);
            let wide: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] * scale, p[1] * scale, p[2] * scale]).collect();
            let g = vec![(0..20).collect::<Vec<_>>()];
            let a = extract_pc(&spec, &pts, &g, "a").unwrap();
            let b = extract_pc(&spec, &wide, &g, "b").unwrap();
            if a != b {
                distinct += 1;
            }
        }
        assert_eq!(distinct, 100);
    }

    #[test]
    fn precomputed_never_fabricates() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ExtractorSpec::precomputed(Modality::Rgb, dir.path()).with_shape(2, 2, 3);
        assert!(matches!(
            extract_rgb(&spec, &RgbImage::zeros(8, 8), "missing"),
            Err(Error::Lookup(_))
        ));
        let map = FeatureMap::new(2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        crate::data::cmft::save_feature_map(&map, feature_path(dir.path(), Modality::Rgb, "s1")).unwrap();
        assert_eq!(extract_rgb(&spec, &RgbImage::zeros(8, 8), "s1").unwrap(), map);
        let wrong = spec.clone().with_shape(2, 2, 4);
        assert!(matches!(extract_rgb(&wrong, &RgbImage::zeros(8, 8), "s1"), Err(Error::Shape(_))));
    }

    #[test]
    fn pc_feature_map_zeroes_background() {
        let (train, _) = crate::data::generate_synthetic_raw_dataset(&crate::data::RawSynthConfig::default()).unwrap();
        let s = &train[0];
        let (_, pc, _) = crate::preprocess::preprocess_pair(
            s.pc.as_ref().unwrap(),
            s.rgb.as_ref().unwrap(),
            &crate::preprocess::RansacConfig::default(),
        )
        .unwrap();
        let spec = ExtractorSpec::synthetic(Modality::Pc, 1).with_shape(8, 8, 12);
        let grouping = GroupingConfig {
            n_groups: 32,
            group_size: 16,
            ..GroupingConfig::default()
        };
        let map = pc_feature_map(&spec, &pc, &grouping, 0, "x").unwrap();
        assert_eq!(map.shape(), (8, 8, 12));
        assert!(map.is_background(0, 0));
        assert!(!map.is_background(4, 4));
        assert_eq!(map, pc_feature_map(&spec, &pc, &grouping, 0, "x").unwrap());
    }
}
