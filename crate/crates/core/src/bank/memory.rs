use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::coreset::{coreset_select, PatchSet, PatchSource};
use super::metric::{is_zero, DistanceMetric};
use super::projection::{make_projection, ProjectionMatrix, ProjectionSpec};
use crate::data::cmft::{load_feature_map, save_feature_map};
use crate::data::{FeatureMap, Modality};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub d_target: usize,
    /// `None` selects `1/sqrt(d)`.
    pub density: Option<f64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            d_target: 128,
            density: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BankConfig {
    pub fraction: f64,
    pub metric: DistanceMetric,
    /// Projection used only while selecting the coreset; skipped when the
    /// feature dimension does not exceed the target.
    pub projection: Option<ProjectionConfig>,
    pub seed: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            fraction: 0.1,
            metric: DistanceMetric::L2,
            projection: Some(ProjectionConfig::default()),
            seed: 0,
        }
    }
}

/// Coreset of normal patch features in original (unprojected) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    pub modality: Modality,
    pub metric: DistanceMetric,
    pub fraction: f64,
    pub seed: u64,
    pub projection: Option<ProjectionMatrix>,
    dim: usize,
    coreset: Vec<f32>,
    /// Indices into the source patch set, in selection order.
    pub selected: Vec<usize>,
    pub sources: Vec<PatchSource>,
    pub source_checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankManifest {
    pub modality: Modality,
    pub metric: DistanceMetric,
    pub fraction: f64,
    pub seed: u64,
    pub dim: usize,
    pub rows: usize,
    pub projection: Option<ProjectionSpec>,
    pub source_checksum: String,
    pub sources: Vec<PatchSource>,
}

impl MemoryBank {
    /// A bank over explicit rows, with no selection history.
    pub fn from_rows(modality: Modality, metric: DistanceMetric, dim: usize, rows: Vec<f32>) -> Result<Self> {
        if dim == 0 || rows.is_empty() || rows.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "bank rows of length {} do not tile dim {dim}",
                rows.len()
            )));
        }
        let k = rows.len() / dim;
        Ok(Self {
            modality,
            metric,
            fraction: 1.0,
            seed: 0,
            projection: None,
            dim,
            coreset: rows,
            selected: (0..k).collect(),
            sources: Vec::new(),
            source_checksum: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.coreset.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coreset.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.coreset[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f32] {
        &self.coreset
    }

    /// Exact nearest coreset row under the bank metric, ties to lowest index.
    /// Assumes a matching, non-zero (for cosine) query.
    #[inline]
    pub(crate) fn nearest_unchecked(&self, feature: &[f32]) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0usize);
        for (i, row) in self.coreset.chunks_exact(self.dim).enumerate() {
            let d = self.metric.eval(feature, row);
            if d < best.0 {
                best = (d, i);
            }
        }
        best
    }

    pub fn manifest(&self) -> BankManifest {
        BankManifest {
            modality: self.modality,
            metric: self.metric,
            fraction: self.fraction,
            seed: self.seed,
            dim: self.dim,
            rows: self.len(),
            projection: self.projection.as_ref().map(ProjectionMatrix::spec),
            source_checksum: self.source_checksum.clone(),
            sources: self.sources.clone(),
        }
    }

    /// Writes `coreset.cmft` and `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let rows = FeatureMap::new(self.len(), 1, self.dim, self.coreset.clone())?;
        save_feature_map(&rows, dir.join("coreset.cmft"))?;
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&self.manifest())?).map_err(|e| Error::file(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read(&path).map_err(|e| Error::file(&path, e))?;
        let manifest: BankManifest = serde_json::from_slice(&text)?;
        let rows = load_feature_map(dir.join("coreset.cmft"))?;
        if rows.dim() != manifest.dim || rows.rows() != manifest.rows || rows.cols() != 1 {
            return Err(Error::Format(format!(
                "bank tensor {:?} disagrees with manifest ({} rows of dim {})",
                rows.shape(),
                manifest.rows,
                manifest.dim
            )));
        }
        let projection = manifest.projection.as_ref().map(ProjectionMatrix::from_spec).transpose()?;
        Ok(Self {
            modality: manifest.modality,
            metric: manifest.metric,
            fraction: manifest.fraction,
            seed: manifest.seed,
            projection,
            dim: manifest.dim,
            coreset: rows.into_data(),
            selected: Vec::new(),
            sources: manifest.sources,
            source_checksum: manifest.source_checksum,
        })
    }
}

/// Nearest coreset row to `feature`: `(distance, row index)`.
pub fn nn_query(bank: &MemoryBank, feature: &[f32]) -> Result<(f64, usize)> {
    if feature.len() != bank.dim {
        return Err(Error::Shape(format!(
            "query of dim {} against bank of dim {}",
            feature.len(),
            bank.dim
        )));
    }
    if bank.metric == DistanceMetric::Cosine && is_zero(feature) {
        return Err(Error::Value("cosine query with a zero vector".into()));
    }
    Ok(bank.nearest_unchecked(feature))
}

/// Non-background cells of `maps`, in map then row-major order.
pub fn collect_patches(maps: &[(&str, &FeatureMap)]) -> Result<PatchSet> {
    let Some((_, first)) = maps.first() else {
        return Err(Error::Degenerate("no feature maps to build a bank from".into()));
    };
    let dim = first.dim();
    let mut data = Vec::new();
    let mut sources = Vec::new();
    for (id, map) in maps {
        if map.dim() != dim {
            return Err(Error::Shape(format!(
                "feature map `{id}` has dim {}, expected {dim}",
                map.dim()
            )));
        }
        for r in 0..map.rows() {
            for c in 0..map.cols() {
                let cell = map.cell(r, c);
                if !is_zero(cell) {
                    data.extend_from_slice(cell);
                    sources.push(PatchSource {
                        sample: id.to_string(),
                        row: r,
                        col: c,
                    });
                }
            }
        }
    }
    if sources.is_empty() {
        return Err(Error::Degenerate("every cell of every map is background".into()));
    }
    PatchSet::new(dim, data, sources)
}

fn checksum(maps: &[(&str, &FeatureMap)]) -> String {
    let mut hasher = Sha256::new();
    for (id, map) in maps {
        hasher.update(id.as_bytes());
        for v in map.data() {
            hasher.update(v.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// Builds a memory bank from training feature maps (`(sample id, map)` pairs).
pub fn build_bank(maps: &[(&str, &FeatureMap)], cfg: &BankConfig, modality: Modality) -> Result<MemoryBank> {
    let patches = collect_patches(maps)?;
    let dim = patches.dim();
    let projection = match &cfg.projection {
        Some(p) if p.d_target < dim => {
            let density = p.density.unwrap_or(1.0 / (dim as f64).sqrt());
            Some(make_projection(dim, p.d_target, density, cfg.seed ^ 0x5eed_0f_9a0_1ec7)?)
        }
        _ => None,
    };
    let selected = coreset_select(&patches, cfg.fraction, cfg.metric, projection.as_ref(), cfg.seed)?;
    let mut coreset = Vec::with_capacity(selected.len() * dim);
    for &i in &selected {
        coreset.extend_from_slice(patches.patch(i));
    }
    let sources = selected.iter().map(|&i| patches.sources()[i].clone()).collect();
    Ok(MemoryBank {
        modality,
        metric: cfg.metric,
        fraction: cfg.fraction,
        seed: cfg.seed,
        projection,
        dim,
        coreset,
        selected,
        sources,
        source_checksum: checksum(maps),
    })
}
