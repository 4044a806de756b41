//! MVTec 3D-AD style dataset tree with a parallel `feat/` tree.
//!
//! ```text
//! <root>/<class>/<split>/<defect>/rgb/<stem>.png
//!                                /xyz/<stem>.tiff
//!                                /gt/<stem>.png
//!                                /feat/<modality>/<stem>.cmft
//!                                /feat/<modality>/<stem>.json
//! ```
//!
//! Sample ids are `<class>/<split>/<defect>/<stem>`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::cmft::{load_feature_map, save_feature_map};
use crate::data::{FeatureMap, Label, Modality, Sample};
use crate::error::{Error, Result};
use crate::preprocess::io::{read_mask_png, read_rgb_png, read_xyz_tiff, write_mask_png, write_rgb_png, write_xyz_tiff};

pub const GOOD: &str = "good";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DatasetEntry {
    pub root: PathBuf,
    pub class: String,
    pub split: String,
    pub defect: String,
    pub stem: String,
}

impl DatasetEntry {
    pub fn dir(&self) -> PathBuf {
        self.root.join(&self.class).join(&self.split).join(&self.defect)
    }

    pub fn id(&self) -> String {
        format!("{}/{}/{}/{}", self.class, self.split, self.defect, self.stem)
    }

    pub fn rgb_path(&self) -> PathBuf {
        self.dir().join("rgb").join(format!("{}.png", self.stem))
    }

    pub fn xyz_path(&self) -> PathBuf {
        self.dir().join("xyz").join(format!("{}.tiff", self.stem))
    }

    pub fn gt_path(&self) -> PathBuf {
        self.dir().join("gt").join(format!("{}.png", self.stem))
    }

    pub fn feature_path(&self, modality: Modality) -> PathBuf {
        crate::extractor::feature_path(&self.dir(), modality, &self.stem)
    }

    pub fn sidecar_path(&self, modality: Modality) -> PathBuf {
        self.dir()
            .join("feat")
            .join(modality.as_str())
            .join(format!("{}.json", self.stem))
    }

    pub fn source_path(&self, modality: Modality) -> PathBuf {
        match modality {
            Modality::Rgb => self.rgb_path(),
            Modality::Pc => self.xyz_path(),
        }
    }

    pub fn label(&self) -> Label {
        if self.split == "train" || self.split == "validation" || self.defect == GOOD {
            Label::Normal
        } else {
            Label::Anomalous
        }
    }

    pub fn is_test(&self) -> bool {
        self.split == "test"
    }
}

/// Per-sample, per-modality feature sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub id: String,
    pub modality: Modality,
    pub grid: [usize; 3],
    pub source_checksum: String,
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn list_dirs(path: &Path) -> Result<Vec<String>> {
    if !path.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::file(path, e))? {
        let entry = entry.map_err(|e| Error::file(path, e))?;
        if entry.path().is_dir() {
            out.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    out.sort();
    Ok(out)
}

fn list_stems(dir: &Path, ext: &str, into: &mut BTreeSet<String>) -> Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
        let path = entry.map_err(|e| Error::file(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                into.insert(stem.to_string());
            }
        }
    }
    Ok(())
}

/// All samples of one class and split, sorted by defect then stem.
pub fn scan_split(root: &Path, class: &str, split: &str) -> Result<Vec<DatasetEntry>> {
    let split_dir = root.join(class).join(split);
    if !split_dir.is_dir() {
        return Err(Error::Data(format!("missing split directory {}", split_dir.display())));
    }
    let mut entries = Vec::new();
    for defect in list_dirs(&split_dir)? {
        let dir = split_dir.join(&defect);
        let mut stems = BTreeSet::new();
        list_stems(&dir.join("rgb"), "png", &mut stems)?;
        list_stems(&dir.join("xyz"), "tiff", &mut stems)?;
        list_stems(&dir.join("feat").join("rgb"), "cmft", &mut stems)?;
        list_stems(&dir.join("feat").join("pc"), "cmft", &mut stems)?;
        entries.extend(stems.into_iter().map(|stem| DatasetEntry {
            root: root.to_path_buf(),
            class: class.to_string(),
            split: split.to_string(),
            defect: defect.clone(),
            stem,
        }));
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub raw: bool,
    pub features: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            raw: true,
            features: true,
        }
    }
}

pub fn load_sample(entry: &DatasetEntry, opts: LoadOptions) -> Result<Sample> {
    let mut sample = Sample::new(entry.id(), entry.label());
    if opts.raw {
        let rgb = entry.rgb_path();
        if rgb.is_file() {
            sample.rgb = Some(read_rgb_png(&rgb)?);
        }
        let xyz = entry.xyz_path();
        if xyz.is_file() {
            sample.pc = Some(read_xyz_tiff(&xyz)?);
        }
    }
    if opts.features {
        for modality in [Modality::Rgb, Modality::Pc] {
            let path = entry.feature_path(modality);
            if path.is_file() {
                let map = load_feature_map(&path)?;
                match modality {
                    Modality::Rgb => sample.rgb_features = Some(map),
                    Modality::Pc => sample.pc_features = Some(map),
                }
            }
        }
    }
    if entry.is_test() {
        let gt = entry.gt_path();
        if gt.is_file() {
            sample.gt_mask = Some(read_mask_png(&gt)?);
        }
    }
    sample.validate()?;
    Ok(sample)
}

/// Writes a feature map and its sidecar. The checksum covers the raw source
/// file when present, otherwise the feature file itself.
pub fn write_features(entry: &DatasetEntry, modality: Modality, map: &FeatureMap) -> Result<Sidecar> {
    let path = entry.feature_path(modality);
    save_feature_map(map, &path)?;
    let source = entry.source_path(modality);
    let checksum = if source.is_file() {
        sha256_file(&source)?
    } else {
        sha256_file(&path)?
    };
    let sidecar = Sidecar {
        id: entry.id(),
        modality,
        grid: [map.rows(), map.cols(), map.dim()],
        source_checksum: checksum,
    };
    let side = entry.sidecar_path(modality);
    std::fs::write(&side, serde_json::to_vec_pretty(&sidecar)?).map_err(|e| Error::file(&side, e))?;
    Ok(sidecar)
}

/// Defect directory used by [`write_split`] for anomalous samples.
pub const ANOMALY: &str = "anomaly";

/// Writes whatever `sample` carries (raw inputs, features with sidecars,
/// ground-truth mask) under `entry`. Raw inputs go first so that feature
/// sidecars checksum them.
pub fn write_sample(entry: &DatasetEntry, sample: &Sample) -> Result<()> {
    let mkdir = |p: &Path| -> Result<()> {
        let parent = p.parent().expect("entry paths have a parent");
        std::fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))
    };
    if let Some(img) = &sample.rgb {
        mkdir(&entry.rgb_path())?;
        write_rgb_png(img, entry.rgb_path())?;
    }
    if let Some(pc) = &sample.pc {
        mkdir(&entry.xyz_path())?;
        write_xyz_tiff(pc, entry.xyz_path())?;
    }
    for m in [Modality::Rgb, Modality::Pc] {
        if let Some(map) = sample.features(m) {
            write_features(entry, m, map)?;
        }
    }
    if let Some(mask) = &sample.gt_mask {
        mkdir(&entry.gt_path())?;
        write_mask_png(mask, entry.gt_path())?;
    }
    Ok(())
}

/// Writes `samples` as one split of `class`: normal samples under `good/`,
/// anomalous ones under `anomaly/`, each directory numbered from `000` in input order.
pub fn write_split(root: &Path, class: &str, split: &str, samples: &[Sample]) -> Result<Vec<DatasetEntry>> {
    let (mut n_good, mut n_anomaly) = (0, 0);
    samples
        .iter()
        .map(|s| {
            let (defect, counter) = match s.label {
                Label::Anomalous => (ANOMALY, &mut n_anomaly),
                Label::Normal | Label::Unknown => (GOOD, &mut n_good),
            };
            let entry = DatasetEntry {
                root: root.to_path_buf(),
                class: class.to_string(),
                split: split.to_string(),
                defect: defect.to_string(),
                stem: format!("{:03}", *counter),
            };
            *counter += 1;
            write_sample(&entry, s)?;
            Ok(entry)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_and_sidecars_round_trip_through_the_tree() {
        let dir = tempfile::tempdir().unwrap();
        let entry = DatasetEntry {
            root: dir.path().to_path_buf(),
            class: "bagel".into(),
            split: "test".into(),
            defect: "crack".into(),
            stem: "000".into(),
        };
        let map = FeatureMap::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let side = write_features(&entry, Modality::Pc, &map).unwrap();
        assert_eq!(side.grid, [2, 2, 1]);
        let found = scan_split(dir.path(), "bagel", "test").unwrap();
        assert_eq!(found, vec![entry.clone()]);
        let sample = load_sample(&found[0], LoadOptions::default()).unwrap();
        assert_eq!(sample.id, "bagel/test/crack/000");
        assert_eq!(sample.label, Label::Anomalous);
        assert_eq!(sample.pc_features.unwrap(), map);
        let text = std::fs::read_to_string(entry.sidecar_path(Modality::Pc)).unwrap();
        let back: Sidecar = serde_json::from_str(&text).unwrap();
        assert_eq!(back, side);
    }
}
