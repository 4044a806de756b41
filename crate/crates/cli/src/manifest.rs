use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use cmdiad_core::data::layout::{sha256_file, DatasetEntry};
use cmdiad_core::data::Modality;
use cmdiad_core::Error;

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Seeds {
    pub bank: u64,
    pub fusion: u64,
    pub train: u64,
    pub ransac: u64,
    pub synth: u64,
    pub raw_synth: u64,
}

impl Seeds {
    pub fn of(cfg: &RunConfig) -> Self {
        let d = &cfg.detector;
        Self {
            bank: d.bank.seed,
            fusion: d.fusion.seed,
            train: d.train.seed,
            ransac: cfg.ransac.seed,
            synth: cfg.synth.seed,
            raw_synth: cfg.raw_synth.seed,
        }
    }
}

/// Record of one run: enough to repeat it and get the same bytes.
#[derive(Debug, Serialize)]
pub struct RunManifest<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub arguments: Vec<String>,
    pub config: RunConfig,
    pub seeds: Seeds,
    /// sha256 of every input file, keyed by path relative to the data root.
    pub inputs: BTreeMap<String, String>,
    pub summary: T,
}

impl<T: Serialize> RunManifest<T> {
    pub fn new(command: &str, argv: &[String], cfg: &RunConfig, inputs: BTreeMap<String, String>, summary: T) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            arguments: argv.iter().skip(1).cloned().collect(),
            config: cfg.clone(),
            seeds: Seeds::of(cfg),
            inputs,
            summary,
        }
    }

    /// Writes `<dir>/<command>.manifest.json`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let path = dir.join(format!("{}.manifest.json", self.command));
        let bytes = serde_json::to_vec_pretty(self).map_err(Error::from)?;
        std::fs::write(&path, bytes).map_err(|e| Error::file(&path, e))?;
        Ok(())
    }
}

/// Checksums of the files behind `entries` that exist on disk.
pub fn checksum_entries(root: &Path, entries: &[DatasetEntry]) -> Result<BTreeMap<String, String>, CliError> {
    let files: Vec<_> = entries
        .iter()
        .flat_map(|e| {
            [
                e.rgb_path(),
                e.xyz_path(),
                e.gt_path(),
                e.feature_path(Modality::Rgb),
                e.feature_path(Modality::Pc),
            ]
        })
        .filter(|p| p.is_file())
        .collect();
    let sums: Vec<(String, String)> = files
        .par_iter()
        .map(|p| {
            let rel = p.strip_prefix(root).unwrap_or(p).to_string_lossy().into_owned();
            Ok((rel, sha256_file(p)?))
        })
        .collect::<Result<_, Error>>()?;
    Ok(sums.into_iter().collect())
}
