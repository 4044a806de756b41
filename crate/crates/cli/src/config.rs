use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use cmdiad_core::bank::DistanceMetric;
use cmdiad_core::data::{Modality, RawSynthConfig, SynthConfig};
use cmdiad_core::distill::Route;
use cmdiad_core::extractor::Extractors;
use cmdiad_core::pipeline::DetectorConfig;
use cmdiad_core::preprocess::RansacConfig;
use cmdiad_core::score::InferenceMode;
use cmdiad_core::Error;

use crate::CliError;

pub const DATA_ROOT_ENV: &str = "CMDIAD_DATA_ROOT";

fn default_extractors() -> Extractors {
    Extractors::synthetic(0)
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

fn default_fpr_limit() -> f64 {
    cmdiad_core::metrics::DEFAULT_FPR_LIMIT
}

fn default_true() -> bool {
    true
}

/// Everything a run reads, loaded from one JSON file and overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data_root: Option<PathBuf>,
    /// Empty means every class directory under the data root.
    #[serde(default)]
    pub classes: Vec<String>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub detector: DetectorConfig,
    /// Used when a sample has no stored features, and to re-extract
    /// hallucinated input on the feature-to-input route.
    #[serde(default = "default_extractors")]
    pub extractors: Extractors,
    #[serde(default)]
    pub ransac: RansacConfig,
    #[serde(default = "default_fpr_limit")]
    pub fpr_limit: f64,
    /// Write 8-bit PNG renderings next to the float score maps.
    #[serde(default = "default_true")]
    pub render: bool,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub raw_synth: RawSynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

/// Flags shared by every subcommand. Set flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Dataset root.
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    /// Object classes, comma separated or repeated.
    #[arg(long = "class", value_delimiter = ',')]
    pub classes: Vec<String>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Worker threads for sample-level parallelism.
    #[arg(long, short = 'j')]
    pub workers: Option<usize>,
    /// Sets every seed (banks, fusion, training, RANSAC, synthetic data).
    #[arg(long)]
    pub seed: Option<u64>,
    /// single-pc, single-rgb, dual or mtfi-<route>-<main>, e.g. mtfi-FtoF-pc.
    #[arg(long)]
    pub mode: Option<InferenceMode>,
    /// Distillation route; implies MTFI mode.
    #[arg(long)]
    pub route: Option<Route>,
    /// Main (available) modality; implies MTFI mode.
    #[arg(long)]
    pub main: Option<Modality>,
    #[arg(long)]
    pub metric: Option<DistanceMetric>,
    /// Coreset fraction in (0, 1].
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    /// Config file (if any) with flag overrides applied.
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(args)?;
        Ok(cfg)
    }

    fn apply(&mut self, a: &CommonArgs) -> Result<(), CliError> {
        if let Some(root) = &a.data_root {
            self.data_root = Some(root.clone());
        }
        if !a.classes.is_empty() {
            self.classes = a.classes.clone();
        }
        if let Some(out) = &a.out {
            self.output = out.clone();
        }
        if a.workers.is_some() {
            self.workers = a.workers;
        }
        let d = &mut self.detector;
        if let Some(seed) = a.seed {
            d.bank.seed = seed;
            d.fusion.seed = seed;
            d.train.seed = seed;
            self.ransac.seed = seed;
            self.synth.seed = seed;
            self.raw_synth.seed = seed;
        }
        if let Some(mode) = a.mode {
            d.mode = mode;
        }
        if a.route.is_some() || a.main.is_some() {
            let (route, main) = match d.mode {
                InferenceMode::Mtfi { route, main } => (route, main),
                _ => (Route::FtoF, Modality::Pc),
            };
            d.mode = InferenceMode::Mtfi {
                route: a.route.unwrap_or(route),
                main: a.main.unwrap_or(main),
            };
        }
        if let Some(m) = a.metric {
            d.bank.metric = m;
        }
        if let Some(f) = a.fraction {
            d.bank.fraction = f;
        }
        if let Some(e) = a.epochs {
            d.train.epochs = e;
            d.train.warmup_epochs = d.train.warmup_epochs.min(e);
        }
        if a.learning_rate.is_some() {
            d.train.learning_rate = a.learning_rate;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.detector;
        if !(d.bank.fraction > 0.0 && d.bank.fraction <= 1.0) {
            return Err(Error::Config(format!("coreset fraction {} must be in (0, 1]", d.bank.fraction)).into());
        }
        if !(self.fpr_limit > 0.0 && self.fpr_limit <= 1.0) {
            return Err(Error::Config(format!("fpr_limit {} must be in (0, 1]", self.fpr_limit)).into());
        }
        if self.workers == Some(0) {
            return Err(CliError::Usage("--workers must be >= 1".into()));
        }
        d.train.validate()?;
        d.fusion.validate()?;
        d.post.validate()?;
        self.ransac.validate()?;
        for spec in [&self.extractors.rgb, &self.extractors.pc] {
            spec.validate()?;
        }
        Ok(())
    }

    /// The dataset root, which must exist.
    pub fn existing_root(&self) -> Result<&Path, CliError> {
        let root = self.data_root.as_deref().ok_or_else(|| {
            CliError::Usage(format!("no dataset root: pass --data-root or set {DATA_ROOT_ENV}"))
        })?;
        if !root.is_dir() {
            return Err(CliError::Usage(format!("dataset root {} does not exist", root.display())));
        }
        Ok(root)
    }

    /// Configured classes, or every class directory under `root`.
    pub fn class_list(&self, root: &Path) -> Result<Vec<String>, CliError> {
        if !self.classes.is_empty() {
            for c in &self.classes {
                if !root.join(c).is_dir() {
                    return Err(CliError::Usage(format!("class `{c}` not found under {}", root.display())));
                }
            }
            return Ok(self.classes.clone());
        }
        let mut found = Vec::new();
        for e in std::fs::read_dir(root).map_err(|e| Error::file(root, e))? {
            let p = e.map_err(|e| Error::file(root, e))?.path();
            if p.is_dir() {
                found.push(p.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
        found.sort();
        if found.is_empty() {
            return Err(CliError::Usage(format!("no class directories under {}", root.display())));
        }
        Ok(found)
    }
}
