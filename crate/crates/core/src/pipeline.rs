//! End-to-end detector: memory banks, optional distillation network and
//! score fusion, fitted on normal training samples.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{build_bank, BankConfig, MemoryBank};
use crate::data::{FeatureMap, Label, Mask, Modality, Sample, ScoreMap};
use crate::distill::{load_checkpoint, save_checkpoint, train_distiller, Checkpoint, DenseNet, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::extractor::Extractors;
use crate::metrics::{aupro, auroc, pixel_auroc, ClassMetrics, DEFAULT_FPR_LIMIT};
use crate::score::{
    fit_correction, fit_one_class, upsample_bilinear, AnomalyResult, Banks, CorrectionRule, FusionModel,
    InferenceMode, OneClassConfig, PostprocessConfig, Scorer,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub mode: InferenceMode,
    pub bank: BankConfig,
    pub correction: CorrectionRule,
    pub fusion: OneClassConfig,
    /// Upper bound on training pixels used to fit the pixel-level model.
    pub max_fusion_pixels: usize,
    pub post: PostprocessConfig,
    /// Distillation settings, used in MTFI mode.
    pub train: TrainConfig,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            mode: InferenceMode::Mtfi {
                route: crate::distill::Route::FtoF,
                main: Modality::Pc,
            },
            bank: BankConfig::default(),
            correction: CorrectionRule::Mean,
            fusion: OneClassConfig::default(),
            max_fusion_pixels: 100_000,
            post: PostprocessConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub config: DetectorConfig,
    pub extractors: Extractors,
    pub banks: Banks,
    pub fusion: Option<FusionModel>,
    pub distiller: Option<DenseNet>,
    /// Distillation history when the network was trained by [`Detector::fit`].
    pub training: Option<TrainOutcome>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectorManifest {
    config: DetectorConfig,
    extractors: Extractors,
    modalities: Vec<Modality>,
    fusion: Option<FusionModel>,
    distiller: bool,
}

fn check_training(train: &[Sample]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    if let Some(s) = train.iter().find(|s| s.label == Label::Anomalous) {
        return Err(Error::Data(format!("training sample `{}` is anomalous", s.id)));
    }
    Ok(())
}

/// Memory bank of `modality` from the training samples' real features.
pub fn fit_bank(train: &[Sample], extractors: &Extractors, modality: Modality, cfg: &BankConfig) -> Result<MemoryBank> {
    check_training(train)?;
    let maps: Vec<FeatureMap> = train
        .par_iter()
        .map(|s| extractors.features(s, modality).map(|m| m.into_owned()))
        .collect::<Result<_>>()?;
    let named: Vec<(&str, &FeatureMap)> = train.iter().map(|s| s.id.as_str()).zip(&maps).collect();
    build_bank(&named, cfg, modality)
}

impl Detector {
    /// Fits everything `cfg.mode` needs; in MTFI mode this includes training
    /// the distillation network (its final checkpoint is used).
    pub fn fit(train: &[Sample], extractors: Extractors, cfg: DetectorConfig) -> Result<Self> {
        let (distiller, training) = match cfg.mode {
            InferenceMode::Mtfi { route, main } => {
                let outcome = train_distiller(route, main, train, &extractors, &cfg.train)?;
                (Some(outcome.last().net.clone()), Some(outcome))
            }
            _ => (None, None),
        };
        let mut det = Self::fit_with(train, extractors, cfg, distiller)?;
        det.training = training;
        Ok(det)
    }

    /// Fits banks and fusion around an already trained network.
    pub fn fit_with(train: &[Sample], extractors: Extractors, cfg: DetectorConfig, distiller: Option<DenseNet>) -> Result<Self> {
        check_training(train)?;
        cfg.post.validate()?;
        let mut banks = Banks::default();
        for m in cfg.mode.modalities() {
            banks.set(fit_bank(train, &extractors, m, &cfg.bank)?);
        }
        Self::from_parts(train, extractors, cfg, banks, distiller)
    }

    /// Assembles a detector from prebuilt banks and network and fits the
    /// fusion layer on `train`.
    pub fn from_parts(
        train: &[Sample],
        extractors: Extractors,
        cfg: DetectorConfig,
        banks: Banks,
        distiller: Option<DenseNet>,
    ) -> Result<Self> {
        check_training(train)?;
        cfg.post.validate()?;
        let mut det = Self {
            config: cfg,
            extractors,
            banks,
            fusion: None,
            distiller,
            training: None,
        };
        det.scorer().check_inputs(det.config.mode)?;
        det.refit_fusion(train)?;
        Ok(det)
    }

    /// Same banks, different network: refits the fusion layer, whose training
    /// scores depend on the hallucinations.
    pub fn with_distiller(&self, net: DenseNet, train: &[Sample]) -> Result<Self> {
        let mut det = self.clone();
        det.distiller = Some(net);
        det.training = None;
        det.refit_fusion(train)?;
        Ok(det)
    }

    pub fn scorer(&self) -> Scorer<'_> {
        Scorer {
            banks: &self.banks,
            fusion: self.fusion.as_ref(),
            distiller: self.distiller.as_ref(),
            extractors: &self.extractors,
            post: &self.config.post,
        }
    }

    /// Correction factors from training image scores, then the image-level
    /// and pixel-level one-class models.
    fn refit_fusion(&mut self, train: &[Sample]) -> Result<()> {
        let mode = self.config.mode;
        if !mode.fused() {
            self.fusion = None;
            return Ok(());
        }
        let scorer = self.scorer();
        scorer.check_inputs(mode)?;
        let scores: Vec<_> = train
            .par_iter()
            .map(|s| scorer.modality_scores(s, mode))
            .collect::<Result<_>>()?;
        let pairs: Vec<(&_, &_)> = scores
            .iter()
            .map(|(p, r)| (p.as_ref().expect("fused"), r.as_ref().expect("fused")))
            .collect();
        let psi_pc: Vec<f64> = pairs.iter().map(|(p, _)| p.psi.score).collect();
        let psi_rgb: Vec<f64> = pairs.iter().map(|(_, r)| r.psi.score).collect();
        let (alpha, beta) = fit_correction(&psi_pc, &psi_rgb, self.config.correction)?;

        let fcfg = &self.config.fusion;
        let image_pairs: Vec<[f64; 2]> = psi_pc.iter().zip(&psi_rgb).map(|(p, r)| [alpha * p, beta * r]).collect();
        let image = fit_one_class(&image_pairs, fcfg)?;

        // Pixel model on a seeded subsample of post-processed training pixels.
        let post = &self.config.post;
        let maps: Vec<(ScoreMap, ScoreMap)> = pairs
            .par_iter()
            .map(|(p, r)| Ok((post.apply(&p.phi)?, post.apply(&r.phi)?)))
            .collect::<Result<_>>()?;
        let per = maps[0].0.data.len();
        let total = per * maps.len();
        let mut rng = ChaCha8Rng::seed_from_u64(fcfg.seed);
        rng.set_stream(1);
        let take = self.config.max_fusion_pixels.min(total).max(2.min(total));
        let mut picked = sample_indices(&mut rng, total, take).into_vec();
        picked.sort_unstable();
        let pixel_pairs: Vec<[f64; 2]> = picked
            .iter()
            .map(|&i| {
                let (p, r) = &maps[i / per];
                [alpha * p.data[i % per], beta * r.data[i % per]]
            })
            .collect();
        let pixel_cfg = OneClassConfig {
            seed: fcfg.seed.wrapping_add(1),
            ..fcfg.clone()
        };
        let pixel = fit_one_class(&pixel_pairs, &pixel_cfg)?;
        self.fusion = Some(FusionModel {
            alpha,
            beta,
            rule: self.config.correction,
            image,
            pixel,
            config: fcfg.clone(),
        });
        Ok(())
    }

    pub fn infer(&self, sample: &Sample) -> Result<AnomalyResult> {
        self.scorer().infer(sample, self.config.mode)
    }

    /// Results in input order.
    pub fn infer_all(&self, samples: &[Sample]) -> Result<Vec<AnomalyResult>> {
        let scorer = self.scorer();
        scorer.check(self.config.mode)?;
        samples.par_iter().map(|s| scorer.infer(s, self.config.mode)).collect()
    }

    /// Writes banks, network, fusion model and configuration into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let mut modalities = Vec::new();
        for m in [Modality::Pc, Modality::Rgb] {
            if let Some(b) = self.banks.get(m) {
                b.save(dir.join("banks").join(m.as_str()))?;
                modalities.push(m);
            }
        }
        if let Some(net) = &self.distiller {
            let (epoch, loss) = self
                .training
                .as_ref()
                .map(|t| (t.last().epoch, t.last().loss))
                .unwrap_or((0, f64::NAN));
            let ckpt = Checkpoint {
                net: net.clone(),
                epoch,
                loss: if loss.is_finite() { loss } else { 0.0 },
            };
            save_checkpoint(&ckpt, self.config.train.seed, serde_json::to_value(&self.config.train)?, dir.join("distiller"))?;
        }
        let manifest = DetectorManifest {
            config: self.config.clone(),
            extractors: self.extractors.clone(),
            modalities,
            fusion: self.fusion.clone(),
            distiller: self.distiller.is_some(),
        };
        let path = dir.join("detector.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::file(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("detector.json");
        let text = std::fs::read(&path).map_err(|e| Error::file(&path, e))?;
        let manifest: DetectorManifest = serde_json::from_slice(&text)?;
        let mut banks = Banks::default();
        for m in &manifest.modalities {
            banks.set(MemoryBank::load(dir.join("banks").join(m.as_str()))?);
        }
        let distiller = if manifest.distiller {
            Some(load_checkpoint(dir.join("distiller"))?.0.net)
        } else {
            None
        };
        Ok(Self {
            config: manifest.config,
            extractors: manifest.extractors,
            banks,
            fusion: manifest.fusion,
            distiller,
            training: None,
        })
    }
}

/// Image- and pixel-level metrics of `results` against the samples' labels
/// and masks. Pixel metrics are computed only when every sample carries a
/// mask (normal samples without one count as all-negative); score maps are
/// resized to the mask resolution when they differ.
pub fn evaluate(class: &str, results: &[AnomalyResult], samples: &[Sample], fpr_limit: f64) -> Result<ClassMetrics> {
    if results.len() != samples.len() {
        return Err(Error::Shape(format!("{} results for {} samples", results.len(), samples.len())));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (r, s) in results.iter().zip(samples) {
        if r.id != s.id {
            return Err(Error::Data(format!("result `{}` paired with sample `{}`", r.id, s.id)));
        }
        let Some(l) = s.label.as_binary() else {
            return Err(Error::Data(format!("sample `{}` has no label", s.id)));
        };
        scores.push(r.image_score);
        labels.push(l == 1);
    }
    let i_auroc = auroc(&scores, &labels)?;

    let has_masks = samples.iter().all(|s| s.gt_mask.is_some() || s.label == Label::Normal)
        && samples.iter().any(|s| s.gt_mask.as_ref().is_some_and(|m| m.count() > 0));
    let (mut p_auroc, mut pro) = (None, None);
    if has_masks {
        let mut maps = Vec::with_capacity(results.len());
        let mut gts = Vec::with_capacity(results.len());
        for (r, s) in results.iter().zip(samples) {
            let gt = s
                .gt_mask
                .clone()
                .unwrap_or_else(|| Mask::empty(r.pixel_map.height, r.pixel_map.width));
            let map = if r.pixel_map.shape() == (gt.height, gt.width) {
                r.pixel_map.clone()
            } else {
                upsample_bilinear(&r.pixel_map, gt.height, gt.width)?
            };
            maps.push(map);
            gts.push(gt);
        }
        p_auroc = Some(pixel_auroc(&maps, &gts, None)?);
        pro = Some(aupro(&maps, &gts, fpr_limit)?);
    }
    Ok(ClassMetrics {
        class: class.to_string(),
        i_auroc,
        p_auroc,
        aupro: pro,
    })
}

/// [`evaluate`] with the default integration limit.
pub fn evaluate_default(class: &str, results: &[AnomalyResult], samples: &[Sample]) -> Result<ClassMetrics> {
    evaluate(class, results, samples, DEFAULT_FPR_LIMIT)
}
