use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fusion::{CorrectionRule, OneClass, OneClassConfig};
use super::phi::{phi_psi, Psi};
use super::postprocess::PostprocessConfig;
use crate::bank::MemoryBank;
use crate::data::cmft::save_f64_tensor;
use crate::data::{FeatureMap, Modality, Sample, ScoreMap};
use crate::distill::{hallucinate, DenseNet, Route};
use crate::error::{Error, Result};
use crate::extractor::Extractors;
use crate::preprocess::io::write_gray_png;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum InferenceMode {
    /// One modality, scored against its own bank; no fusion.
    Single { modality: Modality },
    /// Both real modalities, fused.
    Dual,
    /// Main modality real, the other hallucinated by a `route` network, fused.
    Mtfi { route: Route, main: Modality },
}

impl InferenceMode {
    pub fn modalities(self) -> Vec<Modality> {
        match self {
            InferenceMode::Single { modality } => vec![modality],
            _ => vec![Modality::Pc, Modality::Rgb],
        }
    }

    pub fn fused(self) -> bool {
        !matches!(self, InferenceMode::Single { .. })
    }
}

impl std::fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InferenceMode::Single { modality } => write!(f, "single-{modality}"),
            InferenceMode::Dual => f.write_str("dual"),
            InferenceMode::Mtfi { route, main } => write!(f, "mtfi-{route}-{main}"),
        }
    }
}

impl std::str::FromStr for InferenceMode {
    type Err = Error;

    /// `single-pc`, `single-rgb`, `dual`, or `mtfi-<route>-<main>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let parts: Vec<&str> = lower.split(['-', ':']).collect();
        match parts.as_slice() {
            ["single", m] => Ok(InferenceMode::Single { modality: m.parse()? }),
            ["dual"] => Ok(InferenceMode::Dual),
            ["mtfi", r, m] => Ok(InferenceMode::Mtfi {
                route: r.parse()?,
                main: m.parse()?,
            }),
            _ => Err(Error::Usage(format!(
                "unknown inference mode `{s}` (single-pc, single-rgb, dual, mtfi-<route>-<main>)"
            ))),
        }
    }
}

/// Per-modality memory banks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Banks {
    pub pc: Option<MemoryBank>,
    pub rgb: Option<MemoryBank>,
}

impl Banks {
    pub fn get(&self, modality: Modality) -> Option<&MemoryBank> {
        match modality {
            Modality::Pc => self.pc.as_ref(),
            Modality::Rgb => self.rgb.as_ref(),
        }
    }

    pub fn require(&self, modality: Modality) -> Result<&MemoryBank> {
        self.get(modality)
            .ok_or_else(|| Error::Config(format!("no {modality} memory bank")))
    }

    pub fn set(&mut self, bank: MemoryBank) {
        match bank.modality {
            Modality::Pc => self.pc = Some(bank),
            Modality::Rgb => self.rgb = Some(bank),
        }
    }
}

/// Correction factors plus the image- and pixel-level one-class models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub alpha: f64,
    pub beta: f64,
    pub rule: CorrectionRule,
    pub image: OneClass,
    pub pixel: OneClass,
    pub config: OneClassConfig,
}

impl FusionModel {
    pub fn image_score(&self, psi_pc: f64, psi_rgb: f64) -> f64 {
        self.image.score([self.alpha * psi_pc, self.beta * psi_rgb])
    }

    pub fn pixel_map(&self, phi_pc: &ScoreMap, phi_rgb: &ScoreMap) -> Result<ScoreMap> {
        if phi_pc.shape() != phi_rgb.shape() {
            return Err(Error::Shape(format!(
                "pixel maps {:?} and {:?} differ",
                phi_pc.shape(),
                phi_rgb.shape()
            )));
        }
        let data = phi_pc
            .data
            .iter()
            .zip(&phi_rgb.data)
            .map(|(&p, &r)| self.pixel.score([self.alpha * p, self.beta * r]))
            .collect();
        ScoreMap::new(phi_pc.height, phi_pc.width, data)
    }
}

/// Raw scores of one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityScores {
    pub psi: Psi,
    /// Grid-resolution nearest-neighbour distances.
    pub phi: ScoreMap,
    /// Whether the features were hallucinated.
    pub hallucinated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyResult {
    pub id: String,
    pub mode: InferenceMode,
    pub image_score: f64,
    pub pixel_map: ScoreMap,
    pub pc: Option<ModalityScores>,
    pub rgb: Option<ModalityScores>,
}

/// JSON summary of an [`AnomalyResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub id: String,
    pub mode: InferenceMode,
    pub image_score: f64,
    pub psi_pc: Option<f64>,
    pub psi_rgb: Option<f64>,
}

impl AnomalyResult {
    pub fn scores(&self, modality: Modality) -> Option<&ModalityScores> {
        match modality {
            Modality::Pc => self.pc.as_ref(),
            Modality::Rgb => self.rgb.as_ref(),
        }
    }

    pub fn summary(&self) -> ResultSummary {
        ResultSummary {
            id: self.id.clone(),
            mode: self.mode,
            image_score: self.image_score,
            psi_pc: self.pc.as_ref().map(|s| s.psi.score),
            psi_rgb: self.rgb.as_ref().map(|s| s.psi.score),
        }
    }

    /// Writes `<stem>.json`, the pixel map as `<stem>.cmft` and, when
    /// `render` is set, a min-max normalized `<stem>.png`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str, render: bool) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_vec_pretty(&self.summary())?).map_err(|e| Error::file(&json, e))?;
        let m = &self.pixel_map;
        save_f64_tensor(m.height, m.width, 1, &m.data, dir.join(format!("{stem}.cmft")))?;
        if render {
            let lo = m.data.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = m.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let norm: Vec<f64> = m.data.iter().map(|v| (v - lo) / span).collect();
            write_gray_png(&norm, m.height, m.width, dir.join(format!("{stem}.png")))?;
        }
        Ok(())
    }
}

/// Everything inference reads. Only the parts the mode needs must be present.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    pub banks: &'a Banks,
    pub fusion: Option<&'a FusionModel>,
    pub distiller: Option<&'a DenseNet>,
    pub extractors: &'a Extractors,
    pub post: &'a PostprocessConfig,
}

fn score_modality(features: &FeatureMap, bank: &MemoryBank, hallucinated: bool) -> Result<ModalityScores> {
    let (phi, psi) = phi_psi(features, bank)?;
    Ok(ModalityScores { psi, phi, hallucinated })
}

impl Scorer<'_> {
    /// Checks that banks, fusion and distiller required by `mode` exist.
    pub fn check(&self, mode: InferenceMode) -> Result<()> {
        if mode.fused() && self.fusion.is_none() {
            return Err(Error::Config(format!("mode {mode} needs a fusion model")));
        }
        self.check_inputs(mode)
    }

    /// As [`Scorer::check`], without the fusion model.
    pub fn check_inputs(&self, mode: InferenceMode) -> Result<()> {
        for m in mode.modalities() {
            self.banks.require(m)?;
        }
        if let InferenceMode::Mtfi { route, main } = mode {
            match self.distiller {
                None => return Err(Error::Config(format!("mode {mode} needs a {route} distillation network"))),
                Some(net) if net.route != route || net.main != main => {
                    return Err(Error::Config(format!(
                        "mode {mode} needs a {route} network from {main}, got {} from {}",
                        net.route, net.main
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Raw per-modality scores: real features for available modalities,
    /// hallucinated ones for the missing modality in MTFI mode.
    pub fn modality_scores(&self, sample: &Sample, mode: InferenceMode) -> Result<(Option<ModalityScores>, Option<ModalityScores>)> {
        self.check_inputs(mode)?;
        let real = |m: Modality| -> Result<ModalityScores> {
            score_modality(&*self.extractors.features(sample, m)?, self.banks.require(m)?, false)
        };
        let mut pc = None;
        let mut rgb = None;
        let mut put = |m: Modality, s: ModalityScores| match m {
            Modality::Pc => pc = Some(s),
            Modality::Rgb => rgb = Some(s),
        };
        match mode {
            InferenceMode::Single { modality } => put(modality, real(modality)?),
            InferenceMode::Dual => {
                put(Modality::Pc, real(Modality::Pc)?);
                put(Modality::Rgb, real(Modality::Rgb)?);
            }
            InferenceMode::Mtfi { main, .. } => {
                put(main, real(main)?);
                let net = self.distiller.expect("checked");
                let other = main.other();
                let fake = hallucinate(net, sample, self.extractors)?;
                put(other, score_modality(&fake, self.banks.require(other)?, true)?);
            }
        }
        Ok((pc, rgb))
    }

    pub fn infer(&self, sample: &Sample, mode: InferenceMode) -> Result<AnomalyResult> {
        self.check(mode)?;
        let (pc, rgb) = self.modality_scores(sample, mode)?;
        let (image_score, pixel_map) = match mode {
            InferenceMode::Single { modality } => {
                let s = match modality {
                    Modality::Pc => pc.as_ref(),
                    Modality::Rgb => rgb.as_ref(),
                }
                .expect("scored");
                (s.psi.score, self.post.apply(&s.phi)?)
            }
            _ => {
                let fusion = self.fusion.expect("checked");
                let (p, r) = (pc.as_ref().expect("scored"), rgb.as_ref().expect("scored"));
                let image = fusion.image_score(p.psi.score, r.psi.score);
                let pixel = fusion.pixel_map(&self.post.apply(&p.phi)?, &self.post.apply(&r.phi)?)?;
                (image, pixel)
            }
        };
        Ok(AnomalyResult {
            id: sample.id.clone(),
            mode,
            image_score,
            pixel_map,
            pc,
            rgb,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_strings_round_trip() {
        for mode in [
            InferenceMode::Single { modality: Modality::Pc },
            InferenceMode::Single { modality: Modality::Rgb },
            InferenceMode::Dual,
            InferenceMode::Mtfi {
                route: Route::FtoF,
                main: Modality::Pc,
            },
            InferenceMode::Mtfi {
                route: Route::ItoF,
                main: Modality::Rgb,
            },
        ] {
            assert_eq!(mode.to_string().parse::<InferenceMode>().unwrap(), mode);
        }
        assert!("triple".parse::<InferenceMode>().is_err());
    }

    #[test]
    fn missing_parts_are_config_errors() {
        let banks = Banks::default();
        let ex = Extractors::synthetic(0);
        let post = PostprocessConfig::default();
        let scorer = Scorer {
            banks: &banks,
            fusion: None,
            distiller: None,
            extractors: &ex,
            post: &post,
        };
        let err = scorer.check(InferenceMode::Single { modality: Modality::Pc }).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("pc")));
    }
}
