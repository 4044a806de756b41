use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::net::{Activation, DenseNet, Layer, Route};
use super::train::Checkpoint;
use crate::data::cmft::{load_f64_tensor, save_f64_tensor};
use crate::data::Modality;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub route: Route,
    pub main: Modality,
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub epoch: usize,
    pub loss: f64,
    pub seed: u64,
    /// Training configuration, stored verbatim.
    #[serde(default)]
    pub config: serde_json::Value,
}

/// Writes one `CMFT` file per weight and bias tensor plus `manifest.json`.
pub fn save_checkpoint(ckpt: &Checkpoint, seed: u64, config: serde_json::Value, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    for (i, l) in ckpt.net.layers().iter().enumerate() {
        let w: Vec<f64> = l.weight.iter().copied().collect();
        save_f64_tensor(l.in_dim(), l.out_dim(), 1, &w, dir.join(format!("layer{i}_weight.cmft")))?;
        save_f64_tensor(1, l.out_dim(), 1, l.bias.as_slice().expect("contiguous"), dir.join(format!("layer{i}_bias.cmft")))?;
    }
    let manifest = CheckpointManifest {
        route: ckpt.net.route,
        main: ckpt.net.main,
        dims: ckpt.net.dims(),
        activations: ckpt.net.layers().iter().map(|l| l.activation).collect(),
        epoch: ckpt.epoch,
        loss: ckpt.loss,
        seed,
        config,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::file(&path, e))
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(Checkpoint, CheckpointManifest)> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = std::fs::read(&path).map_err(|e| Error::file(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&text)?;
    if manifest.dims.len() != manifest.activations.len() + 1 {
        return Err(Error::Format("checkpoint manifest: dims and activations disagree".into()));
    }
    let mut layers = Vec::new();
    for (i, act) in manifest.activations.iter().enumerate() {
        let (din, dout) = (manifest.dims[i], manifest.dims[i + 1]);
        let (hw, w) = load_f64_tensor(dir.join(format!("layer{i}_weight.cmft")))?;
        let (hb, b) = load_f64_tensor(dir.join(format!("layer{i}_bias.cmft")))?;
        if (hw.rows as usize, hw.cols as usize) != (din, dout) || hb.cols as usize != dout {
            return Err(Error::Format(format!("layer {i} tensors do not match the manifest dims")));
        }
        layers.push(Layer {
            weight: Array2::from_shape_vec((din, dout), w).expect("shape checked"),
            bias: Array1::from_vec(b),
            activation: *act,
        });
    }
    let net = DenseNet::from_layers(manifest.route, manifest.main, layers)?;
    Ok((
        Checkpoint {
            net,
            epoch: manifest.epoch,
            loss: manifest.loss,
        },
        manifest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let net = DenseNet::new(Route::ItoF, Modality::Rgb, &[48, 7, 5], 11).unwrap();
        let ckpt = Checkpoint {
            net,
            epoch: 3,
            loss: 0.125,
        };
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&ckpt, 11, serde_json::json!({"epochs": 3}), dir.path()).unwrap();
        let (back, manifest) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(manifest.dims, vec![48, 7, 5]);
        assert_eq!(manifest.config["epochs"], 3);
    }
}
