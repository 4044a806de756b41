use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<(Array2<f64>, Array1<f64>)>,
    pub v: Vec<(Array2<f64>, Array1<f64>)>,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &DenseNet) -> Self {
        let zeros: Vec<_> = net
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

#[inline]
pub(crate) fn adam_update(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, c1: f64, c2: f64, cfg: &AdamConfig) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

/// One bias-corrected Adam step with learning rate `lr`.
pub fn adam_step(net: &mut DenseNet, state: &mut AdamState, grads: &Gradients, lr: f64, cfg: &AdamConfig) -> Result<()> {
    let layers = net.layers_mut();
    if grads.layers.len() != layers.len() || state.m.len() != layers.len() || state.v.len() != layers.len() {
        return Err(Error::Shape("gradients or optimizer state do not match the network".into()));
    }
    for (i, l) in layers.iter().enumerate() {
        let (gw, gb) = &grads.layers[i];
        let ok = |w: &Array2<f64>, b: &Array1<f64>| w.dim() == l.weight.dim() && b.len() == l.bias.len();
        if !ok(gw, gb) || !ok(&state.m[i].0, &state.m[i].1) || !ok(&state.v[i].0, &state.v[i].1) {
            return Err(Error::Shape(format!("layer {i}: gradient or moment shape mismatch")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, l) in layers.iter_mut().enumerate() {
        let (gw, gb) = &grads.layers[i];
        let (mw, mb) = &mut state.m[i];
        let (vw, vb) = &mut state.v[i];
        let params = l.weight.iter_mut().chain(l.bias.iter_mut());
        let ms = mw.iter_mut().chain(mb.iter_mut());
        let vs = vw.iter_mut().chain(vb.iter_mut());
        let gs = gw.iter().chain(gb.iter());
        for (((p, m), v), g) in params.zip(ms).zip(vs).zip(gs) {
            adam_update(p, m, v, *g, lr, c1, c2, cfg);
        }
    }
    Ok(())
}
