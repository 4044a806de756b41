use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Modality;
use crate::error::{Error, Result};

/// Which cross-modal mapping a network implements. The input side is always
/// the main (available) modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    /// Feature cell to feature cell.
    FtoF,
    /// Feature cell to a raw pixel block of the other modality.
    FtoI,
    /// Raw pixel block to a feature cell of the other modality.
    ItoF,
}

impl Route {
    pub const ALL: [Route; 3] = [Route::FtoF, Route::FtoI, Route::ItoF];

    pub fn as_str(self) -> &'static str {
        match self {
            Route::FtoF => "FtoF",
            Route::FtoI => "FtoI",
            Route::ItoF => "ItoF",
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            Route::ItoF => 3e-4,
            _ => 5e-4,
        }
    }

    pub fn default_hidden(self) -> Vec<usize> {
        match self {
            Route::FtoF => vec![1920, 1920],
            _ => vec![1024, 1024],
        }
    }
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ftof" => Ok(Route::FtoF),
            "ftoi" => Ok(Route::FtoI),
            "itof" => Ok(Route::ItoF),
            other => Err(Error::Usage(format!("unknown route `{other}` (FtoF, FtoI, ItoF)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `in_dim x out_dim`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Fully connected network, ReLU between layers and identity at the output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub route: Route,
    /// Modality of the network input.
    pub main: Modality,
    layers: Vec<Layer>,
}

/// Per-layer `(weight, bias)` gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

impl DenseNet {
    /// Network with layer widths `dims = [in, hidden.., out]`, initialized
    /// uniformly in `±1/sqrt(fan_in)`.
    pub fn new(route: Route, main: Modality, dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer widths {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound));
                let bias = Array1::from_shape_simple_fn(w[1], || rng.random_range(-bound..bound));
                Layer {
                    weight,
                    bias,
                    activation: if i + 1 == n {
                        Activation::Identity
                    } else {
                        Activation::Relu
                    },
                }
            })
            .collect();
        Ok(Self { route, main, layers })
    }

    pub fn from_layers(route: Route, main: Modality, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("a network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias of length {} for {} outputs",
                    l.bias.len(),
                    l.out_dim()
                )));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} takes {} inputs but layer {} yields {}",
                    l.in_dim(),
                    i - 1,
                    layers[i - 1].out_dim()
                )));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Value(format!("layer {i} has non-finite parameters")));
            }
        }
        if layers.last().expect("non-empty").activation != Activation::Identity {
            return Err(Error::Shape("the last layer must have identity activation".into()));
        }
        Ok(Self { route, main, layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.in_dim()];
        d.extend(self.layers.iter().map(Layer::out_dim));
        d
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All parameters, per layer: weight row-major, then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "{} parameter values for a network with {}",
                values.len(),
                self.n_params()
            )));
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Outputs for a batch of inputs (one per row).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input of width {} for a network taking {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        let mut a = x.to_owned();
        for l in &self.layers {
            a = a.dot(&l.weight) + &l.bias;
            if l.activation == Activation::Relu {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(a)
    }
}

pub fn net_forward(net: &DenseNet, x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite network input".into()));
    }
    let view = ArrayView2::from_shape((1, x.len()), x).expect("one row");
    Ok(net.forward_batch(view)?.into_raw_vec_and_offset().0)
}

/// Loss and parameter gradients for a batch. The loss is the mean over rows
/// of `|net(x) - t|^2 / out_dim`.
pub fn net_gradient(net: &DenseNet, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(Gradients, f64)> {
    let b = inputs.nrows();
    if b == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if targets.nrows() != b || targets.ncols() != net.out_dim() || inputs.ncols() != net.in_dim() {
        return Err(Error::Shape(format!(
            "batch {:?} -> {:?} for a {} -> {} network",
            inputs.dim(),
            targets.dim(),
            net.in_dim(),
            net.out_dim()
        )));
    }
    // Activations of every layer, input first.
    let mut acts = vec![inputs.to_owned()];
    for l in &net.layers {
        let mut z = acts.last().expect("non-empty").dot(&l.weight) + &l.bias;
        if l.activation == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(z);
    }
    let out = acts.last().expect("non-empty");
    let diff = out - &targets;
    let out_dim = net.out_dim() as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / (b as f64 * out_dim);
    let mut delta = diff * (2.0 / (b as f64 * out_dim));
    let mut grads = Vec::with_capacity(net.layers.len());
    for (i, l) in net.layers.iter().enumerate().rev() {
        if l.activation == Activation::Relu {
            // ReLU outputs are positive exactly where the unit is active.
            delta.zip_mut_with(&acts[i + 1], |d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        let gw = acts[i].t().dot(&delta);
        let gb = delta.sum_axis(Axis(0));
        if i > 0 {
            delta = delta.dot(&l.weight.t());
        }
        grads.push((gw, gb));
    }
    grads.reverse();
    Ok((Gradients { layers: grads }, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn oracle_forward(net: &DenseNet, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in net.layers() {
            let mut z = vec![0.0; l.out_dim()];
            for (j, zj) in z.iter_mut().enumerate() {
                let mut s = l.bias[j];
                for (i, ai) in a.iter().enumerate() {
                    s += ai * l.weight[[i, j]];
                }
                *zj = if l.activation == Activation::Relu { s.max(0.0) } else { s };
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_net_and_identity_layer() {
        let mut net = DenseNet::new(Route::FtoF, Modality::Pc, &[3, 5, 2], 1).unwrap();
        let zeros = vec![0.0; net.n_params()];
        net.set_parameters(&zeros).unwrap();
        assert_eq!(net_forward(&net, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);

        let id = Layer {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        };
        let net = DenseNet::from_layers(Route::FtoF, Modality::Pc, vec![id]).unwrap();
        assert_eq!(net_forward(&net, &[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn forward_matches_hand_rolled_product() {
        let net = DenseNet::new(Route::FtoF, Modality::Rgb, &[7, 11, 9, 4], 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = net_forward(&net, &x).unwrap();
            for (g, w) in got.iter().zip(oracle_forward(&net, &x)) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let net = DenseNet::new(Route::FtoF, Modality::Rgb, &[3, 2], 0).unwrap();
        assert!(matches!(net_forward(&net, &[1.0]), Err(Error::Shape(_))));
        let x = Array2::<f64>::zeros((2, 3));
        let t = Array2::<f64>::zeros((2, 3));
        assert!(matches!(net_gradient(&net, x.view(), t.view()), Err(Error::Shape(_))));
        let bad = Layer {
            weight: Array2::zeros((2, 2)),
            bias: Array1::zeros(2),
            activation: Activation::Relu,
        };
        assert!(DenseNet::from_layers(Route::FtoF, Modality::Rgb, vec![bad]).is_err());
    }

    #[test]
    fn perfect_fit_has_zero_loss_and_gradient() {
        let net = DenseNet::new(Route::FtoF, Modality::Pc, &[4, 6, 3], 9).unwrap();
        let x = array![[0.1, -0.4, 0.9, 0.3], [1.0, 0.0, -1.0, 0.5]];
        let t = net.forward_batch(x.view()).unwrap();
        let (g, loss) = net_gradient(&net, x.view(), t.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_closed_form() {
        let net = DenseNet::new(Route::FtoF, Modality::Pc, &[3, 2], 5).unwrap();
        let x = [0.5, -1.5, 2.0];
        let t = [1.0, -1.0];
        let xa = Array2::from_shape_vec((1, 3), x.to_vec()).unwrap();
        let ta = Array2::from_shape_vec((1, 2), t.to_vec()).unwrap();
        let (g, _) = net_gradient(&net, xa.view(), ta.view()).unwrap();
        let y = net_forward(&net, &x).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let want = 2.0 * (y[j] - t[j]) * x[i] / 2.0;
                assert!((g.layers[0].0[[i, j]] - want).abs() < 1e-14);
            }
        }
        for j in 0..2 {
            assert!((g.layers[0].1[j] - (y[j] - t[j])).abs() < 1e-14);
        }
    }

    #[test]
    fn route_parsing() {
        assert_eq!("ftof".parse::<Route>().unwrap(), Route::FtoF);
        assert_eq!("ItoF".parse::<Route>().unwrap(), Route::ItoF);
        assert!("xtoy".parse::<Route>().is_err());
    }
}
