use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::net::{net_gradient, DenseNet, Route};
use super::pairs::{build_pairs, TrainingPairs};
use crate::data::{Modality, Sample};
use crate::error::{Error, Result};
use crate::extractor::Extractors;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// `None` picks the route default (3e-4 for ItoF, 5e-4 otherwise).
    pub learning_rate: Option<f64>,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Hidden layer widths; `None` picks the route default.
    pub hidden: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: None,
            epochs: 100,
            warmup_epochs: 10,
            batch_size: 32,
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint_every: 10,
            hidden: None,
        }
    }
}

impl TrainConfig {
    pub fn learning_rate_for(&self, route: Route) -> f64 {
        self.learning_rate.unwrap_or_else(|| route.default_learning_rate())
    }

    pub fn hidden_for(&self, route: Route) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| route.default_hidden())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("epochs, batch size and checkpoint interval must be >= 1".into()));
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::Config(format!(
                "warm-up of {} epochs exceeds {} epochs",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.learning_rate.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Config("Adam betas must be in [0, 1) and eps > 0".into()));
        }
        if self.hidden.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// Learning rate for the 0-based optimizer `step`: linear warm-up to `base`
/// over `warmup_steps`, then constant.
pub fn warmup_lr(base: f64, step: usize, warmup_steps: usize) -> f64 {
    if step >= warmup_steps {
        base
    } else {
        base * (step + 1) as f64 / warmup_steps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: DenseNet,
    /// 1-based epoch after which the snapshot was taken.
    pub epoch: usize,
    /// Mean training loss over that epoch.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    /// Mean training loss of every epoch.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("training records at least one checkpoint")
    }
}

const SHUFFLE_STREAM: u64 = 1;

/// Trains a fresh network on explicit pairs. Snapshots are taken every
/// `checkpoint_every` epochs and after the final epoch.
pub fn train_on_pairs(route: Route, main: Modality, pairs: &TrainingPairs, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    let mut dims = vec![pairs.in_dim];
    dims.extend(cfg.hidden_for(route));
    dims.push(pairs.out_dim);
    let net = DenseNet::new(route, main, &dims, cfg.seed)?;
    train_net(net, pairs, cfg)
}

/// Trains `net` in place of a fresh initialization.
pub fn train_net(mut net: DenseNet, pairs: &TrainingPairs, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pairs.in_dim != net.in_dim() || pairs.out_dim != net.out_dim() {
        return Err(Error::Shape(format!(
            "{} -> {} pairs for a {} -> {} network",
            pairs.in_dim,
            pairs.out_dim,
            net.in_dim(),
            net.out_dim()
        )));
    }
    let n = pairs.len();
    let base_lr = cfg.learning_rate_for(net.route);
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let warmup_steps = cfg.warmup_epochs * steps_per_epoch;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut state = AdamState::new(&net);
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut checkpoints = Vec::new();
    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let (x, t) = pairs.batch(idx);
            let (grads, loss) = net_gradient(&net, x.view(), t.view())?;
            total += loss * idx.len() as f64;
            adam_step(&mut net, &mut state, &grads, warmup_lr(base_lr, step, warmup_steps), &cfg.adam)?;
            step += 1;
        }
        let loss = total / n as f64;
        if !loss.is_finite() {
            return Err(Error::Value(format!("training diverged at epoch {epoch}")));
        }
        losses.push(loss);
        if epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs {
            checkpoints.push(Checkpoint {
                net: net.clone(),
                epoch,
                loss,
            });
        }
    }
    Ok(TrainOutcome { checkpoints, losses })
}

/// Builds the route's training pairs from normal samples and trains on them.
pub fn train_distiller(
    route: Route,
    main: Modality,
    samples: &[Sample],
    extractors: &Extractors,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pairs = build_pairs(route, main, samples, extractors)?;
    train_on_pairs(route, main, &pairs, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_dataset, SynthConfig};
    use crate::data::FeatureMap;
    use crate::distill::hallucinate::hallucinate_features;
    use rand::Rng;

    fn identity_pairs(n: usize, d: usize, seed: u64) -> TrainingPairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f32> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        TrainingPairs::new(d, d, x.clone(), x).unwrap()
    }

    fn small(epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: Some(1e-2),
            epochs,
            warmup_epochs: 2,
            batch_size: 16,
            hidden: Some(vec![64]),
            checkpoint_every: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn warmup_is_linear_then_constant() {
        assert_eq!(warmup_lr(1.0, 0, 4), 0.25);
        assert_eq!(warmup_lr(1.0, 3, 4), 1.0);
        assert_eq!(warmup_lr(1.0, 10, 4), 1.0);
        assert_eq!(warmup_lr(2.0, 0, 0), 2.0);
    }

    #[test]
    fn identity_task_converges() {
        let pairs = identity_pairs(1024, 4, 1);
        let out = train_on_pairs(Route::FtoF, Modality::Pc, &pairs, &small(20)).unwrap();
        assert_eq!(out.losses.len(), 20);
        assert!(*out.losses.last().unwrap() < 1e-4, "{:?}", out.losses);
        let after_warmup = &out.losses[2..];
        let non_increasing = after_warmup.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(non_increasing as f64 >= 0.95 * (after_warmup.len() - 1) as f64 - 1.0);

        let map = FeatureMap::new(pairs.len(), 1, 4, (0..pairs.len()).flat_map(|i| pairs.input(i).to_vec()).collect()).unwrap();
        let y = hallucinate_features(&out.last().net, &map).unwrap();
        let mean_abs: f64 =
            map.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / map.data().len() as f64;
        assert!(mean_abs < 1e-2, "{mean_abs}");
    }

    #[test]
    fn linear_identity_hallucinates_every_cell() {
        let pairs = identity_pairs(1024, 4, 1);
        let cfg = TrainConfig {
            hidden: Some(vec![]),
            learning_rate: Some(3e-2),
            ..small(20)
        };
        let out = train_on_pairs(Route::FtoF, Modality::Pc, &pairs, &cfg).unwrap();
        let map = FeatureMap::new(pairs.len(), 1, 4, (0..pairs.len()).flat_map(|i| pairs.input(i).to_vec()).collect()).unwrap();
        let y = hallucinate_features(&out.last().net, &map).unwrap();
        for (a, b) in map.cells().zip(y.cells()) {
            assert!(a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-2));
        }
    }

    #[test]
    fn checkpoints_follow_the_interval_and_are_reproducible() {
        let pairs = identity_pairs(64, 3, 2);
        let a = train_on_pairs(Route::FtoF, Modality::Rgb, &pairs, &small(12)).unwrap();
        let b = train_on_pairs(Route::FtoF, Modality::Rgb, &pairs, &small(12)).unwrap();
        let epochs: Vec<usize> = a.checkpoints.iter().map(|c| c.epoch).collect();
        assert_eq!(epochs, vec![5, 10, 12]);
        assert_eq!(a, b);
        let mut other = small(12);
        other.seed = 1;
        assert_ne!(train_on_pairs(Route::FtoF, Modality::Rgb, &pairs, &other).unwrap(), a);
    }

    #[test]
    fn config_validation() {
        let mut c = small(5);
        c.warmup_epochs = 6;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert_eq!(TrainConfig::default().learning_rate_for(Route::ItoF), 3e-4);
        assert_eq!(TrainConfig::default().learning_rate_for(Route::FtoF), 5e-4);
    }

    #[test]
    fn fully_coupled_synthetic_ftof_is_learnable() {
        let data = SynthConfig {
            cross_modal_coupling: 1.0,
            ..SynthConfig::default()
        };
        let (train, _) = generate_synthetic_dataset(&data).unwrap();
        let cfg = TrainConfig {
            learning_rate: Some(2e-3),
            epochs: 80,
            warmup_epochs: 3,
            hidden: Some(vec![192, 192]),
            ..TrainConfig::default()
        };
        let out = train_distiller(Route::FtoF, Modality::Pc, &train, &Extractors::synthetic(0), &cfg).unwrap();
        assert!(*out.losses.last().unwrap() < 1e-3, "{:?}", out.losses.last());
    }
}
