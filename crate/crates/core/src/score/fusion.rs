use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a modality's correction factor is derived from its training scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionRule {
    #[default]
    Mean,
    Median,
    Max,
}

/// `1 / statistic(scores)`, or 1 when the statistic is 0.
pub fn correction_factor(scores: &[f64], rule: CorrectionRule) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Data("no training scores for the correction factor".into()));
    }
    if let Some(s) = scores.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::Value(format!("training score {s} is not a finite non-negative value")));
    }
    let stat = match rule {
        CorrectionRule::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
        CorrectionRule::Max => scores.iter().copied().fold(0.0, f64::max),
        CorrectionRule::Median => {
            let mut s = scores.to_vec();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            if n % 2 == 1 {
                s[n / 2]
            } else {
                (s[n / 2 - 1] + s[n / 2]) / 2.0
            }
        }
    };
    Ok(if stat == 0.0 { 1.0 } else { 1.0 / stat })
}

/// `(alpha, beta)` scaling the point-cloud and RGB scores.
pub fn fit_correction(train_psi_pc: &[f64], train_psi_rgb: &[f64], rule: CorrectionRule) -> Result<(f64, f64)> {
    Ok((correction_factor(train_psi_pc, rule)?, correction_factor(train_psi_rgb, rule)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OneClassConfig {
    pub nu: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for OneClassConfig {
    fn default() -> Self {
        Self {
            nu: 0.5,
            learning_rate: 1e-4,
            steps: 1000,
            seed: 0,
        }
    }
}

impl OneClassConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config(format!("nu {} must be in (0, 1]", self.nu)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.steps == 0 {
            return Err(Error::Config("one-class learning rate and steps must be positive".into()));
        }
        Ok(())
    }
}

/// Linear one-class model over 2-vectors of corrected scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneClass {
    pub w: [f64; 2],
    pub rho: f64,
}

impl OneClass {
    /// Signed distance to the learned boundary, `w . x - rho`.
    pub fn decision(&self, x: [f64; 2]) -> f64 {
        self.w[0] * x[0] + self.w[1] * x[1] - self.rho
    }

    /// Anomaly score `w . x`: larger corrected distances map to larger scores.
    #[inline]
    pub fn score(&self, x: [f64; 2]) -> f64 {
        self.w[0] * x[0] + self.w[1] * x[1]
    }
}

/// Fits a [`OneClass`] model by seeded SGD on
/// `nu/2 |w|^2 - nu rho + mean(max(0, rho - w . x))`.
/// Pairs are sorted first, so the result depends only on the multiset.
pub fn fit_one_class(pairs: &[[f64; 2]], cfg: &OneClassConfig) -> Result<OneClass> {
    cfg.validate()?;
    if pairs.len() < 2 {
        return Err(Error::Data(format!("one-class fit needs >= 2 pairs, got {}", pairs.len())));
    }
    if pairs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite one-class training input".into()));
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let n = sorted.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (nu, lr) = (cfg.nu, cfg.learning_rate);
    let mut w = [0.0f64; 2];
    let mut rho = 0.0f64;
    for _ in 0..cfg.steps {
        let u: f64 = rng.random();
        let x = sorted[((u * n as f64) as usize).min(n - 1)];
        let active = rho - (w[0] * x[0] + w[1] * x[1]) > 0.0;
        for k in 0..2 {
            let g = nu * w[k] - if active { x[k] } else { 0.0 };
            w[k] -= lr * g;
        }
        rho -= lr * (if active { 1.0 } else { 0.0 } - nu);
    }
    Ok(OneClass { w, rho })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correction_arithmetic() {
        assert_eq!(fit_correction(&[1.0, 3.0], &[0.5, 0.5], CorrectionRule::Mean).unwrap(), (0.5, 2.0));
        let (a, b) = fit_correction(&[2.0, 2.0], &[1.0, 3.0], CorrectionRule::Mean).unwrap();
        assert_eq!(a, b);
        assert_eq!(correction_factor(&[0.0, 0.0], CorrectionRule::Mean).unwrap(), 1.0);
        assert_eq!(correction_factor(&[1.0, 4.0, 2.0], CorrectionRule::Median).unwrap(), 0.5);
        assert_eq!(correction_factor(&[1.0, 4.0, 2.0], CorrectionRule::Max).unwrap(), 0.25);
        assert!(matches!(correction_factor(&[1.0, -0.1], CorrectionRule::Mean), Err(Error::Value(_))));
    }

    fn cluster() -> Vec<[f64; 2]> {
        (0..50)
            .map(|i| {
                let t = i as f64 * 0.37;
                [1.0 + 0.1 * t.sin(), 1.0 + 0.1 * t.cos()]
            })
            .collect()
    }

    #[test]
    fn far_point_scores_higher() {
        let m = fit_one_class(&cluster(), &OneClassConfig::default()).unwrap();
        assert!(m.w.iter().all(|&w| w >= 0.0));
        assert!(m.score([10.0, 10.0]) > m.score([1.0, 1.0]));
    }

    #[test]
    fn duplicated_or_permuted_pairs_give_the_same_model() {
        let pairs = cluster();
        let cfg = OneClassConfig::default();
        let base = fit_one_class(&pairs, &cfg).unwrap();
        let mut doubled = pairs.clone();
        doubled.extend(pairs.iter().rev());
        assert_eq!(fit_one_class(&doubled, &cfg).unwrap(), base);
    }

    #[test]
    fn too_few_pairs() {
        assert!(matches!(fit_one_class(&[[1.0, 1.0]], &OneClassConfig::default()), Err(Error::Data(_))));
    }

    #[test]
    fn seeds_agree_on_probe_rankings() {
        let pairs: Vec<[f64; 2]> = (0..40)
            .map(|i| [0.5 + (i as f64 * 0.7).sin().abs(), 0.5 + (i as f64 * 1.3).cos().abs()])
            .collect();
        let probe: Vec<[f64; 2]> = (0..10).map(|i| [i as f64 * 0.4, (9 - i) as f64 * 0.1 + i as f64 * 0.3]).collect();
        for s in 0..20u64 {
            let a = fit_one_class(&pairs, &OneClassConfig { seed: 2 * s, ..Default::default() }).unwrap();
            let b = fit_one_class(&pairs, &OneClassConfig { seed: 2 * s + 1, ..Default::default() }).unwrap();
            let (mut agree, mut total) = (0, 0);
            for i in 0..10 {
                for j in i + 1..10 {
                    let da = a.decision(probe[i]) - a.decision(probe[j]);
                    let db = b.decision(probe[i]) - b.decision(probe[j]);
                    total += 1;
                    if da.signum() == db.signum() {
                        agree += 1;
                    }
                }
            }
            assert!(agree * 10 >= total * 9, "seed pair {s}: {agree}/{total}");
        }
    }
}
