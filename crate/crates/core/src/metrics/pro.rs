use serde::{Deserialize, Serialize};

use super::components::connected_components;
use super::roc::{descending_order, trapezoid};
use crate::data::{Mask, ScoreMap};
use crate::error::{Error, Result};

pub const DEFAULT_FPR_LIMIT: f64 = 0.3;
pub const MAX_THRESHOLDS: usize = 50_000;

/// Per-region overlap against false-positive rate, from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProCurve {
    pub fpr: Vec<f64>,
    pub pro: Vec<f64>,
    pub fpr_limit: f64,
    /// Area up to `fpr_limit`, divided by `fpr_limit`.
    pub area: f64,
}

impl ProCurve {
    /// Unnormalized area under the curve up to `limit`, interpolating the
    /// curve linearly at the limit.
    pub fn integral(&self, limit: f64) -> f64 {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (i, (&f, &p)) in self.fpr.iter().zip(&self.pro).enumerate() {
            if f <= limit {
                x.push(f);
                y.push(p);
                continue;
            }
            let (f0, p0) = (self.fpr[i - 1], self.pro[i - 1]);
            x.push(limit);
            y.push(p0 + (p - p0) * (limit - f0) / (f - f0));
            break;
        }
        trapezoid(&x, &y)
    }
}

pub fn pro_curve(maps: &[ScoreMap], gts: &[Mask], fpr_limit: f64) -> Result<ProCurve> {
    pro_curve_with(maps, gts, fpr_limit, MAX_THRESHOLDS)
}

/// As [`pro_curve`], keeping at most `max_thresholds` quantile-spaced unique
/// thresholds (highest and lowest always included).
pub fn pro_curve_with(maps: &[ScoreMap], gts: &[Mask], fpr_limit: f64, max_thresholds: usize) -> Result<ProCurve> {
    if !(fpr_limit > 0.0 && fpr_limit <= 1.0) {
        return Err(Error::Value(format!("fpr limit {fpr_limit} must be in (0, 1]")));
    }
    if maps.len() != gts.len() {
        return Err(Error::Shape(format!("{} score maps for {} masks", maps.len(), gts.len())));
    }
    // Per pixel: score and component id (usize::MAX for negatives).
    let mut scores = Vec::new();
    let mut region = Vec::new();
    let mut region_size = Vec::new();
    for (i, (map, gt)) in maps.iter().zip(gts).enumerate() {
        if map.shape() != (gt.height, gt.width) {
            return Err(Error::Shape(format!(
                "score map {i} is {:?} but its mask is {}x{}",
                map.shape(),
                gt.height,
                gt.width
            )));
        }
        if let Some(p) = map.data.iter().position(|s| !s.is_finite()) {
            return Err(Error::Value(format!("non-finite score in map {i} at pixel {p}")));
        }
        let base = scores.len();
        scores.extend_from_slice(&map.data);
        region.resize(scores.len(), usize::MAX);
        for comp in connected_components(gt) {
            for &p in &comp {
                region[base + p] = region_size.len();
            }
            region_size.push(comp.len());
        }
    }
    let n_regions = region_size.len();
    let negatives = region.iter().filter(|&&r| r == usize::MAX).count();
    if n_regions == 0 {
        return Err(Error::Value("no anomalous ground-truth component".into()));
    }
    if negatives == 0 {
        return Err(Error::Value("no negative pixels".into()));
    }

    let order = descending_order(&scores);
    let mut unique = 0usize;
    for (k, &i) in order.iter().enumerate() {
        if k == 0 || scores[i] != scores[order[k - 1]] {
            unique += 1;
        }
    }
    let keep = |u: usize| -> bool {
        if unique <= max_thresholds || max_thresholds < 2 {
            return true;
        }
        // u is kept when it is the rounded position of some quantile step.
        let step = (unique - 1) as f64 / (max_thresholds - 1) as f64;
        let j = (u as f64 / step).round();
        (j * step).round() as usize == u
    };

    let mut fpr = vec![0.0];
    let mut pro = vec![0.0];
    let mut fp = 0usize;
    let mut overlap = 0.0f64;
    let mut u = 0usize;
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            match region[order[k]] {
                usize::MAX => fp += 1,
                r => overlap += 1.0 / region_size[r] as f64,
            }
            k += 1;
        }
        if keep(u) || k == order.len() {
            fpr.push(fp as f64 / negatives as f64);
            pro.push((overlap / n_regions as f64).min(1.0));
        }
        u += 1;
    }
    // Accumulated reciprocals may fall short of 1 by rounding.
    *pro.last_mut().expect("non-empty") = 1.0;
    let mut curve = ProCurve {
        fpr,
        pro,
        fpr_limit,
        area: 0.0,
    };
    curve.area = curve.integral(fpr_limit) / fpr_limit;
    Ok(curve)
}

/// Normalized area under the per-region-overlap curve up to `fpr_limit`.
pub fn aupro(maps: &[ScoreMap], gts: &[Mask], fpr_limit: f64) -> Result<f64> {
    Ok(pro_curve(maps, gts, fpr_limit)?.area)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> (ScoreMap, Mask) {
        let mut gt = Mask::empty(8, 8);
        for r in 2..5 {
            for c in 3..6 {
                gt.data[r * 8 + c] = true;
            }
        }
        let map = ScoreMap::new(8, 8, gt.data.iter().map(|&b| b as u8 as f64).collect()).unwrap();
        (map, gt)
    }

    #[test]
    fn indicator_and_inverted_indicator() {
        let (map, gt) = square();
        assert_eq!(aupro(&[map.clone()], &[gt.clone()], 0.3).unwrap(), 1.0);
        let inv = map.map(|v| 1.0 - v);
        assert_eq!(aupro(&[inv], &[gt], 0.3).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let (map, gt) = square();
        assert!(matches!(aupro(&[map.clone()], &[Mask::empty(8, 8)], 0.3), Err(Error::Value(_))));
        assert!(matches!(aupro(&[map.clone()], &[gt.clone()], 0.0), Err(Error::Value(_))));
        let all = Mask::new(8, 8, vec![true; 64]).unwrap();
        assert!(matches!(aupro(&[map], &[all], 0.3), Err(Error::Value(_))));
    }

    #[test]
    fn thinned_curve_keeps_endpoints_and_stays_close() {
        let w = 300;
        let mut gt = Mask::empty(1, w);
        gt.data[100..140].iter_mut().for_each(|b| *b = true);
        let map = ScoreMap::new(1, w, (0..w).map(|c| ((c * 7919) % w) as f64).collect()).unwrap();
        let full = pro_curve_with(&[map.clone()], &[gt.clone()], 1.0, usize::MAX).unwrap();
        let thin = pro_curve_with(&[map], &[gt], 1.0, 20).unwrap();
        assert_eq!(thin.fpr.len(), 21);
        assert_eq!(thin.fpr[1], full.fpr[1]);
        assert_eq!(thin.fpr.last(), full.fpr.last());
        assert!((thin.area - full.area).abs() < 0.05);
    }
}
