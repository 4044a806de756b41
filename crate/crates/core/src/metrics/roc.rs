use serde::{Deserialize, Serialize};

use crate::data::{Mask, ScoreMap};
use crate::error::{Error, Result};

/// ROC curve over the unique score thresholds, highest threshold first.
/// `fpr[0] == tpr[0] == 0` precedes the first threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub area: f64,
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Indices of `scores` sorted by descending score; equal scores keep input order.
pub(crate) fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Value(format!("non-finite score at index {i}")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Value("ROC needs both positive and negative labels".into()));
    }
    let order = descending_order(scores);
    let mut thresholds = Vec::new();
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(t);
        fpr.push(fp as f64 / negatives as f64);
        tpr.push(tp as f64 / positives as f64);
    }
    let area = trapezoid(&fpr, &tpr);
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        area,
    })
}

/// Area under the ROC curve; tied scores contribute half credit.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(roc_curve(scores, labels)?.area)
}

/// Pixel-level AUROC over the flattened concatenation of all maps. With
/// `keep`, only pixels set in the corresponding keep mask take part.
pub fn pixel_auroc(maps: &[ScoreMap], gts: &[Mask], keep: Option<&[Mask]>) -> Result<f64> {
    if maps.len() != gts.len() || keep.is_some_and(|k| k.len() != maps.len()) {
        return Err(Error::Shape("score maps and masks differ in count".into()));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, (map, gt)) in maps.iter().zip(gts).enumerate() {
        if map.shape() != (gt.height, gt.width) {
            return Err(Error::Shape(format!(
                "score map {i} is {:?} but its mask is {}x{}",
                map.shape(),
                gt.height,
                gt.width
            )));
        }
        let k = keep.map(|k| &k[i]);
        if k.is_some_and(|k| (k.height, k.width) != map.shape()) {
            return Err(Error::Shape(format!("keep mask {i} does not match its score map")));
        }
        for (p, (&s, &l)) in map.data.iter().zip(&gt.data).enumerate() {
            if k.is_none_or(|k| k.data[p]) {
                scores.push(s);
                labels.push(l);
            }
        }
    }
    auroc(&scores, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_and_tied() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap(), 0.0);
        assert_eq!(auroc(&[3.0; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_value_error() {
        assert!(matches!(auroc(&[1.0, 2.0], &[true, true]), Err(Error::Value(_))));
        assert!(matches!(auroc(&[1.0], &[true, false]), Err(Error::Shape(_))));
        assert!(matches!(auroc(&[f64::NAN, 1.0], &[true, false]), Err(Error::Value(_))));
    }

    #[test]
    fn curve_endpoints_and_monotonicity() {
        let c = roc_curve(&[0.3, 0.1, 0.7, 0.7, 0.2], &[true, false, false, true, true]).unwrap();
        assert_eq!((c.fpr[0], c.tpr[0]), (0.0, 0.0));
        assert_eq!((*c.fpr.last().unwrap(), *c.tpr.last().unwrap()), (1.0, 1.0));
        assert!(c.fpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.tpr.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(c.thresholds, vec![0.7, 0.3, 0.2, 0.1]);
    }

    #[test]
    fn pixel_auroc_keep_mask() {
        let map = ScoreMap::new(1, 4, vec![0.9, 0.1, 0.5, 0.95]).unwrap();
        let gt = Mask::new(1, 4, vec![true, false, false, false]).unwrap();
        let keep = Mask::new(1, 4, vec![true, true, true, false]).unwrap();
        assert_eq!(pixel_auroc(&[map.clone()], &[gt.clone()], Some(&[keep])).unwrap(), 1.0);
        assert!(pixel_auroc(&[map], &[gt], None).unwrap() < 1.0);
    }
}
