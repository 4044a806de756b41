use serde::{Deserialize, Serialize};

use super::metric::{is_zero, DistanceMetric};
use super::projection::ProjectionMatrix;
use crate::error::{Error, Result};
use crate::greedy::max_min_select;
use crate::preprocess::seeded_start;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSource {
    pub sample: String,
    pub row: usize,
    pub col: usize,
}

/// `P x d` matrix of patch features with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    dim: usize,
    data: Vec<f32>,
    sources: Vec<PatchSource>,
}

impl PatchSet {
    pub fn new(dim: usize, data: Vec<f32>, sources: Vec<PatchSource>) -> Result<Self> {
        if dim == 0 || data.len() != sources.len() * dim {
            return Err(Error::Shape(format!(
                "{} patches of dim {dim} need {} values, got {}",
                sources.len(),
                sources.len() * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Value("patch set contains non-finite values".into()));
        }
        Ok(Self { dim, data, sources })
    }

    /// Anonymous patches (provenance is the row index).
    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { data.len() / dim };
        let sources = (0..n)
            .map(|i| PatchSource {
                sample: String::new(),
                row: i,
                col: 0,
            })
            .collect();
        Self::new(dim, data, sources)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn patch(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sources(&self) -> &[PatchSource] {
        &self.sources
    }
}

/// Coreset size for `fraction` of `p` patches.
pub fn coreset_size(p: usize, fraction: f64) -> usize {
    ((fraction * p as f64).round() as usize).clamp(1, p.max(1))
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Value(format!("coreset fraction {fraction} must be in (0, 1]")));
    }
    Ok(())
}

/// Greedy max-min coreset of `round(fraction * P)` (at least 1) patches from a
/// seeded random start.
pub fn coreset_select(
    patches: &PatchSet,
    fraction: f64,
    metric: DistanceMetric,
    projection: Option<&ProjectionMatrix>,
    seed: u64,
) -> Result<Vec<usize>> {
    check_fraction(fraction)?;
    if patches.is_empty() {
        return Err(Error::Degenerate("coreset selection over an empty patch set".into()));
    }
    let k = coreset_size(patches.len(), fraction);
    coreset_select_from(patches, k, metric, projection, seeded_start(patches.len(), seed))
}

/// Greedy max-min selection of `k` patches starting at `start`. Distances are
/// taken in projected space when `projection` is given; the returned indices
/// always refer to the original patches.
pub fn coreset_select_from(
    patches: &PatchSet,
    k: usize,
    metric: DistanceMetric,
    projection: Option<&ProjectionMatrix>,
    start: usize,
) -> Result<Vec<usize>> {
    let p = patches.len();
    if p == 0 {
        return Err(Error::Degenerate("coreset selection over an empty patch set".into()));
    }
    if k == 0 || k > p || start >= p {
        return Err(Error::Shape(format!(
            "coreset of {k} from {p} patches starting at {start}"
        )));
    }
    match projection {
        None => {
            if metric == DistanceMetric::Cosine && (0..p).any(|i| is_zero(patches.patch(i))) {
                return Err(Error::Value("cosine coreset over a zero patch".into()));
            }
            Ok(max_min_select(p, k, start, |j, s| {
                metric.eval(patches.patch(j), patches.patch(s))
            }))
        }
        Some(proj) => {
            let dt = proj.output_dim();
            let mut projected = Vec::with_capacity(p * dt);
            for i in 0..p {
                projected.extend(proj.project(patches.patch(i))?);
            }
            let row = |i: usize| &projected[i * dt..(i + 1) * dt];
            if metric == DistanceMetric::Cosine && (0..p).any(|i| is_zero(row(i))) {
                return Err(Error::Value("cosine coreset over a zero projected patch".into()));
            }
            Ok(max_min_select(p, k, start, |j, s| metric.eval(row(j), row(s))))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corners() -> PatchSet {
        PatchSet::from_rows(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn diagonal_corner_is_picked_second() {
        let sel = coreset_select_from(&corners(), 2, DistanceMetric::L2, None, 0).unwrap();
        assert_eq!(sel, vec![0, 3]);
    }

    #[test]
    fn full_fraction_selects_everything() {
        let mut sel = coreset_select(&corners(), 1.0, DistanceMetric::L1, None, 99).unwrap();
        sel.sort_unstable();
        assert_eq!(sel, vec![0, 1, 2, 3]);
    }

    #[test]
    fn size_rounds_with_floor_of_one() {
        assert_eq!(coreset_size(40, 0.1), 4);
        assert_eq!(coreset_size(3, 0.1), 1);
        assert_eq!(coreset_size(25, 0.1), 3);
    }

    #[test]
    fn bad_inputs() {
        let empty = PatchSet::from_rows(2, vec![]).unwrap();
        assert!(matches!(
            coreset_select(&empty, 0.5, DistanceMetric::L2, None, 0),
            Err(Error::Degenerate(_))
        ));
        assert!(coreset_select(&corners(), 0.0, DistanceMetric::L2, None, 0).is_err());
        assert!(coreset_select(&corners(), 1.5, DistanceMetric::L2, None, 0).is_err());
    }

    #[test]
    fn duplicates_are_not_repicked_while_distinct_points_remain() {
        let single = PatchSet::from_rows(1, vec![0.0, 3.0, 7.0, 10.0, 4.5]).unwrap();
        let mut doubled = single.data().to_vec();
        doubled.extend_from_slice(single.data());
        let doubled = PatchSet::from_rows(1, doubled).unwrap();
        for start in 0..5 {
            let a = coreset_select_from(&single, 4, DistanceMetric::L2, None, start).unwrap();
            let b = coreset_select_from(&doubled, 4, DistanceMetric::L2, None, start).unwrap();
            assert_eq!(a, b);
        }
    }
}
