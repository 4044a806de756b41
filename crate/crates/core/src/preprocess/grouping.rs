use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMap;
use crate::error::{Error, Result};
use crate::greedy::max_min_select;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    pub n_groups: usize,
    pub group_size: usize,
    pub idw_neighbors: usize,
    pub idw_power: f64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            n_groups: 1024,
            group_size: 128,
            idw_neighbors: 4,
            idw_power: 2.0,
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 || self.group_size == 0 || self.idw_neighbors == 0 {
            return Err(Error::Config("grouping counts must be >= 1".into()));
        }
        if !(self.idw_power.is_finite() && self.idw_power > 0.0) {
            return Err(Error::Config("idw power must be finite and > 0".into()));
        }
        Ok(())
    }
}

#[inline]
fn sq_dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Seeded start index for farthest-first selection over `n` candidates.
pub fn seeded_start(n: usize, seed: u64) -> usize {
    ChaCha8Rng::seed_from_u64(seed).random_range(0..n)
}

/// Farthest point sampling from a seeded random start.
pub fn farthest_point_sample(points: &[[f64; 3]], n: usize, seed: u64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::Degenerate("farthest point sampling over no points".into()));
    }
    farthest_point_sample_from(points, n, seeded_start(points.len(), seed))
}

/// Farthest point sampling from an explicit start index.
pub fn farthest_point_sample_from(points: &[[f64; 3]], n: usize, start: usize) -> Result<Vec<usize>> {
    if n > points.len() {
        return Err(Error::Shape(format!(
            "cannot sample {n} centers from {} points",
            points.len()
        )));
    }
    if start >= points.len() {
        return Err(Error::Shape(format!("start index {start} out of range")));
    }
    // Squared distance has the same argmax as the distance itself.
    Ok(max_min_select(points.len(), n, start, |j, s| {
        sq_dist3(&points[j], &points[s])
    }))
}

/// Indices of the `m` nearest points (L2) to each center, nearest first,
/// ties broken by lowest index. Groups include their own center.
pub fn knn_group(points: &[[f64; 3]], centers: &[usize], m: usize) -> Result<Vec<Vec<usize>>> {
    if m > points.len() {
        return Err(Error::Shape(format!(
            "group size {m} exceeds point count {}",
            points.len()
        )));
    }
    if let Some(&c) = centers.iter().find(|&&c| c >= points.len()) {
        return Err(Error::Shape(format!("center index {c} out of range")));
    }
    let group = |&center: &usize| {
        let origin = &points[center];
        let mut order: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (sq_dist3(origin, p), i))
            .collect();
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if m < order.len() && m > 0 {
            order.select_nth_unstable_by(m - 1, by_key);
            order.truncate(m);
        }
        order.sort_unstable_by(by_key);
        order.truncate(m);
        order.into_iter().map(|(_, i)| i).collect()
    };
    Ok(centers.par_iter().map(group).collect())
}

/// Inverse-distance-weighted interpolation of sparse center features onto a
/// `rows x cols` grid. Cell `(r, c)` sits at position `(r, c)` in the same
/// coordinate frame as `positions`. `features` holds one `dim`-vector per center.
pub fn idw_interpolate(
    positions: &[[f64; 2]],
    features: &[f32],
    dim: usize,
    rows: usize,
    cols: usize,
    k: usize,
    power: f64,
) -> Result<FeatureMap> {
    if positions.is_empty() {
        return Err(Error::Degenerate("IDW interpolation needs at least one center".into()));
    }
    if features.len() != positions.len() * dim {
        return Err(Error::Shape(format!(
            "{} centers of dim {dim} need {} feature values, got {}",
            positions.len(),
            positions.len() * dim,
            features.len()
        )));
    }
    if k == 0 || k > positions.len() {
        return Err(Error::Shape(format!(
            "IDW neighbor count {k} must be in 1..={}",
            positions.len()
        )));
    }
    let mut data = vec![0.0f32; rows * cols * dim];
    data.par_chunks_mut(dim.max(1))
        .enumerate()
        .for_each(|(cell, out)| {
            let q = [(cell / cols) as f64, (cell % cols) as f64];
            let mut near: Vec<(f64, usize)> = positions
                .iter()
                .enumerate()
                .map(|(i, p)| (((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt(), i))
                .collect();
            let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < near.len() {
                near.select_nth_unstable_by(k - 1, by_key);
                near.truncate(k);
            }
            near.sort_unstable_by(by_key);
            let (d0, i0) = near[0];
            if d0 < 1e-12 {
                out.copy_from_slice(&features[i0 * dim..(i0 + 1) * dim]);
                return;
            }
            let weights: Vec<f64> = near.iter().map(|(d, _)| d.powf(-power)).collect();
            let total: f64 = weights.iter().sum();
            let mut acc = vec![0.0f64; dim];
            for (w, (_, i)) in weights.iter().zip(&near) {
                let w = w / total;
                for (a, f) in acc.iter_mut().zip(&features[i * dim..(i + 1) * dim]) {
                    *a += w * *f as f64;
                }
            }
            for (o, a) in out.iter_mut().zip(acc) {
                *o = a as f32;
            }
        });
    FeatureMap::new(rows, cols, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<[f64; 3]> {
        xs.iter().map(|&x| [x, 0.0, 0.0]).collect()
    }

    #[test]
    fn fps_on_a_line_picks_the_far_end() {
        let pts = line(&[0.0, 1.0, 2.0, 10.0]);
        assert_eq!(farthest_point_sample_from(&pts, 2, 0).unwrap(), vec![0, 3]);
    }

    #[test]
    fn fps_exhaustion_is_a_permutation() {
        let pts = line(&[3.0, 1.0, 4.0, 1.5, 9.0, 2.6]);
        let mut got = farthest_point_sample(&pts, pts.len(), 17).unwrap();
        got.sort_unstable();
        assert_eq!(got, (0..pts.len()).collect::<Vec<_>>());
    }

    #[test]
    fn fps_rejects_too_many_centers() {
        assert!(matches!(
            farthest_point_sample(&line(&[0.0, 1.0]), 3, 0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn fps_ties_break_to_lowest_index() {
        let pts = line(&[0.0, -1.0, 1.0]);
        assert_eq!(farthest_point_sample_from(&pts, 2, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn knn_extremes() {
        let pts = line(&[0.0, 5.0, 1.0, 2.0]);
        let g1 = knn_group(&pts, &[0, 1, 3], 1).unwrap();
        assert_eq!(g1, vec![vec![0], vec![1], vec![3]]);
        let all = knn_group(&pts, &[2], 4).unwrap();
        assert_eq!(all, vec![vec![2, 0, 3, 1]]);
        assert!(knn_group(&pts, &[0], 5).is_err());
    }

    #[test]
    fn idw_snaps_and_averages() {
        let pos = [[0.0, 0.0], [0.0, 2.0]];
        let feats = [0.0f32, 1.0];
        let map = idw_interpolate(&pos, &feats, 1, 1, 3, 2, 2.0).unwrap();
        assert_eq!(map.data(), &[0.0, 0.5, 1.0]);
        assert!(matches!(
            idw_interpolate(&[], &[], 1, 1, 1, 1, 2.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn idw_of_constant_field_is_constant() {
        let pos = [[0.3, 0.7], [2.2, 1.9], [4.1, 0.4], [1.0, 3.3]];
        let feats: Vec<f32> = std::iter::repeat_n([0.37f32, -1.25], 4).flatten().collect();
        let map = idw_interpolate(&pos, &feats, 2, 5, 5, 3, 2.0).unwrap();
        for cell in map.cells() {
            assert_eq!(cell, &[0.37, -1.25]);
        }
    }
}
