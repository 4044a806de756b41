use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse random projection `d -> d_target` with entries in `{-s, 0, +s}`,
/// `s = sqrt(1 / (density * d_target))`, so squared norms are preserved in
/// expectation. Stored row-compressed: for each input coordinate, the output
/// columns it feeds and their signs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    d: usize,
    d_target: usize,
    density: f64,
    seed: u64,
    scale: f64,
    rows: Vec<Vec<(u32, bool)>>,
}

/// Serializable description from which a [`ProjectionMatrix`] is regenerated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub d: usize,
    pub d_target: usize,
    pub density: f64,
    pub seed: u64,
}

pub fn make_projection(d: usize, d_target: usize, density: f64, seed: u64) -> Result<ProjectionMatrix> {
    if d_target == 0 || d_target > d {
        return Err(Error::Shape(format!(
            "projection target {d_target} must be in 1..={d}"
        )));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Shape(format!("projection density {density} must be in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = density / 2.0;
    let rows = (0..d)
        .map(|_| {
            (0..d_target as u32)
                .filter_map(|j| {
                    let u: f64 = rng.random();
                    if u < half {
                        Some((j, true))
                    } else if u < density {
                        Some((j, false))
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();
    Ok(ProjectionMatrix {
        d,
        d_target,
        density,
        seed,
        scale: (1.0 / (density * d_target as f64)).sqrt(),
        rows,
    })
}

impl ProjectionMatrix {
    pub fn from_spec(spec: &ProjectionSpec) -> Result<Self> {
        make_projection(spec.d, spec.d_target, spec.density, spec.seed)
    }

    pub fn spec(&self) -> ProjectionSpec {
        ProjectionSpec {
            d: self.d,
            d_target: self.d_target,
            density: self.density,
            seed: self.seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.d_target
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Entry `(i, j)` of the dense matrix.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match self.rows[i].iter().find(|(c, _)| *c as usize == j) {
            Some((_, true)) => self.scale,
            Some((_, false)) => -self.scale,
            None => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// `x^T P`.
    pub fn project(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::Shape(format!(
                "projecting a {}-vector with a {}x{} matrix",
                x.len(),
                self.d,
                self.d_target
            )));
        }
        let mut out = vec![0.0f64; self.d_target];
        for (xi, row) in x.iter().zip(&self.rows) {
            let xi = *xi as f64;
            if xi == 0.0 {
                continue;
            }
            for &(j, positive) in row {
                if positive {
                    out[j as usize] += xi;
                } else {
                    out[j as usize] -= xi;
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= self.scale);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn full_density_has_no_zeros() {
        let p = make_projection(20, 7, 1.0, 3).unwrap();
        assert_eq!(p.nnz(), 140);
    }

    #[test]
    fn same_seed_same_matrix() {
        assert_eq!(make_projection(30, 10, 0.2, 5).unwrap(), make_projection(30, 10, 0.2, 5).unwrap());
        assert_ne!(make_projection(30, 10, 0.2, 5).unwrap(), make_projection(30, 10, 0.2, 6).unwrap());
    }

    #[test]
    fn invalid_arguments_are_shape_errors() {
        assert!(matches!(make_projection(10, 11, 0.5, 0), Err(Error::Shape(_))));
        assert!(matches!(make_projection(10, 0, 0.5, 0), Err(Error::Shape(_))));
        assert!(matches!(make_projection(10, 5, 0.0, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn projection_matches_dense_product() {
        let p = make_projection(12, 5, 0.4, 9).unwrap();
        let x: Vec<f32> = (0..12).map(|i| (i as f32 * 0.37).sin()).collect();
        let got = p.project(&x).unwrap();
        for (j, g) in got.iter().enumerate() {
            let want: f64 = (0..12).map(|i| x[i] as f64 * p.entry(i, j)).sum();
            assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_distances_are_roughly_preserved() {
        let d = 768;
        let p = make_projection(d, 128, 1.0 / (d as f64).sqrt(), 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut within = 0;
        for _ in 0..500 {
            let a: Vec<f32> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f32> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let orig: f64 = a.iter().zip(&b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt();
            let (pa, pb) = (p.project(&a).unwrap(), p.project(&b).unwrap());
            let proj: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            if (proj / orig - 1.0).abs() <= 0.25 {
                within += 1;
            }
        }
        assert!(within >= 475, "{within}/500 within 25%");
    }
}
