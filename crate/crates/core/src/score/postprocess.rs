use serde::{Deserialize, Serialize};

use crate::data::{ScoreMap, IMAGE_SIZE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessConfig {
    /// Output `(height, width)`; `None` keeps the grid resolution.
    pub output: Option<(usize, usize)>,
    /// Gaussian smoothing sigma in output pixels; `None` disables smoothing.
    pub sigma: Option<f64>,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            output: Some((IMAGE_SIZE, IMAGE_SIZE)),
            sigma: Some(4.0),
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.output.is_some_and(|(h, w)| h == 0 || w == 0) {
            return Err(Error::Config("post-processing output size must be non-zero".into()));
        }
        if self.sigma.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("smoothing sigma must be positive".into()));
        }
        Ok(())
    }

    pub fn apply(&self, map: &ScoreMap) -> Result<ScoreMap> {
        self.validate()?;
        let up = match self.output {
            Some((h, w)) => upsample_bilinear(map, h, w)?,
            None => map.clone(),
        };
        Ok(match self.sigma {
            Some(s) => gaussian_blur(&up, s),
            None => up,
        })
    }
}

/// Source coordinate and weights for half-pixel-centred resampling.
fn taps(out: usize, len: usize) -> Vec<(usize, usize, f64)> {
    let scale = len as f64 / out as f64;
    (0..out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize with pixel centres aligned at half-integer positions.
pub fn upsample_bilinear(map: &ScoreMap, height: usize, width: usize) -> Result<ScoreMap> {
    if map.height == 0 || map.width == 0 || height == 0 || width == 0 {
        return Err(Error::Shape("bilinear resize of an empty map".into()));
    }
    let ty = taps(height, map.height);
    let tx = taps(width, map.width);
    let mut out = ScoreMap::zeros(height, width);
    for (y, &(y0, y1, fy)) in ty.iter().enumerate() {
        for (x, &(x0, x1, fx)) in tx.iter().enumerate() {
            let top = map.get(y0, x0) * (1.0 - fx) + map.get(y0, x1) * fx;
            let bottom = map.get(y1, x0) * (1.0 - fx) + map.get(y1, x1) * fx;
            out.set(y, x, top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(out)
}

fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma + 0.5) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * x * x / (sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Half-sample symmetric index (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

fn convolve_1d(src: &[f64], k: &[f64], dst: &mut [f64]) {
    let r = (k.len() / 2) as isize;
    let n = src.len();
    for (i, d) in dst.iter_mut().enumerate() {
        *d = k
            .iter()
            .enumerate()
            .map(|(j, w)| w * src[reflect(i as isize + j as isize - r, n)])
            .sum();
    }
}

/// Separable Gaussian filter truncated at 4 sigma, reflecting at the borders.
pub fn gaussian_blur(map: &ScoreMap, sigma: f64) -> ScoreMap {
    let k = kernel(sigma);
    let (h, w) = map.shape();
    let mut tmp = ScoreMap::zeros(h, w);
    for y in 0..h {
        convolve_1d(&map.data[y * w..(y + 1) * w], &k, &mut tmp.data[y * w..(y + 1) * w]);
    }
    let mut out = ScoreMap::zeros(h, w);
    let mut col = vec![0.0; h];
    let mut res = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = tmp.data[y * w + x];
        }
        convolve_1d(&col, &k, &mut res);
        for y in 0..h {
            out.data[y * w + x] = res[y];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_maps_stay_constant() {
        let m = ScoreMap::new(3, 4, vec![2.5; 12]).unwrap();
        let up = upsample_bilinear(&m, 12, 16).unwrap();
        assert!(up.data.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        let b = gaussian_blur(&up, 2.0);
        assert!(b.data.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn bilinear_matches_half_pixel_convention() {
        let m = ScoreMap::new(1, 2, vec![0.0, 1.0]).unwrap();
        let up = upsample_bilinear(&m, 1, 4).unwrap();
        assert_eq!(up.data, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn blur_preserves_mass_and_spreads_impulses() {
        let mut m = ScoreMap::zeros(41, 41);
        m.set(20, 20, 1.0);
        let b = gaussian_blur(&m, 2.0);
        assert!((b.data.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(b.get(20, 20) < 1.0 && b.get(20, 21) > 0.0);
        assert!((b.get(20, 22) - b.get(22, 20)).abs() < 1e-15);
        assert_eq!(b.argmax().unwrap().0, 20 * 41 + 20);
    }

    #[test]
    fn reflect_indices() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
    }
}
