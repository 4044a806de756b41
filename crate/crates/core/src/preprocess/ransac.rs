use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{RgbImage, StructuredPointCloud};
use crate::error::{Error, Result};

/// Default point-to-plane distance below which a point counts as background.
pub const BACKGROUND_THRESHOLD: f64 = 0.005;

/// The plane `{p : normal . p = offset}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl Plane {
    /// Builds a plane from any non-zero normal, normalising it and orienting it
    /// so that its largest-magnitude component is positive.
    pub fn new(normal: [f64; 3], offset: f64) -> Result<Self> {
        let n = Vector3::from(normal);
        let len = n.norm();
        if !(len.is_finite() && len > 0.0) || !offset.is_finite() {
            return Err(Error::Value("plane normal must be finite and non-zero".into()));
        }
        let mut unit = n / len;
        let mut offset = offset / len;
        let major = unit.iamax();
        if unit[major] < 0.0 {
            unit = -unit;
            offset = -offset;
        }
        Ok(Self {
            normal: unit.into(),
            offset,
        })
    }

    #[inline]
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        (self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] - self.offset).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_threshold: f64,
    pub min_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_threshold: BACKGROUND_THRESHOLD,
            min_inlier_fraction: 0.3,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("ransac iterations must be >= 1".into()));
        }
        if !(self.inlier_threshold > 0.0) || !(self.min_inlier_fraction > 0.0) {
            return Err(Error::Config("ransac thresholds must be > 0".into()));
        }
        Ok(())
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0] - b[0], a[1] - b[1], a[2] - b[2])
}

/// Total-least-squares plane through `points`.
pub(crate) fn least_squares_plane(points: &[[f64; 3]]) -> Result<Plane> {
    let n = points.len() as f64;
    let mut centroid = Vector3::zeros();
    for p in points {
        centroid += Vector3::from(*p);
    }
    centroid /= n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::from(*p) - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let smallest = eig.eigenvalues.imin();
    let normal: Vector3<f64> = eig.eigenvectors.column(smallest).into();
    Plane::new(normal.into(), normal.dot(&centroid))
}

/// Fits the dominant plane of the foreground (non-zero) points by RANSAC over
/// random 3-point hypotheses, then refits by least squares over the best
/// hypothesis' inliers.
pub fn fit_background_plane(pc: &StructuredPointCloud, cfg: &RansacConfig) -> Result<Plane> {
    cfg.validate()?;
    let (points, _) = pc.foreground();
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "plane fit needs at least 3 non-zero points, got {}",
            points.len()
        )));
    }
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Plane, usize)> = None;
    for _ in 0..cfg.iterations {
        let idx = rand::seq::index::sample(&mut rng, points.len(), 3);
        let (a, b, c) = (points[idx.index(0)], points[idx.index(1)], points[idx.index(2)]);
        let normal = sub(b, a).cross(&sub(c, a));
        if normal.norm() <= 1e-12 * scale * scale {
            continue;
        }
        let Ok(plane) = Plane::new(normal.into(), normal.dot(&Vector3::from(a))) else {
            continue;
        };
        let inliers = points
            .iter()
            .filter(|p| plane.distance(**p) < cfg.inlier_threshold)
            .count();
        if best.is_none_or(|(_, count)| inliers > count) {
            best = Some((plane, inliers));
        }
    }
    let Some((hypothesis, count)) = best else {
        return Err(Error::Degenerate(
            "every sampled point triple was collinear or coincident".into(),
        ));
    };
    let fraction = count as f64 / points.len() as f64;
    if fraction < cfg.min_inlier_fraction {
        return Err(Error::NoPlane {
            fraction,
            required: cfg.min_inlier_fraction,
        });
    }
    let inliers: Vec<[f64; 3]> = points
        .iter()
        .copied()
        .filter(|p| hypothesis.distance(*p) < cfg.inlier_threshold)
        .collect();
    least_squares_plane(&inliers)
}

/// Zeroes every pixel whose point lies strictly closer than `threshold` to
/// `plane` (or is already background) in both the point cloud and the image.
pub fn remove_background(
    pc: &StructuredPointCloud,
    rgb: &RgbImage,
    plane: &Plane,
    threshold: f64,
) -> Result<(StructuredPointCloud, RgbImage)> {
    if pc.shape() != rgb.shape() {
        return Err(Error::Shape(format!(
            "point cloud {:?} and image {:?} are not pixel-aligned",
            pc.shape(),
            rgb.shape()
        )));
    }
    let mut out_pc = pc.clone();
    let mut out_rgb = rgb.clone();
    for row in 0..pc.height {
        for col in 0..pc.width {
            let p = pc.pixel(row, col);
            let q = [p[0] as f64, p[1] as f64, p[2] as f64];
            if p == [0.0; 3] || plane.distance(q) < threshold {
                out_pc.set_pixel(row, col, [0.0; 3]);
                out_rgb.set_pixel(row, col, [0.0; 3]);
            }
        }
    }
    Ok((out_pc, out_rgb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cloud(points: &[[f32; 3]], width: usize) -> StructuredPointCloud {
        let height = points.len().div_ceil(width);
        let mut pc = StructuredPointCloud::zeros(height, width);
        for (i, p) in points.iter().enumerate() {
            pc.set_pixel(i / width, i % width, *p);
        }
        pc
    }

    #[test]
    fn plane_with_outliers_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        let mut inliers = Vec::new();
        for i in 0..400 {
            if i % 20 == 0 {
                pts.push([
                    rng.random_range(-1.0..1.0f32),
                    rng.random_range(-1.0..1.0f32),
                    rng.random_range(0.05..1.0f32),
                ]);
            } else {
                let p = [rng.random_range(-1.0..1.0f32), rng.random_range(-1.0..1.0f32), 0.0];
                // keep the point non-zero so it is foreground
                let p = if p[0] == 0.0 && p[1] == 0.0 { [1e-3, 0.0, 0.0] } else { p };
                inliers.push([p[0] as f64, p[1] as f64, 0.0]);
                pts.push(p);
            }
        }
        let plane = fit_background_plane(&cloud(&pts, 20), &RansacConfig::default()).unwrap();
        let oracle = least_squares_plane(&inliers).unwrap();
        assert!((plane.normal[2] - 1.0).abs() < 1e-3, "{plane:?}");
        assert!(plane.offset.abs() < 1e-3);
        for k in 0..3 {
            assert!((plane.normal[k] - oracle.normal[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts = vec![[0.1f32, 0.2, 0.3]; 50];
        assert!(matches!(
            fit_background_plane(&cloud(&pts, 10), &RansacConfig::default()),
            Err(Error::Degenerate(_))
        ));
        let two = vec![[0.1f32, 0.2, 0.3], [0.2, 0.2, 0.3]];
        assert!(matches!(
            fit_background_plane(&cloud(&two, 2), &RansacConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn noise_free_plane_offset_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f32; 3]> = (0..100)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.1])
            .collect();
        for seed in [0, 1, 42] {
            let cfg = RansacConfig {
                seed,
                ..RansacConfig::default()
            };
            let plane = fit_background_plane(&cloud(&pts, 10), &cfg).unwrap();
            assert!((plane.offset - 0.1f32 as f64).abs() < 1e-12, "{plane:?}");
            assert!((plane.normal[2] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scattered_points_have_no_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f32; 3]> = (0..200)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        assert!(matches!(
            fit_background_plane(&cloud(&pts, 20), &RansacConfig::default()),
            Err(Error::NoPlane { .. })
        ));
    }

    #[test]
    fn boundary_distance_is_kept() {
        let plane = Plane::new([0.0, 0.0, 1.0], 0.0).unwrap();
        let pc = cloud(&[[0.5, 0.5, 0.005], [0.5, 0.5, 0.004], [0.0, 0.0, 0.0]], 3);
        let rgb = RgbImage::new(1, 3, vec![1.0; 9]).unwrap();
        let exact = {
            // distance computed from the f32 coordinate equals the threshold in f64
            let z = 0.005f32 as f64;
            let (p, r) = remove_background(&pc, &rgb, &plane, z).unwrap();
            (p, r)
        };
        assert_eq!(exact.0.pixel(0, 0), [0.5, 0.5, 0.005]);
        assert_eq!(exact.1.pixel(0, 0), [1.0; 3]);
        assert_eq!(exact.0.pixel(0, 1), [0.0; 3]);
        assert_eq!(exact.1.pixel(0, 1), [0.0; 3]);
        assert_eq!(exact.1.pixel(0, 2), [0.0; 3]);
    }

    #[test]
    fn all_on_plane_gives_zero_outputs_and_is_idempotent() {
        let plane = Plane::new([0.0, 0.0, 1.0], 0.2).unwrap();
        let pc = cloud(&[[0.1, 0.1, 0.2]; 6], 3);
        let rgb = RgbImage::new(2, 3, vec![0.5; 18]).unwrap();
        let (p, r) = remove_background(&pc, &rgb, &plane, BACKGROUND_THRESHOLD).unwrap();
        assert!(p.data.iter().all(|&v| v == 0.0));
        assert!(r.data.iter().all(|&v| v == 0.0));
        let (p2, r2) = remove_background(&p, &r, &plane, BACKGROUND_THRESHOLD).unwrap();
        assert_eq!((p2, r2), (p, r));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let plane = Plane::new([0.0, 0.0, 1.0], 0.0).unwrap();
        let pc = StructuredPointCloud::zeros(2, 2);
        let rgb = RgbImage::zeros(2, 3);
        assert!(matches!(
            remove_background(&pc, &rgb, &plane, 0.005),
            Err(Error::Shape(_))
        ));
    }
}
