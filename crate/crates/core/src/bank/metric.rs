use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    L1,
    #[default]
    L2,
    Cosine,
}

impl DistanceMetric {
    pub const ALL: [DistanceMetric; 3] = [DistanceMetric::L1, DistanceMetric::L2, DistanceMetric::Cosine];

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMetric::L1 => "l1",
            DistanceMetric::L2 => "l2",
            DistanceMetric::Cosine => "cosine",
        }
    }

    /// Distance without argument checks. Cosine against a zero vector yields NaN;
    /// callers exclude zero vectors beforehand.
    #[inline]
    pub(crate) fn eval<T: Copy + Into<f64>>(self, a: &[T], b: &[T]) -> f64 {
        match self {
            DistanceMetric::L1 => a
                .iter()
                .zip(b)
                .map(|(x, y)| ((*x).into() - (*y).into()).abs())
                .sum(),
            DistanceMetric::L2 => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = (*x).into() - (*y).into();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
            DistanceMetric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
                for (x, y) in a.iter().zip(b) {
                    let (x, y) = ((*x).into(), (*y).into());
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                // Clamp rounding noise so that the result stays in [0, 2].
                (1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0)
            }
        }
    }
}

impl std::fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(DistanceMetric::L1),
            "l2" => Ok(DistanceMetric::L2),
            "cosine" | "cos" => Ok(DistanceMetric::Cosine),
            other => Err(Error::Usage(format!("unknown distance metric `{other}`"))),
        }
    }
}

pub(crate) fn is_zero<T: Copy + Into<f64>>(v: &[T]) -> bool {
    v.iter().all(|x| (*x).into() == 0.0)
}

pub fn distance(metric: DistanceMetric, a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "distance between vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if metric == DistanceMetric::Cosine && (is_zero(a) || is_zero(b)) {
        return Err(Error::Value("cosine distance is undefined for a zero vector".into()));
    }
    Ok(metric.eval(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_values() {
        assert_eq!(distance(DistanceMetric::L2, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(distance(DistanceMetric::L1, &[0.0, 0.0], &[3.0, -4.0]).unwrap(), 7.0);
        assert_eq!(distance(DistanceMetric::Cosine, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn self_distance_is_zero() {
        let x = [0.3f32, -1.7, 2.5, 1e-3];
        for m in DistanceMetric::ALL {
            assert_eq!(distance(m, &x, &x).unwrap(), 0.0, "{m}");
        }
    }

    #[test]
    fn cosine_rejects_zero_vectors_and_mismatch_is_shape_error() {
        assert!(matches!(
            distance(DistanceMetric::Cosine, &[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::Value(_))
        ));
        assert!(matches!(
            distance(DistanceMetric::L2, &[0.0], &[1.0, 0.0]),
            Err(Error::Shape(_))
        ));
    }
}
