use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bank::{DistanceMetric, MemoryBank};
use crate::data::{is_background, FeatureMap, ScoreMap};
use crate::error::{Error, Result};

/// Image-level score of one modality with its witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Psi {
    pub score: f64,
    /// Row-major cell attaining the score (first on ties).
    pub cell: (usize, usize),
    /// Nearest coreset row of that cell; `None` when it is background.
    pub nearest: Option<usize>,
}

fn check(features: &FeatureMap, bank: &MemoryBank) -> Result<()> {
    if features.dim() != bank.dim() {
        return Err(Error::Shape(format!(
            "{}-dim features against a {}-dim bank",
            features.dim(),
            bank.dim()
        )));
    }
    if bank.is_empty() {
        return Err(Error::Degenerate("empty memory bank".into()));
    }
    Ok(())
}

/// Per-cell `(distance, nearest row)`; background cells give `(0, None)`.
fn nearest_per_cell(features: &FeatureMap, bank: &MemoryBank) -> Vec<(f64, Option<usize>)> {
    let cells: Vec<&[f32]> = features.cells().collect();
    let eval = |cell: &&[f32]| {
        if is_background(cell) {
            (0.0, None)
        } else {
            let (d, i) = bank.nearest_unchecked(cell);
            (d, Some(i))
        }
    };
    if cells.len() * bank.len() >= 1 << 16 {
        cells.par_iter().map(eval).collect()
    } else {
        cells.iter().map(eval).collect()
    }
}

/// Per-cell nearest-neighbour distance to the bank; background cells score 0.
pub fn phi(features: &FeatureMap, bank: &MemoryBank) -> Result<ScoreMap> {
    Ok(phi_psi(features, bank)?.0)
}

/// Maximum of [`phi`] with the attaining cell and its nearest bank row.
pub fn psi(features: &FeatureMap, bank: &MemoryBank) -> Result<Psi> {
    Ok(phi_psi(features, bank)?.1)
}

/// Both [`phi`] and [`psi`] from a single scan.
pub fn phi_psi(features: &FeatureMap, bank: &MemoryBank) -> Result<(ScoreMap, Psi)> {
    check(features, bank)?;
    if bank.metric == DistanceMetric::Cosine && bank.rows().chunks_exact(bank.dim()).any(is_background) {
        return Err(Error::Value("cosine bank contains a zero row".into()));
    }
    let near = nearest_per_cell(features, bank);
    let map = ScoreMap::new(features.rows(), features.cols(), near.iter().map(|n| n.0).collect())?;
    let (idx, score) = map.argmax().unwrap_or((0, 0.0));
    let psi = Psi {
        score,
        cell: (idx / features.cols().max(1), idx % features.cols().max(1)),
        nearest: near.get(idx).and_then(|n| n.1),
    };
    Ok((map, psi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Modality;

    fn bank(rows: &[[f32; 2]]) -> MemoryBank {
        MemoryBank::from_rows(Modality::Pc, DistanceMetric::L2, 2, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn bank_rows_score_zero() {
        let b = bank(&[[1.0, 2.0], [3.0, -1.0]]);
        let f = FeatureMap::new(1, 3, 2, vec![3.0, -1.0, 1.0, 2.0, 3.0, -1.0]).unwrap();
        let (map, p) = phi_psi(&f, &b).unwrap();
        assert!(map.data.iter().all(|&v| v == 0.0));
        assert_eq!(p.score, 0.0);
        assert_eq!(p.cell, (0, 0));
        assert_eq!(p.nearest, Some(1));
    }

    #[test]
    fn single_cell_at_distance_five() {
        let b = bank(&[[0.0, 0.0], [100.0, 100.0]]);
        let f = FeatureMap::new(1, 1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(phi(&f, &b).unwrap().data, vec![5.0]);
        assert_eq!(psi(&f, &b).unwrap().nearest, Some(0));
    }

    #[test]
    fn background_cells_score_zero() {
        let b = bank(&[[5.0, 5.0]]);
        let f = FeatureMap::zeros(2, 2, 2);
        let (map, p) = phi_psi(&f, &b).unwrap();
        assert!(map.data.iter().all(|&v| v == 0.0));
        assert_eq!(p.nearest, None);
    }

    #[test]
    fn dim_mismatch() {
        let b = bank(&[[5.0, 5.0]]);
        assert!(matches!(phi(&FeatureMap::zeros(2, 2, 3), &b), Err(Error::Shape(_))));
    }
}
