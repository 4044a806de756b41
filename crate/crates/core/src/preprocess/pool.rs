use serde::{Deserialize, Serialize};

use crate::data::FeatureMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    /// Nearest-neighbour up-pooling: each cell becomes a 2x2 block.
    Up2,
    /// 2x2 average pooling.
    Down2,
}

pub fn pool_align(map: &FeatureMap, mode: PoolMode) -> Result<FeatureMap> {
    let (rows, cols, dim) = map.shape();
    match mode {
        PoolMode::Up2 => {
            let mut out = FeatureMap::zeros(rows * 2, cols * 2, dim);
            for r in 0..rows * 2 {
                for c in 0..cols * 2 {
                    out.cell_mut(r, c).copy_from_slice(map.cell(r / 2, c / 2));
                }
            }
            Ok(out)
        }
        PoolMode::Down2 => {
            if rows % 2 != 0 || cols % 2 != 0 {
                return Err(Error::Shape(format!(
                    "2x2 average pooling needs even dims, got {rows}x{cols}"
                )));
            }
            let mut out = FeatureMap::zeros(rows / 2, cols / 2, dim);
            for r in 0..rows / 2 {
                for c in 0..cols / 2 {
                    let blocks = [
                        map.cell(2 * r, 2 * c),
                        map.cell(2 * r, 2 * c + 1),
                        map.cell(2 * r + 1, 2 * c),
                        map.cell(2 * r + 1, 2 * c + 1),
                    ];
                    for (k, o) in out.cell_mut(r, c).iter_mut().enumerate() {
                        let sum: f64 = blocks.iter().map(|b| b[k] as f64).sum();
                        *o = (sum / 4.0) as f32;
                    }
                }
            }
            Ok(out)
        }
    }
}
