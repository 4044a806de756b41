//! Conversions between nested Python-style lists and core grid types.

use cmdiad_core::data::{Mask, ScoreMap};
use cmdiad_core::{Error, Result};

fn check_rect<T>(rows: &[Vec<T>]) -> Result<(usize, usize)> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 {
        return Err(Error::Shape("grid must be non-empty".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != w) {
        return Err(Error::Shape(format!("row {bad} has {} values, expected {w}", rows[bad].len())));
    }
    Ok((h, w))
}

pub fn score_map_from_rows(rows: Vec<Vec<f64>>) -> Result<ScoreMap> {
    let (h, w) = check_rect(&rows)?;
    ScoreMap::new(h, w, rows.into_iter().flatten().collect())
}

pub fn score_map_to_rows(map: &ScoreMap) -> Vec<Vec<f64>> {
    map.data.chunks(map.width).map(<[f64]>::to_vec).collect()
}

pub fn mask_from_rows(rows: Vec<Vec<bool>>) -> Result<Mask> {
    let (h, w) = check_rect(&rows)?;
    Mask::new(h, w, rows.into_iter().flatten().collect())
}

pub fn mask_to_rows(mask: &Mask) -> Vec<Vec<bool>> {
    mask.data.chunks(mask.width).map(<[bool]>::to_vec).collect()
}

/// Flattens `P` patches of equal length into `(dim, data)`.
pub fn flatten_patches(patches: Vec<Vec<f32>>) -> Result<(usize, Vec<f32>)> {
    let (_, dim) = check_rect(&patches)?;
    Ok((dim, patches.into_iter().flatten().collect()))
}
