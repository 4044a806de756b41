use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default aligned feature grid and channel count.
pub const GRID_SIZE: usize = 56;
pub const FEATURE_DIM: usize = 768;
/// Side length of pipeline input images.
pub const IMAGE_SIZE: usize = 224;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Pc,
}

impl Modality {
    pub fn other(self) -> Modality {
        match self {
            Modality::Rgb => Modality::Pc,
            Modality::Pc => Modality::Rgb,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Pc => "pc",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(Modality::Rgb),
            "pc" | "xyz" => Ok(Modality::Pc),
            other => Err(Error::Usage(format!("unknown modality `{other}`"))),
        }
    }
}

fn check_finite(data: &[f32], what: &str) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Value(format!("{what}: non-finite value at index {i}"))),
        None => Ok(()),
    }
}

/// Three values per pixel, row-major, shared layout of [`RgbImage`] and
/// [`StructuredPointCloud`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl PixelGrid {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "{height}x{width}x3 grid needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        check_finite(&data, "pixel grid")?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, value: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&value);
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Color image with values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbImage(pub PixelGrid);

/// Pixel-aligned (x, y, z) coordinates in meters; background is exactly (0, 0, 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredPointCloud(pub PixelGrid);

macro_rules! grid_newtype {
    ($ty:ident) => {
        impl $ty {
            pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
                PixelGrid::new(height, width, data).map($ty)
            }

            pub fn zeros(height: usize, width: usize) -> Self {
                $ty(PixelGrid::zeros(height, width))
            }
        }

        impl std::ops::Deref for $ty {
            type Target = PixelGrid;
            fn deref(&self) -> &PixelGrid {
                &self.0
            }
        }

        impl std::ops::DerefMut for $ty {
            fn deref_mut(&mut self) -> &mut PixelGrid {
                &mut self.0
            }
        }
    };
}

grid_newtype!(RgbImage);
grid_newtype!(StructuredPointCloud);

impl StructuredPointCloud {
    /// Foreground points with their pixel positions, in row-major order.
    pub fn foreground(&self) -> (Vec<[f64; 3]>, Vec<(usize, usize)>) {
        let mut points = Vec::new();
        let mut pixels = Vec::new();
        for row in 0..self.height {
            for col in 0..self.width {
                let p = self.pixel(row, col);
                if p != [0.0; 3] {
                    points.push([p[0] as f64, p[1] as f64, p[2] as f64]);
                    pixels.push((row, col));
                }
            }
        }
        (points, pixels)
    }
}

/// Dense grid of patch features, row-major with the feature axis innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    rows: usize,
    cols: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols * dim {
            return Err(Error::Shape(format!(
                "{rows}x{cols}x{dim} feature map needs {} values, got {}",
                rows * cols * dim,
                data.len()
            )));
        }
        check_finite(&data, "feature map")?;
        Ok(Self {
            rows,
            cols,
            dim,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize, dim: usize) -> Self {
        Self {
            rows,
            cols,
            dim,
            data: vec![0.0; rows * cols * dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.cols + col) * self.dim;
        &self.data[start..start + self.dim]
    }

    #[inline]
    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f32] {
        let start = (row * self.cols + col) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn is_background(&self, row: usize, col: usize) -> bool {
        is_background(self.cell(row, col))
    }
}

/// Background cells are exactly all-zero.
#[inline]
pub fn is_background(cell: &[f32]) -> bool {
    cell.iter().all(|&v| v == 0.0)
}

/// Real-valued map (anomaly scores), row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} score map needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Largest value and its row-major index; the first one on ties.
    pub fn argmax(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.data.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Binary ground-truth mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} mask needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Anomalous,
    Unknown,
}

impl Label {
    pub fn as_binary(self) -> Option<u8> {
        match self {
            Label::Normal => Some(0),
            Label::Anomalous => Some(1),
            Label::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub rgb: Option<RgbImage>,
    pub pc: Option<StructuredPointCloud>,
    pub rgb_features: Option<FeatureMap>,
    pub pc_features: Option<FeatureMap>,
    pub gt_mask: Option<Mask>,
    pub label: Label,
}

impl Sample {
    pub fn new(id: impl Into<String>, label: Label) -> Self {
        Self {
            id: id.into(),
            rgb: None,
            pc: None,
            rgb_features: None,
            pc_features: None,
            gt_mask: None,
            label,
        }
    }

    pub fn features(&self, modality: Modality) -> Option<&FeatureMap> {
        match modality {
            Modality::Rgb => self.rgb_features.as_ref(),
            Modality::Pc => self.pc_features.as_ref(),
        }
    }

    pub fn has_modality(&self, modality: Modality) -> bool {
        match modality {
            Modality::Rgb => self.rgb.is_some() || self.rgb_features.is_some(),
            Modality::Pc => self.pc.is_some() || self.pc_features.is_some(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.has_modality(Modality::Rgb) && !self.has_modality(Modality::Pc) {
            return Err(Error::Data(format!("sample `{}` has no modality", self.id)));
        }
        if let (Some(rgb), Some(pc)) = (&self.rgb, &self.pc) {
            if rgb.shape() != pc.shape() {
                return Err(Error::Shape(format!(
                    "sample `{}`: rgb {:?} and point cloud {:?} are not pixel-aligned",
                    self.id,
                    rgb.shape(),
                    pc.shape()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_map_rejects_bad_length_and_nan() {
        assert!(matches!(
            FeatureMap::new(2, 2, 2, vec![0.0; 7]),
            Err(Error::Shape(_))
        ));
        let mut data = vec![0.0; 8];
        data[5] = f32::NAN;
        assert!(matches!(FeatureMap::new(2, 2, 2, data), Err(Error::Value(_))));
    }

    #[test]
    fn cell_indexing_is_row_major() {
        let data: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let map = FeatureMap::new(2, 3, 2, data).unwrap();
        assert_eq!(map.cell(1, 2), &[10.0, 11.0]);
        assert_eq!(map.cells().count(), 6);
    }

    #[test]
    fn sample_without_modality_is_invalid() {
        let s = Sample::new("a", Label::Normal);
        assert!(s.validate().is_err());
    }
}
