//! Raw-input I/O: 8-bit PNG images and masks, 3-channel float32 TIFF point clouds.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};

use crate::data::{Mask, RgbImage, StructuredPointCloud};
use crate::error::{Error, Result};

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image(format!("{}: {e}", path.display()))
}

pub fn read_rgb_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    RgbImage::new(h as usize, w as usize, data)
}

pub fn write_rgb_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Any non-zero pixel is foreground.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    let (w, h) = img.dimensions();
    Mask::new(h as usize, w as usize, img.into_raw().into_iter().map(|v| v > 0).collect())
}

pub fn write_mask_png(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = mask.data.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
    let buf = image::GrayImage::from_raw(mask.width as u32, mask.height as u32, bytes)
        .ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    buf.save(path).map_err(|e| image_err(path, e))
}

/// Renders `values` (row-major `height x width`) as an 8-bit grayscale PNG,
/// min-max normalised.
pub fn write_gray_png(values: &[f64], height: usize, width: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let bytes = values
        .iter()
        .map(|v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf = image::GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    buf.save(path).map_err(|e| image_err(path, e))
}

pub fn read_xyz_tiff(path: impl AsRef<Path>) -> Result<StructuredPointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut decoder = Decoder::new(BufReader::new(file)).map_err(|e| image_err(path, e))?;
    let (w, h) = decoder.dimensions().map_err(|e| image_err(path, e))?;
    let data = match decoder.read_image().map_err(|e| image_err(path, e))? {
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        _ => return Err(image_err(path, "expected a float32 xyz TIFF")),
    };
    // NaN marks missing points in some exports; treat as background.
    let data = data.into_iter().map(|v| if v.is_finite() { v } else { 0.0 }).collect();
    StructuredPointCloud::new(h as usize, w as usize, data)
}

pub fn write_xyz_tiff(pc: &StructuredPointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut encoder = TiffEncoder::new(BufWriter::new(file)).map_err(|e| image_err(path, e))?;
    encoder
        .write_image::<colortype::RGB32Float>(pc.width as u32, pc.height as u32, &pc.data)
        .map_err(|e| image_err(path, e))
}

/// Bilinear resize (half-pixel centers) of an RGB image.
pub fn resize_rgb(img: &RgbImage, height: usize, width: usize) -> RgbImage {
    if img.shape() == (height, width) {
        return img.clone();
    }
    let mut out = RgbImage::zeros(height, width);
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    for r in 0..height {
        let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f64;
        for c in 0..width {
            let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = fx - x0 as f64;
            let (a, b, cc, d) = (img.pixel(y0, x0), img.pixel(y0, x1), img.pixel(y1, x0), img.pixel(y1, x1));
            let mut px = [0.0f32; 3];
            for k in 0..3 {
                let top = a[k] as f64 * (1.0 - tx) + b[k] as f64 * tx;
                let bottom = cc[k] as f64 * (1.0 - tx) + d[k] as f64 * tx;
                px[k] = (top * (1.0 - ty) + bottom * ty) as f32;
            }
            out.set_pixel(r, c, px);
        }
    }
    out
}

/// Nearest-neighbour resize of a point cloud; never blends background into
/// foreground points.
pub fn resize_pc(pc: &StructuredPointCloud, height: usize, width: usize) -> StructuredPointCloud {
    if pc.shape() == (height, width) {
        return pc.clone();
    }
    let mut out = StructuredPointCloud::zeros(height, width);
    for r in 0..height {
        let y = ((r as f64 + 0.5) * pc.height as f64 / height as f64) as usize;
        for c in 0..width {
            let x = ((c as f64 + 0.5) * pc.width as f64 / width as f64) as usize;
            out.set_pixel(r, c, pc.pixel(y.min(pc.height - 1), x.min(pc.width - 1)));
        }
    }
    out
}

/// Nearest-neighbour resize of a mask.
pub fn resize_mask(mask: &Mask, height: usize, width: usize) -> Mask {
    if (mask.height, mask.width) == (height, width) {
        return mask.clone();
    }
    let mut data = Vec::with_capacity(height * width);
    for r in 0..height {
        let y = (((r as f64 + 0.5) * mask.height as f64 / height as f64) as usize).min(mask.height - 1);
        for c in 0..width {
            let x = (((c as f64 + 0.5) * mask.width as f64 / width as f64) as usize).min(mask.width - 1);
            data.push(mask.get(y, x));
        }
    }
    Mask {
        height,
        width,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiff_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("xyz.tiff");
        let data: Vec<f32> = (0..4 * 5 * 3).map(|i| i as f32 * 0.001 - 0.02).collect();
        let pc = StructuredPointCloud::new(4, 5, data).unwrap();
        write_xyz_tiff(&pc, &path).unwrap();
        assert_eq!(read_xyz_tiff(&path).unwrap(), pc);
    }

    #[test]
    fn png_round_trip_quantises_to_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let data: Vec<f32> = (0..2 * 3 * 3).map(|i| i as f32 / 255.0).collect();
        let img = RgbImage::new(2, 3, data).unwrap();
        write_rgb_png(&img, &path).unwrap();
        let back = read_rgb_png(&path).unwrap();
        for (a, b) in back.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-6);
        }
        let mask = Mask::new(2, 2, vec![true, false, false, true]).unwrap();
        let mpath = dir.path().join("gt.png");
        write_mask_png(&mask, &mpath).unwrap();
        assert_eq!(read_mask_png(&mpath).unwrap(), mask);
    }

    #[test]
    fn resize_identity_and_nearest() {
        let pc = StructuredPointCloud::new(2, 2, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(resize_pc(&pc, 2, 2), pc);
        let up = resize_pc(&pc, 4, 4);
        assert_eq!(up.pixel(3, 3), pc.pixel(1, 1));
        assert_eq!(up.pixel(0, 1), pc.pixel(0, 0));
        let img = RgbImage::new(1, 1, vec![0.2, 0.4, 0.6]).unwrap();
        assert_eq!(resize_rgb(&img, 3, 3).pixel(2, 1), [0.2, 0.4, 0.6]);
    }
}
