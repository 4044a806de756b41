use ndarray::Array2;

use super::net::{DenseNet, Route};
use super::pairs::{block, raw_or_err};
use crate::data::{is_background, FeatureMap, Modality, PixelGrid, RgbImage, Sample, StructuredPointCloud};
use crate::error::{Error, Result};
use crate::extractor::{extract_rgb, patchify, pc_feature_map, Extractors};

fn expect_route(net: &DenseNet, route: Route) -> Result<()> {
    if net.route != route {
        return Err(Error::Usage(format!("a {} network cannot run the {route} route", net.route)));
    }
    Ok(())
}

/// Runs the network on every row of `inputs` (`n x in_dim`, f32) and zeroes
/// the outputs of all-zero inputs.
fn map_rows(net: &DenseNet, inputs: &[f32]) -> Result<Vec<f32>> {
    let d = net.in_dim();
    let n = inputs.len() / d;
    let x = Array2::from_shape_fn((n, d), |(r, c)| inputs[r * d + c] as f64);
    let y = net.forward_batch(x.view())?;
    let mut out = Vec::with_capacity(n * net.out_dim());
    for (r, row) in y.rows().into_iter().enumerate() {
        if is_background(&inputs[r * d..(r + 1) * d]) {
            out.extend(std::iter::repeat_n(0.0f32, row.len()));
        } else {
            out.extend(row.iter().map(|&v| v as f32));
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("network produced non-finite values".into()));
    }
    Ok(out)
}

/// Cell-wise feature-to-feature mapping.
pub fn hallucinate_features(net: &DenseNet, features: &FeatureMap) -> Result<FeatureMap> {
    expect_route(net, Route::FtoF)?;
    if features.dim() != net.in_dim() {
        return Err(Error::Shape(format!(
            "{}-dim features for a network taking {}",
            features.dim(),
            net.in_dim()
        )));
    }
    let out = map_rows(net, features.data())?;
    FeatureMap::new(features.rows(), features.cols(), net.out_dim(), out)
}

/// Pixel-block-to-feature mapping onto a `rows x cols` grid.
pub fn hallucinate_from_raw(net: &DenseNet, grid: &PixelGrid, rows: usize, cols: usize) -> Result<FeatureMap> {
    expect_route(net, Route::ItoF)?;
    let (ph, pw) = block(grid, rows, cols)?;
    if ph * pw * 3 != net.in_dim() {
        return Err(Error::Shape(format!(
            "{ph}x{pw} pixel blocks for a network taking {} inputs",
            net.in_dim()
        )));
    }
    let mut inputs = Vec::with_capacity(rows * cols * net.in_dim());
    let mut patch = vec![0.0f64; net.in_dim()];
    for r in 0..rows {
        for c in 0..cols {
            patchify(grid, r, c, ph, pw, &mut patch);
            inputs.extend(patch.iter().map(|&v| v as f32));
        }
    }
    FeatureMap::new(rows, cols, net.out_dim(), map_rows(net, &inputs)?)
}

/// Side of the square pixel block a feature-to-pixel network emits.
fn block_side(net: &DenseNet) -> Result<usize> {
    let px = net.out_dim() / 3;
    let side = (px as f64).sqrt().round() as usize;
    if side * side * 3 != net.out_dim() {
        return Err(Error::Shape(format!(
            "output width {} is not a square RGB block",
            net.out_dim()
        )));
    }
    Ok(side)
}

/// Feature-to-pixel mapping: each cell becomes a square block of the
/// hallucinated raw input.
pub fn hallucinate_raw(net: &DenseNet, features: &FeatureMap) -> Result<PixelGrid> {
    expect_route(net, Route::FtoI)?;
    if features.dim() != net.in_dim() {
        return Err(Error::Shape(format!(
            "{}-dim features for a network taking {}",
            features.dim(),
            net.in_dim()
        )));
    }
    let side = block_side(net)?;
    let blocks = map_rows(net, features.data())?;
    let (h, w) = (features.rows() * side, features.cols() * side);
    let mut grid = PixelGrid::zeros(h, w);
    for r in 0..features.rows() {
        for c in 0..features.cols() {
            let cell = &blocks[(r * features.cols() + c) * net.out_dim()..][..net.out_dim()];
            for y in 0..side {
                for x in 0..side {
                    let k = (y * side + x) * 3;
                    grid.set_pixel(r * side + y, c * side + x, [cell[k], cell[k + 1], cell[k + 2]]);
                }
            }
        }
    }
    Ok(grid)
}

/// Features of the modality missing from `sample`, produced from its main
/// modality by `net`.
pub fn hallucinate(net: &DenseNet, sample: &Sample, extractors: &Extractors) -> Result<FeatureMap> {
    let main = net.main;
    let other = main.other();
    let target = extractors.spec(other);
    match net.route {
        Route::FtoF => hallucinate_features(net, &*extractors.features(sample, main)?),
        Route::ItoF => hallucinate_from_raw(net, raw_or_err(sample, main)?, target.out_rows, target.out_cols),
        Route::FtoI => {
            let grid = hallucinate_raw(net, &*extractors.features(sample, main)?)?;
            let id = format!("{}#hallucinated", sample.id);
            match other {
                Modality::Rgb => extract_rgb(target, &RgbImage(grid), &id),
                Modality::Pc => pc_feature_map(
                    target,
                    &StructuredPointCloud(grid),
                    &extractors.grouping,
                    extractors.fps_seed,
                    &id,
                ),
            }
            .map_err(|e| match e {
                Error::Lookup(p) => Error::Usage(format!(
                    "the {other} extractor only loads precomputed files ({}) and cannot re-extract hallucinated input",
                    p.display()
                )),
                e => e,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_dataset, SynthConfig};

    #[test]
    fn ftof_shapes_and_zero_net() {
        let map = FeatureMap::new(3, 2, 4, (0..24).map(|v| v as f32 / 24.0 + 0.1).collect()).unwrap();
        let mut net = DenseNet::new(Route::FtoF, Modality::Pc, &[4, 8, 6], 0).unwrap();
        let h = hallucinate_features(&net, &map).unwrap();
        assert_eq!(h.shape(), (3, 2, 6));
        net.set_parameters(&vec![0.0; net.n_params()]).unwrap();
        assert!(hallucinate_features(&net, &map).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn background_cells_stay_background() {
        let mut map = FeatureMap::new(2, 2, 3, vec![0.5; 12]).unwrap();
        map.cell_mut(1, 0).fill(0.0);
        let net = DenseNet::new(Route::FtoF, Modality::Pc, &[3, 5, 3], 4).unwrap();
        let h = hallucinate_features(&net, &map).unwrap();
        assert!(h.is_background(1, 0));
        assert!(!h.is_background(0, 0));
    }

    #[test]
    fn route_mismatch_is_usage_error() {
        let map = FeatureMap::zeros(2, 2, 3);
        let net = DenseNet::new(Route::ItoF, Modality::Pc, &[3, 3], 0).unwrap();
        assert!(matches!(hallucinate_features(&net, &map), Err(Error::Usage(_))));
        assert!(matches!(hallucinate_raw(&net, &map), Err(Error::Usage(_))));
    }

    #[test]
    fn ftoi_assembles_blocks_in_place() {
        // One layer net mapping the 1-dim feature v to a 2x2 block of value v.
        let mut net = DenseNet::new(Route::FtoI, Modality::Pc, &[1, 12], 0).unwrap();
        let mut params = vec![1.0; 12];
        params.extend(vec![0.0; 12]);
        net.set_parameters(&params).unwrap();
        let map = FeatureMap::new(1, 2, 1, vec![0.25, 0.75]).unwrap();
        let g = hallucinate_raw(&net, &map).unwrap();
        assert_eq!(g.shape(), (2, 4));
        assert_eq!(g.pixel(1, 1), [0.25; 3]);
        assert_eq!(g.pixel(0, 2), [0.75; 3]);
    }

    #[test]
    fn ftoi_with_precomputed_target_extractor_is_usage_error() {
        let (train, _) = generate_synthetic_dataset(&SynthConfig::default()).unwrap();
        let s = &train[0];
        let dim = s.pc_features.as_ref().unwrap().dim();
        let net = DenseNet::new(Route::FtoI, Modality::Pc, &[dim, 48], 0).unwrap();
        let mut ex = Extractors::synthetic(0);
        ex.rgb = crate::extractor::ExtractorSpec::precomputed(Modality::Rgb, "/nonexistent");
        assert!(matches!(hallucinate(&net, s, &ex), Err(Error::Usage(_))));
    }
}
