use ndarray::Array2;

use super::net::Route;
use crate::data::{is_background, FeatureMap, Label, Modality, PixelGrid, Sample};
use crate::error::{Error, Result};
use crate::extractor::{patchify, Extractors};

/// Row-aligned `(input, target)` training pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPairs {
    pub in_dim: usize,
    pub out_dim: usize,
    inputs: Vec<f32>,
    targets: Vec<f32>,
}

impl TrainingPairs {
    pub fn new(in_dim: usize, out_dim: usize, inputs: Vec<f32>, targets: Vec<f32>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || inputs.len() % in_dim != 0 || targets.len() % out_dim != 0 {
            return Err(Error::Shape("training pairs do not tile their dimensions".into()));
        }
        if inputs.len() / in_dim != targets.len() / out_dim {
            return Err(Error::Shape(format!(
                "{} inputs for {} targets",
                inputs.len() / in_dim,
                targets.len() / out_dim
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.in_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub fn target(&self, i: usize) -> &[f32] {
        &self.targets[i * self.out_dim..(i + 1) * self.out_dim]
    }

    pub(crate) fn batch(&self, idx: &[usize]) -> (Array2<f64>, Array2<f64>) {
        let x = Array2::from_shape_fn((idx.len(), self.in_dim), |(r, c)| self.input(idx[r])[c] as f64);
        let t = Array2::from_shape_fn((idx.len(), self.out_dim), |(r, c)| self.target(idx[r])[c] as f64);
        (x, t)
    }

    fn push(&mut self, input: &[f32], target: &[f32]) {
        self.inputs.extend_from_slice(input);
        if is_background(input) {
            self.targets.extend(std::iter::repeat_n(0.0, target.len()));
        } else {
            self.targets.extend_from_slice(target);
        }
    }
}

pub(crate) fn raw(sample: &Sample, modality: Modality) -> Option<&PixelGrid> {
    match modality {
        Modality::Rgb => sample.rgb.as_deref(),
        Modality::Pc => sample.pc.as_deref(),
    }
}

pub(crate) fn raw_or_err(sample: &Sample, modality: Modality) -> Result<&PixelGrid> {
    raw(sample, modality)
        .ok_or_else(|| Error::Data(format!("sample `{}` has no raw {modality} input", sample.id)))
}

/// Pixel block size of a grid cell.
pub(crate) fn block(grid: &PixelGrid, rows: usize, cols: usize) -> Result<(usize, usize)> {
    if grid.height % rows != 0 || grid.width % cols != 0 {
        return Err(Error::Shape(format!(
            "{}x{} input does not tile into a {rows}x{cols} grid",
            grid.height, grid.width
        )));
    }
    Ok((grid.height / rows, grid.width / cols))
}

fn check_shape(a: &FeatureMap, b_rows: usize, b_cols: usize, id: &str) -> Result<()> {
    if (a.rows(), a.cols()) != (b_rows, b_cols) {
        return Err(Error::Shape(format!(
            "sample `{id}`: {}x{} grid against {b_rows}x{b_cols}",
            a.rows(),
            a.cols()
        )));
    }
    Ok(())
}

/// Training pairs for `route` with `main` as the input modality, one pair per
/// grid cell. Pairs whose input is all-zero get an all-zero target.
pub fn build_pairs(route: Route, main: Modality, samples: &[Sample], extractors: &Extractors) -> Result<TrainingPairs> {
    let other = main.other();
    let mut pairs: Option<TrainingPairs> = None;
    for s in samples {
        if s.label == Label::Anomalous {
            return Err(Error::Data(format!("training sample `{}` is anomalous", s.id)));
        }
        let mut input_buf = Vec::new();
        let mut target_buf = Vec::new();
        let mut cells: Vec<(Vec<f32>, Vec<f32>)> = Vec::new();
        match route {
            Route::FtoF => {
                let x = extractors.features(s, main)?;
                let t = extractors.features(s, other)?;
                check_shape(&x, t.rows(), t.cols(), &s.id)?;
                for (xi, ti) in x.cells().zip(t.cells()) {
                    cells.push((xi.to_vec(), ti.to_vec()));
                }
            }
            Route::ItoF => {
                let grid = raw_or_err(s, main)?;
                let t = extractors.features(s, other)?;
                let (ph, pw) = block(grid, t.rows(), t.cols())?;
                input_buf.resize(ph * pw * 3, 0.0);
                for r in 0..t.rows() {
                    for c in 0..t.cols() {
                        patchify(grid, r, c, ph, pw, &mut input_buf);
                        cells.push((input_buf.iter().map(|&v| v as f32).collect(), t.cell(r, c).to_vec()));
                    }
                }
            }
            Route::FtoI => {
                let x = extractors.features(s, main)?;
                let grid = raw_or_err(s, other)?;
                let (ph, pw) = block(grid, x.rows(), x.cols())?;
                target_buf.resize(ph * pw * 3, 0.0);
                for r in 0..x.rows() {
                    for c in 0..x.cols() {
                        patchify(grid, r, c, ph, pw, &mut target_buf);
                        cells.push((x.cell(r, c).to_vec(), target_buf.iter().map(|&v| v as f32).collect()));
                    }
                }
            }
        }
        let Some((i0, t0)) = cells.first() else { continue };
        let p = pairs.get_or_insert_with(|| TrainingPairs {
            in_dim: i0.len(),
            out_dim: t0.len(),
            inputs: Vec::new(),
            targets: Vec::new(),
        });
        if i0.len() != p.in_dim || t0.len() != p.out_dim {
            return Err(Error::Shape(format!(
                "sample `{}` yields {} -> {} pairs, expected {} -> {}",
                s.id,
                i0.len(),
                t0.len(),
                p.in_dim,
                p.out_dim
            )));
        }
        for (i, t) in &cells {
            p.push(i, t);
        }
    }
    pairs.ok_or_else(|| Error::Data("no training samples".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_dataset, generate_synthetic_raw_dataset, RawSynthConfig, SynthConfig};

    #[test]
    fn ftof_pairs_cover_every_cell_and_zero_background_targets() {
        let cfg = SynthConfig {
            n_train: 3,
            ..SynthConfig::default()
        };
        let (train, _) = generate_synthetic_dataset(&cfg).unwrap();
        let ex = Extractors::synthetic(0);
        let p = build_pairs(Route::FtoF, Modality::Pc, &train, &ex).unwrap();
        assert_eq!(p.len(), 3 * cfg.rows * cfg.cols);
        assert_eq!((p.in_dim, p.out_dim), (cfg.dim, cfg.dim));
        for i in 0..p.len() {
            if is_background(p.input(i)) {
                assert!(is_background(p.target(i)));
            }
        }
    }

    #[test]
    fn raw_routes_need_raw_inputs() {
        let (train, _) = generate_synthetic_dataset(&SynthConfig::default()).unwrap();
        let ex = Extractors::synthetic(0);
        let err = build_pairs(Route::ItoF, Modality::Pc, &train, &ex).unwrap_err();
        assert!(matches!(err, Error::Data(ref m) if m.contains(&train[0].id)));
    }

    #[test]
    fn raw_route_pair_dims() {
        let (train, _) = generate_synthetic_raw_dataset(&RawSynthConfig {
            n_train: 2,
            ..RawSynthConfig::default()
        })
        .unwrap();
        let mut ex = Extractors::synthetic(3);
        ex.rgb = ex.rgb.clone().with_shape(8, 8, 12);
        ex.pc = ex.pc.clone().with_shape(8, 8, 12);
        ex.grouping.n_groups = 64;
        ex.grouping.group_size = 8;
        let itof = build_pairs(Route::ItoF, Modality::Pc, &train, &ex).unwrap();
        assert_eq!((itof.in_dim, itof.out_dim, itof.len()), (48, 12, 128));
        let ftoi = build_pairs(Route::FtoI, Modality::Pc, &train, &ex).unwrap();
        assert_eq!((ftoi.in_dim, ftoi.out_dim), (12, 48));
    }

    #[test]
    fn anomalous_training_sample_is_rejected() {
        let (_, test) = generate_synthetic_dataset(&SynthConfig::default()).unwrap();
        let bad: Vec<Sample> = test.into_iter().filter(|s| s.label == Label::Anomalous).take(1).collect();
        assert!(matches!(
            build_pairs(Route::FtoF, Modality::Pc, &bad, &Extractors::synthetic(0)),
            Err(Error::Data(_))
        ));
    }
}
