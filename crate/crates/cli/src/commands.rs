use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use cmdiad_core::bank::{BankManifest, DistanceMetric, MemoryBank};
use cmdiad_core::data::cmft::load_f64_tensor;
use cmdiad_core::data::layout::{load_sample, scan_split, write_sample, write_split, DatasetEntry, LoadOptions};
use cmdiad_core::data::{
    generate_synthetic_dataset, generate_synthetic_raw_dataset, Modality, Sample, ScoreMap,
};
use cmdiad_core::distill::{load_checkpoint, save_checkpoint, train_distiller, DenseNet};
use cmdiad_core::metrics::{ClassMetrics, MetricReport};
use cmdiad_core::pipeline::{evaluate, fit_bank, Detector};
use cmdiad_core::preprocess::{preprocess_pair, Plane};
use cmdiad_core::score::{AnomalyResult, Banks, InferenceMode, ResultSummary};
use cmdiad_core::Error;

use crate::config::{CommonArgs, RunConfig};
use crate::manifest::{checksum_entries, RunManifest};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn setup(common: &CommonArgs) -> Result<RunConfig> {
    let cfg = RunConfig::resolve(common)?;
    if let Some(n) = cfg.workers {
        // A second initialization in the same process keeps the first pool.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            warn!("worker pool already initialized");
        }
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    let bytes = serde_json::to_vec_pretty(value).map_err(Error::from)?;
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))?;
    Ok(())
}

/// Entries and loaded samples of one split, in sorted id order.
fn load_split(root: &Path, class: &str, split: &str, opts: LoadOptions) -> Result<(Vec<DatasetEntry>, Vec<Sample>)> {
    let entries = scan_split(root, class, split)?;
    if entries.is_empty() {
        return Err(Error::Data(format!("no samples in {class}/{split}")).into());
    }
    let samples = entries
        .par_iter()
        .map(|e| load_sample(e, opts))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((entries, samples))
}

/// Result file stem for a sample: `<defect>_<stem>`.
fn result_stem(entry: &DatasetEntry) -> String {
    format!("{}_{}", entry.defect, entry.stem)
}

/// Runs `f` per class; failures are reported and counted, not propagated,
/// unless every class fails.
fn per_class<T>(classes: &[String], mut f: impl FnMut(&str) -> Result<T>) -> Result<(Vec<(String, T)>, usize)> {
    let mut done = Vec::new();
    let mut first_err = None;
    let mut failed = 0;
    for class in classes {
        info!("class {class}");
        match f(class) {
            Ok(v) => done.push((class.clone(), v)),
            Err(e) => {
                eprintln!("class {class}: {e}");
                failed += 1;
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) if done.is_empty() => Err(e),
        _ => Ok((done, failed)),
    }
}

fn partial(failed: usize, total: usize, unit: &'static str) -> Result<()> {
    if failed > 0 {
        Err(CliError::Partial { failed, total, unit })
    } else {
        Ok(())
    }
}

fn class_dir(cfg: &RunConfig, class: &str) -> PathBuf {
    cfg.output.join(class)
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

#[derive(Serialize)]
struct PreprocessFailure {
    id: String,
    error: String,
}

#[derive(Serialize)]
struct PreprocessSummary {
    processed: usize,
    planes: BTreeMap<String, Plane>,
    failures: Vec<PreprocessFailure>,
}

fn preprocess_one(entry: &DatasetEntry, into: &Path, cfg: &RunConfig) -> std::result::Result<Plane, Error> {
    let sample = load_sample(entry, LoadOptions { raw: true, features: false })?;
    let (Some(pc), Some(rgb)) = (&sample.pc, &sample.rgb) else {
        return Err(Error::Data("needs both rgb and xyz input".into()));
    };
    let (plane, pc, rgb) = preprocess_pair(pc, rgb, &cfg.ransac)?;
    let out = DatasetEntry {
        root: into.to_path_buf(),
        ..entry.clone()
    };
    let cleaned = Sample {
        pc: Some(pc),
        rgb: Some(rgb),
        ..sample
    };
    write_sample(&out, &cleaned)?;
    Ok(plane)
}

pub fn preprocess(common: &CommonArgs, into: &Path, argv: &[String]) -> Result<()> {
    let cfg = setup(common)?;
    let root = cfg.existing_root()?;
    if same_dir(root, into) {
        return Err(CliError::Usage("preprocess writes a new tree; --into must differ from the data root".into()));
    }
    let classes = cfg.class_list(root)?;
    let mut entries = Vec::new();
    for class in &classes {
        for split in ["train", "validation", "test"] {
            if root.join(class).join(split).is_dir() {
                entries.extend(scan_split(root, class, split)?);
            }
        }
    }
    let outcomes: Vec<_> = entries.par_iter().map(|e| preprocess_one(e, into, &cfg)).collect();
    let mut summary = PreprocessSummary {
        processed: 0,
        planes: BTreeMap::new(),
        failures: Vec::new(),
    };
    for (e, r) in entries.iter().zip(outcomes) {
        match r {
            Ok(plane) => {
                summary.processed += 1;
                summary.planes.insert(e.id(), plane);
            }
            Err(err) => {
                eprintln!("{}: {err}", e.id());
                summary.failures.push(PreprocessFailure {
                    id: e.id(),
                    error: err.to_string(),
                });
            }
        }
    }
    let failed = summary.failures.len();
    let inputs = checksum_entries(root, &entries)?;
    RunManifest::new("preprocess", argv, &cfg, inputs, summary).write(&cfg.output)?;
    if failed == entries.len() && failed > 0 {
        return Err(Error::Data("every sample failed preprocessing".into()).into());
    }
    partial(failed, entries.len(), "samples")
}

#[derive(Serialize)]
struct LossLog {
    route: String,
    main: Modality,
    losses: Vec<f64>,
    checkpoints: Vec<usize>,
}

fn mtfi_parts(cfg: &RunConfig, command: &str) -> Result<(cmdiad_core::distill::Route, Modality)> {
    match cfg.detector.mode {
        InferenceMode::Mtfi { route, main } => Ok((route, main)),
        other => Err(CliError::Usage(format!(
            "{command} needs an MTFI mode (pass --route/--main or --mode mtfi-<route>-<main>), got {other}"
        ))),
    }
}

fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}")
}

/// Checkpoint directories under `dir`, by epoch.
fn list_checkpoints(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    if dir.is_dir() {
        for e in std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
            let p = e.map_err(|e| Error::file(dir, e))?.path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            if let Some(epoch) = name.strip_prefix("epoch_").and_then(|n| n.parse().ok()) {
                found.push((epoch, p));
            }
        }
    }
    found.sort();
    Ok(found)
}

pub fn distill(common: &CommonArgs, argv: &[String]) -> Result<()> {
    let cfg = setup(common)?;
    let (route, main) = mtfi_parts(&cfg, "distill")?;
    let root = cfg.existing_root()?;
    let classes = cfg.class_list(root)?;
    let mut inputs = BTreeMap::new();
    let (done, failed) = per_class(&classes, |class| {
        let (entries, train) = load_split(root, class, "train", LoadOptions::default())?;
        inputs.extend(checksum_entries(root, &entries)?);
        let tc = &cfg.detector.train;
        let outcome = train_distiller(route, main, &train, &cfg.extractors, tc)?;
        let dir = class_dir(&cfg, class).join("distill");
        if dir.is_dir() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
        }
        let tc_json = serde_json::to_value(tc).map_err(Error::from)?;
        for c in &outcome.checkpoints {
            save_checkpoint(c, tc.seed, tc_json.clone(), dir.join(checkpoint_name(c.epoch)))?;
        }
        let log = LossLog {
            route: route.to_string(),
            main,
            losses: outcome.losses.clone(),
            checkpoints: outcome.checkpoints.iter().map(|c| c.epoch).collect(),
        };
        write_json(&dir.join("losses.json"), &log)?;
        println!("{class}: final loss {:.6e} after {} epochs", outcome.last().loss, outcome.losses.len());
        Ok(log.checkpoints)
    })?;
    let summary: BTreeMap<_, _> = done.into_iter().collect();
    RunManifest::new("distill", argv, &cfg, inputs, summary).write(&cfg.output)?;
    partial(failed, classes.len(), "classes")
}

fn bank_dir(cfg: &RunConfig, class: &str, m: Modality) -> PathBuf {
    class_dir(cfg, class).join("banks").join(m.as_str())
}

fn bank_matches(cfg: &RunConfig, b: &BankManifest) -> bool {
    let c = &cfg.detector.bank;
    b.metric == c.metric && b.fraction == c.fraction && b.seed == c.seed
}

/// Banks saved by `bank` when they match the configuration, otherwise built
/// from `train` and saved.
fn banks_for(cfg: &RunConfig, class: &str, modalities: &[Modality], train: &[Sample]) -> Result<Banks> {
    let mut banks = Banks::default();
    for &m in modalities {
        let dir = bank_dir(cfg, class, m);
        let saved = if dir.join("manifest.json").is_file() {
            Some(MemoryBank::load(&dir)?)
        } else {
            None
        };
        let bank = match saved {
            Some(b) if bank_matches(cfg, &b.manifest()) => b,
            _ => {
                let b = fit_bank(train, &cfg.extractors, m, &cfg.detector.bank)?;
                b.save(&dir)?;
                b
            }
        };
        banks.set(bank);
    }
    Ok(banks)
}

#[derive(Serialize)]
struct BankSummary {
    rows: usize,
    dim: usize,
    source_checksum: String,
}

pub fn bank(common: &CommonArgs, modality: Option<Modality>, argv: &[String]) -> Result<()> {
    let cfg = setup(common)?;
    let root = cfg.existing_root()?;
    let classes = cfg.class_list(root)?;
    let modalities = modality.map(|m| vec![m]).unwrap_or_else(|| cfg.detector.mode.modalities());
    let mut inputs = BTreeMap::new();
    let (done, failed) = per_class(&classes, |class| {
        let (entries, train) = load_split(root, class, "train", LoadOptions::default())?;
        inputs.extend(checksum_entries(root, &entries)?);
        let mut out = BTreeMap::new();
        for &m in &modalities {
            let b = fit_bank(&train, &cfg.extractors, m, &cfg.detector.bank)?;
            b.save(bank_dir(&cfg, class, m))?;
            println!("{class}/{m}: {} coreset rows of dim {}", b.len(), b.dim());
            out.insert(
                m.to_string(),
                BankSummary {
                    rows: b.len(),
                    dim: b.dim(),
                    source_checksum: b.source_checksum.clone(),
                },
            );
        }
        Ok(out)
    })?;
    let summary: BTreeMap<_, _> = done.into_iter().collect();
    RunManifest::new("bank", argv, &cfg, inputs, summary).write(&cfg.output)?;
    partial(failed, classes.len(), "classes")
}

/// The network for MTFI mode: `explicit`, else the last checkpoint under the
/// class output, else freshly trained (and saved there).
fn distiller_for(cfg: &RunConfig, class: &str, explicit: Option<&Path>, train: &[Sample]) -> Result<Option<DenseNet>> {
    let InferenceMode::Mtfi { route, main } = cfg.detector.mode else {
        return Ok(None);
    };
    if let Some(dir) = explicit {
        return Ok(Some(load_checkpoint(dir)?.0.net));
    }
    let dir = class_dir(cfg, class).join("distill");
    if let Some((_, last)) = list_checkpoints(&dir)?.pop() {
        info!("using checkpoint {}", last.display());
        return Ok(Some(load_checkpoint(&last)?.0.net));
    }
    info!("no checkpoint under {}; training", dir.display());
    let tc = &cfg.detector.train;
    let outcome = train_distiller(route, main, train, &cfg.extractors, tc)?;
    let ckpt = outcome.last();
    let tc_json = serde_json::to_value(tc).map_err(Error::from)?;
    save_checkpoint(ckpt, tc.seed, tc_json, dir.join(checkpoint_name(ckpt.epoch)))?;
    Ok(Some(ckpt.net.clone()))
}

/// Test samples as inference sees them: in MTFI mode only the main modality.
fn inference_view(mode: InferenceMode, mut samples: Vec<Sample>) -> Vec<Sample> {
    if let InferenceMode::Mtfi { main, .. } = mode {
        for s in &mut samples {
            match main.other() {
                Modality::Rgb => {
                    s.rgb = None;
                    s.rgb_features = None;
                }
                Modality::Pc => {
                    s.pc = None;
                    s.pc_features = None;
                }
            }
        }
    }
    samples
}

pub fn infer(common: &CommonArgs, checkpoint: Option<&Path>, argv: &[String]) -> Result<()> {
    let cfg = setup(common)?;
    let root = cfg.existing_root()?;
    let classes = cfg.class_list(root)?;
    if let Some(c) = checkpoint {
        if !c.is_dir() {
            return Err(CliError::Usage(format!("checkpoint {} does not exist", c.display())));
        }
    }
    let mode = cfg.detector.mode;
    let mut inputs = BTreeMap::new();
    let (done, failed) = per_class(&classes, |class| {
        let (train_entries, train) = load_split(root, class, "train", LoadOptions::default())?;
        let (test_entries, test) = load_split(root, class, "test", LoadOptions::default())?;
        inputs.extend(checksum_entries(root, &train_entries)?);
        inputs.extend(checksum_entries(root, &test_entries)?);
        let banks = banks_for(&cfg, class, &mode.modalities(), &train)?;
        let net = distiller_for(&cfg, class, checkpoint, &train)?;
        let det = Detector::from_parts(&train, cfg.extractors.clone(), cfg.detector.clone(), banks, net)?;
        let dir = class_dir(&cfg, class);
        det.save(dir.join("detector"))?;
        let results = det.infer_all(&inference_view(mode, test))?;
        let res_dir = dir.join("results");
        results
            .par_iter()
            .zip(&test_entries)
            .try_for_each(|(r, e)| r.save(&res_dir, &result_stem(e), cfg.render))?;
        println!("{class}: scored {} test samples in mode {mode}", results.len());
        Ok(results.iter().map(AnomalyResult::summary).collect::<Vec<_>>())
    })?;
    let summary: BTreeMap<_, _> = done.into_iter().collect();
    RunManifest::new("infer", argv, &cfg, inputs, summary).write(&cfg.output)?;
    partial(failed, classes.len(), "classes")
}

fn load_result(dir: &Path, entry: &DatasetEntry) -> Result<AnomalyResult> {
    let stem = result_stem(entry);
    let json = dir.join(format!("{stem}.json"));
    let text = std::fs::read(&json).map_err(|e| Error::file(&json, e))?;
    let summary: ResultSummary = serde_json::from_slice(&text).map_err(Error::from)?;
    let (header, data) = load_f64_tensor(dir.join(format!("{stem}.cmft")))?;
    if header.dim != 1 {
        return Err(Error::Format(format!("{stem}.cmft: score map must have dim 1")).into());
    }
    Ok(AnomalyResult {
        id: summary.id,
        mode: summary.mode,
        image_score: summary.image_score,
        pixel_map: ScoreMap::new(header.rows as usize, header.cols as usize, data)?,
        pc: None,
        rgb: None,
    })
}

fn print_metrics(rows: &[ClassMetrics]) {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!("{:<16} {:>8} {:>8} {:>8}", "class", "I-AUROC", "P-AUROC", "AUPRO");
    for m in rows {
        println!("{:<16} {:>8.4} {:>8} {:>8}", m.class, m.i_auroc, opt(m.p_auroc), opt(m.aupro));
    }
}

fn evaluate_class(cfg: &RunConfig, root: &Path, class: &str) -> Result<(ClassMetrics, Vec<DatasetEntry>)> {
    let (entries, test) = load_split(root, class, "test", LoadOptions::default())?;
    let dir = class_dir(cfg, class).join("results");
    let results = entries.iter().map(|e| load_result(&dir, e)).collect::<Result<Vec<_>>>()?;
    Ok((evaluate(class, &results, &test, cfg.fpr_limit)?, entries))
}

pub fn eval(common: &CommonArgs, argv: &[String]) -> Result<()> {
    let cfg = setup(common)?;
    let root = cfg.existing_root()?;
    let classes = cfg.class_list(root)?;
    let mut inputs = BTreeMap::new();
    let (done, failed) = per_class(&classes, |class| {
        let (m, entries) = evaluate_class(&cfg, root, class)?;
        inputs.extend(checksum_entries(root, &entries)?);
        Ok(m)
    })?;
    let report = MetricReport::new(done.into_iter().map(|(_, m)| m).collect());
    print_metrics(&report.classes);
    println!("mean I-AUROC {:.4}", report.mean_i_auroc);
    write_json(&cfg.output.join("report.json"), &report)?;
    RunManifest::new("eval", argv, &cfg, inputs, &report).write(&cfg.output)?;
    partial(failed, classes.len(), "classes")
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    epoch: usize,
    loss: f64,
    i_auroc: f64,
    p_auroc: Option<f64>,
    aupro: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct SweepTable {
    rows: Vec<SweepRow>,
    /// Epoch with the highest image AUROC; the earliest on ties.
    selected: usize,
}

fn select_epoch(rows: &[SweepRow]) -> usize {
    let mut best = &rows[0];
    for r in &rows[1..] {
        if r.i_auroc > best.i_auroc {
            best = r;
        }
    }
    best.epoch
}

pub fn sweep(common: &CommonArgs, argv: &[String]) -> Result<()> {
    let cfg = setup(common)?;
    mtfi_parts(&cfg, "sweep")?;
    let root = cfg.existing_root()?;
    let classes = cfg.class_list(root)?;
    let mode = cfg.detector.mode;
    let mut inputs = BTreeMap::new();
    let (done, failed) = per_class(&classes, |class| {
        let ckpts = list_checkpoints(&class_dir(&cfg, class).join("distill"))?;
        if ckpts.is_empty() {
            return Err(Error::Data(format!("no checkpoints for {class}; run `distill` first")).into());
        }
        let (train_entries, train) = load_split(root, class, "train", LoadOptions::default())?;
        let (test_entries, test) = load_split(root, class, "test", LoadOptions::default())?;
        inputs.extend(checksum_entries(root, &train_entries)?);
        inputs.extend(checksum_entries(root, &test_entries)?);
        let test_view = inference_view(mode, test.clone());
        let banks = banks_for(&cfg, class, &mode.modalities(), &train)?;
        let mut rows = Vec::new();
        for (epoch, dir) in &ckpts {
            let (ckpt, _) = load_checkpoint(dir)?;
            let det = Detector::from_parts(&train, cfg.extractors.clone(), cfg.detector.clone(), banks.clone(), Some(ckpt.net))?;
            let m = evaluate(class, &det.infer_all(&test_view)?, &test, cfg.fpr_limit)?;
            rows.push(SweepRow {
                epoch: *epoch,
                loss: ckpt.loss,
                i_auroc: m.i_auroc,
                p_auroc: m.p_auroc,
                aupro: m.aupro,
            });
        }
        let table = SweepTable {
            selected: select_epoch(&rows),
            rows,
        };
        println!("{class}: {:>6} {:>12} {:>8} {:>8} {:>8}", "epoch", "loss", "I-AUROC", "P-AUROC", "AUPRO");
        for r in &table.rows {
            let mark = if r.epoch == table.selected { "*" } else { " " };
            println!(
                "{class}:{mark}{:>6} {:>12.4e} {:>8.4} {:>8.4} {:>8.4}",
                r.epoch,
                r.loss,
                r.i_auroc,
                r.p_auroc.unwrap_or(f64::NAN),
                r.aupro.unwrap_or(f64::NAN)
            );
        }
        write_json(&class_dir(&cfg, class).join("sweep.json"), &table)?;
        Ok(table)
    })?;
    let summary: BTreeMap<_, _> = done.into_iter().collect();
    RunManifest::new("sweep", argv, &cfg, inputs, summary).write(&cfg.output)?;
    partial(failed, classes.len(), "classes")
}

#[derive(Debug, Serialize)]
struct AblationRow {
    metric: DistanceMetric,
    report: MetricReport,
    /// Per class and modality: checksum of the patches the bank was selected from.
    bank_sources: BTreeMap<String, BTreeMap<String, String>>,
}

pub fn ablate_metric(common: &CommonArgs, argv: &[String]) -> Result<()> {
    let cfg = setup(common)?;
    let root = cfg.existing_root()?;
    let classes = cfg.class_list(root)?;
    let mode = cfg.detector.mode;
    let mut inputs = BTreeMap::new();
    let mut data = BTreeMap::new();
    let mut nets = BTreeMap::new();
    let (loaded, mut failed) = per_class(&classes, |class| {
        let (train_entries, train) = load_split(root, class, "train", LoadOptions::default())?;
        let (test_entries, test) = load_split(root, class, "test", LoadOptions::default())?;
        inputs.extend(checksum_entries(root, &train_entries)?);
        inputs.extend(checksum_entries(root, &test_entries)?);
        // One network per class, shared by every metric.
        nets.insert(class.to_string(), distiller_for(&cfg, class, None, &train)?);
        data.insert(class.to_string(), (train, test));
        Ok(())
    })?;
    let mut rows = Vec::new();
    for metric in DistanceMetric::ALL {
        let mut run = cfg.clone();
        run.detector.bank.metric = metric;
        let mut classes_metrics = Vec::new();
        let mut sources = BTreeMap::new();
        for (class, ()) in &loaded {
            let (train, test) = &data[class];
            let outcome = (|| -> Result<ClassMetrics> {
                let mut banks = Banks::default();
                let mut src = BTreeMap::new();
                for m in mode.modalities() {
                    let b = fit_bank(train, &run.extractors, m, &run.detector.bank)?;
                    src.insert(m.to_string(), b.source_checksum.clone());
                    banks.set(b);
                }
                sources.insert(class.clone(), src);
                let det = Detector::from_parts(train, run.extractors.clone(), run.detector.clone(), banks, nets[class].clone())?;
                let results = det.infer_all(&inference_view(mode, test.clone()))?;
                Ok(evaluate(class, &results, test, run.fpr_limit)?)
            })();
            match outcome {
                Ok(m) => classes_metrics.push(m),
                Err(e) => {
                    eprintln!("{class} with {metric}: {e}");
                    failed += 1;
                }
            }
        }
        rows.push(AblationRow {
            metric,
            report: MetricReport::new(classes_metrics),
            bank_sources: sources,
        });
    }
    println!("{:<8} {:>8} {:>8} {:>8}", "metric", "I-AUROC", "P-AUROC", "AUPRO");
    for r in &rows {
        println!(
            "{:<8} {:>8.4} {:>8.4} {:>8.4}",
            r.metric.as_str(),
            r.report.mean_i_auroc,
            r.report.mean_p_auroc.unwrap_or(f64::NAN),
            r.report.mean_aupro.unwrap_or(f64::NAN)
        );
    }
    write_json(&cfg.output.join("ablate-metric.json"), &rows)?;
    RunManifest::new("ablate-metric", argv, &cfg, inputs, &rows).write(&cfg.output)?;
    partial(failed, classes.len() * DistanceMetric::ALL.len(), "class/metric runs")
}

#[derive(Serialize)]
struct SynthSummary {
    classes: Vec<String>,
    raw: bool,
    train: usize,
    test: usize,
}

pub fn synth(common: &CommonArgs, raw: bool, coupling: Option<f64>, strength: Option<f64>, argv: &[String]) -> Result<()> {
    let mut cfg = setup(common)?;
    if let Some(c) = coupling {
        cfg.synth.cross_modal_coupling = c;
    }
    if let Some(s) = strength {
        cfg.synth.anomaly_strength = s;
    }
    let root = cfg
        .data_root
        .clone()
        .ok_or_else(|| CliError::Usage("synth needs --data-root (or the root env var) to write into".into()))?;
    let classes = if cfg.classes.is_empty() {
        vec!["synthetic".to_string()]
    } else {
        cfg.classes.clone()
    };
    let (mut n_train, mut n_test) = (0, 0);
    for (i, class) in classes.iter().enumerate() {
        // Classes differ by seed offset.
        let (train, test) = if raw {
            let mut c = cfg.raw_synth.clone();
            c.seed = c.seed.wrapping_add(i as u64);
            generate_synthetic_raw_dataset(&c)?
        } else {
            let mut c = cfg.synth.clone();
            c.seed = c.seed.wrapping_add(i as u64);
            generate_synthetic_dataset(&c)?
        };
        write_split(&root, class, "train", &train)?;
        write_split(&root, class, "test", &test)?;
        n_train += train.len();
        n_test += test.len();
        println!("{class}: {} train, {} test samples under {}", train.len(), test.len(), root.display());
    }
    let summary = SynthSummary {
        classes,
        raw,
        train: n_train,
        test: n_test,
    };
    RunManifest::new("synth", argv, &cfg, BTreeMap::new(), summary).write(&cfg.output)?;
    Ok(())
}
