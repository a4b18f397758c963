//! Supervised workflows: image-level classification and regression, pixel
//! classifiers and dense segmentation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use mct_core::classify::{
    cross_validate, relative_rmse, select_lambda, shuffled_folds, train_regressor, train_svm, LinearClassifier,
    SvmConfig, Transform,
};
use mct_core::dataio::{load_image, load_manifest, DatasetManifest, FeatureStore, Split};
use mct_core::rng::derive_named;
use mct_core::segment::{predict_mask, train_pixel_classifier, PixelClassifier, PixelTrainConfig, SegmentationMask};
use mct_core::synthgen::read_truth_csv;
use ndarray::{Array2, Axis};
use serde::Serialize;
use serde_json::json;

use crate::plot;
use crate::run::{create_dir, usage, with_run, write_json, BackboneArgs, RunConfig};

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Supplies class labels for classification
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Regression target column of the truth table (d_px, l_px or g)
    #[arg(long, requires = "truth")]
    pub target: Option<String>,
    /// Ground-truth CSV written by `synth`
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Target transform for regression: identity or log
    #[arg(long, default_value = "log")]
    pub transform: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// SVM regularization constant
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Per-feature unit-variance scaling for the SVM
    #[arg(long)]
    pub standardize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let store = FeatureStore::load(&a.store)?;
    let x = store.to_matrix::<f32>();
    create_dir(&a.out)?;
    let mut inputs = vec![a.store.as_path()];
    inputs.extend(a.manifest.as_deref());
    inputs.extend(a.truth.as_deref());
    let run = RunConfig::new("train", a, Some(a.seed), &inputs, &[&a.out]);
    match (&a.target, &a.truth) {
        (Some(target), Some(truth)) => regress(a, &store, x, target, truth, &run),
        _ => classify(a, &store, x, &run),
    }
}

fn classify(a: &TrainArgs, store: &FeatureStore, x: Array2<f32>, run: &RunConfig) -> Result<()> {
    let path = a.manifest.as_ref().ok_or_else(|| usage("classification needs --manifest for labels"))?;
    let manifest = load_manifest(path)?;
    let labels = store
        .ids()
        .iter()
        .map(|id| {
            manifest
                .get(id)
                .and_then(|e| e.label.clone())
                .ok_or_else(|| usage(format!("record '{id}' has no label in the manifest")))
        })
        .collect::<Result<Vec<String>>>()?;
    let config = SvmConfig {
        c: a.c,
        epochs: a.epochs,
        standardize: a.standardize,
        ..SvmConfig::default()
    };
    let cv = cross_validate::<f32, LinearClassifier<f32>>(x.view(), &labels, a.folds, a.seed, &config)?;
    let mut model = train_svm(x.view(), &labels, &config, derive_named(a.seed, "final"))?;
    model.source = Some(store.provenance().clone());
    model.save(&a.out.join("model"))?;

    let names = model.labels.clone();
    let mut pooled = vec![vec![0.0; names.len()]; names.len()];
    for fold in &cv.folds {
        for (i, ti) in fold.labels.iter().enumerate() {
            for (j, pj) in fold.labels.iter().enumerate() {
                let (r, c) = (names.iter().position(|n| n == ti), names.iter().position(|n| n == pj));
                if let (Some(r), Some(c)) = (r, c) {
                    pooled[r][c] += fold.confusion[i][j] as f64;
                }
            }
        }
    }
    plot::heatmap(&a.out.join("confusion.svg"), "cross-validated confusion", &names, &names, &pooled, true)?;
    let report = json!({
        "task": "classification",
        "labels": names,
        "cross_validation": cv,
        "pooled_confusion": pooled,
        "training_accuracy": model.training_accuracy,
    });
    write_json(&a.out.join("report.json"), &with_run(run, &report))
}

fn regress(a: &TrainArgs, store: &FeatureStore, x: Array2<f32>, target: &str, truth: &Path, run: &RunConfig) -> Result<()> {
    let transform: Transform = a.transform.parse()?;
    let rows = read_truth_csv(truth)?;
    let by_id: BTreeMap<&str, _> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
    let pick = |id: &String| -> Result<(f64, f64)> {
        let r = by_id.get(id.as_str()).ok_or_else(|| usage(format!("record '{id}' missing from the truth table")))?;
        let y = match target {
            "d_px" => r.d_px,
            "l_px" => r.l_px,
            "g" => r.g,
            other => return Err(usage(format!("unknown target '{other}' (d_px, l_px or g)"))),
        };
        Ok((y, r.f))
    };
    let (y, f): (Vec<f64>, Vec<f64>) = store.ids().iter().map(pick).collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let n = y.len();
    if a.folds < 2 || a.folds > n {
        return Err(usage(format!("folds must lie in 2..={n}")));
    }
    let mean = x.mapv(f64::from).mean_axis(Axis(0)).expect("nonempty store");
    let scale = x
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(mean.iter()).map(|(v, m)| (f64::from(*v) - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let grid: Vec<f64> = (-5..=2).map(|e| scale.max(f64::MIN_POSITIVE) * 10f64.powi(e)).collect();
    let search = select_lambda(x.view(), &y, &grid, a.folds, derive_named(a.seed, "lambda"), transform)?;

    let assignment = shuffled_folds(n, a.folds, derive_named(a.seed, "cv"))?;
    let mut pred = vec![0.0; n];
    for fold in 0..a.folds {
        let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let m = train_regressor(x.select(Axis(0), &train).view(), &ty, search.best, transform)?;
        for (&i, p) in test.iter().zip(m.predict_rows(x.select(Axis(0), &test).view())?) {
            pred[i] = p;
        }
    }
    let mut by_f: BTreeMap<String, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for i in 0..n {
        let e = by_f.entry(format!("{:.6}", f[i])).or_insert((f[i], Vec::new(), Vec::new()));
        e.1.push(pred[i]);
        e.2.push(y[i]);
    }
    let mut curve = Vec::new();
    for (f, p, t) in by_f.values() {
        curve.push((*f, relative_rmse(p, t)?));
    }
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    plot::line(
        &a.out.join("error_vs_f.svg"),
        "cross-validated error against missing-boundary fraction",
        "missing-boundary fraction f",
        "relative RMSE",
        &curve,
    )?;

    let mut model = train_regressor(x.view(), &y, search.best, transform)?;
    model.source = Some(store.provenance().clone());
    model.save(&a.out.join("model"))?;
    let report = json!({
        "task": "regression",
        "target": target,
        "transform": transform.to_string(),
        "lambda_search": search,
        "relative_rmse": relative_rmse(&pred, &y)?,
        "relative_rmse_by_f": curve.iter().map(|(f, e)| json!({"f": f, "relative_rmse": e})).collect::<Vec<_>>(),
    });
    write_json(&a.out.join("report.json"), &with_run(run, &report))
}

#[derive(Debug, Args, Serialize)]
pub struct TrainPixelsArgs {
    /// Manifest whose entries carry masks; test-split entries are skipped
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub backbone: BackboneArgs,
    /// Hypercolumn layers
    #[arg(long, value_delimiter = ',', default_value = "conv1_2,conv2_2,conv3_3,conv4_3")]
    pub layers: Vec<String>,
    /// Sampled training pixels per class and image
    #[arg(long, default_value_t = 2000)]
    pub per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn masked_pairs(manifest: &DatasetManifest, keep: impl Fn(Split) -> bool) -> Result<Vec<(mct_core::dataio::Micrograph, SegmentationMask)>> {
    manifest
        .entries
        .iter()
        .filter(|e| keep(e.split))
        .map(|e| {
            let mask_path = manifest
                .mask_path(e)
                .ok_or_else(|| usage(format!("entry '{}' has no mask", e.id)))?;
            let m = load_image(&manifest.image_path(e)).with_context(|| format!("entry '{}'", e.id))?;
            let mask = SegmentationMask::load(&mask_path).with_context(|| format!("entry '{}'", e.id))?;
            Ok((m, mask))
        })
        .collect()
}

pub fn train_pixels(a: &TrainPixelsArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let data = masked_pairs(&manifest, |s| s != Split::Test)?;
    if data.is_empty() {
        return Err(usage("no training entries with masks"));
    }
    let backbone = a.backbone.load()?;
    for l in &a.layers {
        backbone.layer(l)?;
    }
    let mut config = PixelTrainConfig {
        layers: a.layers.clone(),
        per_class: a.per_class,
        ..PixelTrainConfig::default()
    };
    config.svm.epochs = a.epochs;
    let pc = train_pixel_classifier(&backbone, &data, &config, a.seed)?;
    create_dir(&a.out)?;
    pc.save(&a.out)?;
    let run = RunConfig::new("train-pixels", a, Some(a.seed), &[&a.manifest], &[&a.out]);
    let report = json!({
        "images": data.len(),
        "classes": pc.classes,
        "layers": pc.layers,
        "training_pixel_accuracy": pc.training_accuracy(),
    });
    write_json(&a.out.join("report.json"), &with_run(&run, &report))
}

#[derive(Debug, Args, Serialize)]
pub struct SegmentArgs {
    /// Directory written by `train-pixels`
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, conflicts_with = "image", required_unless_present = "image")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Only segment entries of this split (train, val, test or unsplit)
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub backbone: BackboneArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn segment(a: &SegmentArgs) -> Result<()> {
    let pc = PixelClassifier::load(&a.model)?;
    let split: Option<Split> = match &a.split {
        Some(s) => Some(serde_json::from_value(json!(s)).map_err(|_| usage(format!("unknown split '{s}'")))?),
        None => None,
    };
    let backbone = a.backbone.load()?;
    let images = match (&a.manifest, &a.image) {
        (Some(p), _) => {
            let manifest = load_manifest(p)?;
            manifest
                .entries
                .iter()
                .filter(|e| split.is_none_or(|s| s == e.split))
                .map(|e| load_image(&manifest.image_path(e)).with_context(|| format!("entry '{}'", e.id)))
                .collect::<Result<Vec<_>>>()?
        }
        (None, Some(p)) => vec![load_image(p)?],
        (None, None) => return Err(usage("give --manifest or --image")),
    };
    create_dir(&a.out)?;
    for m in &images {
        let mask = predict_mask(&pc, &backbone, m).with_context(|| format!("image '{}'", m.id()))?;
        mask.save(&a.out.join(format!("{}.png", m.id())))?;
    }
    let mut inputs = vec![a.model.as_path()];
    inputs.extend(a.manifest.as_deref());
    inputs.extend(a.image.as_deref());
    RunConfig::new("segment", a, None, &inputs, &[&a.out]).write_into(&a.out)
}
