//! Object detection, instance evaluation and powder fingerprints.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use mct_core::dataio::{load_image, load_manifest, Micrograph};
use mct_core::fingerprint::{
    build_fingerprint, fingerprint_against, fingerprint_distance, ClusterModel, FingerprintConfig, PowderFingerprint,
};
use mct_core::instances::{
    connected_components, extract_patches, match_instances, watershed_split, Connectivity, InstanceSet,
    DEFAULT_IOU_THRESHOLD, DEFAULT_MIN_SEED_DISTANCE,
};
use mct_core::segment::{evaluate_mask, SegmentationMask};
use serde::Serialize;
use serde_json::json;

use crate::plot;
use crate::run::{create_dir, usage, with_run, write_json, BackboneArgs, RunConfig};

#[derive(Debug, Args, Serialize)]
pub struct InstancesArgs {
    /// Segmentation mask PNG (with its class-table sidecar)
    #[arg(long)]
    pub mask: PathBuf,
    /// Foreground class, by name or index
    #[arg(long, default_value = "1")]
    pub class: String,
    /// 4 or 8
    #[arg(long, default_value_t = 8)]
    pub connectivity: u8,
    /// Split touching objects with the distance-transform watershed
    #[arg(long)]
    pub watershed: bool,
    #[arg(long, default_value_t = DEFAULT_MIN_SEED_DISTANCE)]
    pub min_distance: f64,
    /// Instance JSON; masks go to a `.rle` file next to it
    #[arg(long)]
    pub out: PathBuf,
}

pub fn instances(a: &InstancesArgs) -> Result<()> {
    let conn = Connectivity::try_from(a.connectivity)?;
    let mask = SegmentationMask::load(&a.mask)?;
    let class = match a.class.parse::<usize>() {
        Ok(i) if i < mask.n_classes() => i,
        _ => mask
            .classes()
            .iter()
            .position(|c| c == &a.class)
            .ok_or_else(|| usage(format!("class '{}' not in {:?}", a.class, mask.classes())))?,
    };
    let bits = mask.binary(class as u8);
    let (h, w) = (mask.height(), mask.width());
    let set = if a.watershed {
        watershed_split(&bits, h, w, a.min_distance)?
    } else {
        connected_components(&bits, h, w, conn)?
    };
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    set.save(&a.out)?;
    let run = RunConfig::new("instances", a, None, &[&a.mask], &[&a.out]);
    write_json(
        &a.out.with_extension("run.json"),
        &with_run(&run, &json!({ "instances": set.len() })),
    )
}

#[derive(Debug, Subcommand, Serialize)]
pub enum EvalCommand {
    /// Pixel accuracy, per-class precision/recall/IoU over mask directories
    Masks(EvalMasksArgs),
    /// Instance match precision and recall at an IoU threshold
    Instances(EvalInstancesArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EvalMasksArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalInstancesArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn eval(cmd: &EvalCommand) -> Result<()> {
    match cmd {
        EvalCommand::Masks(a) => eval_masks(a),
        EvalCommand::Instances(a) => {
            let pred = InstanceSet::load(&a.pred)?;
            let truth = InstanceSet::load(&a.truth)?;
            let report = match_instances(&pred, &truth, a.iou)?;
            let run = RunConfig::new("eval instances", a, None, &[&a.pred, &a.truth], &[&a.out]);
            write_json(&a.out, &with_run(&run, &report))
        }
    }
}

fn eval_masks(a: &EvalMasksArgs) -> Result<()> {
    let mut names: Vec<String> = std::fs::read_dir(&a.truth)
        .with_context(|| format!("reading {}", a.truth.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    let mut per_image = Vec::new();
    let mut pooled: Option<(Vec<String>, Vec<Vec<usize>>)> = None;
    for name in &names {
        let p = a.pred.join(name);
        if !p.is_file() {
            continue;
        }
        let truth = SegmentationMask::load(&a.truth.join(name))?;
        let pred = SegmentationMask::load(&p)?;
        let r = evaluate_mask(&pred, &truth).with_context(|| format!("mask {name}"))?;
        let (classes, conf) = pooled.get_or_insert_with(|| (r.classes.clone(), vec![vec![0; r.classes.len()]; r.classes.len()]));
        if *classes != r.classes {
            return Err(usage(format!("mask {name} has a different class table")));
        }
        for (row, add) in conf.iter_mut().zip(&r.confusion) {
            for (c, v) in row.iter_mut().zip(add) {
                *c += v;
            }
        }
        per_image.push(json!({ "id": name.trim_end_matches(".png"), "accuracy": r.accuracy, "iou": r.iou }));
    }
    let (classes, conf) = pooled.ok_or_else(|| usage("no mask appears in both directories"))?;
    let k = classes.len();
    let total: usize = conf.iter().flatten().sum();
    let diag: usize = (0..k).map(|i| conf[i][i]).sum();
    let row: Vec<usize> = conf.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<usize> = (0..k).map(|j| conf.iter().map(|r| r[j]).sum()).collect();
    let ratio = |n: usize, d: usize| if d == 0 { 1.0 } else { n as f64 / d as f64 };
    let report = json!({
        "images": per_image.len(),
        "classes": classes,
        "accuracy": ratio(diag, total),
        "precision": (0..k).map(|c| ratio(conf[c][c], col[c])).collect::<Vec<_>>(),
        "recall": (0..k).map(|c| ratio(conf[c][c], row[c])).collect::<Vec<_>>(),
        "iou": (0..k).map(|c| ratio(conf[c][c], row[c] + col[c] - conf[c][c])).collect::<Vec<_>>(),
        "confusion": conf,
        "per_image": per_image,
    });
    let run = RunConfig::new("eval masks", a, None, &[&a.pred, &a.truth], &[&a.out]);
    write_json(&a.out, &with_run(&run, &report))?;
    let values: Vec<Vec<f64>> = conf.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    plot::heatmap(&a.out.with_extension("svg"), "pixel confusion", &classes, &classes, &values, true)
}

#[derive(Debug, Args, Serialize)]
pub struct FingerprintArgs {
    /// Micrograph holding the particles
    #[arg(long, requires = "instances", conflicts_with = "patches")]
    pub image: Option<PathBuf>,
    /// Instance JSON for `--image`
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Manifest of pre-cut particle patches
    #[arg(long, required_unless_present = "image")]
    pub patches: Option<PathBuf>,
    /// Pixels of context around each bounding box
    #[arg(long, default_value_t = 2)]
    pub padding: usize,
    /// Output directory of an earlier fingerprint whose cluster model is reused
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[command(flatten)]
    pub backbone: BackboneArgs,
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long, default_value_t = mct_core::fingerprint::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = mct_core::fingerprint::DEFAULT_PCA_DIM)]
    pub pca_dim: usize,
    #[arg(long, default_value_t = mct_core::fingerprint::DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value_t = mct_core::fingerprint::DEFAULT_PATCH_SIZE)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn gather_patches(a: &FingerprintArgs) -> Result<Vec<Micrograph>> {
    match (&a.image, &a.instances, &a.patches) {
        (Some(img), Some(inst), _) => {
            let m = load_image(img)?;
            let set = InstanceSet::load(inst)?;
            Ok(extract_patches(&m, &set, a.padding)?)
        }
        (_, _, Some(p)) => {
            let manifest = load_manifest(p)?;
            manifest
                .entries
                .iter()
                .map(|e| {
                    mct_core::dataio::image_io::load_patch(&manifest.image_path(e))
                        .with_context(|| format!("entry '{}'", e.id))
                })
                .collect()
        }
        _ => Err(usage("give --image with --instances, or --patches")),
    }
}

pub fn fingerprint(a: &FingerprintArgs) -> Result<()> {
    let patches = gather_patches(a)?;
    let backbone = a.backbone.load()?;
    let config = FingerprintConfig {
        layer: a.layer.clone(),
        pca_dim: a.pca_dim,
        k: a.k,
        grid: a.grid,
        patch_size: a.patch_size,
        perplexity: a.perplexity,
        tsne_epochs: a.epochs,
        seed: a.seed,
    };
    create_dir(&a.out)?;
    let mut inputs: Vec<&std::path::Path> = Vec::new();
    inputs.extend(a.image.as_deref());
    inputs.extend(a.instances.as_deref());
    inputs.extend(a.patches.as_deref());
    inputs.extend(a.reference.as_deref());
    let run = RunConfig::new("fingerprint", a, Some(a.seed), &inputs, &[&a.out]);
    let mut extra = serde_json::Map::new();
    let fp = match &a.reference {
        Some(dir) => {
            let model = ClusterModel::load(&dir.join("model"))?;
            let reference = PowderFingerprint::load(&dir.join("fingerprint.json"))?;
            let fp = fingerprint_against(&model, &backbone, &patches, &config)?;
            extra.insert("distance_to_reference".into(), json!(fingerprint_distance(&fp, &reference)?));
            fp
        }
        None => {
            let (fp, model) = build_fingerprint(&backbone, &patches, &config)?;
            model.save(&a.out.join("model"))?;
            fp
        }
    };
    let mut doc = with_run(&run, &fp);
    if let Some(obj) = doc.as_object_mut() {
        obj.extend(extra);
    }
    write_json(&a.out.join("fingerprint.json"), &doc)?;
    let g = fp.grid;
    let density: Vec<Vec<f64>> = (0..g).map(|r| fp.density[r * g..(r + 1) * g].to_vec()).collect();
    plot::heatmap(&a.out.join("density.svg"), "embedding density", &[], &[], &density, false)?;
    let clusters: Vec<String> = (0..fp.k).map(|c| c.to_string()).collect();
    plot::heatmap(
        &a.out.join("histogram.svg"),
        "particles per cluster",
        &["fraction".to_string()],
        &clusters,
        std::slice::from_ref(&fp.histogram),
        true,
    )
}
