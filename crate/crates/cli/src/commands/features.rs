//! Feature stores and the unsupervised workflows built on them.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use mct_core::cluster::{kmeans_assign, kmeans_fit, knn_search_id, tsne_embed, KMeansConfig, TsneConfig};
use mct_core::dataio::{load_image, load_manifest, save_model, FeatureStore};
use mct_core::features::{
    apply_pca, extract_layer, fit_pca, fit_vlad_codebook, local_descriptors, vlad_encode, Encoding, FeatureVector,
    Provenance,
};
use ndarray::{concatenate, Axis};
use serde::Serialize;
use serde_json::json;

use crate::plot;
use crate::run::{create_dir, layer_name, usage, with_run, write_json, BackboneArgs, RunConfig};

#[derive(Debug, Args, Serialize)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub backbone: BackboneArgs,
    /// Layer name; the backbone's default when omitted
    #[arg(long)]
    pub layer: Option<String>,
    /// raw, pca-<d> or vlad-<k>
    #[arg(long, default_value = "raw")]
    pub encoding: String,
    /// Seed for encoders that are fitted (vlad codebooks)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn featurize(a: &FeaturizeArgs) -> Result<()> {
    let encoding: Encoding = a.encoding.parse()?;
    let manifest = load_manifest(&a.manifest)?;
    let backbone = a.backbone.load()?;
    let layer = layer_name(&backbone, &a.layer)?;
    let raw = Provenance::new(backbone.id(), &layer, Encoding::Raw);
    let mut vectors = Vec::with_capacity(manifest.entries.len());
    let mut descriptors = Vec::new();
    for e in &manifest.entries {
        let m = load_image(&manifest.image_path(e)).with_context(|| format!("entry '{}'", e.id))?;
        let stack = extract_layer(&backbone, &m, &layer).with_context(|| format!("entry '{}'", e.id))?;
        match encoding {
            Encoding::Vlad(_) => descriptors.push(local_descriptors(&stack.layers[0].1).to_owned()),
            _ => vectors.push(FeatureVector::new(stack.layers[0].1.data.clone(), raw.clone())?),
        }
    }
    create_dir(&a.out)?;
    let encoded: Vec<FeatureVector> = match encoding {
        Encoding::Raw => vectors,
        Encoding::Pca(d) => {
            let model = fit_pca::<f64>(&vectors, d)?;
            model.save(&a.out.join("encoder"))?;
            vectors.iter().map(|v| apply_pca(&model, v)).collect::<mct_core::Result<_>>()?
        }
        Encoding::Vlad(k) => {
            if descriptors.is_empty() {
                return Err(usage("a vlad codebook needs at least one image"));
            }
            let views: Vec<_> = descriptors.iter().map(|d| d.view()).collect();
            let pooled = concatenate(Axis(0), &views)?;
            let codebook = fit_vlad_codebook(pooled.view(), k, a.seed, raw.clone())?;
            codebook.save(&a.out.join("encoder"))?;
            descriptors.iter().map(|d| vlad_encode(d.view(), &codebook)).collect::<mct_core::Result<_>>()?
        }
    };
    let dim = encoded.first().map_or(1, FeatureVector::dim);
    let prov = encoded
        .first()
        .map_or(Provenance::new(backbone.id(), &layer, encoding), |v| v.provenance.clone());
    let mut store = FeatureStore::new(prov, dim)?;
    for (e, v) in manifest.entries.iter().zip(&encoded) {
        store.push(&e.id, v).with_context(|| format!("entry '{}'", e.id))?;
    }
    store.run_config = Some(RunConfig::new("featurize", a, Some(a.seed), &[&a.manifest], &[&a.out]).value());
    store.save(&a.out)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SearchArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Record id used as the query
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// JSON report; printed to stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn search(a: &SearchArgs) -> Result<()> {
    let store = FeatureStore::load(&a.store)?;
    if store.position(&a.query).is_none() {
        return Err(usage(format!("query '{}' is not in the store", a.query)));
    }
    let result = knn_search_id(&a.query, &store, a.k.min(store.len()))?;
    let outputs: Vec<&std::path::Path> = a.out.iter().map(PathBuf::as_path).collect();
    let run = RunConfig::new("search", a, None, &[&a.store], &outputs);
    let report = with_run(&run, &result);
    match &a.out {
        Some(p) => write_json(p, &report),
        None => {
            use std::io::Write;
            match writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&report)?) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cluster(a: &ClusterArgs) -> Result<()> {
    let store = FeatureStore::load(&a.store)?;
    let x = store.to_matrix::<f64>();
    let config = KMeansConfig {
        restarts: a.restarts,
        max_iter: a.max_iter,
        ..KMeansConfig::new(a.k, a.seed)
    };
    let model = kmeans_fit(x.view(), &config)?;
    let labels = kmeans_assign(&model, x.view())?;
    create_dir(&a.out)?;
    let csv_path = a.out.join("assignments.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["id", "cluster"])?;
    for (id, c) in store.ids().iter().zip(&labels) {
        w.write_record([id.clone(), c.to_string()])?;
    }
    w.flush()?;
    let mut sizes = vec![0usize; model.k()];
    for &c in &labels {
        sizes[c] += 1;
    }
    let payload: Vec<f32> = model.centroids.iter().map(|&v| v as f32).collect();
    let desc = json!({ "kind": "centroids", "k": model.k(), "dim": model.dim(), "source": store.provenance() });
    save_model(&a.out.join("model"), &desc, &payload)?;
    let run = RunConfig::new("cluster", a, Some(a.seed), &[&a.store], &[&a.out]);
    let summary = json!({
        "k": model.k(),
        "inertia": model.inertia,
        "iterations": model.iterations,
        "inertia_history": model.history,
        "sizes": sizes,
    });
    write_json(&a.out.join("clusters.json"), &with_run(&run, &summary))
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Colors points by the manifest's labels
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn embed(a: &EmbedArgs) -> Result<()> {
    let store = FeatureStore::load(&a.store)?;
    let labels: BTreeMap<String, String> = match &a.manifest {
        Some(p) => load_manifest(p)?
            .entries
            .into_iter()
            .filter_map(|e| e.label.map(|l| (e.id, l)))
            .collect(),
        None => BTreeMap::new(),
    };
    let x = store.to_matrix::<f64>();
    let map = tsne_embed(x.view(), store.ids(), &TsneConfig::new(a.perplexity, a.epochs, a.seed))?;
    create_dir(&a.out)?;
    let mut inputs = vec![a.store.as_path()];
    inputs.extend(a.manifest.as_deref());
    let run = RunConfig::new("embed", a, Some(a.seed), &inputs, &[&a.out]);
    map.save(&a.out.join("embedding.csv"), &a.out.join("embedding.json"), Some(&run.value()))?;
    let points: Vec<(f64, f64)> = map.coords.rows().into_iter().map(|r| (r[0], r[1])).collect();
    let groups: Vec<String> = store
        .ids()
        .iter()
        .map(|id| labels.get(id).cloned().unwrap_or_else(|| "unlabeled".into()))
        .collect();
    plot::scatter(&a.out.join("scatter.svg"), "t-SNE map", &points, &groups)
}
