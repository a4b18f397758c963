//! Synthetic dataset generators.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use mct_core::dataio::image_io::save_label_png;
use mct_core::dataio::{save_png, DatasetManifest, ManifestEntry, Micrograph, Split};
use mct_core::instances::particle_field;
use mct_core::rng::derive_seed;
use mct_core::segment::{two_texture_image, SegmentationMask};
use mct_core::synthgen::{generate_dataset, write_truth_csv, DatasetConfig, RenderStyle};
use serde::Serialize;

use crate::run::{create_dir, usage, RunConfig};

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Number of micrographs
    #[arg(long)]
    pub n: usize,
    /// Side length in pixels
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Potts spin count
    #[arg(long, default_value_t = 64)]
    pub spins: u32,
    /// Monte Carlo sweep counts, cycled to vary grain size
    #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
    pub sweeps: Vec<usize>,
    /// Missing-boundary fractions, cycled after the sweep schedule
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub f: Vec<f64>,
    /// Micrometers per pixel
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    if a.size < 32 {
        return Err(usage(format!("size {} is below the 32 pixel minimum", a.size)));
    }
    if a.sweeps.contains(&0) {
        return Err(usage("sweep counts must be positive"));
    }
    let config = DatasetConfig {
        count: a.n,
        size: a.size,
        spins: a.spins,
        sweeps: a.sweeps.clone(),
        fractions: a.f.clone(),
        seed: a.seed,
        style: RenderStyle::default(),
        scale_um: a.scale,
    };
    config.validate()?;
    let data = generate_dataset(&config)?;
    create_dir(&a.out.join("labels"))?;
    let mut manifest = DatasetManifest::new("synthetic polycrystals", &a.out);
    for s in &data.samples {
        let id = s.micrograph.id().to_string();
        save_png(&s.micrograph, &a.out.join(format!("{id}.png")))?;
        let g = &s.grain_map;
        save_label_png(g.labels(), g.height(), g.width(), &a.out.join("labels").join(format!("{id}.png")))?;
        manifest.entries.push(ManifestEntry {
            id: id.clone(),
            image: format!("{id}.png").into(),
            label: Some(format!("f{}", s.missing_fraction)),
            mask: None,
            split: Split::Unsplit,
        });
    }
    manifest.metadata.insert("scale_um".into(), a.scale.to_string());
    manifest.save(&a.out.join("manifest.json"))?;
    write_truth_csv(&data.truth, &a.out.join("truth.csv"))?;
    RunConfig::new("synth", a, Some(a.seed), &[], &[&a.out]).write_into(&a.out)
}

#[derive(Debug, Args, Serialize)]
pub struct TexturesArgs {
    /// Number of two-texture composites
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// How many of the last images are marked as the test split
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn write_masked(
    out: &std::path::Path,
    manifest: &mut DatasetManifest,
    m: &Micrograph,
    mask: &SegmentationMask,
    split: Split,
) -> Result<()> {
    let id = m.id().to_string();
    save_png(m, &out.join(format!("{id}.png")))?;
    mask.save(&out.join("masks").join(format!("{id}.png")))?;
    manifest.entries.push(ManifestEntry {
        id: id.clone(),
        image: format!("{id}.png").into(),
        label: None,
        mask: Some(format!("masks/{id}.png").into()),
        split,
    });
    Ok(())
}

fn split_of(i: usize, n: usize, test: usize) -> Split {
    if test == 0 {
        Split::Unsplit
    } else if i + test >= n {
        Split::Test
    } else {
        Split::Train
    }
}

pub fn textures(a: &TexturesArgs) -> Result<()> {
    if a.n == 0 || a.test > a.n {
        return Err(usage("need at least one image and no more test images than images"));
    }
    if a.size < 32 {
        return Err(usage(format!("size {} is below the 32 pixel minimum", a.size)));
    }
    create_dir(&a.out.join("masks"))?;
    let mut manifest = DatasetManifest::new("two-texture composites", &a.out);
    for i in 0..a.n {
        let (m, mask) = two_texture_image(&format!("tex_{i:05}"), a.size, derive_seed(a.seed, i as u64))?;
        write_masked(&a.out, &mut manifest, &m, &mask, split_of(i, a.n, a.test))?;
    }
    manifest.save(&a.out.join("manifest.json"))?;
    RunConfig::new("textures", a, Some(a.seed), &[], &[&a.out]).write_into(&a.out)
}

#[derive(Debug, Args, Serialize)]
pub struct ParticlesArgs {
    /// Number of particle micrographs
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Particles per micrograph
    #[arg(long, default_value_t = 12)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn particles(a: &ParticlesArgs) -> Result<()> {
    if a.n == 0 || a.size < 32 {
        return Err(usage("need at least one image of at least 32 pixels"));
    }
    create_dir(&a.out.join("masks"))?;
    let mut manifest = DatasetManifest::new("particle fields", &a.out);
    for i in 0..a.n {
        let (m, mask) = particle_field(&format!("part_{i:05}"), a.size, a.size, a.count, derive_seed(a.seed, i as u64))?;
        write_masked(&a.out, &mut manifest, &m, &mask, Split::Unsplit)?;
    }
    manifest.save(&a.out.join("manifest.json"))?;
    RunConfig::new("particles", a, Some(a.seed), &[], &[&a.out]).write_into(&a.out)
}
