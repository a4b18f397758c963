//! Synthetic polycrystal datasets with ground-truth grain statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::Micrograph;
use crate::error::{Error, Result};
use crate::rng::{derive_named, derive_seed};
use crate::synthgen::erase::erase_boundaries;
use crate::synthgen::measure::{astm_grain_number, measure_grain_size, GrainStats};
use crate::synthgen::potts::{potts_evolve, GrainMap};
use crate::synthgen::render::{render_boundaries, RenderStyle};

#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub micrograph: Micrograph,
    pub grain_map: GrainMap,
    pub stats: GrainStats,
    pub missing_fraction: f64,
    pub sweeps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub count: usize,
    /// Side length of the square images.
    pub size: usize,
    pub spins: u32,
    /// Sweep counts cycled through to vary grain size.
    pub sweeps: Vec<usize>,
    /// Missing-boundary fractions cycled through.
    pub fractions: Vec<f64>,
    pub seed: u64,
    pub style: RenderStyle,
    /// Micrometers per pixel, used for the ASTM number.
    pub scale_um: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 10,
            size: 128,
            spins: 64,
            sweeps: vec![50, 100, 200],
            fractions: vec![0.0],
            seed: 0,
            style: RenderStyle::default(),
            scale_um: 1.0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("dataset needs at least one sample"));
        }
        if self.sweeps.is_empty() || self.fractions.is_empty() {
            return Err(Error::invalid("sweep schedule and fraction list must be nonempty"));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::invalid(format!("missing-boundary fraction {f} outside [0, 1]")));
        }
        if !(self.scale_um > 0.0) {
            return Err(Error::invalid("scale must be positive"));
        }
        Ok(())
    }

    /// `(sweeps, fraction)` of sample `i`: the sweep schedule varies fastest.
    pub fn plan(&self, i: usize) -> (usize, f64) {
        let s = self.sweeps.len();
        (
            self.sweeps[i % s],
            self.fractions[(i / s) % self.fractions.len()],
        )
    }
}

/// One row of the ground-truth table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub id: String,
    pub f: f64,
    pub grain_count: usize,
    pub d_px: f64,
    pub l_px: f64,
    #[serde(rename = "G")]
    pub g: f64,
}

pub fn sample_id(i: usize) -> String {
    format!("poly_{i:05}")
}

/// Simulates one grain map and renders it with `fraction` of its boundary
/// segments erased.
pub fn synthesize_sample(
    id: &str,
    size: usize,
    spins: u32,
    sweeps: usize,
    fraction: f64,
    seed: u64,
    style: &RenderStyle,
) -> Result<SyntheticSample> {
    let grain_map = potts_evolve(size, size, spins, sweeps, derive_named(seed, "potts"))?;
    render_sample(id, grain_map, sweeps, fraction, seed, style)
}

/// Renders an existing grain map as a sample; the erasure and noise streams
/// derive from `seed`.
pub fn render_sample(
    id: &str,
    grain_map: GrainMap,
    sweeps: usize,
    fraction: f64,
    seed: u64,
    style: &RenderStyle,
) -> Result<SyntheticSample> {
    let stats = measure_grain_size(&grain_map);
    let mask = erase_boundaries(&grain_map, fraction, derive_named(seed, "erase"))?;
    let style = RenderStyle {
        seed: derive_named(seed ^ style.seed, "render"),
        ..*style
    };
    let mut micrograph = render_boundaries(&mask, &style)?;
    micrograph.set_id(id);
    micrograph
        .metadata
        .insert("missing_boundary_fraction".into(), fraction.to_string());
    micrograph.metadata.insert("sweeps".into(), sweeps.to_string());
    Ok(SyntheticSample {
        micrograph,
        grain_map,
        stats,
        missing_fraction: fraction,
        sweeps,
        seed,
    })
}

pub fn truth_row(sample: &SyntheticSample, scale_um: f64) -> Result<TruthRow> {
    let intercept_mm = sample.stats.mean_intercept * scale_um / 1000.0;
    Ok(TruthRow {
        id: sample.micrograph.id().to_string(),
        f: sample.missing_fraction,
        grain_count: sample.stats.grain_count,
        d_px: sample.stats.mean_diameter,
        l_px: sample.stats.mean_intercept,
        g: astm_grain_number(intercept_mm)?,
    })
}

pub struct SyntheticDataset {
    pub samples: Vec<SyntheticSample>,
    pub truth: Vec<TruthRow>,
}

pub fn generate_dataset(config: &DatasetConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut samples = Vec::with_capacity(config.count);
    let mut truth = Vec::with_capacity(config.count);
    for i in 0..config.count {
        let (sweeps, f) = config.plan(i);
        let s = synthesize_sample(
            &sample_id(i),
            config.size,
            config.spins,
            sweeps,
            f,
            derive_seed(config.seed, i as u64),
            &config.style,
        )?;
        truth.push(truth_row(&s, config.scale_um)?);
        samples.push(s);
    }
    Ok(SyntheticDataset { samples, truth })
}

pub fn write_truth_csv(rows: &[TruthRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::parse(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::parse(path.display().to_string(), e)))
        .collect()
}
