use std::path::Path;

use ndarray::{concatenate, Axis};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::classify::svm::{argmax, train_svm, LinearClassifier, SvmConfig};
use crate::dataio::Micrograph;
use crate::error::{Error, Result};
use crate::features::{hypercolumns_from_stack, Backbone, Encoding, Provenance};
use crate::rng::{derive_named, derive_seed, rng};
use crate::segment::mask::SegmentationMask;

pub const DEFAULT_PER_CLASS: usize = 2000;
pub const TILE: usize = 64;
pub const DEFAULT_PIXEL_LAYERS: [&str; 4] = ["conv1_2", "conv2_2", "conv3_3", "conv4_3"];

/// A training pixel: `(row, col, class)`.
pub type LabeledPixel = (usize, usize, u8);

/// Up to `n` pixels per class, drawn uniformly without replacement; smaller
/// classes contribute every pixel. Output is grouped by class, raster order
/// within a class.
pub fn sample_training_pixels(mask: &SegmentationMask, n: usize, seed: u64) -> Result<Vec<LabeledPixel>> {
    if mask.labels().is_empty() {
        return Err(Error::invalid("cannot sample an empty mask"));
    }
    let mut r = rng(seed);
    let w = mask.width();
    let mut out = Vec::new();
    for c in 0..mask.n_classes() {
        let members: Vec<usize> = (0..mask.labels().len()).filter(|&i| usize::from(mask.labels()[i]) == c).collect();
        let mut chosen: Vec<usize> = if members.len() <= n {
            members
        } else {
            sample(&mut r, members.len(), n).into_iter().map(|j| members[j]).collect()
        };
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| (i / w, i % w, c as u8)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelTrainConfig {
    pub layers: Vec<String>,
    pub per_class: usize,
    pub svm: SvmConfig,
}

impl Default for PixelTrainConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_PIXEL_LAYERS.iter().map(|s| s.to_string()).collect(),
            per_class: DEFAULT_PER_CLASS,
            svm: SvmConfig {
                standardize: true,
                ..SvmConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelClassifier {
    pub classifier: LinearClassifier<f32>,
    pub backbone: String,
    pub layers: Vec<String>,
    pub classes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PixelDescriptor {
    backbone: String,
    layers: Vec<String>,
    classes: Vec<String>,
}

const PIXEL_FILE: &str = "pixel.json";

pub fn train_pixel_classifier(
    backbone: &Backbone,
    annotated: &[(Micrograph, SegmentationMask)],
    config: &PixelTrainConfig,
    seed: u64,
) -> Result<PixelClassifier> {
    let (_, first) = annotated
        .first()
        .ok_or_else(|| Error::invalid("at least one annotated image is required"))?;
    let classes = first.classes().to_vec();
    let layers: Vec<&str> = config.layers.iter().map(String::as_str).collect();
    let mut blocks = Vec::with_capacity(annotated.len());
    let mut names = Vec::new();
    for (i, (m, mask)) in annotated.iter().enumerate() {
        if mask.classes() != classes.as_slice() {
            return Err(Error::invalid(format!("mask of '{}' has a different class table", m.id())));
        }
        if mask.height() != m.height() || mask.width() != m.width() {
            return Err(Error::invalid(format!("mask of '{}' does not match the image size", m.id())));
        }
        let picked = sample_training_pixels(mask, config.per_class, derive_seed(seed, i as u64))?;
        let coords: Vec<(usize, usize)> = picked.iter().map(|&(r, c, _)| (r, c)).collect();
        let stack = backbone.extract(m, &layers)?;
        blocks.push(hypercolumns_from_stack(&stack, &coords)?.matrix);
        names.extend(picked.iter().map(|&(_, _, c)| classes[usize::from(c)].clone()));
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let x = concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))?;
    drop(blocks);
    let mut classifier = train_svm(x.view(), &names, &config.svm, derive_named(seed, "pixel-svm"))?;
    classifier.source = Some(Provenance::new(backbone.id(), config.layers.join("+"), Encoding::Raw));
    Ok(PixelClassifier {
        classifier,
        backbone: backbone.id().to_string(),
        layers: config.layers.clone(),
        classes,
    })
}

impl PixelClassifier {
    /// Training accuracy over the sampled pixels.
    pub fn training_accuracy(&self) -> f64 {
        self.classifier.training_accuracy
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.classifier.save(dir)?;
        let desc = PixelDescriptor {
            backbone: self.backbone.clone(),
            layers: self.layers.clone(),
            classes: self.classes.clone(),
        };
        let path = dir.join(PIXEL_FILE);
        let json = serde_json::to_string_pretty(&desc).map_err(|e| Error::parse("pixel classifier", e))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let classifier = LinearClassifier::<f32>::load(dir)?;
        let path = dir.join(PIXEL_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let desc: PixelDescriptor = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        Ok(Self {
            classifier,
            backbone: desc.backbone,
            layers: desc.layers,
            classes: desc.classes,
        })
    }
}

/// Dense prediction: every pixel is classified from its hypercolumn, in
/// `TILE × TILE` blocks.
pub fn predict_mask(pc: &PixelClassifier, backbone: &Backbone, m: &Micrograph) -> Result<SegmentationMask> {
    if backbone.id() != pc.backbone {
        return Err(Error::ProvenanceMismatch(format!(
            "classifier trained on '{}', backbone is '{}'",
            pc.backbone,
            backbone.id()
        )));
    }
    let layers: Vec<&str> = pc.layers.iter().map(String::as_str).collect();
    let stack = backbone.extract(m, &layers)?;
    let class_of: Vec<u8> = pc
        .classifier
        .labels
        .iter()
        .map(|l| {
            pc.classes
                .iter()
                .position(|c| c == l)
                .map(|p| p as u8)
                .ok_or_else(|| Error::invalid(format!("classifier label '{l}' is not in the class table")))
        })
        .collect::<Result<_>>()?;
    let (h, w) = (m.height(), m.width());
    let mut labels = vec![0u8; h * w];
    for r0 in (0..h).step_by(TILE) {
        for c0 in (0..w).step_by(TILE) {
            let coords: Vec<(usize, usize)> = (r0..(r0 + TILE).min(h))
                .flat_map(|r| (c0..(c0 + TILE).min(w)).map(move |c| (r, c)))
                .collect();
            let hc = hypercolumns_from_stack(&stack, &coords)?;
            let scores = pc.classifier.decision_scores(hc.matrix.view())?;
            for (&(r, c), s) in coords.iter().zip(scores.rows()) {
                labels[r * w + c] = class_of[argmax(s.as_slice().expect("row"))];
            }
        }
    }
    SegmentationMask::new(h, w, labels, pc.classes.clone())
}
