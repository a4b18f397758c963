use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::eval::EvalReport;
use crate::dataio::image_io::{load_indexed_png, save_indexed_png};
use crate::error::{Error, Result};

/// Per-pixel class labels with their class table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
    classes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    classes: Vec<String>,
}

/// JSON class table stored next to a mask PNG.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

impl SegmentationMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>, classes: Vec<String>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                actual: labels.len(),
            });
        }
        if classes.is_empty() || classes.len() > 256 {
            return Err(Error::invalid("a mask needs between 1 and 256 classes"));
        }
        if let Some(&l) = labels.iter().find(|&&l| usize::from(l) >= classes.len()) {
            return Err(Error::invalid(format!("label {l} exceeds the {}-class table", classes.len())));
        }
        Ok(Self {
            height,
            width,
            labels,
            classes,
        })
    }

    /// Two-class mask from a boolean raster (`false` → class 0).
    pub fn from_binary(height: usize, width: usize, bits: &[bool]) -> Result<Self> {
        Self::new(
            height,
            width,
            bits.iter().map(|&b| u8::from(b)).collect(),
            vec!["background".into(), "foreground".into()],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    /// Pixels of class `c` as a boolean raster.
    pub fn binary(&self, c: u8) -> Vec<bool> {
        self.labels.iter().map(|&l| l == c).collect()
    }

    pub fn save(&self, png: &Path) -> Result<()> {
        save_indexed_png(&self.labels, self.height, self.width, self.classes.len(), png)?;
        let side = sidecar_path(png);
        let json = serde_json::to_string_pretty(&Sidecar {
            classes: self.classes.clone(),
        })
        .map_err(|e| Error::parse("class table", e))?;
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }

    /// Reads a mask PNG; without a sidecar the classes are named by index.
    pub fn load(png: &Path) -> Result<Self> {
        let (h, w, labels) = load_indexed_png(png)?;
        let side = sidecar_path(png);
        let classes = if side.exists() {
            let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
            let s: Sidecar = serde_json::from_str(&text).map_err(|e| Error::parse(side.display().to_string(), e))?;
            s.classes
        } else {
            let max = labels.iter().copied().max().unwrap_or(0);
            (0..=max).map(|c| c.to_string()).collect()
        };
        Self::new(h, w, labels, classes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelEvalReport {
    pub classes: Vec<String>,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub iou: Vec<f64>,
    /// Rows are true classes.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate_mask(pred: &SegmentationMask, truth: &SegmentationMask) -> Result<PixelEvalReport> {
    if pred.height != truth.height || pred.width != truth.width {
        return Err(Error::DimensionMismatch {
            expected: truth.labels.len(),
            actual: pred.labels.len(),
        });
    }
    if pred.classes != truth.classes {
        return Err(Error::invalid("predicted and true masks use different class tables"));
    }
    let k = truth.n_classes();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        confusion[usize::from(t)][usize::from(p)] += 1;
    }
    let report = EvalReport::from_confusion(truth.classes.clone(), confusion)?;
    let iou = (0..k)
        .map(|c| {
            let tp = report.confusion[c][c];
            let fp: usize = (0..k).filter(|&t| t != c).map(|t| report.confusion[t][c]).sum();
            let fnn = report.support[c] - tp;
            if tp + fp + fnn == 0 {
                1.0
            } else {
                tp as f64 / (tp + fp + fnn) as f64
            }
        })
        .collect();
    Ok(PixelEvalReport {
        classes: report.labels,
        accuracy: report.accuracy,
        precision: report.precision,
        recall: report.recall,
        iou,
        confusion: report.confusion,
    })
}

/// Pixelwise AND of two binary rasters.
pub fn compose_masks(feature: &[bool], region: &[bool]) -> Result<Vec<bool>> {
    if feature.len() != region.len() {
        return Err(Error::DimensionMismatch {
            expected: feature.len(),
            actual: region.len(),
        });
    }
    Ok(feature.iter().zip(region).map(|(a, b)| *a && *b).collect())
}
