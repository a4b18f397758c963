use std::collections::BTreeMap;

use ndarray::Array3;

use crate::error::{Error, Result};

/// Smallest accepted image side, in pixels.
pub const MIN_SIDE: usize = 32;

/// Metadata key under which applied augmentations are recorded, `;`-separated.
pub const AUGMENTATION_KEY: &str = "augmentations";

/// An 8-bit raster image, grayscale (1 channel) or color (3 channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Micrograph {
    id: String,
    /// `(height, width, channels)`.
    pixels: Array3<u8>,
    /// Micrometers per pixel.
    scale: Option<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl Micrograph {
    /// Builds a micrograph, enforcing the minimum size and channel rules.
    pub fn new(id: impl Into<String>, pixels: Array3<u8>) -> Result<Self> {
        let m = Self::new_unchecked_size(id, pixels)?;
        if m.height() < MIN_SIDE || m.width() < MIN_SIDE {
            let (height, width) = (m.height(), m.width());
            return Err(Error::ImageTooSmall {
                id: m.id,
                height,
                width,
                min: MIN_SIDE,
            });
        }
        Ok(m)
    }

    /// Like [`Micrograph::new`] but without the minimum-size rule. Used for
    /// instance patches, which may be smaller than a full image.
    pub fn new_unchecked_size(id: impl Into<String>, pixels: Array3<u8>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("micrograph id must be nonempty"));
        }
        let c = pixels.dim().2;
        if c != 1 && c != 3 {
            return Err(Error::invalid(format!(
                "micrograph '{id}' has {c} channels; expected 1 or 3"
            )));
        }
        if pixels.dim().0 == 0 || pixels.dim().1 == 0 {
            return Err(Error::invalid(format!("micrograph '{id}' is empty")));
        }
        Ok(Self {
            id,
            pixels: pixels.as_standard_layout().to_owned(),
            scale: None,
            metadata: BTreeMap::new(),
        })
    }

    /// Grayscale image from a row-major buffer.
    pub fn from_gray(id: impl Into<String>, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                actual: data.len(),
            });
        }
        let pixels = Array3::from_shape_vec((height, width, 1), data)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(id, pixels)
    }

    pub fn with_scale(mut self, micrometers_per_pixel: f64) -> Result<Self> {
        if !(micrometers_per_pixel > 0.0) || !micrometers_per_pixel.is_finite() {
            return Err(Error::invalid("scale must be positive and finite"));
        }
        self.scale = Some(micrometers_per_pixel);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        let id = id.into();
        assert!(!id.is_empty(), "micrograph id must be nonempty");
        self.id = id;
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    pub fn pixels(&self) -> &Array3<u8> {
        &self.pixels
    }

    /// Raw row-major `(row, col, channel)` bytes.
    pub fn as_bytes(&self) -> &[u8] {
        self.pixels
            .as_slice()
            .expect("micrograph pixels are kept in standard layout")
    }

    /// Luma value at `(row, col)`; color pixels use the Rec. 601 weights.
    pub fn gray(&self, row: usize, col: usize) -> u8 {
        if self.channels() == 1 {
            self.pixels[[row, col, 0]]
        } else {
            let r = f32::from(self.pixels[[row, col, 0]]);
            let g = f32::from(self.pixels[[row, col, 1]]);
            let b = f32::from(self.pixels[[row, col, 2]]);
            (0.299 * r + 0.587 * g + 0.114 * b).round().clamp(0.0, 255.0) as u8
        }
    }

    /// Per-channel median of all pixel values.
    pub fn median(&self) -> Vec<u8> {
        (0..self.channels())
            .map(|c| {
                let mut hist = [0usize; 256];
                for v in self.pixels.index_axis(ndarray::Axis(2), c).iter() {
                    hist[*v as usize] += 1;
                }
                // lower median
                let total = self.height() * self.width();
                let target = (total - 1) / 2;
                let mut seen = 0;
                for (v, &count) in hist.iter().enumerate() {
                    seen += count;
                    if seen > target {
                        return v as u8;
                    }
                }
                255
            })
            .collect()
    }

    /// Appends one step to the recorded augmentation chain.
    pub fn record_augmentation(&mut self, step: &str) {
        let entry = self.metadata.entry(AUGMENTATION_KEY.to_string()).or_default();
        if !entry.is_empty() {
            entry.push(';');
        }
        entry.push_str(step);
    }

    /// Copy of this micrograph with replaced pixels; scale and metadata are kept.
    pub(crate) fn with_pixels(&self, pixels: Array3<u8>) -> Result<Self> {
        let mut out = Self::new(self.id.clone(), pixels)?;
        out.scale = self.scale;
        out.metadata = self.metadata.clone();
        Ok(out)
    }
}
