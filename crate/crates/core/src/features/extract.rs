use ndarray::Array2;

use crate::dataio::Micrograph;
use crate::error::{Error, Result};
use crate::features::backbone::Backbone;
use crate::features::runtime::{run_stage, Tensor};
use crate::features::vector::{Encoding, FeatureVector, Provenance};

/// Rectified activations of one layer, stored `(row, col, channel)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub stride: usize,
    pub data: Vec<f32>,
}

impl Activation {
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Channel vector of one cell.
    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    fn from_tensor(t: &Tensor, stride: usize) -> Self {
        let n = t.height * t.width;
        let mut data = vec![0.0; n * t.channels];
        for c in 0..t.channels {
            for (p, &v) in t.data[c * n..(c + 1) * n].iter().enumerate() {
                data[p * t.channels + c] = v;
            }
        }
        Self {
            height: t.height,
            width: t.width,
            channels: t.channels,
            stride,
            data,
        }
    }
}

/// Activations of the requested layers, in request order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStack {
    pub backbone: String,
    pub image_height: usize,
    pub image_width: usize,
    pub layers: Vec<(String, Activation)>,
}

impl ActivationStack {
    pub fn get(&self, name: &str) -> Option<&Activation> {
        self.layers.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn names(&self) -> Vec<&str> {
        self.layers.iter().map(|(n, _)| n.as_str()).collect()
    }
}

impl Backbone {
    fn input_tensor(&self, m: &Micrograph) -> Tensor {
        let (h, w) = (m.height(), m.width());
        let c = self.input_channels();
        let norm = self.normalization();
        let bytes = m.as_bytes();
        let mut data = vec![0.0f32; c * h * w];
        for ch in 0..c {
            let (mean, scale) = (norm.mean[ch], norm.scale[ch]);
            let plane = &mut data[ch * h * w..(ch + 1) * h * w];
            for (p, v) in plane.iter_mut().enumerate() {
                let raw = match (m.channels(), c) {
                    (1, _) => bytes[p],
                    (3, 3) => bytes[p * 3 + ch],
                    _ => m.gray(p / w, p % w),
                };
                *v = (f32::from(raw) - mean) * scale;
            }
        }
        Tensor {
            channels: c,
            height: h,
            width: w,
            data,
        }
    }

    /// Runs the network up to the deepest requested layer.
    pub fn extract(&self, m: &Micrograph, layers: &[&str]) -> Result<ActivationStack> {
        if layers.is_empty() {
            return Err(Error::invalid("no layers requested"));
        }
        let descs = layers.iter().map(|l| self.layer(l)).collect::<Result<Vec<_>>>()?;
        let min = self.min_input_size();
        if m.height() < min || m.width() < min {
            return Err(Error::ImageTooSmall {
                id: m.id().to_string(),
                height: m.height(),
                width: m.width(),
                min,
            });
        }
        let last = descs.iter().map(|d| d.stage).max().unwrap_or(0);
        let mut x = self.input_tensor(m);
        let mut found: Vec<Option<Activation>> = vec![None; descs.len()];
        for (i, stage) in self.stages[..=last].iter().enumerate() {
            x = run_stage(stage, x);
            for (slot, d) in found.iter_mut().zip(&descs) {
                if d.stage == i {
                    *slot = Some(Activation::from_tensor(&x, d.stride));
                }
            }
        }
        Ok(ActivationStack {
            backbone: self.id().to_string(),
            image_height: m.height(),
            image_width: m.width(),
            layers: descs
                .iter()
                .zip(found)
                .map(|(d, a)| (d.name.clone(), a.expect("every requested stage was visited")))
                .collect(),
        })
    }

    /// Whole-image raw feature vector from one layer.
    pub fn feature_vector(&self, m: &Micrograph, layer: &str) -> Result<FeatureVector> {
        flatten_layer(&extract_layer(self, m, layer)?)
    }
}

pub fn extract_layer(b: &Backbone, m: &Micrograph, layer: &str) -> Result<ActivationStack> {
    b.extract(m, &[layer])
}

/// Flattens a single-layer stack in `(row, col, channel)` order.
pub fn flatten_layer(stack: &ActivationStack) -> Result<FeatureVector> {
    let [(name, a)] = stack.layers.as_slice() else {
        return Err(Error::invalid(format!(
            "flatten needs exactly one layer, stack holds {}",
            stack.layers.len()
        )));
    };
    FeatureVector::new(
        a.data.clone(),
        Provenance {
            backbone: stack.backbone.clone(),
            layer: name.clone(),
            encoding: Encoding::Raw,
        },
    )
}

/// Per-pixel hypercolumn vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct HypercolumnSet {
    pub coords: Vec<(usize, usize)>,
    /// `coords.len() × K`.
    pub matrix: Array2<f32>,
    pub layers: Vec<String>,
}

/// Bilinear sample positions along one axis: the activation coordinate of
/// pixel `p` is `p / stride`, clamped to the map.
fn axis_weights(p: usize, stride: usize, n: usize) -> (usize, usize, f32) {
    let t = (p as f32 / stride as f32).min((n - 1) as f32);
    let i0 = t.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, t - i0 as f32)
}

pub fn hypercolumns_from_stack(stack: &ActivationStack, coords: &[(usize, usize)]) -> Result<HypercolumnSet> {
    if let Some(&(r, c)) = coords
        .iter()
        .find(|(r, c)| *r >= stack.image_height || *c >= stack.image_width)
    {
        return Err(Error::invalid(format!(
            "pixel ({r}, {c}) lies outside the {}x{} image",
            stack.image_height, stack.image_width
        )));
    }
    let k: usize = stack.layers.iter().map(|(_, a)| a.channels).sum();
    let mut matrix = Array2::<f32>::zeros((coords.len(), k));
    for (row, &(r, c)) in coords.iter().enumerate() {
        let mut out = matrix.row_mut(row);
        let out = out.as_slice_mut().expect("standard layout");
        let mut offset = 0;
        for (_, a) in &stack.layers {
            let (y0, y1, fy) = axis_weights(r, a.stride, a.height);
            let (x0, x1, fx) = axis_weights(c, a.stride, a.width);
            let w = [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx];
            let cells = [a.cell(y0, x0), a.cell(y0, x1), a.cell(y1, x0), a.cell(y1, x1)];
            let dst = &mut out[offset..offset + a.channels];
            dst.copy_from_slice(cells[0]);
            if fy != 0.0 || fx != 0.0 {
                for (ch, d) in dst.iter_mut().enumerate() {
                    *d = w[0] * cells[0][ch] + w[1] * cells[1][ch] + w[2] * cells[2][ch] + w[3] * cells[3][ch];
                }
            }
            offset += a.channels;
        }
    }
    Ok(HypercolumnSet {
        coords: coords.to_vec(),
        matrix,
        layers: stack.layers.iter().map(|(n, _)| n.clone()).collect(),
    })
}

pub fn hypercolumns(b: &Backbone, m: &Micrograph, coords: &[(usize, usize)], layers: &[&str]) -> Result<HypercolumnSet> {
    if let Some(&(r, c)) = coords.iter().find(|(r, c)| *r >= m.height() || *c >= m.width()) {
        return Err(Error::invalid(format!(
            "pixel ({r}, {c}) lies outside the {}x{} image",
            m.height(),
            m.width()
        )));
    }
    hypercolumns_from_stack(&b.extract(m, layers)?, coords)
}
