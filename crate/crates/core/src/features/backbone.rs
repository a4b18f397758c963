//! Pretrained convolutional backbones read from ONNX files, truncated before
//! the classification head.

use std::collections::HashMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::onnx::{self, AttributeProto, NodeProto, TensorProto};

/// Per-channel means applied when the model carries no normalization metadata
/// (ImageNet convention on 0–255 inputs).
pub const FALLBACK_MEAN: [f32; 3] = [123.68, 116.78, 103.94];

pub const META_ID: &str = "mct.backbone_id";
pub const META_MEAN: &str = "mct.mean";
pub const META_SCALE: &str = "mct.scale";

/// One extractable rectified-convolution output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerDescriptor {
    /// Canonical `conv{block}_{index}` name.
    pub name: String,
    /// Name of the rectified tensor in the source graph.
    pub tensor: String,
    /// Cumulative stride relative to the input image.
    pub stride: usize,
    pub channels: usize,
    /// Index of the stage producing this output.
    pub(crate) stage: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Stage {
    Conv(ConvStage),
    Relu,
    MaxPool(PoolStage),
    AvgPool(PoolStage),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvStage {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    /// `(top, left, bottom, right)`.
    pub pads: [usize; 4],
    /// `[out][in][kh][kw]`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PoolStage {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub pads: [usize; 4],
    pub ceil_mode: bool,
    pub count_include_pad: bool,
}

impl Stage {
    fn stride(&self) -> (usize, usize) {
        match self {
            Stage::Conv(c) => c.stride,
            Stage::Relu => (1, 1),
            Stage::MaxPool(p) | Stage::AvgPool(p) => p.stride,
        }
    }
}

/// Input normalization `(x − mean[c]) · scale[c]` on 0–255 values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalization {
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Backbone {
    id: String,
    layers: Vec<LayerDescriptor>,
    normalization: Normalization,
    input_channels: usize,
    pub(crate) stages: Vec<Stage>,
}

const HEAD_OPS: &[&str] = &[
    "Flatten",
    "Reshape",
    "Gemm",
    "MatMul",
    "GlobalAveragePool",
    "GlobalMaxPool",
    "Softmax",
    "Shape",
    "Squeeze",
    "Unsqueeze",
    "Transpose",
];

fn attr<'a>(node: &'a NodeProto, name: &str) -> Option<&'a AttributeProto> {
    node.attribute.iter().find(|a| a.name == name)
}

fn attr_pair(node: &NodeProto, name: &str, default: (usize, usize)) -> Result<(usize, usize)> {
    match attr(node, name) {
        None => Ok(default),
        Some(a) if a.ints.len() == 2 && a.ints.iter().all(|&v| v >= 1) => {
            Ok((a.ints[0] as usize, a.ints[1] as usize))
        }
        Some(_) => Err(Error::Model(format!(
            "node '{}': attribute {name} must hold two positive ints",
            node.name
        ))),
    }
}

fn attr_pads(node: &NodeProto) -> Result<[usize; 4]> {
    if let Some(a) = attr(node, "auto_pad") {
        let mode = String::from_utf8_lossy(&a.s);
        if mode != "NOTSET" && !mode.is_empty() && mode != "VALID" {
            return Err(Error::UnsupportedOperator {
                op: format!("{} with auto_pad={mode}", node.op_type),
                node: node.name.clone(),
            });
        }
    }
    match attr(node, "pads") {
        None => Ok([0; 4]),
        Some(a) if a.ints.len() == 4 && a.ints.iter().all(|&v| v >= 0) => Ok([
            a.ints[0] as usize,
            a.ints[1] as usize,
            a.ints[2] as usize,
            a.ints[3] as usize,
        ]),
        Some(_) => Err(Error::Model(format!(
            "node '{}': pads must hold four non-negative ints",
            node.name
        ))),
    }
}

fn parse_floats(s: &str) -> Option<Vec<f32>> {
    s.split(',').map(|t| t.trim().parse::<f32>().ok()).collect()
}

impl Backbone {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let model = onnx::decode_model(bytes).map_err(|e| Error::Model(format!("not a valid ONNX model: {e}")))?;
        Self::from_model(&model)
    }

    pub fn from_model(model: &onnx::ModelProto) -> Result<Self> {
        let graph = model
            .graph
            .as_ref()
            .ok_or_else(|| Error::Model("model has no graph".into()))?;
        let mut tensors: HashMap<&str, &TensorProto> =
            graph.initializer.iter().map(|t| (t.name.as_str(), t)).collect();
        let input = graph
            .input
            .iter()
            .find(|v| !tensors.contains_key(v.name.as_str()))
            .ok_or_else(|| Error::Model("graph has no data input".into()))?;

        let mut current = input.name.clone();
        let mut stages = Vec::new();
        let mut tensor_of_stage = Vec::new();
        'walk: for node in &graph.node {
            if node.op_type == "Constant" {
                if let (Some(out), Some(t)) = (node.output.first(), attr(node, "value").and_then(|a| a.t.as_ref())) {
                    tensors.insert(out.as_str(), t);
                }
                continue;
            }
            if node.input.first() != Some(&current) {
                continue;
            }
            let out = node
                .output
                .first()
                .ok_or_else(|| Error::Model(format!("node '{}' has no output", node.name)))?;
            let stage = match node.op_type.as_str() {
                "Conv" => Stage::Conv(parse_conv(node, &tensors)?),
                "Relu" => Stage::Relu,
                "MaxPool" | "AveragePool" => {
                    let kernel = attr_pair(node, "kernel_shape", (0, 0))?;
                    if kernel.0 == 0 {
                        return Err(Error::Model(format!("pool '{}' lacks kernel_shape", node.name)));
                    }
                    if attr(node, "dilations").is_some_and(|a| a.ints.iter().any(|&d| d != 1)) {
                        return Err(Error::UnsupportedOperator {
                            op: "dilated pooling".into(),
                            node: node.name.clone(),
                        });
                    }
                    let p = PoolStage {
                        kernel,
                        stride: attr_pair(node, "strides", (1, 1))?,
                        pads: attr_pads(node)?,
                        ceil_mode: attr(node, "ceil_mode").is_some_and(|a| a.i != 0),
                        count_include_pad: attr(node, "count_include_pad").is_some_and(|a| a.i != 0),
                    };
                    if node.op_type == "MaxPool" {
                        Stage::MaxPool(p)
                    } else {
                        Stage::AvgPool(p)
                    }
                }
                "Identity" | "Dropout" => {
                    current = out.clone();
                    continue;
                }
                op if HEAD_OPS.contains(&op) => break 'walk,
                op => {
                    return Err(Error::UnsupportedOperator {
                        op: op.to_string(),
                        node: node.name.clone(),
                    })
                }
            };
            stages.push(stage);
            tensor_of_stage.push(out.clone());
            current = out.clone();
        }

        let mut layers = Vec::new();
        let mut block = 1;
        let mut conv_in_block = 0;
        let mut stride = (1usize, 1usize);
        let mut input_channels = None;
        let mut channels = 0;
        for (i, stage) in stages.iter().enumerate() {
            let s = stage.stride();
            stride = (stride.0 * s.0, stride.1 * s.1);
            match stage {
                Stage::Conv(c) => {
                    if input_channels.is_none() {
                        input_channels = Some(c.in_channels);
                    } else if c.in_channels != channels {
                        return Err(Error::Model(format!(
                            "convolution {} expects {} channels but receives {channels}",
                            i, c.in_channels
                        )));
                    }
                    channels = c.out_channels;
                    conv_in_block += 1;
                }
                Stage::Relu => {
                    if i > 0 && matches!(stages[i - 1], Stage::Conv(_)) {
                        if stride.0 != stride.1 {
                            return Err(Error::Model("anisotropic strides are not supported".into()));
                        }
                        layers.push(LayerDescriptor {
                            name: format!("conv{block}_{conv_in_block}"),
                            tensor: tensor_of_stage[i].clone(),
                            stride: stride.0,
                            channels,
                            stage: i,
                        });
                    }
                }
                Stage::MaxPool(_) | Stage::AvgPool(_) => {
                    if conv_in_block > 0 {
                        block += 1;
                        conv_in_block = 0;
                    }
                }
            }
        }
        let input_channels = input_channels.ok_or_else(|| Error::Model("no convolution layers found".into()))?;
        if layers.is_empty() {
            return Err(Error::Model("no rectified convolution outputs found".into()));
        }
        if input_channels != 1 && input_channels != 3 {
            return Err(Error::Model(format!(
                "first convolution takes {input_channels} channels; expected 1 or 3"
            )));
        }

        let meta: HashMap<&str, &str> = model
            .metadata_props
            .iter()
            .map(|p| (p.key.as_str(), p.value.as_str()))
            .collect();
        let id = meta
            .get(META_ID)
            .map(|s| s.to_string())
            .or_else(|| (!graph.name.is_empty()).then(|| graph.name.clone()))
            .unwrap_or_else(|| "backbone".to_string());
        let mean = meta.get(META_MEAN).and_then(|s| parse_floats(s));
        let scale = meta.get(META_SCALE).and_then(|s| parse_floats(s));
        let normalization = match (mean, scale) {
            (Some(m), Some(s)) if m.len() == input_channels && s.len() == input_channels => Normalization { mean: m, scale: s },
            _ => {
                log::warn!(
                    "backbone '{id}' has no usable normalization metadata; using ImageNet means with unit scale"
                );
                let mean = if input_channels == 3 {
                    FALLBACK_MEAN.to_vec()
                } else {
                    vec![FALLBACK_MEAN.iter().sum::<f32>() / 3.0]
                };
                Normalization {
                    mean,
                    scale: vec![1.0; input_channels],
                }
            }
        };

        Ok(Self {
            id,
            layers,
            normalization,
            input_channels,
            stages,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn layers(&self) -> &[LayerDescriptor] {
        &self.layers
    }

    pub fn layer_names(&self) -> Vec<&str> {
        self.layers.iter().map(|l| l.name.as_str()).collect()
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    /// Looks a layer up by canonical or graph tensor name.
    pub fn layer(&self, name: &str) -> Result<&LayerDescriptor> {
        self.layers
            .iter()
            .find(|l| l.name == name || l.tensor == name)
            .ok_or_else(|| Error::UnknownLayer {
                name: name.to_string(),
                available: self.layer_names().join(", "),
            })
    }

    /// Last rectified convolution with cumulative stride 8 (`conv4_3` for
    /// VGG16); falls back to the deepest layer with stride ≤ 8.
    pub fn default_layer(&self) -> &LayerDescriptor {
        self.layers
            .iter().rfind(|l| l.stride <= 8)
            .unwrap_or(&self.layers[0])
    }

    /// Smallest accepted input side.
    pub fn min_input_size(&self) -> usize {
        self.layers.iter().map(|l| l.stride).max().unwrap_or(1)
    }
}

fn parse_conv(node: &NodeProto, tensors: &HashMap<&str, &TensorProto>) -> Result<ConvStage> {
    if attr(node, "group").is_some_and(|a| a.i != 1) {
        return Err(Error::UnsupportedOperator {
            op: "grouped Conv".into(),
            node: node.name.clone(),
        });
    }
    if attr(node, "dilations").is_some_and(|a| a.ints.iter().any(|&d| d != 1)) {
        return Err(Error::UnsupportedOperator {
            op: "dilated Conv".into(),
            node: node.name.clone(),
        });
    }
    let fetch = |name: &str| -> Result<(Vec<i64>, Vec<f32>)> {
        let t = tensors
            .get(name)
            .ok_or_else(|| Error::Model(format!("conv '{}' references missing tensor '{name}'", node.name)))?;
        let v = t
            .to_f32()
            .ok_or_else(|| Error::Model(format!("tensor '{name}' is not a complete float32 tensor")))?;
        Ok((t.dims.clone(), v))
    };
    let wname = node
        .input
        .get(1)
        .ok_or_else(|| Error::Model(format!("conv '{}' has no weights", node.name)))?;
    let (dims, weights) = fetch(wname)?;
    if dims.len() != 4 || dims.iter().any(|&d| d <= 0) {
        return Err(Error::Model(format!("conv '{}' weights must be 4-D", node.name)));
    }
    let (out_c, in_c, kh, kw) = (dims[0] as usize, dims[1] as usize, dims[2] as usize, dims[3] as usize);
    let bias = match node.input.get(2).filter(|s| !s.is_empty()) {
        Some(b) => {
            let (bd, bv) = fetch(b)?;
            if bd != [out_c as i64] {
                return Err(Error::Model(format!("conv '{}' bias has shape {bd:?}", node.name)));
            }
            bv
        }
        None => vec![0.0; out_c],
    };
    let kernel = attr_pair(node, "kernel_shape", (kh, kw))?;
    if kernel != (kh, kw) {
        return Err(Error::Model(format!("conv '{}' kernel_shape disagrees with weights", node.name)));
    }
    Ok(ConvStage {
        out_channels: out_c,
        in_channels: in_c,
        kernel,
        stride: attr_pair(node, "strides", (1, 1))?,
        pads: attr_pads(node)?,
        weights,
        bias,
    })
}
