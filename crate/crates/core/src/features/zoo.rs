//! Deterministic VGG16-topology backbones written as ONNX files.
//!
//! Weights are seeded He-normal draws; no pretrained weights are shipped.

use std::path::Path;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::backbone::{META_ID, META_MEAN, META_SCALE};
use crate::features::onnx::{
    encode_model, AttributeProto, GraphProto, ModelProto, NodeProto, OperatorSetIdProto,
    StringStringEntryProto, TensorProto, ValueInfoProto,
};
use crate::rng::{derive_seed, rng};

/// Convolution widths per block of VGG16.
pub const VGG16_BLOCKS: [&[usize]; 5] = [
    &[64, 64],
    &[128, 128],
    &[256, 256, 256],
    &[512, 512, 512],
    &[512, 512, 512],
];

pub const DEFAULT_SEED: u64 = 16;

const MEAN: [f32; 3] = [123.675, 116.28, 103.53];
const STD: [f32; 3] = [58.395, 57.12, 57.375];

#[derive(Debug, Clone, PartialEq)]
pub struct VggConfig {
    /// Every block width is divided by this (1 = full VGG16).
    pub width_divisor: usize,
    pub seed: u64,
    /// Append a flatten + fully connected classifier head.
    pub head: bool,
    /// Omit the normalization metadata.
    pub bare: bool,
}

impl Default for VggConfig {
    fn default() -> Self {
        Self {
            width_divisor: 1,
            seed: DEFAULT_SEED,
            head: false,
            bare: false,
        }
    }
}

impl VggConfig {
    pub fn id(&self) -> String {
        if self.width_divisor == 1 {
            format!("vgg16-he-s{}", self.seed)
        } else {
            format!("vgg16-he-s{}-w{}", self.seed, self.width_divisor)
        }
    }
}

fn node(op: &str, name: &str, inputs: &[&str], output: &str, attribute: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.to_string()],
        name: name.into(),
        op_type: op.into(),
        attribute,
        domain: String::new(),
    }
}

fn he_weights(count: usize, fan_in: usize, seed: u64) -> Vec<f32> {
    let normal = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let mut r = rng(seed);
    (0..count).map(|_| normal.sample(&mut r) as f32).collect()
}

pub fn vgg16_model(config: &VggConfig) -> Result<ModelProto> {
    if config.width_divisor == 0 || 64 % config.width_divisor != 0 {
        return Err(Error::invalid("width divisor must divide 64"));
    }
    let mut nodes = Vec::new();
    let mut init = Vec::new();
    let mut current = "input".to_string();
    let mut in_c = 3usize;
    let mut layer = 0u64;
    for (b, widths) in VGG16_BLOCKS.iter().enumerate() {
        for (i, &w) in widths.iter().enumerate() {
            let out_c = w / config.width_divisor;
            let name = format!("conv{}_{}", b + 1, i + 1);
            let wname = format!("{name}.weight");
            let bname = format!("{name}.bias");
            let weights = he_weights(out_c * in_c * 9, in_c * 9, derive_seed(config.seed, layer));
            init.push(TensorProto::from_f32(&wname, &[out_c as i64, in_c as i64, 3, 3], &weights));
            init.push(TensorProto::from_f32(&bname, &[out_c as i64], &vec![0.0; out_c]));
            nodes.push(node(
                "Conv",
                &name,
                &[&current, &wname, &bname],
                &name,
                vec![
                    AttributeProto::ints("kernel_shape", &[3, 3]),
                    AttributeProto::ints("pads", &[1, 1, 1, 1]),
                    AttributeProto::ints("strides", &[1, 1]),
                ],
            ));
            let relu = format!("relu{}_{}", b + 1, i + 1);
            nodes.push(node("Relu", &relu, &[&name], &relu, vec![]));
            current = relu;
            in_c = out_c;
            layer += 1;
        }
        let pool = format!("pool{}", b + 1);
        nodes.push(node(
            "MaxPool",
            &pool,
            &[&current],
            &pool,
            vec![
                AttributeProto::ints("kernel_shape", &[2, 2]),
                AttributeProto::ints("strides", &[2, 2]),
                AttributeProto::int("ceil_mode", 1),
            ],
        ));
        current = pool;
    }
    let mut outputs = vec![ValueInfoProto { name: current.clone(), r#type: None }];
    if config.head {
        nodes.push(node("Flatten", "flatten", &[&current], "flat", vec![AttributeProto::int("axis", 1)]));
        let fc_in = in_c * 7 * 7;
        let classes = 10usize;
        init.push(TensorProto::from_f32(
            "fc.weight",
            &[classes as i64, fc_in as i64],
            &he_weights(classes * fc_in, fc_in, derive_seed(config.seed, 1000)),
        ));
        init.push(TensorProto::from_f32("fc.bias", &[classes as i64], &vec![0.0; classes]));
        nodes.push(node(
            "Gemm",
            "fc",
            &["flat", "fc.weight", "fc.bias"],
            "logits",
            vec![AttributeProto::int("transB", 1)],
        ));
        nodes.push(node("Softmax", "softmax", &["logits"], "prob", vec![]));
        outputs = vec![ValueInfoProto { name: "prob".into(), r#type: None }];
    }
    let mut metadata = vec![StringStringEntryProto {
        key: META_ID.into(),
        value: config.id(),
    }];
    if !config.bare {
        let join = |v: Vec<f32>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        metadata.push(StringStringEntryProto {
            key: META_MEAN.into(),
            value: join(MEAN.to_vec()),
        });
        metadata.push(StringStringEntryProto {
            key: META_SCALE.into(),
            value: join(STD.iter().map(|s| 1.0 / s).collect()),
        });
    }
    Ok(ModelProto {
        ir_version: 8,
        producer_name: "mct".into(),
        producer_version: env!("CARGO_PKG_VERSION").into(),
        graph: Some(GraphProto {
            node: nodes,
            name: config.id(),
            initializer: init,
            input: vec![ValueInfoProto::image_input("input", 3)],
            output: outputs,
        }),
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        metadata_props: metadata,
    })
}

pub fn write_vgg16(config: &VggConfig, path: &Path) -> Result<()> {
    let bytes = encode_model(&vgg16_model(config)?);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
