//! Shared command plumbing: run records, backbone resolution, JSON output.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use mct_core::features::{write_vgg16, Backbone, VggConfig};
use serde::Serialize;
use serde_json::{json, Value};

/// A caller mistake: bad flag values or combinations. Maps to exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    let is_usage = e.chain().any(|c| {
        c.downcast_ref::<Usage>().is_some() || c.downcast_ref::<mct_core::Error>().is_some_and(mct_core::Error::is_usage)
    });
    if is_usage {
        2
    } else {
        1
    }
}

/// What was run: embedded in every output so results carry their provenance.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: Option<u64>,
    pub parameters: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunConfig {
    pub fn new<A: Serialize>(command: &str, args: &A, seed: Option<u64>, inputs: &[&Path], outputs: &[&Path]) -> Self {
        let show = |ps: &[&Path]| ps.iter().map(|p| p.display().to_string()).collect();
        Self {
            command: command.to_string(),
            seed,
            parameters: serde_json::to_value(args).unwrap_or(Value::Null),
            inputs: show(inputs),
            outputs: show(outputs),
        }
    }

    pub fn value(&self) -> Value {
        serde_json::to_value(self).expect("run config serializes")
    }

    /// Writes `run.json` into `dir`.
    pub fn write_into(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("run.json"), &self.value())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Serializes `body` with the run record under `"run"`.
pub fn with_run<T: Serialize>(run: &RunConfig, body: &T) -> Value {
    let mut v = serde_json::to_value(body).expect("report serializes");
    match &mut v {
        Value::Object(map) => {
            map.insert("run".into(), run.value());
            v
        }
        _ => json!({ "run": run.value(), "result": v }),
    }
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BackboneArgs {
    /// ONNX backbone file; defaults to the built-in VGG16 topology
    #[arg(long)]
    pub backbone: Option<PathBuf>,
    /// Channel divisor for the built-in backbone (1 is full width)
    #[arg(long, default_value_t = 1)]
    pub width_divisor: usize,
}

pub fn cache_dir() -> PathBuf {
    std::env::var_os("MCT_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mct-cache"))
}

impl BackboneArgs {
    pub fn load(&self) -> Result<Backbone> {
        if let Some(path) = &self.backbone {
            return Backbone::load(path).with_context(|| format!("loading backbone {}", path.display()));
        }
        if self.width_divisor == 0 || 64 % self.width_divisor != 0 {
            return Err(usage(format!("width divisor {} must divide 64", self.width_divisor)));
        }
        let config = VggConfig {
            width_divisor: self.width_divisor,
            ..VggConfig::default()
        };
        let dir = cache_dir();
        create_dir(&dir)?;
        let path = dir.join(format!("{}.onnx", config.id()));
        if !path.is_file() {
            let tmp = dir.join(format!("{}.onnx.{}", config.id(), std::process::id()));
            write_vgg16(&config, &tmp)?;
            std::fs::rename(&tmp, &path).with_context(|| format!("caching {}", path.display()))?;
        }
        Backbone::load(&path).with_context(|| format!("loading cached backbone {}", path.display()))
    }
}

/// Resolves an optional layer name against the backbone.
pub fn layer_name(backbone: &Backbone, layer: &Option<String>) -> Result<String> {
    match layer {
        Some(name) => Ok(backbone.layer(name)?.name.clone()),
        None => Ok(backbone.default_layer().name.clone()),
    }
}
