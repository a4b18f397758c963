use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a layer's activations were turned into a fixed-length vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Encoding {
    /// Flattened activations.
    Raw,
    /// Projection onto `d` principal components.
    Pca(usize),
    /// VLAD over a `k`-word codebook.
    Vlad(usize),
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Encoding::Raw => write!(f, "raw"),
            Encoding::Pca(d) => write!(f, "pca-{d}"),
            Encoding::Vlad(k) => write!(f, "vlad-{k}"),
        }
    }
}

impl FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "raw" {
            return Ok(Encoding::Raw);
        }
        let parse = |rest: &str| -> Result<usize> {
            rest.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::invalid(format!("bad encoding '{s}'")))
        };
        if let Some(rest) = s.strip_prefix("pca-") {
            Ok(Encoding::Pca(parse(rest)?))
        } else if let Some(rest) = s.strip_prefix("vlad-") {
            Ok(Encoding::Vlad(parse(rest)?))
        } else {
            Err(Error::invalid(format!(
                "bad encoding '{s}' (expected raw, pca-<d> or vlad-<k>)"
            )))
        }
    }
}

impl Serialize for Encoding {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Encoding {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where a feature vector came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub backbone: String,
    pub layer: String,
    pub encoding: Encoding,
}

impl Provenance {
    pub fn new(backbone: impl Into<String>, layer: impl Into<String>, encoding: Encoding) -> Self {
        Self {
            backbone: backbone.into(),
            layer: layer.into(),
            encoding,
        }
    }

    pub fn ensure_same(&self, other: &Provenance) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ProvenanceMismatch(format!(
                "{}/{}/{} vs {}/{}/{}",
                self.backbone, self.layer, self.encoding, other.backbone, other.layer, other.encoding
            )))
        }
    }
}

/// Whole-image feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub provenance: Provenance,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>, provenance: Provenance) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector must be nonempty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("feature value {i} is not finite")));
        }
        Ok(Self { values, provenance })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Checks that `other` is comparable with `self`.
    pub fn ensure_compatible(&self, other: &FeatureVector) -> Result<()> {
        self.provenance.ensure_same(&other.provenance)?;
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }
}

/// Rejects empty or mixed-provenance vector lists; returns the shared provenance.
pub fn uniform_provenance(vectors: &[FeatureVector]) -> Result<&Provenance> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::invalid("no feature vectors given"))?;
    for v in &vectors[1..] {
        first.ensure_compatible(v)?;
    }
    Ok(&first.provenance)
}
