//! Microstructure characterization from pretrained CNN features: synthetic
//! micrograph generation, feature extraction and encoding, clustering and
//! embedding, classification, segmentation, instance extraction and powder
//! fingerprints.
//!
//! Numeric models are generic over `f32`/`f64` through [`Scalar`]; the
//! aliases below fix the common double-precision choice.

pub mod classify;
pub mod cluster;
pub mod dataio;
pub mod error;
pub mod features;
pub mod fingerprint;
pub mod instances;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod segment;
pub mod synthgen;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PcaModel64 = features::PcaModel<f64>;
pub type PcaModel32 = features::PcaModel<f32>;
pub type KMeansModel64 = cluster::KMeansModel<f64>;
pub type KMeansModel32 = cluster::KMeansModel<f32>;
pub type LinearClassifier64 = classify::LinearClassifier<f64>;
pub type LinearClassifier32 = classify::LinearClassifier<f32>;
pub type Regressor64 = classify::Regressor<f64>;
pub type Regressor32 = classify::Regressor<f32>;
