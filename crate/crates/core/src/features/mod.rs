//! Backbone loading, layer activations, whole-image feature vectors and
//! per-pixel hypercolumns.

pub mod backbone;
pub mod extract;
pub mod onnx;
pub mod pca;
mod runtime;
pub mod vector;
pub mod vlad;
pub mod zoo;

pub use backbone::{Backbone, LayerDescriptor, Normalization};
pub use extract::{
    extract_layer, flatten_layer, hypercolumns, hypercolumns_from_stack, Activation, ActivationStack,
    HypercolumnSet,
};
pub use pca::{apply_pca, fit_pca, fit_pca_matrix, PcaModel};
pub use vector::{uniform_provenance, Encoding, FeatureVector, Provenance};
pub use vlad::{fit_vlad_codebook, local_descriptors, vlad_encode, VladCodebook};
pub use zoo::{vgg16_model, write_vgg16, VggConfig};
