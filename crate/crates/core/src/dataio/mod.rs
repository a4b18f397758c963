//! Dataset manifests, image loading, augmentation and the feature store.

pub mod augment;
pub mod image_io;
pub mod manifest;
pub mod micrograph;
pub mod store;

pub use augment::{augment, AugmentOp, FillPolicy};
pub use image_io::{load_image, save_png};
pub use manifest::{load_manifest, DatasetManifest, ManifestEntry, Split};
pub use micrograph::Micrograph;
pub use store::{load_model, save_model, FeatureStore};
