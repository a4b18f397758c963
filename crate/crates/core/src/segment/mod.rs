//! Semantic segmentation by classifying hypercolumn pixel vectors.

pub mod mask;
pub mod pixel;
pub mod synthetic;

pub use mask::{compose_masks, evaluate_mask, PixelEvalReport, SegmentationMask};
pub use pixel::{
    predict_mask, sample_training_pixels, train_pixel_classifier, LabeledPixel, PixelClassifier, PixelTrainConfig,
    DEFAULT_PER_CLASS, DEFAULT_PIXEL_LAYERS, TILE,
};
pub use synthetic::two_texture_image;
