//! Object detection and instance segmentation by connected components and
//! watershed splitting, patch extraction and instance matching.

pub mod label;
pub mod matching;
pub mod patches;
pub mod set;
pub mod synthetic;

pub use label::{
    connected_components, distance_transform_sq, label_components, watershed_split, Connectivity,
    DEFAULT_MIN_SEED_DISTANCE, MERGE_DYNAMIC,
};
pub use matching::{match_instances, pairwise_iou, MatchReport, DEFAULT_IOU_THRESHOLD};
pub use patches::extract_patches;
pub use set::{decode_rle, encode_rle, Instance, InstanceSet};
pub use synthetic::particle_field;
