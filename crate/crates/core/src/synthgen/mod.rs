//! Synthetic polycrystals with known ground truth: Potts grain growth,
//! optical rendering, missing-boundary degradation and grain-size measurement.

pub mod dataset;
pub mod erase;
pub mod measure;
pub mod potts;
pub mod render;

pub use dataset::{
    generate_dataset, read_truth_csv, write_truth_csv, DatasetConfig, SyntheticDataset,
    SyntheticSample, TruthRow,
};
pub use erase::{boundary_segments, erase_boundaries, BoundarySegment};
pub use measure::{astm_grain_number, measure_grain_size, GrainStats};
pub use potts::{potts_evolve, potts_evolve_from, GrainMap, PottsSimulation};
pub use render::{boundary_mask, render_boundaries, render_micrograph, BoundaryMask, RenderStyle};
