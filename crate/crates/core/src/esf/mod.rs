//! Ensemble of Shape Functions: ten 64-bin histograms over distances, areas,
//! angles and in-surface ratios of randomly sampled point triples.

mod descriptor;
mod surface;
mod voxel;

pub use descriptor::{
    compute_esf, esf_distance, read_descriptors, write_descriptors, EsfBlock, EsfDescriptor,
    EsfParams, BINS, BLOCKS, ESF_DIM,
};
pub use voxel::{
    build_voxel_grid, classify_segment, SegmentClass, SegmentKind, VoxelGrid, Walk, MIN_RESOLUTION,
};
