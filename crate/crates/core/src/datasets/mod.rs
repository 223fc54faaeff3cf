//! Task generators and dataset ingestion.

pub mod boundary;
pub mod images;

pub use boundary::{generate_boundary_task, BoundaryTask, BoundaryTaskSpec};
pub use images::{
    export_idx_cache, load_image_dataset, load_image_source, read_idx_pair, split,
    ImageDatasetSpec, ImageSplit,
};
