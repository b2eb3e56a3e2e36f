//! Procedural ray-cast videos with exact depth, flow, instance masks, boxes
//! and simulated scanline depth samples.

mod dataset;
mod geometry;
mod render;
mod sample;

pub use dataset::{generate_dataset, load_dataset, write_dataset, Dataset, DatasetConfig, Manifest, Split, VideoEntry};
pub use geometry::{Camera, Shape, Vec3};
pub use render::{
    compute_flow, render_frame, CameraPath, Hit, ObjectSpec, Regime, RenderedFrame, SceneSpec, FAR_DEPTH,
};
pub use sample::{
    add_depth_noise, extract_bboxes, render_video, sample_scene, sample_sparse_depth, NoiseSpec, SceneConfig,
    VideoSample, MIN_NOISY_DEPTH,
};
