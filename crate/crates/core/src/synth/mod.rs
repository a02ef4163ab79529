//! Synthetic dyadic scenes with exact geometric ground truth.
//!
//! Labels, rendered pixels and context text are all derived from the same
//! [`SyntheticScene`], so every stage of the pipeline can be checked offline.

mod describe;
mod export;
mod geometry;
mod render;
mod scene;

pub use describe::describe_scene;
pub use export::{export_dataset, gaze_point, scene_seed, gazefollow_samples, scene_pair_labels, ExportSummary, SyntheticDataset};
pub use geometry::{
    derive_gp_label, derive_pair_labels, looks_at, resolve_target, Disc, GazeTarget, Person,
    SharedAttentionMode,
};
pub use render::{object_color, render_scene, BACKGROUND, OBJECT_PALETTE, PERSON_COLORS, WEDGE};
pub use scene::{sample_scene, sample_scene_of_class, SceneConfig, SyntheticScene};
