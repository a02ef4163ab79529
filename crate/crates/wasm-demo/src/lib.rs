//! Browser bindings: a synthetic scene explorer with live gaze-pattern
//! labels, and the heatmap target for a clicked gaze point.
//!
//! Everything callable from JS has a plain-Rust twin so the logic is tested
//! natively; the wasm wrappers only convert errors.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use csgaze_core::data::{build_heatmap_target, GazeClass, PairLabel, HEATMAP_SIDE};
use csgaze_core::synth::{
    describe_scene, gaze_point, render_scene, sample_scene, sample_scene_of_class, scene_pair_labels, SceneConfig,
    SharedAttentionMode, SyntheticScene,
};

#[derive(Debug, Serialize)]
pub struct SceneSummary {
    pub label: &'static str,
    /// Label with principal and associate exchanged.
    pub swapped_label: &'static str,
    pub context: String,
    pub pair_labels: PairLabel,
    pub gaze_angles_deg: [f64; 2],
    /// Point hit by each gaze ray, if any.
    pub gaze_points: [Option<[f64; 2]>; 2],
}

#[wasm_bindgen]
pub struct SceneExplorer {
    scene: SyntheticScene,
}

impl SceneExplorer {
    /// `class` is a gaze-class index (Share, Mutual, Single, Miss, Void) or
    /// negative for the uniform mix.
    pub fn sample(seed: u32, class: i32) -> Result<Self, String> {
        let cfg = SceneConfig::default();
        let scene = match usize::try_from(class).ok() {
            None => sample_scene(u64::from(seed), &cfg),
            Some(k) => {
                let c = GazeClass::from_index(k).ok_or_else(|| format!("no gaze class {k}"))?;
                sample_scene_of_class(u64::from(seed), &cfg, c)
            }
        }
        .map_err(|e| e.to_string())?;
        Ok(SceneExplorer { scene })
    }

    pub fn scene(&self) -> &SyntheticScene {
        &self.scene
    }

    pub fn summary(&self) -> SceneSummary {
        let label = self.scene.gp_label();
        SceneSummary {
            label: label.tag(),
            swapped_label: self.scene.role_swapped().gp_label().tag(),
            context: describe_scene(&self.scene),
            pair_labels: scene_pair_labels(&self.scene, SharedAttentionMode::HeadsAndObjects),
            gaze_angles_deg: [self.gaze_angle(0), self.gaze_angle(1)],
            gaze_points: [gaze_point(&self.scene, 0), gaze_point(&self.scene, 1)],
        }
    }
}

#[wasm_bindgen]
impl SceneExplorer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, class: i32) -> Result<SceneExplorer, JsError> {
        Self::sample(seed, class).map_err(|e| JsError::new(&e))
    }

    /// Points person `who` (0 principal, 1 associate) along `degrees`,
    /// measured from +x towards +y (image rows grow downwards).
    pub fn set_gaze_angle(&mut self, who: usize, degrees: f64) {
        if let Some(p) = self.scene.persons.get_mut(who) {
            let a = degrees.to_radians();
            p.gaze_dir = [a.cos(), a.sin()];
        }
    }

    pub fn gaze_angle(&self, who: usize) -> f64 {
        self.scene.persons.get(who).map_or(f64::NAN, |p| p.gaze_angle().to_degrees())
    }

    /// Head centre of person `who` in unit coordinates.
    pub fn head_center(&self, who: usize) -> Vec<f64> {
        self.scene.persons.get(who).map_or_else(Vec::new, |p| p.center.to_vec())
    }

    /// `size × size` RGBA pixels; empty if `size` is unusable.
    pub fn render_rgba(&self, size: usize) -> Vec<u8> {
        render_scene(&self.scene, size).map(|r| r.to_rgba8()).unwrap_or_default()
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string(&self.summary()).expect("plain struct")
    }
}

/// Side of the square heatmap grid.
#[wasm_bindgen]
pub fn heatmap_side() -> usize {
    HEATMAP_SIDE
}

/// Row-major heatmap target for a gaze point in unit coordinates; empty when
/// the point lies outside the image.
#[wasm_bindgen]
pub fn heatmap_target(x: f64, y: f64) -> Vec<f32> {
    build_heatmap_target([x, y])
        .map(|t| t.as_slice().iter().map(|&v| v as f32).collect())
        .unwrap_or_default()
}
