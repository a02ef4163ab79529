use std::path::{Path, PathBuf};

use serde::Serialize;

use super::describe::describe_scene;
use super::geometry::{derive_pair_labels, resolve_target, GazeTarget, SharedAttentionMode};
use super::render::render_scene;
use super::scene::{sample_scene, SceneConfig, SyntheticScene};
use crate::context::{write_cache_records, ContextRecord, ProviderTag};
use crate::data::manifest::{write_dyad_manifest, write_gazefollow_manifest};
use crate::data::records::write_pair_labels;
use crate::data::{DyadLabel, DyadSample, GazeClass, GazeFollowSample, PairLabel};
use crate::error::{Error, Result};

/// Seed of the `index`-th scene of a dataset generated from `base`.
pub fn scene_seed(base: u64, index: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index as u64)
}

/// Point a person looks at: the centre of the nearest disc on the gaze ray,
/// or `None` when the ray hits nothing.
pub fn gaze_point(scene: &SyntheticScene, who: usize) -> Option<[f64; 2]> {
    match resolve_target(&scene.persons, &scene.objects, who) {
        GazeTarget::OtherHead => Some(scene.persons[1 - who].center),
        GazeTarget::Object(k) => Some(scene.objects[k].center),
        GazeTarget::None => None,
    }
}

/// Where the gaze ray leaves the canvas (kept just inside the unit square).
fn exit_point(scene: &SyntheticScene, who: usize) -> [f64; 2] {
    let p = &scene.persons[who];
    let mut t = f64::INFINITY;
    for axis in 0..2 {
        let d = p.gaze_dir[axis];
        if d > 1e-12 {
            t = t.min((1.0 - p.center[axis]) / d);
        } else if d < -1e-12 {
            t = t.min(-p.center[axis] / d);
        }
    }
    let t = t * 0.999;
    [
        (p.center[0] + t * p.gaze_dir[0]).clamp(0.0, 1.0),
        (p.center[1] + t * p.gaze_dir[1]).clamp(0.0, 1.0),
    ]
}

/// Gaze-following records for every person whose gaze ray hits a target.
pub fn gazefollow_samples(scene: &SyntheticScene, id: &str, image: &Path) -> Vec<GazeFollowSample> {
    (0..2)
        .filter_map(|who| {
            gaze_point(scene, who).map(|gp| GazeFollowSample {
                sample_id: format!("{id}-p{who}"),
                image: image.to_path_buf(),
                head: scene.persons[who].head().bounding_box(),
                gaze_point: gp,
            })
        })
        .collect()
}

/// Pair flags of a scene from its gaze points, head boxes and object boxes.
pub fn scene_pair_labels(scene: &SyntheticScene, mode: SharedAttentionMode) -> PairLabel {
    let points: Vec<[f64; 2]> = (0..2)
        .map(|who| gaze_point(scene, who).unwrap_or_else(|| exit_point(scene, who)))
        .collect();
    let heads: Vec<_> = scene.persons.iter().map(|p| p.head().bounding_box()).collect();
    let objects: Vec<_> = scene.objects.iter().map(|o| o.bounding_box()).collect();
    derive_pair_labels(&points, &heads, &[], &objects, mode).expect("two persons")
}

/// An in-memory synthetic split.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub scenes: Vec<SyntheticScene>,
    pub ids: Vec<String>,
}

impl SyntheticDataset {
    pub fn generate(n: usize, base_seed: u64, config: &SceneConfig, id_prefix: &str) -> Result<Self> {
        let mut scenes = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for i in 0..n {
            scenes.push(sample_scene(scene_seed(base_seed, i), config)?);
            ids.push(format!("{id_prefix}{i:06}"));
        }
        Ok(SyntheticDataset { scenes, ids })
    }

    pub fn dyad_sample(&self, i: usize, image: PathBuf) -> DyadSample {
        let s = &self.scenes[i];
        DyadSample {
            sample_id: self.ids[i].clone(),
            image,
            principal: s.persons[0].head().bounding_box(),
            associate: s.persons[1].head().bounding_box(),
            label: Some(DyadLabel::Gaze(s.gp_label())),
            context: None,
        }
    }

    pub fn histogram(&self) -> [usize; 5] {
        let mut h = [0; 5];
        for s in &self.scenes {
            h[s.gp_label().index()] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportSummary {
    pub count: usize,
    pub histogram: Vec<(String, usize)>,
    pub dyad_manifest: PathBuf,
    pub gazefollow_manifest: PathBuf,
    pub contexts: PathBuf,
    pub pair_labels: PathBuf,
}

/// Writes rasters, manifests, context sidecar and pair labels to `out_dir`.
pub fn export_dataset(
    out_dir: &Path,
    dataset: &SyntheticDataset,
    render_size: usize,
    mode: SharedAttentionMode,
) -> Result<ExportSummary> {
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images)?;
    let mut dyads = Vec::with_capacity(dataset.scenes.len());
    let mut follow = Vec::new();
    let mut contexts = Vec::with_capacity(dataset.scenes.len());
    let mut pairs = Vec::with_capacity(dataset.scenes.len());
    for (i, scene) in dataset.scenes.iter().enumerate() {
        let id = &dataset.ids[i];
        let rel = PathBuf::from("images").join(format!("{id}.png"));
        render_scene(scene, render_size)?.save_png(&out_dir.join(&rel))?;
        dyads.push(dataset.dyad_sample(i, rel.clone()));
        follow.extend(gazefollow_samples(scene, id, &rel));
        contexts.push(ContextRecord {
            sample_id: id.clone(),
            text: describe_scene(scene),
            provider_tag: ProviderTag::SyntheticTemplate,
        });
        pairs.push((id.clone(), scene_pair_labels(scene, mode)));
    }
    let summary = ExportSummary {
        count: dataset.scenes.len(),
        histogram: GazeClass::ALL
            .iter()
            .zip(dataset.histogram())
            .map(|(c, n)| (c.tag().to_string(), n))
            .collect(),
        dyad_manifest: out_dir.join("dyads.tsv"),
        gazefollow_manifest: out_dir.join("gazefollow.tsv"),
        contexts: out_dir.join("contexts.tsv"),
        pair_labels: out_dir.join("pair_labels.tsv"),
    };
    std::fs::write(&summary.dyad_manifest, write_dyad_manifest(&dyads))?;
    std::fs::write(&summary.gazefollow_manifest, write_gazefollow_manifest(&follow))?;
    std::fs::write(&summary.contexts, write_cache_records(&contexts))?;
    std::fs::write(&summary.pair_labels, write_pair_labels(&pairs))?;
    if summary.count != dyads.len() {
        return Err(Error::Evaluation("export count mismatch".into()));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutual_scenes_are_laeo() {
        let cfg = SceneConfig::single_class(GazeClass::Mutual);
        for seed in 0..50 {
            let s = sample_scene(seed, &cfg).unwrap();
            let pl = scene_pair_labels(&s, SharedAttentionMode::HeadsAndObjects);
            // The nearest hit may be an object in front of the other head.
            if gaze_point(&s, 0) == Some(s.persons[1].center)
                && gaze_point(&s, 1) == Some(s.persons[0].center)
            {
                assert!(pl.laeo);
            }
            assert!(pl.is_consistent());
        }
    }

    #[test]
    fn gazefollow_points_stay_in_unit_square() {
        let ds = SyntheticDataset::generate(200, 3, &SceneConfig::default(), "t").unwrap();
        for (i, s) in ds.scenes.iter().enumerate() {
            for g in gazefollow_samples(s, &ds.ids[i], Path::new("x.png")) {
                g.validate().unwrap();
            }
            for who in 0..2 {
                let e = exit_point(s, who);
                assert!((0.0..=1.0).contains(&e[0]) && (0.0..=1.0).contains(&e[1]));
            }
        }
    }
}
