//! Encoders, the phase-1 heatmap head and the fusion stack.

mod checkpoint;
mod config;
mod encoders;
mod fusion;
mod heatmap;
mod text;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, PhaseTag, CHECKPOINT_VERSION};
pub use config::{CrossDirection, EncoderConfig, ModelConfig};
pub use encoders::{prepare_face, prepare_scene, FaceEncoder, SceneEncoder, SceneFeatures, FACE_POOL, SCENE_GRID, SCENE_POOL};
pub use fusion::FusionState;
pub use heatmap::{head_mask_cells, heatmap_mse, heatmap_mse_grad, AuxOutput, HeatmapHead};
pub use text::{tokenize, TextEncoder, TextFeatures, TextInput};

use serde::{Deserialize, Serialize};

use crate::data::{build_heatmap_target, DyadSample, GazeFollowSample, HeadBox, Raster, FACE_SIZE};
use crate::error::{Error, Result};
use crate::nn::{add_into, Grads, ParamStore};

use encoders::{FaceCache, SceneCache};
use fusion::{ClassifierCache, CrossCache, MergeCache};
use heatmap::HeatmapCache;

/// Parameter name prefixes of each group.
pub const FACE_PREFIX: &str = "face.";
pub const SCENE_PREFIX: &str = "scene.";
pub const TEXT_PREFIX: &str = "text.";
pub const HEATMAP_PREFIX: &str = "heatmap.";
pub const FUSION_PREFIX: &str = "fusion.";

/// Which input branches feed the fusion stack; disabled branches are
/// replaced by zeros of the same shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modalities {
    pub face: bool,
    pub scene: bool,
    pub context: bool,
}

impl Default for Modalities {
    fn default() -> Self {
        Modalities::ALL
    }
}

impl Modalities {
    pub const ALL: Modalities = Modalities {
        face: true,
        scene: true,
        context: true,
    };

    /// The seven ablation rows, in table order.
    pub const TABLE: [Modalities; 7] = [
        Modalities { face: false, scene: true, context: false },
        Modalities { face: false, scene: false, context: true },
        Modalities { face: false, scene: true, context: true },
        Modalities { face: true, scene: false, context: false },
        Modalities { face: true, scene: true, context: false },
        Modalities { face: true, scene: false, context: true },
        Modalities::ALL,
    ];

    /// `F`, `S`, `C` joined with `+`, e.g. `F+S+C`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.face {
            parts.push("F");
        }
        if self.scene {
            parts.push("S");
        }
        if self.context {
            parts.push("C");
        }
        parts.join("+")
    }

    pub fn parse(label: &str) -> Result<Self> {
        let mut m = Modalities {
            face: false,
            scene: false,
            context: false,
        };
        for part in label.split('+') {
            match part.trim().to_ascii_uppercase().as_str() {
                "F" => m.face = true,
                "S" => m.scene = true,
                "C" => m.context = true,
                other => return Err(Error::invalid("modalities", format!("unknown branch {other:?}"))),
            }
        }
        Ok(m)
    }
}

/// Per-call options of the classification forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ForwardOptions {
    pub modalities: Modalities,
    /// Freeze `(α_P, α_A)` at `(0.5, 0.5)`.
    pub fixed_equal_alpha: bool,
}

/// Dyad sample with pooled encoder inputs, ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDyad {
    pub sample_id: String,
    pub scene: Vec<f64>,
    /// Principal then associate.
    pub faces: [Vec<f64>; 2],
    pub text: TextInput,
    pub label: Option<usize>,
}

impl PreparedDyad {
    pub fn new(image: &Raster, sample: &DyadSample, context: &str, config: &ModelConfig) -> Result<Self> {
        sample.validate()?;
        Ok(PreparedDyad {
            sample_id: sample.sample_id.clone(),
            scene: prepare_scene(image)?,
            faces: [prepare_face(image, &sample.principal)?, prepare_face(image, &sample.associate)?],
            text: TextInput::hashed(context, &config.encoder)?,
            label: sample.label.map(|l| l.index()),
        })
    }
}

/// Gaze-following sample with pooled encoder inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGaze {
    pub sample_id: String,
    pub scene: Vec<f64>,
    pub face: Vec<f64>,
    pub head: HeadBox,
    pub gaze_point: [f64; 2],
}

impl PreparedGaze {
    pub fn new(image: &Raster, sample: &GazeFollowSample) -> Result<Self> {
        sample.validate()?;
        Ok(PreparedGaze {
            sample_id: sample.sample_id.clone(),
            scene: prepare_scene(image)?,
            face: prepare_face(image, &sample.head)?,
            head: sample.head,
            gaze_point: sample.gaze_point,
        })
    }

    /// Unit vector from the head centre to the gaze point.
    pub fn gaze_vector(&self) -> [f64; 2] {
        let c = self.head.center();
        let (dx, dy) = (self.gaze_point[0] - c[0], self.gaze_point[1] - c[1]);
        let n = (dx * dx + dy * dy).sqrt();
        if n > 1e-12 {
            [dx / n, dy / n]
        } else {
            [0.0, 0.0]
        }
    }
}

/// Observable intermediate values of one classification forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub f_merged: Vec<f64>,
    pub s_fused: Vec<f64>,
    /// Attention mass on `[S_fused, F_merged]`.
    pub merge_attention: [f64; 2],
    pub alpha: [f64; 2],
    pub logits: Vec<f64>,
}

pub(crate) struct DyadCache {
    scene: Option<SceneCache>,
    faces: [Option<FaceCache>; 2],
    f: [Vec<f64>; 2],
    cross: CrossCache,
    merge: MergeCache,
    classifier: ClassifierCache,
}

pub(crate) struct GazeCache {
    scene: SceneCache,
    face: FaceCache,
    heatmap: HeatmapCache,
    global: Vec<f64>,
    face_embedding: Vec<f64>,
}

/// The full model: parameter store plus layer handles.
#[derive(Debug, Clone, PartialEq)]
pub struct CsGaze {
    config: ModelConfig,
    pub store: ParamStore,
    pub face: FaceEncoder,
    pub scene: SceneEncoder,
    pub text: TextEncoder,
    pub heatmap: HeatmapHead,
    pub fusion: FusionState,
}

impl CsGaze {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let e = &config.encoder;
        let mut store = ParamStore::new(seed);
        let face = FaceEncoder::new(&mut store, e.conv_channels, e.face_dim);
        let scene = SceneEncoder::new(&mut store, e.conv_channels, e.scene_dim);
        let text = TextEncoder::new(&mut store, e);
        let heatmap = HeatmapHead::new(&mut store, e.scene_dim, e.face_dim, config.aux_heads);
        let fusion = FusionState::new(&mut store, &config);
        Ok(CsGaze {
            config,
            store,
            face,
            scene,
            text,
            heatmap,
            fusion,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.store.seed()
    }

    /// Copies encoder (and heatmap head) weights from a pretrained model;
    /// text and fusion parameters keep this model's seeded init.
    pub fn transfer_encoders(&mut self, from: &CsGaze) -> Result<()> {
        for t in from.store.tensors() {
            if [FACE_PREFIX, SCENE_PREFIX, HEATMAP_PREFIX].iter().any(|p| t.name.starts_with(p)) {
                self.store.import(&t.name, &t.shape, &t.data)?;
            }
        }
        Ok(())
    }

    pub fn face_encode(&self, face: &Raster) -> Result<Vec<f64>> {
        if face.width() != FACE_SIZE || face.height() != FACE_SIZE {
            return Err(Error::Shape(format!("face crop must be {FACE_SIZE}x{FACE_SIZE}")));
        }
        if face.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("raster", "pixel values must lie in [0, 1]"));
        }
        Ok(self.face.forward(&self.store, &face.area_pool_planar(FACE_POOL)?)?.0)
    }

    pub fn scene_encode(&self, image: &Raster) -> Result<SceneFeatures> {
        if image.width() != FACE_SIZE || image.height() != FACE_SIZE {
            return Err(Error::Shape(format!("scene image must be {FACE_SIZE}x{FACE_SIZE}")));
        }
        Ok(self.scene.forward(&self.store, &prepare_scene(image)?)?.0)
    }

    pub fn text_encode(&self, text: &str) -> Result<TextFeatures> {
        Ok(self.text.forward(&self.store, &TextInput::hashed(text, &self.config.encoder)?))
    }

    pub fn heatmap_head(&self, scene: &SceneFeatures, face: &[f64], head: &HeadBox) -> Vec<f64> {
        self.heatmap.forward(&self.store, &scene.tokens, face, head).output
    }

    pub fn fuse_faces(&self, f_p: &[f64], f_a: &[f64], fixed_equal: bool) -> Result<Vec<f64>> {
        self.fusion.fuse_faces(&self.store, f_p, f_a, fixed_equal)
    }

    /// `S_fused` and the `heads × queries × keys` attention weights.
    pub fn cross_attend(&self, scene: &SceneFeatures, text: &TextFeatures) -> Result<(Vec<f64>, Vec<f64>)> {
        let (s, c) = self.fusion.cross_attend(&self.store, scene, text)?;
        Ok((s, c.attn.probs))
    }

    /// `(joint, merge_attention)`.
    pub fn self_attend_merge(&self, f_merged: &[f64], s_fused: &[f64]) -> Result<(Vec<f64>, [f64; 2])> {
        let (j, m, _) = self.fusion.self_attend_merge(&self.store, f_merged, s_fused)?;
        Ok((j, m))
    }

    pub fn classify(&self, joint: &[f64]) -> Vec<f64> {
        self.fusion.classify(&self.store, joint).0
    }

    pub fn forward(&self, sample: &PreparedDyad, opts: ForwardOptions) -> Result<ForwardTrace> {
        Ok(self.forward_cached(sample, opts)?.0)
    }

    pub(crate) fn forward_cached(&self, sample: &PreparedDyad, opts: ForwardOptions) -> Result<(ForwardTrace, DyadCache)> {
        let e = &self.config.encoder;
        let m = opts.modalities;
        let (scene, scene_cache) = if m.scene {
            let (f, c) = self.scene.forward(&self.store, &sample.scene)?;
            (f, Some(c))
        } else {
            (SceneFeatures::zeros(e.scene_token_count, e.scene_dim), None)
        };
        let mut text = self.text.forward(&self.store, &sample.text);
        if !m.context {
            text.tokens.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut f = [vec![0.0; e.face_dim], vec![0.0; e.face_dim]];
        let mut face_caches = [None, None];
        if m.face {
            for who in 0..2 {
                let (emb, c) = self.face.forward(&self.store, &sample.faces[who])?;
                f[who] = emb;
                face_caches[who] = Some(c);
            }
        }
        let f_merged = self.fusion.fuse_faces(&self.store, &f[0], &f[1], opts.fixed_equal_alpha)?;
        let (s_fused, cross) = self.fusion.cross_attend(&self.store, &scene, &text)?;
        let (joint, merge_attention, merge) = self.fusion.self_attend_merge(&self.store, &f_merged, &s_fused)?;
        let (logits, classifier) = self.fusion.classify(&self.store, &joint);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("logits of {}", sample.sample_id)));
        }
        let trace = ForwardTrace {
            f_merged,
            s_fused,
            merge_attention,
            alpha: self.fusion.alpha(&self.store, opts.fixed_equal_alpha),
            logits,
        };
        Ok((
            trace,
            DyadCache {
                scene: scene_cache,
                faces: face_caches,
                f,
                cross,
                merge,
                classifier,
            },
        ))
    }

    pub(crate) fn backward_dyad(
        &self,
        sample: &PreparedDyad,
        cache: &DyadCache,
        dlogits: &[f64],
        opts: ForwardOptions,
        grads: &mut Grads,
    ) {
        let s = &self.store;
        let djoint = self.fusion.classify_backward(s, grads, &cache.classifier, dlogits);
        let (dmerged, dfused) = self.fusion.merge_backward(s, grads, &cache.merge, &djoint);
        let (mut dscene, dglobal, dtext) = self.fusion.cross_backward(s, grads, &cache.cross, &dfused);
        if let Some(sc) = &cache.scene {
            let d = self.config.encoder.scene_dim;
            let n = dscene.len() / d;
            for row in dscene.chunks_mut(d) {
                for (a, g) in row.iter_mut().zip(&dglobal) {
                    *a += g / n as f64;
                }
            }
            self.scene.backward(s, grads, sc, &dscene);
        }
        if opts.modalities.context {
            self.text.backward(grads, &sample.text, &dtext);
        }
        let (dfp, dfa) = self
            .fusion
            .fuse_backward(s, grads, &cache.f[0], &cache.f[1], &dmerged, opts.fixed_equal_alpha);
        for (who, df) in [dfp, dfa].iter().enumerate() {
            if let Some(fc) = &cache.faces[who] {
                self.face.backward(s, grads, fc, df);
            }
        }
    }

    /// Predicted 64×64 heatmap (and aux outputs when configured).
    pub fn predict_heatmap(&self, sample: &PreparedGaze) -> Result<(Vec<f64>, Option<AuxOutput>)> {
        let (out, aux, _) = self.forward_gaze(sample)?;
        Ok((out, aux))
    }

    pub(crate) fn forward_gaze(&self, sample: &PreparedGaze) -> Result<(Vec<f64>, Option<AuxOutput>, GazeCache)> {
        let (scene, scene_cache) = self.scene.forward(&self.store, &sample.scene)?;
        let (f, face_cache) = self.face.forward(&self.store, &sample.face)?;
        let hm = self.heatmap.forward(&self.store, &scene.tokens, &f, &sample.head);
        let aux = match (self.heatmap.aux_head, self.heatmap.aux_gaze) {
            (Some(h), Some(g)) => {
                let hc = h.forward(&self.store, &scene.global);
                let gv = g.forward(&self.store, &f);
                Some(AuxOutput {
                    head_center: [hc[0], hc[1]],
                    gaze_vector: [gv[0], gv[1]],
                })
            }
            _ => None,
        };
        Ok((
            hm.output.clone(),
            aux,
            GazeCache {
                scene: scene_cache,
                face: face_cache,
                heatmap: hm,
                global: scene.global,
                face_embedding: f,
            },
        ))
    }

    /// Phase-1 loss of one sample; accumulates its gradient into `grads`.
    pub(crate) fn gaze_loss_and_grad(&self, sample: &PreparedGaze, grads: Option<&mut Grads>) -> Result<f64> {
        let target = build_heatmap_target(sample.gaze_point)?;
        let (out, aux, cache) = self.forward_gaze(sample)?;
        let mut loss = heatmap_mse(&out, target.as_slice());
        let aux_targets = (sample.head.center(), sample.gaze_vector());
        if let Some(a) = &aux {
            loss += sq_err(&a.head_center, &aux_targets.0) + sq_err(&a.gaze_vector, &aux_targets.1);
        }
        let Some(grads) = grads else {
            return Ok(loss);
        };
        let s = &self.store;
        let dout = heatmap_mse_grad(&out, target.as_slice());
        let (mut dtokens, mut dface) = self.heatmap.backward(s, grads, &cache.heatmap, &dout);
        if let (Some(a), Some(h), Some(g)) = (&aux, self.heatmap.aux_head, self.heatmap.aux_gaze) {
            let dh: Vec<f64> = (0..2).map(|i| a.head_center[i] - aux_targets.0[i]).collect();
            let dg: Vec<f64> = (0..2).map(|i| a.gaze_vector[i] - aux_targets.1[i]).collect();
            let dglobal = h.backward(s, grads, &cache.global, &dh);
            add_into(&mut dface, &g.backward(s, grads, &cache.face_embedding, &dg));
            let d = self.config.encoder.scene_dim;
            let n = dtokens.len() / d;
            for row in dtokens.chunks_mut(d) {
                for (x, gv) in row.iter_mut().zip(&dglobal) {
                    *x += gv / n as f64;
                }
            }
        }
        self.scene.backward(s, grads, &cache.scene, &dtokens);
        self.face.backward(s, grads, &cache.face, &dface);
        Ok(loss)
    }

    /// Cross-entropy of one labelled sample; accumulates its gradient.
    pub(crate) fn dyad_loss_and_grad(
        &self,
        sample: &PreparedDyad,
        opts: ForwardOptions,
        grads: Option<&mut Grads>,
    ) -> Result<(f64, ForwardTrace)> {
        let label = sample.label.ok_or_else(|| Error::invalid("label", format!("{} is unlabelled", sample.sample_id)))?;
        if label >= self.config.num_classes {
            return Err(Error::invalid(
                "label",
                format!("class {label} out of range for {} classes", self.config.num_classes),
            ));
        }
        let (trace, cache) = self.forward_cached(sample, opts)?;
        let p = crate::data::softmax(&trace.logits);
        let loss = crate::train::categorical_ce(&p, label);
        if let Some(grads) = grads {
            let mut dlogits = p;
            dlogits[label] -= 1.0;
            self.backward_dyad(sample, &cache, &dlogits, opts, grads);
        }
        Ok((loss, trace))
    }
}

/// Half squared error, so its gradient is the plain difference.
fn sq_err(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    0.5 * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
}

#[cfg(test)]
mod tests;
