//! Face fusion, scene/context cross-attention, self-attention merge and the
//! classifier head.

use crate::data::softmax;
use crate::error::{Error, Result};
use crate::nn::{add_into, mean_rows, relu, relu_backward, AttentionCache, Grads, Init, Linear, MultiHeadAttention, ParamId, ParamStore};

use super::config::{CrossDirection, ModelConfig};
use super::encoders::SceneFeatures;
use super::text::TextFeatures;

/// Learnable parameters of the fusion stack (values live in the store).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionState {
    /// Logits of `(α_P, α_A)`.
    pub alpha_logits: ParamId,
    pub cross: MultiHeadAttention,
    /// Projection of the scene global vector added to the pooled output.
    pub cross_residual: Linear,
    pub face_proj: Linear,
    pub merge: MultiHeadAttention,
    pub hidden: Linear,
    pub output: Linear,
    direction: CrossDirection,
}

#[derive(Debug, Clone)]
pub(crate) struct CrossCache {
    pub(crate) attn: AttentionCache,
    global: Vec<f64>,
    /// Valid query rows used for pooling.
    query_mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub(crate) struct MergeCache {
    attn: AttentionCache,
    f_merged: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ClassifierCache {
    joint: Vec<f64>,
    hidden: Vec<f64>,
}

impl FusionState {
    pub(crate) fn new(store: &mut ParamStore, config: &ModelConfig) -> Self {
        let e = &config.encoder;
        let (qd, kd) = match config.cross_direction {
            CrossDirection::SceneQueriesText => (e.scene_dim, e.text_dim),
            CrossDirection::TextQueriesScene => (e.text_dim, e.scene_dim),
        };
        let hidden = config.classifier_hidden;
        FusionState {
            alpha_logits: store.add("fusion.alpha_logits", &[2], Init::Zeros),
            cross: MultiHeadAttention::new(store, "fusion.cross", qd, kd, e.attention_dim, e.attention_heads),
            cross_residual: Linear::new(store, "fusion.cross_residual", e.scene_dim, e.attention_dim),
            face_proj: Linear::new(store, "fusion.face_proj", e.face_dim, e.attention_dim),
            merge: MultiHeadAttention::new(
                store,
                "fusion.merge",
                e.attention_dim,
                e.attention_dim,
                e.attention_dim,
                e.attention_heads,
            ),
            hidden: Linear::with_init(store, "fusion.classifier.hidden", e.attention_dim, hidden, Init::he(e.attention_dim)),
            output: Linear::new(store, "fusion.classifier.output", hidden, config.num_classes),
            direction: config.cross_direction,
        }
    }

    /// `(α_P, α_A)`.
    pub fn alpha(&self, store: &ParamStore, fixed_equal: bool) -> [f64; 2] {
        if fixed_equal {
            [0.5, 0.5]
        } else {
            let a = softmax(store.get(self.alpha_logits));
            [a[0], a[1]]
        }
    }

    /// `F_merged = α_P·f_P + α_A·f_A`.
    pub fn fuse_faces(&self, store: &ParamStore, f_p: &[f64], f_a: &[f64], fixed_equal: bool) -> Result<Vec<f64>> {
        if f_p.len() != f_a.len() {
            return Err(Error::Shape(format!(
                "face embeddings of length {} and {}",
                f_p.len(),
                f_a.len()
            )));
        }
        let [ap, aa] = self.alpha(store, fixed_equal);
        Ok(f_p.iter().zip(f_a).map(|(p, a)| ap * p + aa * a).collect())
    }

    /// Returns `(df_P, df_A)` and accumulates the α-logit gradient.
    pub(crate) fn fuse_backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        f_p: &[f64],
        f_a: &[f64],
        d_merged: &[f64],
        fixed_equal: bool,
    ) -> (Vec<f64>, Vec<f64>) {
        let [ap, aa] = self.alpha(store, fixed_equal);
        if !fixed_equal {
            let dap: f64 = d_merged.iter().zip(f_p).map(|(g, f)| g * f).sum();
            let daa: f64 = d_merged.iter().zip(f_a).map(|(g, f)| g * f).sum();
            let mean = ap * dap + aa * daa;
            let gl = grads.get_mut(self.alpha_logits);
            gl[0] += ap * (dap - mean);
            gl[1] += aa * (daa - mean);
        }
        (
            d_merged.iter().map(|g| ap * g).collect(),
            d_merged.iter().map(|g| aa * g).collect(),
        )
    }

    /// `S_fused`: attention between scene and text tokens, mean-pooled over
    /// the query positions, plus a projection of the scene global vector.
    pub(crate) fn cross_attend(
        &self,
        store: &ParamStore,
        scene: &SceneFeatures,
        text: &TextFeatures,
    ) -> Result<(Vec<f64>, CrossCache)> {
        if !text.mask.iter().any(|&m| m) {
            return Err(Error::invalid("mask", "text mask has no valid token"));
        }
        let (out, attn, query_mask) = match self.direction {
            CrossDirection::SceneQueriesText => {
                let (o, a) = self.cross.forward(store, &scene.tokens, &text.tokens, Some(&text.mask))?;
                let n = a.tq;
                (o, a, vec![true; n])
            }
            CrossDirection::TextQueriesScene => {
                let (o, a) = self.cross.forward(store, &text.tokens, &scene.tokens, None)?;
                (o, a, text.mask.clone())
            }
        };
        let d = self.cross.dim;
        let valid = query_mask.iter().filter(|&&m| m).count() as f64;
        let mut pooled = vec![0.0; d];
        for (i, _) in query_mask.iter().enumerate().filter(|(_, &m)| m) {
            add_into(&mut pooled, &out[i * d..(i + 1) * d]);
        }
        let residual = self.cross_residual.forward(store, &scene.global);
        let fused: Vec<f64> = pooled.iter().zip(&residual).map(|(p, r)| p / valid + r).collect();
        Ok((
            fused,
            CrossCache {
                attn,
                global: scene.global.clone(),
                query_mask,
            },
        ))
    }

    /// Returns `(dL/d scene tokens, dL/d scene global, dL/d text tokens)`.
    pub(crate) fn cross_backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &CrossCache,
        dfused: &[f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.cross.dim;
        let valid = cache.query_mask.iter().filter(|&&m| m).count() as f64;
        let mut dout = vec![0.0; cache.attn.tq * d];
        for (i, &m) in cache.query_mask.iter().enumerate() {
            if m {
                for k in 0..d {
                    dout[i * d + k] = dfused[k] / valid;
                }
            }
        }
        let dglobal = self.cross_residual.backward(store, grads, &cache.global, dfused);
        let (dq, dkv) = self.cross.backward(store, grads, &cache.attn, &dout);
        match self.direction {
            CrossDirection::SceneQueriesText => (dq, dglobal, dkv),
            CrossDirection::TextQueriesScene => (dkv, dglobal, dq),
        }
    }

    /// Self-attention over `[S_fused, proj(F_merged)]` with a residual
    /// connection; returns the mean of the two outputs.
    pub(crate) fn self_attend_merge(
        &self,
        store: &ParamStore,
        f_merged: &[f64],
        s_fused: &[f64],
    ) -> Result<(Vec<f64>, [f64; 2], MergeCache)> {
        let f_proj = self.face_proj.forward(store, f_merged);
        let mut seq = s_fused.to_vec();
        seq.extend_from_slice(&f_proj);
        let (attn_out, attn) = self.merge.forward(store, &seq, &seq, None)?;
        let out: Vec<f64> = seq.iter().zip(&attn_out).map(|(x, a)| x + a).collect();
        let joint = mean_rows(&out, self.merge.dim);
        let m = attn.mean_attention();
        Ok((
            joint,
            [m[0], m[1]],
            MergeCache {
                attn,
                f_merged: f_merged.to_vec(),
            },
        ))
    }

    /// Returns `(dL/d F_merged, dL/d S_fused)`.
    pub(crate) fn merge_backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &MergeCache,
        djoint: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let d = self.merge.dim;
        let dout: Vec<f64> = djoint.iter().chain(djoint).map(|g| 0.5 * g).collect();
        let (dq, dkv) = self.merge.backward(store, grads, &cache.attn, &dout);
        let dseq: Vec<f64> = (0..2 * d).map(|i| dout[i] + dq[i] + dkv[i]).collect();
        let df_merged = self.face_proj.backward(store, grads, &cache.f_merged, &dseq[d..]);
        (df_merged, dseq[..d].to_vec())
    }

    pub(crate) fn classify(&self, store: &ParamStore, joint: &[f64]) -> (Vec<f64>, ClassifierCache) {
        let hidden = relu(&self.hidden.forward(store, joint));
        let logits = self.output.forward(store, &hidden);
        (
            logits,
            ClassifierCache {
                joint: joint.to_vec(),
                hidden,
            },
        )
    }

    pub(crate) fn classify_backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &ClassifierCache,
        dlogits: &[f64],
    ) -> Vec<f64> {
        let dh = self.output.backward(store, grads, &cache.hidden, dlogits);
        let dz = relu_backward(&cache.hidden, &dh);
        self.hidden.backward(store, grads, &cache.joint, &dz)
    }
}
