//! Phase-1 gaze heatmap decoder.
//!
//! Each scene token, concatenated with the head mask coverage of its cell,
//! is scored by a linear saliency map. The 7×7 saliency grid is bilinearly
//! upsampled to 64×64 and added to a gaze cone: `g · unit(p − head)` with
//! `g` regressed from the face embedding. A sigmoid squashes the sum.

use crate::data::{HeadBox, HEATMAP_SIDE};
use crate::nn::{sigmoid, Grads, Linear, ParamStore};

use super::encoders::SCENE_GRID;

const CELLS: usize = HEATMAP_SIDE * HEATMAP_SIDE;

/// Bilinear upsampling weights for one axis: `(i0, i1, w1)` per output index.
fn axis_weights() -> Vec<(usize, usize, f64)> {
    let scale = SCENE_GRID as f64 / HEATMAP_SIDE as f64;
    (0..HEATMAP_SIDE)
        .map(|o| {
            let u = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (SCENE_GRID - 1) as f64);
            let i0 = u.floor() as usize;
            let i1 = (i0 + 1).min(SCENE_GRID - 1);
            (i0, i1, u - i0 as f64)
        })
        .collect()
}

/// Head mask coverage of each scene cell (the binary head mask area-pooled).
pub fn head_mask_cells(head: &HeadBox) -> Vec<f64> {
    let n = SCENE_GRID as f64;
    let mut out = Vec::with_capacity(SCENE_GRID * SCENE_GRID);
    for r in 0..SCENE_GRID {
        for c in 0..SCENE_GRID {
            out.push(head.coverage(c as f64 / n, r as f64 / n, (c + 1) as f64 / n, (r + 1) as f64 / n));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeatmapHead {
    pub saliency: Linear,
    pub gaze: Linear,
    /// Optional regression of the head centre from the scene global vector.
    pub aux_head: Option<Linear>,
    /// Optional regression of the unit gaze vector from the face embedding.
    pub aux_gaze: Option<Linear>,
    scene_dim: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct HeatmapCache {
    augmented: Vec<f64>,
    face: Vec<f64>,
    cone: Vec<[f64; 2]>,
    pub output: Vec<f64>,
}

/// Aux predictions: head centre and gaze vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxOutput {
    pub head_center: [f64; 2],
    pub gaze_vector: [f64; 2],
}

impl HeatmapHead {
    pub(crate) fn new(store: &mut ParamStore, scene_dim: usize, face_dim: usize, aux: bool) -> Self {
        HeatmapHead {
            saliency: Linear::new(store, "heatmap.saliency", scene_dim + 1, 1),
            gaze: Linear::new(store, "heatmap.gaze", face_dim, 2),
            aux_head: aux.then(|| Linear::new(store, "heatmap.aux_head", scene_dim, 2)),
            aux_gaze: aux.then(|| Linear::new(store, "heatmap.aux_gaze", face_dim, 2)),
            scene_dim,
        }
    }

    pub(crate) fn forward(
        &self,
        store: &ParamStore,
        tokens: &[f64],
        face: &[f64],
        head: &HeadBox,
    ) -> HeatmapCache {
        let d = self.scene_dim;
        let mask = head_mask_cells(head);
        let mut augmented = Vec::with_capacity(mask.len() * (d + 1));
        for (j, m) in mask.iter().enumerate() {
            augmented.extend_from_slice(&tokens[j * d..(j + 1) * d]);
            augmented.push(*m);
        }
        let sal = self.saliency.forward(store, &augmented);
        let g = self.gaze.forward(store, face);
        let hc = head.center();
        let w = axis_weights();
        let mut cone = Vec::with_capacity(CELLS);
        let mut output = Vec::with_capacity(CELLS);
        let side = (HEATMAP_SIDE - 1) as f64;
        for (r, &(r0, r1, fr)) in w.iter().enumerate() {
            for (c, &(c0, c1, fc)) in w.iter().enumerate() {
                let s = |i: usize, j: usize| sal[i * SCENE_GRID + j];
                let top = s(r0, c0) * (1.0 - fc) + s(r0, c1) * fc;
                let bottom = s(r1, c0) * (1.0 - fc) + s(r1, c1) * fc;
                let up = top * (1.0 - fr) + bottom * fr;
                let (dx, dy) = (c as f64 / side - hc[0], r as f64 / side - hc[1]);
                let norm = (dx * dx + dy * dy).sqrt();
                let u = if norm > 1e-9 { [dx / norm, dy / norm] } else { [0.0, 0.0] };
                cone.push(u);
                output.push(sigmoid(up + u[0] * g[0] + u[1] * g[1]));
            }
        }
        HeatmapCache {
            augmented,
            face: face.to_vec(),
            cone,
            output,
        }
    }

    /// Given `dL/d output`, returns `(dL/d tokens, dL/d face)`.
    pub(crate) fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &HeatmapCache,
        dout: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let w = axis_weights();
        let mut dsal = vec![0.0; SCENE_GRID * SCENE_GRID];
        let mut dg = [0.0; 2];
        for (r, &(r0, r1, fr)) in w.iter().enumerate() {
            for (c, &(c0, c1, fc)) in w.iter().enumerate() {
                let k = r * HEATMAP_SIDE + c;
                let y = cache.output[k];
                let dz = dout[k] * y * (1.0 - y);
                dg[0] += dz * cache.cone[k][0];
                dg[1] += dz * cache.cone[k][1];
                dsal[r0 * SCENE_GRID + c0] += dz * (1.0 - fr) * (1.0 - fc);
                dsal[r0 * SCENE_GRID + c1] += dz * (1.0 - fr) * fc;
                dsal[r1 * SCENE_GRID + c0] += dz * fr * (1.0 - fc);
                dsal[r1 * SCENE_GRID + c1] += dz * fr * fc;
            }
        }
        let daug = self.saliency.backward(store, grads, &cache.augmented, &dsal);
        let d = self.scene_dim;
        let mut dtokens = Vec::with_capacity(SCENE_GRID * SCENE_GRID * d);
        for row in daug.chunks(d + 1) {
            dtokens.extend_from_slice(&row[..d]);
        }
        let dface = self.gaze.backward(store, grads, &cache.face, &dg);
        (dtokens, dface)
    }
}

/// Mean squared error over all cells.
pub fn heatmap_mse(prediction: &[f64], target: &[f64]) -> f64 {
    prediction
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / prediction.len() as f64
}

pub fn heatmap_mse_grad(prediction: &[f64], target: &[f64]) -> Vec<f64> {
    let n = prediction.len() as f64;
    prediction.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsampling_weights_are_convex() {
        for (i0, i1, f) in axis_weights() {
            assert!(i0 <= i1 && i1 < SCENE_GRID && (0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn mask_coverage_sums_to_box_area() {
        let b = HeadBox::new(0.1, 0.2, 0.35, 0.5).unwrap();
        let total: f64 = head_mask_cells(&b).iter().sum::<f64>() / 49.0;
        assert!((total - b.width() * b.height()).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let t = crate::data::build_heatmap_target([0.3, 0.6]).unwrap();
        assert_eq!(heatmap_mse(t.as_slice(), t.as_slice()), 0.0);
    }
}
