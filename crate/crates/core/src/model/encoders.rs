//! Small residual conv stacks standing in for the face and scene backbones.
//!
//! Both take a 224×224 raster. A fixed (non-learned) area pool first shrinks
//! it, then a stride-2 stem, a stride-2 stage and a residual stage follow.

use crate::data::{crop_face, HeadBox, Raster, FACE_SIZE};
use crate::error::{Error, Result};
use crate::nn::{relu, relu_backward, Conv2d, Grads, Init, Linear, ParamId, ParamStore};

/// Area-pool factor applied to the scene image (224 → 28).
pub const SCENE_POOL: usize = 8;
/// Area-pool factor applied to face crops (224 → 14).
pub const FACE_POOL: usize = 16;
/// Side of the scene token grid.
pub const SCENE_GRID: usize = 7;

const SCENE_SIDE: usize = FACE_SIZE / SCENE_POOL;
const FACE_SIDE: usize = FACE_SIZE / FACE_POOL;

fn check_input(r: &Raster) -> Result<()> {
    if r.width() != FACE_SIZE || r.height() != FACE_SIZE {
        return Err(Error::Shape(format!(
            "encoder input must be {FACE_SIZE}x{FACE_SIZE}, got {}x{}",
            r.width(),
            r.height()
        )));
    }
    if r.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("raster", "pixel values must lie in [0, 1]"));
    }
    Ok(())
}

/// Pooled planar scene input from a full image of any size.
pub fn prepare_scene(image: &Raster) -> Result<Vec<f64>> {
    let full = if image.width() == FACE_SIZE && image.height() == FACE_SIZE {
        image.clone()
    } else {
        image.resample(0.0, 0.0, image.width() as f64, image.height() as f64, FACE_SIZE, FACE_SIZE)
    };
    check_input(&full)?;
    full.area_pool_planar(SCENE_POOL)
}

/// Pooled planar face input cropped from the full image.
pub fn prepare_face(image: &Raster, head: &HeadBox) -> Result<Vec<f64>> {
    let crop = crop_face(image, head)?;
    check_input(&crop)?;
    crop.area_pool_planar(FACE_POOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvStack {
    pub stem: Conv2d,
    pub down: Conv2d,
    pub res: Conv2d,
    side: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvCache {
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    r: Vec<f64>,
}

impl ConvStack {
    fn new(store: &mut ParamStore, name: &str, channels: [usize; 2], side: usize) -> Self {
        ConvStack {
            stem: Conv2d::new(store, &format!("{name}.stem"), 3, channels[0], 2),
            down: Conv2d::new(store, &format!("{name}.stage1"), channels[0], channels[1], 2),
            res: Conv2d::new(store, &format!("{name}.stage2"), channels[1], channels[1], 1),
            side,
        }
    }

    fn sides(&self) -> [usize; 3] {
        let s1 = self.stem.output_size(self.side, self.side).0;
        let s2 = self.down.output_size(s1, s1).0;
        [self.side, s1, s2]
    }

    pub fn out_side(&self) -> usize {
        self.sides()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.res.cout
    }

    /// Returns the final `C × s × s` feature map.
    fn forward(&self, store: &ParamStore, x: &[f64]) -> (Vec<f64>, ConvCache) {
        let [s0, s1, s2] = self.sides();
        let a1 = relu(&self.stem.forward(store, x, s0, s0));
        let a2 = relu(&self.down.forward(store, &a1, s1, s1));
        let r = relu(&self.res.forward(store, &a2, s2, s2));
        let out: Vec<f64> = a2.iter().zip(&r).map(|(a, b)| a + b).collect();
        (
            out,
            ConvCache {
                x: x.to_vec(),
                a1,
                a2,
                r,
            },
        )
    }

    fn backward(&self, store: &ParamStore, grads: &mut Grads, c: &ConvCache, dout: &[f64]) {
        let [s0, s1, s2] = self.sides();
        let dr = relu_backward(&c.r, dout);
        let mut da2 = self.res.backward(store, grads, &c.a2, s2, s2, &dr);
        for (a, b) in da2.iter_mut().zip(dout) {
            *a += b;
        }
        let dz2 = relu_backward(&c.a2, &da2);
        let da1 = self.down.backward(store, grads, &c.a1, s1, s1, &dz2);
        let dz1 = relu_backward(&c.a1, &da1);
        self.stem.backward(store, grads, &c.x, s0, s0, &dz1);
    }
}

/// Face backbone: conv stack, flattened, then a linear map to `d_f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceEncoder {
    pub(crate) convs: ConvStack,
    pub proj: Linear,
}

#[derive(Debug, Clone)]
pub(crate) struct FaceCache {
    conv: ConvCache,
    flat: Vec<f64>,
}

impl FaceEncoder {
    pub(crate) fn new(store: &mut ParamStore, channels: [usize; 2], dim: usize) -> Self {
        let convs = ConvStack::new(store, "face", channels, FACE_SIDE);
        let flat = convs.out_channels() * convs.out_side().pow(2);
        FaceEncoder {
            convs,
            proj: Linear::with_init(store, "face.proj", flat, dim, Init::glorot(flat, dim)),
        }
    }

    pub fn stem(&self) -> Conv2d {
        self.convs.stem
    }

    pub(crate) fn forward(&self, store: &ParamStore, pooled: &[f64]) -> Result<(Vec<f64>, FaceCache)> {
        if pooled.len() != 3 * FACE_SIDE * FACE_SIDE {
            return Err(Error::Shape(format!("face input has {} values", pooled.len())));
        }
        let (flat, conv) = self.convs.forward(store, pooled);
        let f = self.proj.forward(store, &flat);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("face embedding".into()));
        }
        Ok((f, FaceCache { conv, flat }))
    }

    pub(crate) fn backward(&self, store: &ParamStore, grads: &mut Grads, c: &FaceCache, df: &[f64]) {
        let dflat = self.proj.backward(store, grads, &c.flat, df);
        self.convs.backward(store, grads, &c.conv, &dflat);
    }
}

/// Scene tokens (row-major over the 7×7 grid) and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFeatures {
    pub global: Vec<f64>,
    pub tokens: Vec<f64>,
}

impl SceneFeatures {
    pub fn zeros(tokens: usize, dim: usize) -> Self {
        SceneFeatures {
            global: vec![0.0; dim],
            tokens: vec![0.0; tokens * dim],
        }
    }
}

/// Scene backbone: conv stack, per-position linear map plus learned position
/// embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneEncoder {
    pub(crate) convs: ConvStack,
    pub token: Linear,
    pub position: ParamId,
    dim: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SceneCache {
    conv: ConvCache,
    /// Feature map transposed to `positions × channels`.
    cells: Vec<f64>,
}

impl SceneEncoder {
    pub(crate) fn new(store: &mut ParamStore, channels: [usize; 2], dim: usize) -> Self {
        let convs = ConvStack::new(store, "scene", channels, SCENE_SIDE);
        debug_assert_eq!(convs.out_side(), SCENE_GRID);
        SceneEncoder {
            convs,
            token: Linear::new(store, "scene.token", channels[1], dim),
            position: store.add("scene.position", &[SCENE_GRID * SCENE_GRID, dim], Init::Uniform(0.1)),
            dim,
        }
    }

    pub fn stem(&self) -> Conv2d {
        self.convs.stem
    }

    pub(crate) fn forward(&self, store: &ParamStore, pooled: &[f64]) -> Result<(SceneFeatures, SceneCache)> {
        if pooled.len() != 3 * SCENE_SIDE * SCENE_SIDE {
            return Err(Error::Shape(format!("scene input has {} values", pooled.len())));
        }
        let (map, conv) = self.convs.forward(store, pooled);
        let c = self.convs.out_channels();
        let n = SCENE_GRID * SCENE_GRID;
        let mut cells = vec![0.0; n * c];
        for ch in 0..c {
            for p in 0..n {
                cells[p * c + ch] = map[ch * n + p];
            }
        }
        let mut tokens = self.token.forward(store, &cells);
        for (t, p) in tokens.iter_mut().zip(store.get(self.position)) {
            *t += p;
        }
        if tokens.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scene tokens".into()));
        }
        let global = crate::nn::mean_rows(&tokens, self.dim);
        Ok((SceneFeatures { global, tokens }, SceneCache { conv, cells }))
    }

    /// `dtokens` must already include the contribution through `global`.
    pub(crate) fn backward(&self, store: &ParamStore, grads: &mut Grads, c: &SceneCache, dtokens: &[f64]) {
        crate::nn::add_into(grads.get_mut(self.position), dtokens);
        let dcells = self.token.backward(store, grads, &c.cells, dtokens);
        let ch = self.convs.out_channels();
        let n = SCENE_GRID * SCENE_GRID;
        let mut dmap = vec![0.0; n * ch];
        for k in 0..ch {
            for p in 0..n {
                dmap[k * n + p] = dcells[p * ch + k];
            }
        }
        self.convs.backward(store, grads, &c.conv, &dmap);
    }
}
