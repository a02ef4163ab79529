use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Handle to a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
}

impl Init {
    /// Glorot-style uniform bound for a layer with the given fan-in/out.
    pub fn glorot(fan_in: usize, fan_out: usize) -> Self {
        Init::Uniform((6.0 / (fan_in + fan_out) as f64).sqrt())
    }

    /// He-style uniform bound, for layers followed by ReLU.
    pub fn he(fan_in: usize) -> Self {
        Init::Uniform((6.0 / fan_in as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named parameter tensors.
///
/// Values are always representable in `f32` (see [`round_to_f32`]) so that
/// `f32` checkpoints restore them bitwise. Initialisation depends only on the
/// store seed and the tensor name, never on creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    seed: u64,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, usize>,
}

fn name_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn round_to_f32(v: &mut [f64]) {
    for x in v {
        *x = *x as f32 as f64;
    }
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            seed,
            tensors: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let n: usize = shape.iter().product();
        let mut data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Const(c) => vec![c; n],
            Init::Uniform(bound) => {
                let mut rng = ChaCha8Rng::seed_from_u64(name_seed(self.seed, name));
                (0..n).map(|_| rng.gen_range(-bound..=bound)).collect()
            }
        };
        round_to_f32(&mut data);
        let id = self.tensors.len();
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].data
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.tensors[id.0].data
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Ids of tensors whose name starts with any of `prefixes`.
    pub fn ids_with_prefix(&self, prefixes: &[&str]) -> Vec<ParamId> {
        self.tensors
            .iter()
            .enumerate()
            .filter(|(_, t)| prefixes.iter().any(|p| t.name.starts_with(p)))
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    /// Weight-import hook: replaces one tensor by name after a shape check.
    pub fn import(&mut self, name: &str, shape: &[usize], data: &[f64]) -> Result<()> {
        let id = self.find(name).ok_or_else(|| Error::Tensor {
            name: name.to_string(),
            message: "no such parameter".into(),
        })?;
        let t = &mut self.tensors[id.0];
        if t.shape != shape || data.len() != t.data.len() {
            return Err(Error::Tensor {
                name: name.to_string(),
                message: format!("shape {:?} does not match expected {:?}", shape, t.shape),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Tensor {
                name: name.to_string(),
                message: "non-finite values".into(),
            });
        }
        t.data.copy_from_slice(data);
        round_to_f32(&mut t.data);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }
}

/// Gradient buffers parallel to a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads {
            data: store.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            for x in a {
                *x *= s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_ignores_creation_order() {
        let mut a = ParamStore::new(9);
        let x1 = a.add("x", &[3, 4], Init::Uniform(1.0));
        let y1 = a.add("y", &[5], Init::Uniform(1.0));
        let mut b = ParamStore::new(9);
        let y2 = b.add("y", &[5], Init::Uniform(1.0));
        let x2 = b.add("x", &[3, 4], Init::Uniform(1.0));
        assert_eq!(a.get(x1), b.get(x2));
        assert_eq!(a.get(y1), b.get(y2));
        assert_ne!(a.get(x1)[..4], a.get(y1)[..4]);
    }

    #[test]
    fn values_are_f32_representable() {
        let mut s = ParamStore::new(1);
        let id = s.add("w", &[100], Init::Uniform(0.3));
        assert!(s.get(id).iter().all(|&v| v as f32 as f64 == v));
    }

    #[test]
    fn import_checks_shape() {
        let mut s = ParamStore::new(1);
        s.add("w", &[2, 2], Init::Zeros);
        assert!(s.import("w", &[2, 2], &[1.0, 2.0, 3.0, 4.0]).is_ok());
        let err = s.import("w", &[4], &[1.0; 4]).unwrap_err();
        assert!(err.to_string().contains("\"w\""), "{err}");
        assert!(s.import("v", &[1], &[0.0]).is_err());
    }
}
