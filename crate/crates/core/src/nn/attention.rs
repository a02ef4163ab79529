use super::layers::Linear;
use super::params::{Grads, ParamStore};
use crate::error::{Error, Result};

/// Multi-head scaled dot-product attention with input and output projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCache {
    pub q_in: Vec<f64>,
    pub kv_in: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    /// `heads × tq × tk`, rows sum to 1 over unmasked keys.
    pub probs: Vec<f64>,
    pub concat: Vec<f64>,
    pub tq: usize,
    pub tk: usize,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, query_dim: usize, key_dim: usize, dim: usize, heads: usize) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.query"), query_dim, dim),
            k: Linear::new(store, &format!("{name}.key"), key_dim, dim),
            v: Linear::new(store, &format!("{name}.value"), key_dim, dim),
            o: Linear::new(store, &format!("{name}.output"), dim, dim),
            heads,
            dim,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Attends from `q_in` (`tq × query_dim`) to `kv_in` (`tk × key_dim`).
    /// Keys with `mask[j] == false` get zero weight.
    pub fn forward(
        &self,
        store: &ParamStore,
        q_in: &[f64],
        kv_in: &[f64],
        mask: Option<&[bool]>,
    ) -> Result<(Vec<f64>, AttentionCache)> {
        let tq = q_in.len() / self.q.input;
        let tk = kv_in.len() / self.k.input;
        if tq == 0 || tk == 0 || q_in.len() % self.q.input != 0 || kv_in.len() % self.k.input != 0 {
            return Err(Error::Shape(format!(
                "attention inputs of length {} and {} do not match widths {} and {}",
                q_in.len(),
                kv_in.len(),
                self.q.input,
                self.k.input
            )));
        }
        if let Some(m) = mask {
            if m.len() != tk {
                return Err(Error::Shape(format!("mask length {} for {tk} keys", m.len())));
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::invalid("mask", "at least one key must be unmasked"));
            }
        }
        let q = self.q.forward(store, q_in);
        let k = self.k.forward(store, kv_in);
        let v = self.v.forward(store, kv_in);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; self.heads * tq * tk];
        let mut concat = vec![0.0; tq * self.dim];
        for h in 0..self.heads {
            let off = h * dh;
            for i in 0..tq {
                let qi = &q[i * self.dim + off..i * self.dim + off + dh];
                let row = &mut probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
                let mut max = f64::NEG_INFINITY;
                for j in 0..tk {
                    if mask.map_or(true, |m| m[j]) {
                        let kj = &k[j * self.dim + off..j * self.dim + off + dh];
                        row[j] = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                        max = max.max(row[j]);
                    } else {
                        row[j] = f64::NEG_INFINITY;
                    }
                }
                let mut sum = 0.0;
                for p in row.iter_mut() {
                    *p = if *p == f64::NEG_INFINITY { 0.0 } else { (*p - max).exp() };
                    sum += *p;
                }
                for p in row.iter_mut() {
                    *p /= sum;
                }
                let ctx = &mut concat[i * self.dim + off..i * self.dim + off + dh];
                for j in 0..tk {
                    if row[j] == 0.0 {
                        continue;
                    }
                    let vj = &v[j * self.dim + off..j * self.dim + off + dh];
                    for (c, &vv) in ctx.iter_mut().zip(vj) {
                        *c += row[j] * vv;
                    }
                }
            }
        }
        let out = self.o.forward(store, &concat);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("attention output".into()));
        }
        Ok((
            out,
            AttentionCache {
                q_in: q_in.to_vec(),
                kv_in: kv_in.to_vec(),
                q,
                k,
                v,
                probs,
                concat,
                tq,
                tk,
            },
        ))
    }

    /// Returns `(dL/dq_in, dL/dkv_in)`.
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        cache: &AttentionCache,
        dout: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let (tq, tk, d) = (cache.tq, cache.tk, self.dim);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let dconcat = self.o.backward(store, grads, &cache.concat, dout);
        let mut dq = vec![0.0; tq * d];
        let mut dk = vec![0.0; tk * d];
        let mut dv = vec![0.0; tk * d];
        let mut dp = vec![0.0; tk];
        for h in 0..self.heads {
            let off = h * dh;
            for i in 0..tq {
                let p = &cache.probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
                let dctx = &dconcat[i * d + off..i * d + off + dh];
                let mut weighted = 0.0;
                for j in 0..tk {
                    let vj = &cache.v[j * d + off..j * d + off + dh];
                    dp[j] = dctx.iter().zip(vj).map(|(a, b)| a * b).sum();
                    weighted += p[j] * dp[j];
                    for (g, &c) in dv[j * d + off..j * d + off + dh].iter_mut().zip(dctx) {
                        *g += p[j] * c;
                    }
                }
                let qi = &cache.q[i * d + off..i * d + off + dh];
                for j in 0..tk {
                    let ds = p[j] * (dp[j] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for t in 0..dh {
                        dq[i * d + off + t] += ds * cache.k[j * d + off + t];
                        dk[j * d + off + t] += ds * qi[t];
                    }
                }
            }
        }
        let dq_in = self.q.backward(store, grads, &cache.q_in, &dq);
        let mut dkv_in = self.k.backward(store, grads, &cache.kv_in, &dk);
        let dv_in = self.v.backward(store, grads, &cache.kv_in, &dv);
        for (a, b) in dkv_in.iter_mut().zip(&dv_in) {
            *a += b;
        }
        (dq_in, dkv_in)
    }
}

impl AttentionCache {
    /// Attention mass per key, averaged over heads and queries.
    pub fn mean_attention(&self) -> Vec<f64> {
        let rows = self.probs.len() / self.tk;
        let mut out = vec![0.0; self.tk];
        for r in 0..rows {
            for (o, p) in out.iter_mut().zip(&self.probs[r * self.tk..(r + 1) * self.tk]) {
                *o += p;
            }
        }
        out.iter_mut().for_each(|v| *v /= rows as f64);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_key_gets_all_mass() {
        let mut s = ParamStore::new(3);
        let mha = MultiHeadAttention::new(&mut s, "a", 4, 3, 8, 2);
        let q_in: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let (_, cache) = mha.forward(&s, &q_in, &[0.3, -0.2, 0.5], None).unwrap();
        assert!(cache.probs.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn masked_keys_get_zero_weight_and_rows_sum_to_one() {
        let mut s = ParamStore::new(5);
        let mha = MultiHeadAttention::new(&mut s, "a", 2, 2, 4, 2);
        let kv: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let mask = [true, false, true, false];
        let (_, cache) = mha.forward(&s, &[0.5, 1.0, -1.0, 0.2], &kv, Some(&mask)).unwrap();
        for row in cache.probs.chunks(4) {
            assert_eq!(row[1], 0.0);
            assert_eq!(row[3], 0.0);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(mha.forward(&s, &[0.5, 1.0], &kv, Some(&[false; 4])).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut s = ParamStore::new(11);
        let mha = MultiHeadAttention::new(&mut s, "a", 3, 2, 4, 2);
        // Non-zero biases so their gradients are exercised too.
        for id in [mha.q.b, mha.k.b, mha.v.b, mha.o.b] {
            let n = s.get(id).len();
            let vals: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64 + 1.0)).collect();
            s.get_mut(id).copy_from_slice(&vals);
        }
        let q_in = vec![0.2, -0.4, 0.9, 1.1, 0.3, -0.7];
        let kv_in = vec![0.5, -0.1, -0.8, 0.6, 0.3, 0.3];
        let mask = [true, true, false];
        let weights: Vec<f64> = (0..8).map(|i| ((i * 5 % 7) as f64 - 3.0) / 3.0).collect();
        let loss = |s: &ParamStore, q: &[f64], kv: &[f64]| -> f64 {
            let (out, _) = mha.forward(s, q, kv, Some(&mask)).unwrap();
            out.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = mha.forward(&s, &q_in, &kv_in, Some(&mask)).unwrap();
        let mut g = Grads::zeros_like(&s);
        let (dq, dkv) = mha.backward(&s, &mut g, &cache, &weights);
        let eps = 1e-6;
        for i in 0..q_in.len() {
            let (mut a, mut b) = (q_in.clone(), q_in.clone());
            a[i] += eps;
            b[i] -= eps;
            let fd = (loss(&s, &a, &kv_in) - loss(&s, &b, &kv_in)) / (2.0 * eps);
            assert!((fd - dq[i]).abs() < 1e-7, "dq[{i}] {fd} vs {}", dq[i]);
        }
        for i in 0..kv_in.len() {
            let (mut a, mut b) = (kv_in.clone(), kv_in.clone());
            a[i] += eps;
            b[i] -= eps;
            let fd = (loss(&s, &q_in, &a) - loss(&s, &q_in, &b)) / (2.0 * eps);
            assert!((fd - dkv[i]).abs() < 1e-7, "dkv[{i}] {fd} vs {}", dkv[i]);
        }
        for id in s.ids().collect::<Vec<_>>() {
            for i in 0..s.get(id).len() {
                let orig = s.get(id)[i];
                s.get_mut(id)[i] = orig + eps;
                let lp = loss(&s, &q_in, &kv_in);
                s.get_mut(id)[i] = orig - eps;
                let lm = loss(&s, &q_in, &kv_in);
                s.get_mut(id)[i] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                assert!((fd - g.get(id)[i]).abs() < 1e-7, "{} [{i}]", s.tensor(id).name);
            }
        }
    }
}
