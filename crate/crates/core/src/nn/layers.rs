use super::params::{Grads, Init, ParamId, ParamStore};

/// Affine map `y = W x + b` applied to each row of a row-major matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize) -> Self {
        Self::with_init(store, name, input, output, Init::glorot(input, output))
    }

    pub fn with_init(store: &mut ParamStore, name: &str, input: usize, output: usize, init: Init) -> Self {
        Linear {
            w: store.add(&format!("{name}.weight"), &[output, input], init),
            b: store.add(&format!("{name}.bias"), &[output], Init::Zeros),
            input,
            output,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len() % self.input, 0);
        let w = store.get(self.w);
        let b = store.get(self.b);
        let rows = x.len() / self.input;
        let mut y = Vec::with_capacity(rows * self.output);
        for r in 0..rows {
            let xr = &x[r * self.input..(r + 1) * self.input];
            for o in 0..self.output {
                let wr = &w[o * self.input..(o + 1) * self.input];
                y.push(b[o] + dot(wr, xr));
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let rows = x.len() / self.input;
        debug_assert_eq!(dy.len(), rows * self.output);
        let w = store.get(self.w);
        let mut dx = vec![0.0; x.len()];
        {
            let gw = grads.get_mut(self.w);
            for r in 0..rows {
                let xr = &x[r * self.input..(r + 1) * self.input];
                for o in 0..self.output {
                    let g = dy[r * self.output + o];
                    if g == 0.0 {
                        continue;
                    }
                    let gwr = &mut gw[o * self.input..(o + 1) * self.input];
                    for (a, &xv) in gwr.iter_mut().zip(xr) {
                        *a += g * xv;
                    }
                }
            }
        }
        let gb = grads.get_mut(self.b);
        for r in 0..rows {
            let dxr = &mut dx[r * self.input..(r + 1) * self.input];
            for o in 0..self.output {
                let g = dy[r * self.output + o];
                gb[o] += g;
                if g == 0.0 {
                    continue;
                }
                let wr = &w[o * self.input..(o + 1) * self.input];
                for (a, &wv) in dxr.iter_mut().zip(wr) {
                    *a += g * wv;
                }
            }
        }
        dx
    }
}

/// 3×3 convolution with zero padding 1 over a CHW feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, stride: usize) -> Self {
        Conv2d {
            w: store.add(&format!("{name}.weight"), &[cout, cin, 3, 3], Init::he(cin * 9)),
            b: store.add(&format!("{name}.bias"), &[cout], Init::Zeros),
            cin,
            cout,
            stride,
        }
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        ((h - 1) / self.stride + 1, (w - 1) / self.stride + 1)
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cin * h * w);
        let (ho, wo) = self.output_size(h, w);
        let wt = store.get(self.w);
        let bias = store.get(self.b);
        let mut y = vec![0.0; self.cout * ho * wo];
        for co in 0..self.cout {
            let out = &mut y[co * ho * wo..(co + 1) * ho * wo];
            out.iter_mut().for_each(|v| *v = bias[co]);
            for ci in 0..self.cin {
                let plane = &x[ci * h * w..(ci + 1) * h * w];
                let k = &wt[(co * self.cin + ci) * 9..(co * self.cin + ci + 1) * 9];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ky in 0..3 {
                            let iy = (oy * self.stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                            for kx in 0..3 {
                                let ix = (ox * self.stride + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += k[ky * 3 + kx] * row[ix as usize];
                            }
                        }
                        out[oy * wo + ox] += acc;
                    }
                }
            }
        }
        y
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Grads,
        x: &[f64],
        h: usize,
        w: usize,
        dy: &[f64],
    ) -> Vec<f64> {
        let (ho, wo) = self.output_size(h, w);
        let wt = store.get(self.w);
        let mut dx = vec![0.0; x.len()];
        {
            let gb = grads.get_mut(self.b);
            for co in 0..self.cout {
                gb[co] += dy[co * ho * wo..(co + 1) * ho * wo].iter().sum::<f64>();
            }
        }
        let gw = grads.get_mut(self.w);
        for co in 0..self.cout {
            let g = &dy[co * ho * wo..(co + 1) * ho * wo];
            for ci in 0..self.cin {
                let plane = &x[ci * h * w..(ci + 1) * h * w];
                let dplane = &mut dx[ci * h * w..(ci + 1) * h * w];
                let base = (co * self.cin + ci) * 9;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let gv = g[oy * wo + ox];
                        if gv == 0.0 {
                            continue;
                        }
                        for ky in 0..3 {
                            let iy = (oy * self.stride + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..3 {
                                let ix = (ox * self.stride + kx) as isize - 1;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let p = iy as usize * w + ix as usize;
                                gw[base + ky * 3 + kx] += gv * plane[p];
                                dplane[p] += gv * wt[base + ky * 3 + kx];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Backward of ReLU given its *output*.
pub fn relu_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean over the rows of a `rows × cols` matrix.
pub fn mean_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let rows = x.len() / cols;
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(&x[r * cols..(r + 1) * cols]) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= rows as f64);
    out
}

pub fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_direct_sum() {
        let mut s = ParamStore::new(4);
        let conv = Conv2d::new(&mut s, "c", 2, 3, 2);
        let (h, w) = (5, 6);
        let x: Vec<f64> = (0..2 * h * w).map(|i| ((i * 7) % 11) as f64 / 11.0).collect();
        let y = conv.forward(&s, &x, h, w);
        let (ho, wo) = conv.output_size(h, w);
        assert_eq!((ho, wo), (3, 3));
        let wt = s.get(conv.w);
        for co in 0..3 {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = s.get(conv.b)[co];
                    for ci in 0..2 {
                        for ky in 0..3i64 {
                            for kx in 0..3i64 {
                                let iy = (oy * 2) as i64 + ky - 1;
                                let ix = (ox * 2) as i64 + kx - 1;
                                if (0..h as i64).contains(&iy) && (0..w as i64).contains(&ix) {
                                    acc += wt[((co * 2 + ci) * 3 + ky as usize) * 3 + kx as usize]
                                        * x[ci * h * w + iy as usize * w + ix as usize];
                                }
                            }
                        }
                    }
                    assert!((y[co * ho * wo + oy * wo + ox] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0).is_finite() && sigmoid(800.0) == 1.0);
    }
}
