//! Small feed-forward network over a flat parameter vector with hand-written
//! backpropagation. Hidden layers use `tanh`; the head is affine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::GaussianRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Packed state, each variable block normalized by its channel scales.
    Flat,
    /// `nx x ny x 3` image from `to_image`.
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// 3x3 convolution, stride 2, zero padding 1.
    Conv { channels: usize },
    Dense { width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layer {
    Conv { h: usize, w: usize, c_in: usize, c_out: usize, offset: usize },
    Dense { n_in: usize, n_out: usize, offset: usize, tanh: bool },
}

impl Layer {
    fn n_params(&self) -> usize {
        match *self {
            Layer::Conv { c_in, c_out, .. } => c_out * c_in * 9 + c_out,
            Layer::Dense { n_in, n_out, .. } => n_out * n_in + n_out,
        }
    }

    fn out_len(&self) -> usize {
        match *self {
            Layer::Conv { h, w, c_out, .. } => h.div_ceil(2) * w.div_ceil(2) * c_out,
            Layer::Dense { n_out, .. } => n_out,
        }
    }
}

/// Layer stack; parameters live outside in a flat `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    n_in: usize,
    n_params: usize,
}

impl Network {
    /// `image` is `(h, w)` for image input, `None` for flat input of length `n_in`.
    pub fn new(n_in: usize, image: Option<(usize, usize)>, hidden: &[LayerSpec], n_out: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut offset = 0;
        let mut shape = image.map(|(h, w)| (h, w, 3));
        if let Some((h, w, c)) = shape {
            if h * w * c != n_in {
                return Err(Error::Shape(format!("image {h}x{w}x{c} does not hold {n_in} inputs")));
            }
        }
        let mut width = n_in;
        for spec in hidden {
            let layer = match *spec {
                LayerSpec::Conv { channels } => {
                    let Some((h, w, c)) = shape else {
                        return Err(Error::Config("convolution layers need image input and must precede dense layers".into()));
                    };
                    if channels == 0 {
                        return Err(Error::Config("convolution with zero channels".into()));
                    }
                    shape = Some((h.div_ceil(2), w.div_ceil(2), channels));
                    Layer::Conv { h, w, c_in: c, c_out: channels, offset }
                }
                LayerSpec::Dense { width: n_out } => {
                    if n_out == 0 {
                        return Err(Error::Config("dense layer with zero width".into()));
                    }
                    shape = None;
                    Layer::Dense { n_in: width, n_out, offset, tanh: true }
                }
            };
            offset += layer.n_params();
            width = layer.out_len();
            layers.push(layer);
        }
        let head = Layer::Dense { n_in: width, n_out, offset, tanh: false };
        offset += head.n_params();
        layers.push(head);
        Ok(Self { layers, n_in, n_params: offset })
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_len)
    }

    /// Scaled-normal weights (`1/sqrt(fan_in)`), zero biases.
    pub fn init(&self, rng: &mut GaussianRng) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_params];
        for layer in &self.layers {
            let (offset, n_w, fan_in) = match *layer {
                Layer::Conv { c_in, c_out, offset, .. } => (offset, c_out * c_in * 9, c_in * 9),
                Layer::Dense { n_in, n_out, offset, .. } => (offset, n_out * n_in, n_in),
            };
            let s = 1.0 / (fan_in as f64).sqrt();
            for t in &mut theta[offset..offset + n_w] {
                *t = s * rng.standard();
            }
        }
        theta
    }

    /// Returns every layer's output; the last entry is the network output.
    pub fn forward(&self, theta: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(theta.len(), self.n_params);
        debug_assert_eq!(input.len(), self.n_in);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = acts.last().map_or(input, |a| a.as_slice());
            let y = match *layer {
                Layer::Conv { h, w, c_in, c_out, offset } => conv_forward(theta, offset, x, h, w, c_in, c_out),
                Layer::Dense { n_in, n_out, offset, tanh } => {
                    let (wts, b) = theta[offset..offset + n_out * n_in + n_out].split_at(n_out * n_in);
                    let mut y = b.to_vec();
                    for (o, yo) in y.iter_mut().enumerate() {
                        *yo += wts[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    }
                    if tanh {
                        y.iter_mut().for_each(|v| *v = v.tanh());
                    }
                    y
                }
            };
            acts.push(y);
        }
        acts
    }

    /// Accumulates `d(output . g_out)/d theta` into `grad`.
    pub fn backward(&self, theta: &[f64], input: &[f64], acts: &[Vec<f64>], g_out: &[f64], grad: &mut [f64]) {
        let mut g = g_out.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let x = if li == 0 { input } else { acts[li - 1].as_slice() };
            let y = &acts[li];
            let want_input_grad = li > 0;
            g = match *layer {
                Layer::Conv { h, w, c_in, c_out, offset } => {
                    for (gi, yi) in g.iter_mut().zip(y) {
                        *gi *= 1.0 - yi * yi;
                    }
                    conv_backward(theta, offset, x, h, w, c_in, c_out, &g, grad, want_input_grad)
                }
                Layer::Dense { n_in, n_out, offset, tanh } => {
                    if tanh {
                        for (gi, yi) in g.iter_mut().zip(y) {
                            *gi *= 1.0 - yi * yi;
                        }
                    }
                    let (gw, gb) = grad[offset..offset + n_out * n_in + n_out].split_at_mut(n_out * n_in);
                    for (o, &go) in g.iter().enumerate() {
                        gb[o] += go;
                        if go != 0.0 {
                            for (gwi, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                                *gwi += go * xi;
                            }
                        }
                    }
                    if want_input_grad {
                        let wts = &theta[offset..offset + n_out * n_in];
                        let mut gx = vec![0.0; n_in];
                        for (o, &go) in g.iter().enumerate() {
                            if go != 0.0 {
                                for (gxi, wi) in gx.iter_mut().zip(&wts[o * n_in..(o + 1) * n_in]) {
                                    *gxi += go * wi;
                                }
                            }
                        }
                        gx
                    } else {
                        Vec::new()
                    }
                }
            };
        }
    }
}

/// Weight index `((co * c_in + ci) * 3 + di) * 3 + dj`, biases after all weights.
fn conv_forward(theta: &[f64], offset: usize, x: &[f64], h: usize, w: usize, c_in: usize, c_out: usize) -> Vec<f64> {
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let wts = &theta[offset..offset + c_out * c_in * 9];
    let b = &theta[offset + c_out * c_in * 9..offset + c_out * c_in * 9 + c_out];
    let mut y = vec![0.0; ho * wo * c_out];
    for oi in 0..ho {
        for oj in 0..wo {
            let out = &mut y[(oi * wo + oj) * c_out..(oi * wo + oj + 1) * c_out];
            out.copy_from_slice(b);
            for di in 0..3 {
                let Some(i) = (2 * oi + di).checked_sub(1).filter(|&i| i < h) else { continue };
                for dj in 0..3 {
                    let Some(j) = (2 * oj + dj).checked_sub(1).filter(|&j| j < w) else { continue };
                    let px = &x[(i * w + j) * c_in..(i * w + j + 1) * c_in];
                    for (co, o) in out.iter_mut().enumerate() {
                        for (ci, xv) in px.iter().enumerate() {
                            *o += wts[((co * c_in + ci) * 3 + di) * 3 + dj] * xv;
                        }
                    }
                }
            }
        }
    }
    y.iter_mut().for_each(|v| *v = v.tanh());
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    theta: &[f64],
    offset: usize,
    x: &[f64],
    h: usize,
    w: usize,
    c_in: usize,
    c_out: usize,
    g: &[f64],
    grad: &mut [f64],
    want_input_grad: bool,
) -> Vec<f64> {
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let n_w = c_out * c_in * 9;
    let wts = &theta[offset..offset + n_w];
    let (gw, gb) = grad[offset..offset + n_w + c_out].split_at_mut(n_w);
    let mut gx = if want_input_grad { vec![0.0; x.len()] } else { Vec::new() };
    for oi in 0..ho {
        for oj in 0..wo {
            let go = &g[(oi * wo + oj) * c_out..(oi * wo + oj + 1) * c_out];
            for (b, v) in gb.iter_mut().zip(go) {
                *b += v;
            }
            for di in 0..3 {
                let Some(i) = (2 * oi + di).checked_sub(1).filter(|&i| i < h) else { continue };
                for dj in 0..3 {
                    let Some(j) = (2 * oj + dj).checked_sub(1).filter(|&j| j < w) else { continue };
                    let base = (i * w + j) * c_in;
                    for (co, &gov) in go.iter().enumerate() {
                        for ci in 0..c_in {
                            let k = ((co * c_in + ci) * 3 + di) * 3 + dj;
                            gw[k] += gov * x[base + ci];
                            if want_input_grad {
                                gx[base + ci] += gov * wts[k];
                            }
                        }
                    }
                }
            }
        }
    }
    gx
}
