use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected noise predictor: `[x, emb(t)] -> hidden... -> eps`, SiLU
/// between layers and a linear output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub data_dim: usize,
    pub time_embed_dim: usize,
    pub hidden: Vec<usize>,
}

impl MlpArch {
    pub fn new(data_dim: usize, time_embed_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        let arch = Self {
            data_dim,
            time_embed_dim,
            hidden,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// 3 x 128 with a 64-dim embedding.
    pub fn points(data_dim: usize) -> Self {
        Self {
            data_dim,
            time_embed_dim: 64,
            hidden: vec![128; 3],
        }
    }

    /// 3 x 512 with a 64-dim embedding, for flattened patches.
    pub fn patches(data_dim: usize) -> Self {
        Self {
            data_dim,
            time_embed_dim: 64,
            hidden: vec![512; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data_dim == 0
            || self.time_embed_dim == 0
            || !self.time_embed_dim.is_multiple_of(2)
            || self.hidden.contains(&0)
        {
            return Err(Error::config(format!("invalid architecture {self:?}")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + self.time_embed_dim
    }

    /// `(fan_in, fan_out)` of every dense layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim();
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.data_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Fan-in scaled uniform init, rounded to f32.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        for (fan_in, fan_out) in self.layer_dims() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                let v: f64 = rng.random_range(-bound..bound);
                params.push(v as f32 as f64);
            }
        }
        params
    }
}

/// Sinusoidal embedding `[sin(t w_k), cos(t w_k)]` with
/// `w_k = 10000^(-k / (dim / 2))`. Continuous in `t`.
pub fn time_embedding(t: f64, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        let (s, c) = (t * freq).sin_cos();
        out[k] = s;
        out[half + k] = c;
    }
    out
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Borrowed view of an [`MlpArch`] with its flat parameter vector.
pub(crate) struct Mlp<'a> {
    arch: &'a MlpArch,
    params: &'a [f64],
}

/// Per-layer tensors kept from the forward pass.
pub(crate) struct ForwardCache {
    /// Layer inputs; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Array2<f64>>,
}

impl<'a> Mlp<'a> {
    pub(crate) fn new(arch: &'a MlpArch, params: &'a [f64]) -> Self {
        debug_assert_eq!(params.len(), arch.param_count());
        Self { arch, params }
    }

    fn layers(&self) -> impl Iterator<Item = (ArrayView2<'a, f64>, ArrayView1<'a, f64>)> + '_ {
        let mut offset = 0;
        self.arch.layer_dims().into_iter().map(move |(i, o)| {
            let w = ArrayView2::from_shape((i, o), &self.params[offset..offset + i * o]).unwrap();
            let b = ArrayView1::from(&self.params[offset + i * o..offset + i * o + o]);
            offset += i * o + o;
            (w, b)
        })
    }

    pub(crate) fn forward(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let n_layers = self.arch.hidden.len() + 1;
        let mut h = input.to_owned();
        for (k, (w, b)) in self.layers().enumerate() {
            let mut z = h.dot(&w);
            z += &b;
            if k + 1 < n_layers {
                z.mapv_inplace(silu);
            }
            h = z;
        }
        h
    }

    pub(crate) fn forward_cached(&self, input: Array2<f64>) -> (Array2<f64>, ForwardCache) {
        let n_layers = self.arch.hidden.len() + 1;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers - 1);
        let mut h = input;
        for (k, (w, b)) in self.layers().enumerate() {
            let mut z = h.dot(&w);
            z += &b;
            inputs.push(h);
            if k + 1 < n_layers {
                h = z.mapv(silu);
                pre.push(z);
            } else {
                h = z;
            }
        }
        (h, ForwardCache { inputs, pre })
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub(crate) fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>, grad: &mut [f64]) {
        let dims = self.arch.layer_dims();
        let weights: Vec<_> = self.layers().map(|(w, _)| w).collect();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for (i, o) in &dims {
            offsets.push(offset);
            offset += i * o + o;
        }
        let mut delta = d_out;
        for k in (0..dims.len()).rev() {
            let (i, o) = dims[k];
            let off = offsets[k];
            let gw = cache.inputs[k].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            for (g, v) in grad[off..off + i * o].iter_mut().zip(gw.iter()) {
                *g += v;
            }
            for (g, v) in grad[off + i * o..off + i * o + o].iter_mut().zip(gb.iter()) {
                *g += v;
            }
            if k > 0 {
                let mut d_h = delta.dot(&weights[k].t());
                ndarray::Zip::from(&mut d_h)
                    .and(&cache.pre[k - 1])
                    .for_each(|d, &z| *d *= silu_grad(z));
                delta = d_h;
            }
        }
    }
}

/// Builds the network input `[x | emb(t_i)]` from rows of `x` and a
/// precomputed embedding table indexed by integer timestep.
pub(crate) fn assemble_input(
    x: ArrayView2<f64>,
    embeddings: &[Array1<f64>],
    t: impl Fn(usize) -> usize,
) -> Array2<f64> {
    let (n, d) = x.dim();
    let e = embeddings.first().map_or(0, |e| e.len());
    let mut input = Array2::zeros((n, d + e));
    input.slice_mut(s![.., ..d]).assign(&x);
    for i in 0..n {
        input.slice_mut(s![i, d..]).assign(&embeddings[t(i)]);
    }
    input
}
