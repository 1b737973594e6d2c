//! A small trainable sequence encoder.
//!
//! Each layer mixes a position with its neighbours and with the sequence
//! mean, through a residual tanh update:
//!
//! ```text
//! a_i  = h_i·Ws + h_{i-1}·Wl + h_{i+1}·Wr + mean(h)·Wg + b
//! h'_i = h_i + tanh(a_i)
//! ```
//!
//! The mean term lets position 0 summarize the whole sequence, which is what
//! the label encoder reads out.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixLayer {
    pub w_self: Array2<f64>,
    pub w_left: Array2<f64>,
    pub w_right: Array2<f64>,
    pub w_global: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEncoder {
    pub embed: Array2<f64>,
    pub layers: Vec<MixLayer>,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Vec<usize>,
    inputs: Vec<Array2<f64>>,
    activations: Vec<Array2<f64>>,
    means: Vec<Array1<f64>>,
}

fn shift_down(h: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    let t = h.nrows();
    if t > 1 {
        out.slice_mut(s![1.., ..]).assign(&h.slice(s![..t - 1, ..]));
    }
    out
}

fn shift_up(h: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    let t = h.nrows();
    if t > 1 {
        out.slice_mut(s![..t - 1, ..]).assign(&h.slice(s![1.., ..]));
    }
    out
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let col = a.view().insert_axis(Axis(1));
    let row = b.view().insert_axis(Axis(0));
    col.dot(&row)
}

impl SequenceEncoder {
    pub fn new(vocab: usize, hidden: usize, num_layers: usize, rng: &mut Rng) -> Self {
        let h = hidden as f64;
        let embed_dist = Normal::new(0.0, 1.0 / h.sqrt()).expect("finite std");
        let weight_dist = Normal::new(0.0, 0.5 / h.sqrt()).expect("finite std");
        let sample = |rows: usize, cols: usize, dist: &Normal<f64>, rng: &mut Rng| {
            Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
        };
        let embed = sample(vocab, hidden, &embed_dist, rng);
        let layers = (0..num_layers)
            .map(|_| MixLayer {
                w_self: sample(hidden, hidden, &weight_dist, rng),
                w_left: sample(hidden, hidden, &weight_dist, rng),
                w_right: sample(hidden, hidden, &weight_dist, rng),
                w_global: sample(hidden, hidden, &weight_dist, rng),
                bias: Array1::from_shape_simple_fn(hidden, || rng.random_range(-0.01..0.01)),
            })
            .collect();
        Self { embed, layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            embed: Array2::zeros(self.embed.raw_dim()),
            layers: self
                .layers
                .iter()
                .map(|l| MixLayer {
                    w_self: Array2::zeros(l.w_self.raw_dim()),
                    w_left: Array2::zeros(l.w_left.raw_dim()),
                    w_right: Array2::zeros(l.w_right.raw_dim()),
                    w_global: Array2::zeros(l.w_global.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.embed.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.nrows()
    }

    pub fn forward(&self, ids: &[usize]) -> (Array2<f64>, ForwardCache) {
        let mut h = self.embed.select(Axis(0), ids);
        let mut cache = ForwardCache {
            ids: ids.to_vec(),
            inputs: Vec::with_capacity(self.layers.len()),
            activations: Vec::with_capacity(self.layers.len()),
            means: Vec::with_capacity(self.layers.len()),
        };
        for layer in &self.layers {
            let mean = h.mean_axis(Axis(0)).expect("non-empty sequence");
            let mut a = h.dot(&layer.w_self) + shift_down(&h).dot(&layer.w_left) + shift_up(&h).dot(&layer.w_right);
            a += &(mean.dot(&layer.w_global) + &layer.bias);
            let act = a.mapv(f64::tanh);
            let next = &h + &act;
            cache.inputs.push(h);
            cache.activations.push(act);
            cache.means.push(mean);
            h = next;
        }
        (h, cache)
    }

    /// Forward pass without keeping activations.
    pub fn encode(&self, ids: &[usize]) -> Array2<f64> {
        self.forward(ids).0
    }

    /// Accumulates parameter gradients into `grads` given the gradient of
    /// the loss with respect to the final hidden states.
    pub fn backward(&self, cache: &ForwardCache, d_out: Array2<f64>, grads: &mut SequenceEncoder) {
        let mut dh = d_out;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let h = &cache.inputs[idx];
            let act = &cache.activations[idx];
            let mean = &cache.means[idx];
            let t = h.nrows() as f64;
            let da = &dh * &act.mapv(|y| 1.0 - y * y);
            let da_sum = da.sum_axis(Axis(0));

            let g = &mut grads.layers[idx];
            g.w_self += &h.t().dot(&da);
            g.w_left += &shift_down(h).t().dot(&da);
            g.w_right += &shift_up(h).t().dot(&da);
            g.w_global += &outer(mean, &da_sum);
            g.bias += &da_sum;

            let mut dprev = dh;
            dprev += &da.dot(&layer.w_self.t());
            dprev += &shift_up(&da.dot(&layer.w_left.t()));
            dprev += &shift_down(&da.dot(&layer.w_right.t()));
            dprev += &(da_sum.dot(&layer.w_global.t()) / t);
            dh = dprev;
        }
        for (row, &id) in dh.outer_iter().zip(&cache.ids) {
            let mut target = grads.embed.row_mut(id);
            target += &row;
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.embed.as_slice().expect("standard layout")];
        for l in &self.layers {
            for m in [&l.w_self, &l.w_left, &l.w_right, &l.w_global] {
                out.push(m.as_slice().expect("standard layout"));
            }
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embed.as_slice_mut().expect("standard layout")];
        for l in &mut self.layers {
            out.push(l.w_self.as_slice_mut().expect("standard layout"));
            out.push(l.w_left.as_slice_mut().expect("standard layout"));
            out.push(l.w_right.as_slice_mut().expect("standard layout"));
            out.push(l.w_global.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }
}
