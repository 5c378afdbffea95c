//! Layers shared by the backbone and the alignment heads.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_dim, Result};
use crate::graph::{Graph, Var};
use crate::params::{Init, ParamId, ParamStore};

/// `y = x·W + b` with `W` of shape in×out.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), (d_in, d_out), Init::Xavier, rng);
        let bias = store.add(format!("{name}.bias"), (1, d_out), Init::Zeros, rng);
        Self {
            weight,
            bias: Some(bias),
            d_in,
            d_out,
        }
    }

    pub fn without_bias(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), (d_in, d_out), Init::Xavier, rng);
        Self {
            weight,
            bias: None,
            d_in,
            d_out,
        }
    }

    /// Sets the weight to zero, so the layer starts out emitting its bias.
    pub fn zero_weight(&self, store: &mut ParamStore) {
        store.set(self.weight, Array2::zeros((self.d_in, self.d_out)));
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let y = g.matmul(x, w);
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }

    pub fn apply(&self, store: &ParamStore, x: &Array2<f64>) -> Result<Array2<f64>> {
        ensure_dim("linear input", self.d_in, x.ncols())?;
        let mut y = x.dot(store.value(self.weight));
        if let Some(b) = self.bias {
            y += store.value(b);
        }
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), (1, d), Init::Ones, rng),
            beta: store.add(format!("{name}.beta"), (1, d), Init::Zeros, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// Multi-head scaled dot-product attention. Queries come from one input and
/// keys/values from another (the same one for self-attention).
#[derive(Clone, Debug)]
pub struct Attention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Option<Linear>,
    pub heads: usize,
    pub d_model: usize,
}

/// Attention output together with each head's weight matrix.
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl Attention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        with_output: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(
            heads > 0 && d_model.is_multiple_of(heads),
            "heads must divide the model width"
        );
        Self {
            query: Linear::new(store, &format!("{name}.q"), d_model, d_model, rng),
            key: Linear::new(store, &format!("{name}.k"), d_model, d_model, rng),
            value: Linear::new(store, &format!("{name}.v"), d_model, d_model, rng),
            output: with_output.then(|| Linear::new(store, &format!("{name}.o"), d_model, d_model, rng)),
            heads,
            d_model,
        }
    }

    pub fn forward(&self, g: &mut Graph, queries: Var, context: Var) -> AttentionOutput {
        let q = self.query.forward(g, queries);
        let k = self.key.forward(g, context);
        let v = self.value.forward(g, context);
        let dh = self.d_model / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh),
                    g.slice_cols(k, h * dh, dh),
                    g.slice_cols(v, h * dh, dh),
                )
            };
            let scores = g.matmul_t(qh, kh);
            let scores = g.scale(scores, scale);
            let attn = g.softmax_rows(scores);
            weights.push(attn);
            outs.push(g.matmul(attn, vh));
        }
        let mut out = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        if let Some(o) = &self.output {
            out = o.forward(g, out);
        }
        AttentionOutput { output: out, weights }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
}

/// Stack of linear layers with an activation between consecutive layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers, activation }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, h);
            if i + 1 < self.layers.len() {
                h = match self.activation {
                    Activation::Relu => g.relu(h),
                    Activation::Gelu => g.gelu(h),
                };
            }
        }
        h
    }
}
