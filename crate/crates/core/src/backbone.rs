//! Temporal transformer over snippet features.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, PdaError, Result};
use crate::graph::{Graph, Var};
use crate::nn::{Activation, Attention, LayerNorm, Linear, Mlp};
use crate::params::{Init, ParamId, ParamStore};

/// Snippet features of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    /// T×D_in.
    pub features: Array2<f64>,
    /// Frames per snippet.
    pub snippet_stride: u32,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, features: Array2<f64>, snippet_stride: u32) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(PdaError::Data("feature sequence must have T >= 1 and D >= 1".into()));
        }
        if snippet_stride == 0 {
            return Err(PdaError::Data("snippet stride must be positive".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(PdaError::NonFinite {
                context: "input features".into(),
            });
        }
        Ok(Self {
            video_id: video_id.into(),
            features,
            snippet_stride,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Backbone output F_v: T×D.
#[derive(Clone, Debug)]
pub struct VisualRepresentation {
    pub values: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub d_in: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub max_len: usize,
}

impl BackboneConfig {
    /// Six layers of width 512 with eight heads.
    pub fn full_scale(d_in: usize) -> Self {
        Self {
            d_in,
            d_model: 512,
            layers: 6,
            heads: 8,
            ffn_hidden: 2048,
            max_len: 2304,
        }
    }

    /// Two layers of width 32 with two heads.
    pub fn desk(d_in: usize) -> Self {
        Self {
            d_in,
            d_model: 32,
            layers: 2,
            heads: 2,
            ffn_hidden: 64,
            max_len: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_model == 0 || self.layers == 0 || self.max_len == 0 || self.ffn_hidden == 0 {
            return Err(PdaError::Config(
                "backbone dimensions and layer count must be positive".into(),
            ));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(PdaError::Config(format!(
                "head count {} must divide model width {}",
                self.heads, self.d_model
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attn_norm: LayerNorm,
    pub attn: Attention,
    pub ffn_norm: LayerNorm,
    pub ffn: Mlp,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub config: BackboneConfig,
    pub input: Linear,
    pub positions: ParamId,
    pub layers: Vec<EncoderLayer>,
}

pub struct BackboneOutput {
    pub output: Var,
    /// Attention weights per layer, per head.
    pub attention: Vec<Vec<Var>>,
}

impl Backbone {
    pub fn new(store: &mut ParamStore, config: BackboneConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let input = Linear::new(store, "backbone.input", config.d_in, d, rng);
        let positions = store.add("backbone.positions", (config.max_len, d), Init::Normal(0.02), rng);
        let layers = (0..config.layers)
            .map(|i| {
                let p = format!("backbone.layer{i}");
                let layer = EncoderLayer {
                    attn_norm: LayerNorm::new(store, &format!("{p}.attn_norm"), d, rng),
                    attn: Attention::new(store, &format!("{p}.attn"), d, config.heads, true, rng),
                    ffn_norm: LayerNorm::new(store, &format!("{p}.ffn_norm"), d, rng),
                    ffn: Mlp::new(
                        store,
                        &format!("{p}.ffn"),
                        &[d, config.ffn_hidden, d],
                        Activation::Gelu,
                        rng,
                    ),
                };
                // residual branches start at zero, so an untrained stack is the identity
                if let Some(o) = &layer.attn.output {
                    o.zero_weight(store);
                }
                layer.ffn.layers.last().expect("two layers").zero_weight(store);
                layer
            })
            .collect();
        Ok(Self {
            config,
            input,
            positions,
            layers,
        })
    }

    fn check_len(&self, t: usize) -> Result<()> {
        if t == 0 {
            return Err(PdaError::Data("empty feature sequence".into()));
        }
        if t > self.config.max_len {
            return Err(PdaError::Data(format!(
                "sequence length {t} exceeds the positional table ({})",
                self.config.max_len
            )));
        }
        Ok(())
    }

    /// Input projection followed by the encoder stack.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<BackboneOutput> {
        let (t, d_in) = g.shape(x);
        ensure_dim("backbone input width", self.config.d_in, d_in)?;
        self.check_len(t)?;
        let h = self.input.forward(g, x);
        self.encode(g, h)
    }

    /// Adds positional encodings and applies the pre-norm residual layers.
    pub fn encode(&self, g: &mut Graph, x: Var) -> Result<BackboneOutput> {
        let (t, d) = g.shape(x);
        ensure_dim("backbone model width", self.config.d_model, d)?;
        self.check_len(t)?;
        let pos = g.param(self.positions);
        let pos = g.slice_rows(pos, 0, t);
        let mut h = g.add(x, pos);
        let mut attention = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let n = layer.attn_norm.forward(g, h);
            let a = layer.attn.forward(g, n, n);
            attention.push(a.weights);
            h = g.add(h, a.output);
            let n = layer.ffn_norm.forward(g, h);
            let f = layer.ffn.forward(g, n);
            h = g.add(h, f);
            if g.value(h).iter().any(|v| !v.is_finite()) {
                return Err(PdaError::NonFinite {
                    context: format!("backbone layer {i}"),
                });
            }
        }
        Ok(BackboneOutput { output: h, attention })
    }
}

/// Per-timestep affine map from input width to model width.
pub fn project_input(x: &FeatureSequence, store: &ParamStore, backbone: &Backbone) -> Result<Array2<f64>> {
    backbone.input.apply(store, &x.features)
}

/// Runs the encoder stack on already-projected features (T×D).
pub fn encode_temporal(x: &Array2<f64>, store: &ParamStore, backbone: &Backbone) -> Result<VisualRepresentation> {
    let mut g = Graph::new(store);
    let xv = g.constant(x.clone());
    let out = backbone.encode(&mut g, xv)?;
    Ok(VisualRepresentation {
        values: g.value(out.output).clone(),
    })
}
