//! Adaptive phase-wise alignment: text-infused cross-attention, per-phase
//! classification, learned phase weighting, and localization heads.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, PdaError, Result};
use crate::graph::{Graph, Var};
use crate::nn::{Activation, Attention, Linear, Mlp};
use crate::params::{Init, ParamId, ParamStore};
use crate::semantics::{Phase, PhaseSet};

/// Added to softplus outputs so predicted distances are strictly positive.
pub const DISTANCE_EPS: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseClassScores {
    pub phase: Phase,
    /// T×C logits.
    pub scores: Array2<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Softmax,
    Sigmoid,
}

impl FromStr for WeightMode {
    type Err = PdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Self::Softmax),
            "sigmoid" => Ok(Self::Sigmoid),
            _ => Err(PdaError::Config(format!("unknown weight mode {s:?}"))),
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Softmax => "softmax",
            Self::Sigmoid => "sigmoid",
        })
    }
}

/// What the weighting network sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInput {
    /// The time-pooled unmasked features, replicated once per phase.
    #[default]
    Pooled,
    /// Each phase token pools its own masked features.
    PerPhase,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseWeights {
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationOutput {
    pub fg_prob: Vec<f64>,
    /// Distance back to the start boundary, in snippets.
    pub d_start: Vec<f64>,
    /// Distance forward to the end boundary, in snippets.
    pub d_end: Vec<f64>,
}

impl LocalizationOutput {
    pub fn len(&self) -> usize {
        self.fg_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fg_prob.is_empty()
    }

    /// Predicted `[t - d_start, t + d_end]` in snippet units.
    pub fn interval(&self, t: usize) -> (f64, f64) {
        (t as f64 - self.d_start[t], t as f64 + self.d_end[t])
    }
}

/// Single cross-attention layer: queries from video rows, keys and values
/// from a semantic bank, plus a residual from the queries.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub attn: Attention,
}

pub struct CrossAttendOutput {
    pub output: Var,
    /// Attention result before the residual is added.
    pub attended: Var,
    pub weights: Vec<Var>,
}

impl CrossAttention {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        let attn = Attention::new(store, name, d_model, heads, false, rng);
        // the text residual starts at zero and is learned
        attn.value.zero_weight(store);
        Self { attn }
    }

    pub fn forward(&self, g: &mut Graph, fv: Var, bank: Var) -> Result<CrossAttendOutput> {
        let (_, d) = g.shape(fv);
        let (c, db) = g.shape(bank);
        if c == 0 {
            return Err(PdaError::InvalidArgument(
                "cross-attention needs at least one class".into(),
            ));
        }
        ensure_dim("cross-attention model width", self.attn.d_model, d)?;
        ensure_dim("cross-attention bank width", d, db)?;
        let a = self.attn.forward(g, fv, bank);
        let output = g.add(fv, a.output);
        Ok(CrossAttendOutput {
            output,
            attended: a.output,
            weights: a.weights,
        })
    }
}

pub fn cross_attend(
    store: &ParamStore,
    ca: &CrossAttention,
    fv: &Array2<f64>,
    bank: &Array2<f64>,
) -> Result<Array2<f64>> {
    let mut g = Graph::new(store);
    let f = g.constant(fv.clone());
    let b = g.constant(bank.clone());
    let out = ca.forward(&mut g, f, b)?;
    Ok(g.value(out.output).clone())
}

pub fn classify_var(g: &mut Graph, fbar: Var, bank: Var) -> Result<Var> {
    ensure_dim("classification width", g.shape(fbar).1, g.shape(bank).1)?;
    Ok(g.matmul_t(fbar, bank))
}

/// Raw similarity logits between refined visual rows and class embeddings.
pub fn classify_phase(phase: Phase, fbar: &Array2<f64>, bank: &Array2<f64>) -> Result<PhaseClassScores> {
    ensure_dim("classification width", fbar.ncols(), bank.ncols())?;
    Ok(PhaseClassScores {
        phase,
        scores: fbar.dot(&bank.t()),
    })
}

/// Predicts one weight per phase from the video.
///
/// Tokens are the pooled features plus a learned embedding per phase, mixed
/// by one self-attention layer (with residual), then each token goes through
/// a two-layer projection to a scalar. A per-phase bias is added to the
/// scalars before the softmax or sigmoid.
#[derive(Clone, Debug)]
pub struct WeightingNetwork {
    pub phase_embeddings: ParamId,
    pub attn: Attention,
    pub hidden: Linear,
    pub out: Linear,
    pub phase_bias: ParamId,
    pub n_phases: usize,
}

impl WeightingNetwork {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_phases: usize,
        heads: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let out = Linear::new(store, &format!("{name}.out"), hidden, 1, rng);
        // training starts from uniform phase weights
        out.zero_weight(store);
        Self {
            phase_embeddings: store.add(
                format!("{name}.phase_embeddings"),
                (n_phases, d_model),
                Init::Normal(0.02),
                rng,
            ),
            attn: Attention::new(store, &format!("{name}.attn"), d_model, heads, true, rng),
            hidden: Linear::new(store, &format!("{name}.hidden"), d_model, hidden, rng),
            out,
            phase_bias: store.add(format!("{name}.phase_bias"), (1, n_phases), Init::Zeros, rng),
            n_phases,
        }
    }

    /// `tokens` is P×D (already pooled); returns the 1×P weight row.
    pub fn forward(&self, g: &mut Graph, tokens: Var, mode: WeightMode) -> Result<Var> {
        let (p, d) = g.shape(tokens);
        ensure_dim("weighting network token count", self.n_phases, p)?;
        ensure_dim("weighting network width", self.attn.d_model, d)?;
        if g.value(tokens).iter().any(|v| !v.is_finite()) {
            return Err(PdaError::NonFinite {
                context: "pooled weighting-network input".into(),
            });
        }
        let emb = g.param(self.phase_embeddings);
        let x = g.add(tokens, emb);
        let a = self.attn.forward(g, x, x);
        let x = g.add(x, a.output);
        let h = self.hidden.forward(g, x);
        let h = g.gelu(h);
        let logits = self.out.forward(g, h);
        let logits = g.transpose(logits);
        let bias = g.param(self.phase_bias);
        let logits = g.add(logits, bias);
        Ok(match mode {
            WeightMode::Softmax => g.softmax_rows(logits),
            WeightMode::Sigmoid => g.sigmoid(logits),
        })
    }

    /// Builds the P×D token matrix from F_v (pooled mode) or from each
    /// phase's masked features (per-phase mode).
    pub fn tokens(&self, g: &mut Graph, fv: Var, per_phase: &[Var], input: WeightInput) -> Var {
        match input {
            WeightInput::Pooled => {
                let pooled = g.mean_rows(fv);
                g.repeat_rows(pooled, self.n_phases)
            }
            WeightInput::PerPhase => {
                let cols: Vec<Var> = per_phase
                    .iter()
                    .map(|&f| {
                        let m = g.mean_rows(f);
                        g.transpose(m)
                    })
                    .collect();
                let stacked = g.concat_cols(&cols);
                g.transpose(stacked)
            }
        }
    }
}

pub fn phase_weights(
    store: &ParamStore,
    net: &WeightingNetwork,
    fv: &Array2<f64>,
    mode: WeightMode,
) -> Result<PhaseWeights> {
    let mut g = Graph::new(store);
    let f = g.constant(fv.clone());
    let tokens = net.tokens(&mut g, f, &[], WeightInput::Pooled);
    let w = net.forward(&mut g, tokens, mode)?;
    Ok(PhaseWeights {
        weights: g.value(w).iter().copied().collect(),
    })
}

/// Weighted sum of per-phase logits, in the order of `phases`.
pub fn aggregate_scores(
    per_phase: &BTreeMap<Phase, PhaseClassScores>,
    phases: &PhaseSet,
    w: &PhaseWeights,
) -> Result<Array2<f64>> {
    ensure_dim("phase weight count", phases.len(), w.weights.len())?;
    let mut total: Option<Array2<f64>> = None;
    for (p, &wp) in phases.phases().iter().zip(&w.weights) {
        let s = per_phase
            .get(p)
            .ok_or_else(|| PdaError::InvalidArgument(format!("missing scores for {p}")))?;
        match &mut total {
            None => total = Some(&s.scores * wp),
            Some(acc) => {
                if acc.dim() != s.scores.dim() {
                    return Err(PdaError::InvalidArgument(format!("score shape for {p} differs")));
                }
                acc.scaled_add(wp, &s.scores);
            }
        }
    }
    total.ok_or_else(|| PdaError::InvalidArgument("no phases to aggregate".into()))
}

/// Concatenates per-phase features along the width and maps them back to the
/// model width with a three-layer ReLU MLP.
#[derive(Clone, Debug)]
pub struct FusionMlp {
    pub mlp: Mlp,
    pub n_phases: usize,
    pub d_model: usize,
}

impl FusionMlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_phases: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            mlp: Mlp::new(
                store,
                name,
                &[n_phases * d_model, hidden, hidden, d_model],
                Activation::Relu,
                rng,
            ),
            n_phases,
            d_model,
        }
    }

    pub fn forward(&self, g: &mut Graph, per_phase: &[Var]) -> Result<Var> {
        ensure_dim("fusion phase count", self.n_phases, per_phase.len())?;
        let shape = g.shape(per_phase[0]);
        ensure_dim("fusion width", self.d_model, shape.1)?;
        if per_phase.iter().any(|&v| g.shape(v) != shape) {
            return Err(PdaError::InvalidArgument("phase feature shapes differ".into()));
        }
        let cat = if per_phase.len() == 1 {
            per_phase[0]
        } else {
            g.concat_cols(per_phase)
        };
        Ok(self.mlp.forward(g, cat))
    }
}

pub fn fuse_for_localization(store: &ParamStore, fusion: &FusionMlp, per_phase: &[Array2<f64>]) -> Result<Array2<f64>> {
    if per_phase.is_empty() {
        return Err(PdaError::InvalidArgument("no phase features to fuse".into()));
    }
    let mut g = Graph::new(store);
    let vars: Vec<Var> = per_phase.iter().map(|f| g.constant(f.clone())).collect();
    let out = fusion.forward(&mut g, &vars)?;
    Ok(g.value(out).clone())
}

/// Foreground probability and boundary distances per timestep.
#[derive(Clone, Debug)]
pub struct LocalizationHeads {
    pub foreground: Linear,
    pub regression: Linear,
}

pub struct LocalizationVars {
    pub fg_prob: Var,
    pub d_start: Var,
    pub d_end: Var,
}

impl LocalizationHeads {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            foreground: Linear::new(store, &format!("{name}.foreground"), d_model, 1, rng),
            regression: Linear::new(store, &format!("{name}.regression"), d_model, 2, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, fused: Var) -> Result<LocalizationVars> {
        let logit = self.foreground.forward(g, fused);
        let fg_prob = g.sigmoid(logit);
        let reg = self.regression.forward(g, fused);
        let reg = g.softplus(reg);
        let reg = g.add_scalar(reg, DISTANCE_EPS);
        let d_start = g.slice_cols(reg, 0, 1);
        let d_end = g.slice_cols(reg, 1, 1);
        for v in [fg_prob, d_start, d_end] {
            if g.value(v).iter().any(|x| !x.is_finite()) {
                return Err(PdaError::NonFinite {
                    context: "localization heads".into(),
                });
            }
        }
        Ok(LocalizationVars {
            fg_prob,
            d_start,
            d_end,
        })
    }
}

pub fn localization_output(g: &Graph, vars: &LocalizationVars) -> LocalizationOutput {
    LocalizationOutput {
        fg_prob: g.value(vars.fg_prob).iter().copied().collect(),
        d_start: g.value(vars.d_start).iter().copied().collect(),
        d_end: g.value(vars.d_end).iter().copied().collect(),
    }
}

pub fn localization_heads(
    store: &ParamStore,
    heads: &LocalizationHeads,
    fused: &Array2<f64>,
) -> Result<LocalizationOutput> {
    let mut g = Graph::new(store);
    let f = g.constant(fused.clone());
    let vars = heads.forward(&mut g, f)?;
    Ok(localization_output(&g, &vars))
}
