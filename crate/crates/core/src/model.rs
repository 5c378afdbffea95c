//! The full detector: backbone, per-branch text projection, foreground
//! filtering, cross-modal alignment, and localization heads.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apa::{
    classify_var, localization_output, CrossAttention, FusionMlp, LocalizationHeads, LocalizationOutput,
    LocalizationVars, WeightInput, WeightMode, WeightingNetwork,
};
use crate::backbone::{Backbone, BackboneConfig};
use crate::error::{ensure_dim, PdaError, Result};
use crate::graph::{Graph, Var};
use crate::nn::Linear;
use crate::params::ParamStore;
use crate::semantics::{encode_texts, DescriptionSource, Phase, PhaseSet, TextEncoder, TextSource};
use crate::tif::{binarize, foreground_score_matrix, static_mask, ForegroundMask};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filtering {
    None,
    Static,
    #[default]
    TextInfused,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// One branch whose bank encodes the bare class label.
    GlobalLabel,
    /// One branch whose bank encodes all phase descriptions merged.
    GlobalMerge,
    /// One branch per phase, combined with equal weights.
    PhaseAverage,
    /// One branch per phase, combined with predicted weights.
    #[default]
    PhaseAdaptive,
}

macro_rules! string_enum {
    ($ty:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = PdaError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    _ => Err(PdaError::Config(format!(concat!("unknown ", stringify!($ty), " {:?}"), s))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $(Self::$variant => $text,)+
                })
            }
        }
    };
}

string_enum!(Filtering { None => "none", Static => "static", TextInfused => "text_infused" });
string_enum!(Alignment {
    GlobalLabel => "global_label",
    GlobalMerge => "global_merge",
    PhaseAverage => "phase_average",
    PhaseAdaptive => "phase_adaptive",
});

impl Alignment {
    pub fn is_phase_wise(self) -> bool {
        matches!(self, Self::PhaseAverage | Self::PhaseAdaptive)
    }
}

/// Everything that fixes the parameter layout and the forward computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub d_text: usize,
    pub cross_heads: usize,
    pub weight_heads: usize,
    pub weight_hidden: usize,
    pub fusion_hidden: usize,
    pub phase_set: PhaseSet,
    pub filtering: Filtering,
    pub alignment: Alignment,
    pub weight_mode: WeightMode,
    pub weight_input: WeightInput,
    /// Start every text projection as a copy of the video input projection
    /// (when the widths agree), so text and video stay in a shared space.
    #[serde(default)]
    pub tied_text_init: bool,
}

impl ModelConfig {
    pub fn desk(d_in: usize, d_text: usize) -> Self {
        Self {
            backbone: BackboneConfig::desk(d_in),
            d_text,
            cross_heads: 1,
            weight_heads: 1,
            weight_hidden: 32,
            fusion_hidden: 64,
            phase_set: PhaseSet::canonical(),
            filtering: Filtering::TextInfused,
            alignment: Alignment::PhaseAdaptive,
            weight_mode: WeightMode::Softmax,
            weight_input: WeightInput::Pooled,
            tied_text_init: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        let d = self.backbone.d_model;
        if self.d_text == 0 || self.weight_hidden == 0 || self.fusion_hidden == 0 {
            return Err(PdaError::Config("model widths must be positive".into()));
        }
        for (name, h) in [("cross_heads", self.cross_heads), ("weight_heads", self.weight_heads)] {
            if h == 0 || !d.is_multiple_of(h) {
                return Err(PdaError::Config(format!("{name}={h} must divide d_model={d}")));
            }
        }
        Ok(())
    }

    /// The (phase, text source) of every branch, in evaluation order.
    pub fn branches(&self) -> Vec<(Phase, TextSource)> {
        match self.alignment {
            Alignment::GlobalLabel => vec![(Phase::Global, TextSource::Label)],
            Alignment::GlobalMerge => vec![(Phase::Global, TextSource::Merged)],
            Alignment::PhaseAverage | Alignment::PhaseAdaptive => self
                .phase_set
                .phases()
                .iter()
                .map(|&p| (p, TextSource::Phase(p)))
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub phase: Phase,
    pub source: TextSource,
    pub text_proj: Linear,
    pub cross: CrossAttention,
}

#[derive(Clone, Debug)]
pub struct PdaModel {
    pub config: ModelConfig,
    pub backbone: Backbone,
    pub branches: Vec<Branch>,
    pub weighting: Option<WeightingNetwork>,
    pub fusion: FusionMlp,
    pub heads: LocalizationHeads,
}

/// Encoded class texts, one C×D_txt matrix per branch.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassTexts {
    pub vocab: Vec<String>,
    pub per_branch: Vec<Array2<f64>>,
}

impl ClassTexts {
    pub fn n_classes(&self) -> usize {
        self.vocab.len()
    }
}

pub struct ForwardVars {
    /// T×C aggregated logits.
    pub logits: Var,
    pub loc: LocalizationVars,
    /// 1×P weights, or `None` for a single branch.
    pub weights: Option<Var>,
    pub masks: Vec<ForegroundMask>,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub scores: Array2<f64>,
    pub loc: LocalizationOutput,
    pub weights: Vec<f64>,
    pub masks: Vec<ForegroundMask>,
}

impl PdaModel {
    /// Builds the layout into `store`, drawing initial values from a
    /// generator seeded with `seed`.
    pub fn new(config: ModelConfig, store: &mut ParamStore, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.backbone.d_model;
        let backbone = Backbone::new(store, config.backbone.clone(), &mut rng)?;
        let branches: Vec<Branch> = config
            .branches()
            .into_iter()
            .map(|(phase, source)| {
                let tag = match source {
                    TextSource::Label => "label".to_string(),
                    TextSource::Merged => "merged".to_string(),
                    TextSource::Phase(p) => p.to_string(),
                };
                Branch {
                    phase,
                    source,
                    text_proj: Linear::new(store, &format!("branch.{tag}.text_proj"), config.d_text, d, &mut rng),
                    cross: CrossAttention::new(store, &format!("branch.{tag}.cross"), d, config.cross_heads, &mut rng),
                }
            })
            .collect();
        if config.tied_text_init && config.d_text == config.backbone.d_in {
            let w = store.value(backbone.input.weight).clone();
            for b in &branches {
                store.set(b.text_proj.weight, w.clone());
            }
        }
        let p = branches.len();
        let fusion = FusionMlp::new(store, "fusion", d, p, config.fusion_hidden, &mut rng);
        let heads = LocalizationHeads::new(store, "heads", d, &mut rng);
        // built last so the remaining parameters match the averaging variant
        let weighting = (config.alignment == Alignment::PhaseAdaptive && p > 1).then(|| {
            WeightingNetwork::new(
                store,
                "weighting",
                d,
                p,
                config.weight_heads,
                config.weight_hidden,
                &mut rng,
            )
        });
        Ok(Self {
            config,
            backbone,
            branches,
            weighting,
            fusion,
            heads,
        })
    }

    /// Encodes the texts of `vocab` for every branch.
    pub fn class_texts(
        &self,
        vocab: &[String],
        descs: &dyn DescriptionSource,
        enc: &dyn TextEncoder,
    ) -> Result<ClassTexts> {
        ensure_dim("text encoder width", self.config.d_text, enc.dim())?;
        let per_branch = self
            .branches
            .iter()
            .map(|b| encode_texts(vocab, b.source, &self.config.phase_set, descs, enc))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassTexts {
            vocab: vocab.to_vec(),
            per_branch,
        })
    }

    fn mask_for(&self, branch: &Branch, fv: &Array2<f64>, bank: &Array2<f64>) -> Result<ForegroundMask> {
        let t = fv.nrows();
        match self.config.filtering {
            Filtering::None => Ok(ForegroundMask::all_ones(branch.phase, t)),
            Filtering::Static => {
                if !self.config.alignment.is_phase_wise() {
                    return Ok(ForegroundMask::all_ones(branch.phase, t));
                }
                let n = self.config.phase_set.n_temporal();
                if n == 0 || t < n {
                    Ok(ForegroundMask::all_ones(branch.phase, t))
                } else {
                    static_mask(t, branch.phase, n)
                }
            }
            Filtering::TextInfused => Ok(binarize(&foreground_score_matrix(fv, bank, branch.phase)?)),
        }
    }

    /// Records the forward computation for one video on `g`.
    pub fn forward(&self, g: &mut Graph, features: &Array2<f64>, texts: &ClassTexts) -> Result<ForwardVars> {
        ensure_dim("feature width", self.config.backbone.d_in, features.ncols())?;
        ensure_dim("text branch count", self.branches.len(), texts.per_branch.len())?;
        if texts.vocab.is_empty() {
            return Err(PdaError::InvalidArgument("empty vocabulary".into()));
        }
        let x = g.constant(features.clone());
        let fv = self.backbone.forward(g, x)?.output;
        let mut masked = Vec::with_capacity(self.branches.len());
        let mut refined = Vec::with_capacity(self.branches.len());
        let mut logits = Vec::with_capacity(self.branches.len());
        let mut masks = Vec::with_capacity(self.branches.len());
        for (branch, text) in self.branches.iter().zip(&texts.per_branch) {
            let t = g.constant(text.clone());
            let bank = branch.text_proj.forward(g, t);
            let mask = self.mask_for(branch, g.value(fv), g.value(bank))?;
            let fvp = g.mask_rows(fv, mask.weights());
            let ca = branch.cross.forward(g, fvp, bank)?;
            logits.push(classify_var(g, ca.output, bank)?);
            masked.push(fvp);
            refined.push(ca.output);
            masks.push(mask);
        }
        let p = self.branches.len();
        let weights = if p == 1 {
            None
        } else if let Some(net) = &self.weighting {
            let tokens = net.tokens(g, fv, &masked, self.config.weight_input);
            Some(net.forward(g, tokens, self.config.weight_mode)?)
        } else {
            Some(g.constant(Array2::from_elem((1, p), 1.0 / p as f64)))
        };
        let total = match weights {
            None => logits[0],
            Some(w) => {
                let mut acc = g.scale_by(logits[0], w, 0);
                for (i, &l) in logits.iter().enumerate().skip(1) {
                    let s = g.scale_by(l, w, i);
                    acc = g.add(acc, s);
                }
                acc
            }
        };
        if g.value(total).iter().any(|v| !v.is_finite()) {
            return Err(PdaError::NonFinite {
                context: "aggregated class logits".into(),
            });
        }
        let fused = self.fusion.forward(g, &refined)?;
        let loc = self.heads.forward(g, fused)?;
        Ok(ForwardVars {
            logits: total,
            loc,
            weights,
            masks,
        })
    }

    pub fn predict(&self, store: &ParamStore, features: &Array2<f64>, texts: &ClassTexts) -> Result<Prediction> {
        let mut g = Graph::new(store);
        let out = self.forward(&mut g, features, texts)?;
        Ok(Prediction {
            scores: g.value(out.logits).clone(),
            loc: localization_output(&g, &out.loc),
            weights: match out.weights {
                Some(w) => g.value(w).iter().copied().collect(),
                None => vec![1.0],
            },
            masks: out.masks,
        })
    }
}
