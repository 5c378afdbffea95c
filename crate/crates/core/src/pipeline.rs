//! Training, inference, evaluation, and ablation runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::{debug, info};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apa::{WeightInput, WeightMode};
use crate::backbone::{BackboneConfig, FeatureSequence};
use crate::data::{Dataset, OpenVocabSplit, VideoEntry};
use crate::error::{PdaError, Result};
use crate::graph::Graph;
use crate::metrics::{mean_ap, EvalConfig, MapResult};
use crate::model::{Alignment, ClassTexts, Filtering, ModelConfig, PdaModel};
use crate::objectives::{LossWeights, SupervisionTargets};
use crate::params::{ParamId, ParamStore};
use crate::postprocess::{assemble_proposals, soft_nms_classwise, Detection, PostprocessConfig};
use crate::semantics::{DescriptionSource, PhaseSet, TextEncoder};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    #[default]
    Multistep,
    Cosine,
}

impl FromStr for Scheduler {
    type Err = PdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multistep" => Ok(Self::Multistep),
            "cosine" => Ok(Self::Cosine),
            _ => Err(PdaError::Config(format!("unknown scheduler {s:?}"))),
        }
    }
}

/// Layer sizes of the detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub d_in: usize,
    pub d_text: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub max_len: usize,
    pub cross_heads: usize,
    pub weight_heads: usize,
    pub weight_hidden: usize,
    pub fusion_hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        let b = BackboneConfig::desk(32);
        Self {
            d_in: b.d_in,
            d_text: 32,
            d_model: b.d_model,
            layers: b.layers,
            heads: b.heads,
            ffn_hidden: b.ffn_hidden,
            max_len: b.max_len,
            cross_heads: 1,
            weight_heads: 1,
            weight_hidden: 32,
            fusion_hidden: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub scheduler: Scheduler,
    /// Multistep milestones as fractions of the epoch count.
    pub milestones: Vec<f64>,
    pub gamma: f64,
    /// Global gradient-norm limit; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub phase_set: PhaseSet,
    pub filtering: Filtering,
    pub alignment: Alignment,
    pub weight_mode: WeightMode,
    pub weight_input: WeightInput,
    pub tied_text_init: bool,
    pub loss_weights: LossWeights,
    pub architecture: Architecture,
    pub postprocess: PostprocessConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            warmup_epochs: 5,
            learning_rate: 1e-4,
            batch_size: 4,
            scheduler: Scheduler::Multistep,
            milestones: vec![0.6, 0.85],
            gamma: 0.1,
            grad_clip: 1.0,
            seed: 0,
            phase_set: PhaseSet::canonical(),
            filtering: Filtering::TextInfused,
            alignment: Alignment::PhaseAdaptive,
            weight_mode: WeightMode::Softmax,
            weight_input: WeightInput::Pooled,
            tied_text_init: true,
            loss_weights: LossWeights::default(),
            architecture: Architecture::default(),
            postprocess: PostprocessConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(PdaError::Config("learning_rate must be finite and non-negative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(PdaError::Config("epochs and batch_size must be positive".into()));
        }
        if self.effective_warmup() >= self.epochs as f64 {
            return Err(PdaError::Config(format!(
                "warmup ({} epochs after scaling) must be shorter than the run ({} epochs)",
                self.effective_warmup(),
                self.epochs
            )));
        }
        if self.milestones.iter().any(|m| !(*m > 0.0 && *m < 1.0)) || self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PdaError::Config(
                "milestones must be increasing fractions in (0, 1)".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(PdaError::Config("gamma must lie in (0, 1]".into()));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(PdaError::Config("grad_clip must be non-negative".into()));
        }
        let pp = &self.postprocess;
        if pp.top_k == 0 || !(pp.sigma > 0.0) {
            return Err(PdaError::Config("postprocess top_k and sigma must be positive".into()));
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        let a = &self.architecture;
        ModelConfig {
            backbone: BackboneConfig {
                d_in: a.d_in,
                d_model: a.d_model,
                layers: a.layers,
                heads: a.heads,
                ffn_hidden: a.ffn_hidden,
                max_len: a.max_len,
            },
            d_text: a.d_text,
            cross_heads: a.cross_heads,
            weight_heads: a.weight_heads,
            weight_hidden: a.weight_hidden,
            fusion_hidden: a.fusion_hidden,
            phase_set: self.phase_set.clone(),
            filtering: self.filtering,
            alignment: self.alignment,
            weight_mode: self.weight_mode,
            weight_input: self.weight_input,
            tied_text_init: self.tied_text_init,
        }
    }

    /// Warmup length in epochs. Short runs shrink it in proportion to a
    /// 25-epoch reference schedule.
    pub fn effective_warmup(&self) -> f64 {
        let w = self.warmup_epochs as f64;
        if self.epochs < 25 {
            w * self.epochs as f64 / 25.0
        } else {
            w
        }
    }

    /// Learning rate for optimizer step `step` (0-based).
    pub fn learning_rate_at(&self, step: usize, steps_per_epoch: usize) -> f64 {
        let spe = steps_per_epoch.max(1) as f64;
        let total = self.epochs as f64 * spe;
        let warm = self.effective_warmup() * spe;
        let s = step as f64;
        if s < warm {
            return self.learning_rate * (s + 1.0) / warm;
        }
        match self.scheduler {
            Scheduler::Multistep => {
                let epoch = s / spe;
                let passed = self
                    .milestones
                    .iter()
                    .filter(|&&m| epoch >= m * self.epochs as f64)
                    .count();
                self.learning_rate * self.gamma.powi(passed as i32)
            }
            Scheduler::Cosine => {
                let span = (total - warm).max(1.0);
                let progress = ((s - warm) / span).clamp(0.0, 1.0);
                self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Array2<f64>> = store.ids().map(|id| Array2::zeros(store.value(id).dim())).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &[Array2<f64>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, g) in grads.iter().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            if lr == 0.0 {
                continue;
            }
            let p = store.value_mut(ParamId(i));
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + self.eps);
            });
        }
    }
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Array2<f64>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.mapv_inplace(|v| v * s));
    }
    norm
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub classification: f64,
    pub foreground: f64,
    pub localization: f64,
}

impl std::ops::AddAssign for LossParts {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.classification += o.classification;
        self.foreground += o.foreground;
        self.localization += o.localization;
    }
}

impl LossParts {
    fn scaled(self, s: f64) -> Self {
        Self {
            total: self.total * s,
            classification: self.classification * s,
            foreground: self.foreground * s,
            localization: self.localization * s,
        }
    }
}

/// Loss of one video and its gradient for every parameter (zeros where a
/// parameter is unused).
pub fn loss_and_gradients(
    model: &PdaModel,
    store: &ParamStore,
    features: &Array2<f64>,
    targets: &SupervisionTargets,
    texts: &ClassTexts,
    weights: LossWeights,
) -> Result<(LossParts, Vec<Array2<f64>>)> {
    let mut g = Graph::new(store);
    let out = model.forward(&mut g, features, texts)?;
    let ce = g.cross_entropy(out.logits, targets.class_target.clone());
    let bce = g.bce(out.loc.fg_prob, targets.fg_target.clone());
    let diou = g.diou(out.loc.d_start, out.loc.d_end, targets.gt_interval.clone());
    let parts = LossParts {
        total: 0.0,
        classification: g.scalar(ce),
        foreground: g.scalar(bce),
        localization: g.scalar(diou),
    };
    let a = g.scale(ce, weights.classification);
    let b = g.scale(bce, weights.foreground);
    let c = g.scale(diou, weights.localization);
    let ab = g.add(a, b);
    let total = g.add(ab, c);
    let parts = LossParts {
        total: g.scalar(total),
        ..parts
    };
    let mut grads = g.backward(total).into_params();
    let dense = store
        .ids()
        .map(|id| {
            grads
                .remove(&id)
                .unwrap_or_else(|| Array2::zeros(store.value(id).dim()))
        })
        .collect();
    Ok((parts, dense))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: LossParts,
    pub learning_rate: f64,
}

pub fn loss_curve_csv(curve: &[EpochLoss]) -> String {
    let mut s = String::from("epoch,total,classification,foreground,localization,learning_rate\n");
    for e in curve {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.epoch, e.loss.total, e.loss.classification, e.loss.foreground, e.loss.localization, e.learning_rate
        );
    }
    s
}

/// Trained parameters with the configuration that produced them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ParamStore,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    /// Classes the model was trained on.
    pub seen: Vec<String>,
}

impl Checkpoint {
    /// Rebuilds the model layout and loads the stored values into it.
    pub fn model(&self) -> Result<(PdaModel, ParamStore)> {
        let mut store = ParamStore::default();
        let model = PdaModel::new(self.config.model_config(), &mut store, self.config.seed)?;
        store.load_from(&self.params)?;
        Ok((model, store))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut ckpt: Self =
            serde_json::from_str(&text).map_err(|e| PdaError::Checkpoint(format!("{}: {e}", path.display())))?;
        ckpt.params.reindex();
        ckpt.config.validate()?;
        Ok(ckpt)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub curve: Vec<EpochLoss>,
}

struct Example<'a> {
    seq: &'a FeatureSequence,
    targets: SupervisionTargets,
}

fn prepare_examples<'a>(dataset: &'a Dataset, videos: &[&VideoEntry], vocab: &[String]) -> Result<Vec<Example<'a>>> {
    videos
        .iter()
        .map(|v| {
            let seq = dataset.sequence(&v.video_id)?;
            let segs = dataset.manifest.snippet_segments(v, vocab);
            let targets = SupervisionTargets::from_segments(seq.len(), &segs, vocab.len())?;
            Ok(Example { seq, targets })
        })
        .collect()
}

/// The model as initialized for `cfg`, before any training.
pub fn initial_checkpoint(cfg: &TrainConfig, seen: &[String]) -> Result<Checkpoint> {
    cfg.validate()?;
    let mut store = ParamStore::default();
    PdaModel::new(cfg.model_config(), &mut store, cfg.seed)?;
    Ok(Checkpoint {
        config: cfg.clone(),
        params: store,
        epoch: 0,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        seen: seen.to_vec(),
    })
}

/// Trains on the videos whose annotations are all in `seen`, reading
/// descriptions only for `seen`.
pub fn train(
    dataset: &Dataset,
    seen: &[String],
    cfg: &TrainConfig,
    descs: &dyn DescriptionSource,
    enc: &dyn TextEncoder,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if seen.is_empty() {
        return Err(PdaError::Data("no seen classes to train on".into()));
    }
    for c in seen {
        if !dataset.manifest.vocabulary.contains(c) {
            return Err(PdaError::Data(format!(
                "seen class {c} is not in the manifest vocabulary"
            )));
        }
    }
    let mut store = ParamStore::default();
    let model = PdaModel::new(cfg.model_config(), &mut store, cfg.seed)?;
    let texts = model.class_texts(seen, descs, enc)?;
    let videos = dataset.manifest.videos_with_only(seen);
    if videos.is_empty() {
        return Err(PdaError::Data(
            "no training videos carry only seen-class annotations".into(),
        ));
    }
    let examples = prepare_examples(dataset, &videos, seen)?;
    info!(
        "training on {} videos, {} classes, {} parameters",
        examples.len(),
        seen.len(),
        store.num_scalars()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&store);
    let steps_per_epoch = examples.len().div_ceil(cfg.batch_size);
    let mut step = 0usize;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = LossParts::default();
        let mut lr = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(LossParts, Vec<Array2<f64>>)>> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &examples[i];
                    loss_and_gradients(&model, &store, &ex.seq.features, &ex.targets, &texts, cfg.loss_weights)
                })
                .collect();
            let mut sum: Option<Vec<Array2<f64>>> = None;
            for r in results {
                let (parts, grads) = r.map_err(|e| match e {
                    PdaError::NonFinite { .. } => PdaError::Divergence {
                        epoch,
                        step,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
                if !parts.total.is_finite() {
                    return Err(PdaError::Divergence {
                        epoch,
                        step,
                        loss: parts.total,
                    });
                }
                epoch_loss += parts;
                match &mut sum {
                    None => sum = Some(grads),
                    Some(acc) => acc.iter_mut().zip(&grads).for_each(|(a, g)| *a += g),
                }
            }
            let mut grads = sum.expect("batches are non-empty");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.mapv_inplace(|v| v * inv));
            clip_global_norm(&mut grads, cfg.grad_clip);
            lr = cfg.learning_rate_at(step, steps_per_epoch);
            adam.update(&mut store, &grads, lr);
            step += 1;
        }
        let mean = epoch_loss.scaled(1.0 / examples.len() as f64);
        debug!("epoch {epoch}: loss {:.6}", mean.total);
        curve.push(EpochLoss {
            epoch,
            loss: mean,
            learning_rate: lr,
        });
    }
    Ok(TrainOutput {
        checkpoint: Checkpoint {
            config: cfg.clone(),
            params: store,
            epoch: cfg.epochs,
            rng,
            seen: seen.to_vec(),
        },
        curve,
    })
}

/// Detections for `videos` over `vocab`, built only from `vocab`'s texts.
pub fn detect(
    ckpt: &Checkpoint,
    dataset: &Dataset,
    videos: &[&VideoEntry],
    vocab: &[String],
    descs: &dyn DescriptionSource,
    enc: &dyn TextEncoder,
) -> Result<Vec<Detection>> {
    if vocab.is_empty() {
        return Err(PdaError::InvalidArgument("test vocabulary is empty".into()));
    }
    let (model, store) = ckpt.model()?;
    let texts = model.class_texts(vocab, descs, enc)?;
    let pp = ckpt.config.postprocess;
    let per_video: Vec<Vec<Detection>> = videos
        .par_iter()
        .map(|v| {
            let seq = dataset.sequence(&v.video_id)?;
            let pred = model.predict(&store, &seq.features, &texts)?;
            let timing = dataset.manifest.timing(v);
            let props = assemble_proposals(&pred.scores, &pred.loc, &timing, vocab, pp.top_k, pp.score_floor)?;
            soft_nms_classwise(&props, pp.sigma, pp.prune)
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<Detection> = per_video.into_iter().flatten().collect();
    crate::metrics::sort_detections(&mut out);
    Ok(out)
}

/// mAP of `dets` against the annotations of `vocab` in `videos`.
pub fn evaluate(
    dets: &[Detection],
    dataset: &Dataset,
    videos: &[&VideoEntry],
    vocab: &[String],
    cfg: &EvalConfig,
) -> Result<MapResult> {
    let gts = dataset.manifest.ground_truth(videos, vocab);
    mean_ap(dets, &gts, cfg)
}

/// Train on `split.seen`, detect and evaluate on the videos of `split.unseen`.
pub fn run_split(
    dataset: &Dataset,
    split: &OpenVocabSplit,
    cfg: &TrainConfig,
    descs: &dyn DescriptionSource,
    enc: &dyn TextEncoder,
    eval: &EvalConfig,
) -> Result<MapResult> {
    let trained = train(dataset, &split.seen, cfg, descs, enc)?;
    let test_videos = dataset.manifest.videos_with_only(&split.unseen);
    let dets = detect(&trained.checkpoint, dataset, &test_videos, &split.unseen, descs, enc)?;
    evaluate(&dets, dataset, &test_videos, &split.unseen, eval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub name: String,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    /// Avg mAP of each split.
    pub per_split: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_ablation(
    dataset: &Dataset,
    splits: &[OpenVocabSplit],
    grid: &[AblationCell],
    descs: &dyn DescriptionSource,
    enc: &dyn TextEncoder,
    eval: &EvalConfig,
) -> Result<Vec<AblationRow>> {
    if grid.is_empty() || splits.is_empty() {
        return Err(PdaError::Config(
            "ablation needs at least one cell and one split".into(),
        ));
    }
    for cell in grid {
        cell.config.validate()?;
    }
    grid.iter()
        .map(|cell| {
            let per_split = splits
                .iter()
                .map(|s| run_split(dataset, s, &cell.config, descs, enc, eval).map(|r| r.average))
                .collect::<Result<Vec<_>>>()?;
            let (mean, std) = mean_std(&per_split);
            info!("{}: avg mAP {:.4} ± {:.4}", cell.name, mean, std);
            Ok(AblationRow {
                name: cell.name.clone(),
                per_split,
                mean,
                std,
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("config,avg_map_mean,avg_map_std,n_splits\n");
    for r in rows {
        let name = if r.name.contains(',') || r.name.contains('"') {
            format!("\"{}\"", r.name.replace('"', "\"\""))
        } else {
            r.name.clone()
        };
        let _ = writeln!(s, "{},{:.6},{:.6},{}", name, r.mean, r.std, r.per_split.len());
    }
    s
}
