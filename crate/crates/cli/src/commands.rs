use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use log::info;
use pda_core::benchmark::TransferBenchmark;
use pda_core::data::{generate_synthetic, make_splits, Dataset, SyntheticSpec};
use pda_core::metrics::EvalConfig;
use pda_core::pipeline::{self, ablation_csv, loss_curve_csv, run_ablation, AblationCell, Checkpoint, TrainConfig};
use pda_core::postprocess::{from_json_lines, to_json_lines};
use pda_core::semantics::{
    decompose_label, encode_texts, DescriptionCache, JsonFileStore, LlmClient, OfflineClient, PhaseSet, StubEncoder,
    TextSource,
};
use pda_core::{PdaError, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, load, pick_split, require, set, set_opt, vocabulary};
use crate::llm::{HttpClient, ProviderConfig};
use crate::{AblateArgs, DecomposeArgs, DetectArgs, EncodeArgs, EvalArgs, SplitArgs, SynthArgs, TrainArgs, TrainFlags};

fn read_encoder(path: &std::path::Path) -> Result<StubEncoder> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| PdaError::Data(format!("{}: {e}", path.display())))
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthConfig {
    out: Option<PathBuf>,
    spec: SyntheticSpec,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = load(a.config.as_deref())?;
    set_opt(&mut cfg.out, a.out);
    cfg.spec.seed = a.seed;
    set(&mut cfg.spec.n_classes, a.n_classes);
    set(&mut cfg.spec.n_videos, a.n_videos);
    set(&mut cfg.spec.noise_std, a.noise_std);
    if a.shared_pairs {
        cfg.spec = cfg.spec.with_default_pairs();
    }
    let out = require(&cfg.out, "--out")?;
    let bundle = generate_synthetic(&cfg.spec)?;
    let manifest = bundle.dataset.save(out)?;
    bundle.descriptions.save(&out.join("descriptions.json"))?;
    config::write(&out.join("encoder.json"), &serde_json::to_string(&bundle.encoder)?)?;
    config::write(&out.join("spec.json"), &serde_json::to_string_pretty(&cfg.spec)?)?;
    info!(
        "wrote {} videos over {} classes to {}",
        bundle.dataset.manifest.videos.len(),
        bundle.dataset.manifest.vocabulary.len(),
        manifest.display()
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DecomposeConfig {
    cache: Option<PathBuf>,
    manifest: Option<PathBuf>,
    labels: Vec<String>,
    phases: PhaseSet,
    provider: ProviderConfig,
    offline: bool,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            cache: None,
            manifest: None,
            labels: Vec::new(),
            phases: PhaseSet::canonical(),
            provider: ProviderConfig::default(),
            offline: false,
        }
    }
}

pub fn decompose(a: DecomposeArgs) -> Result<()> {
    let mut cfg: DecomposeConfig = load(a.config.as_deref())?;
    set_opt(&mut cfg.cache, a.cache);
    set_opt(&mut cfg.manifest, a.manifest);
    if !a.labels.is_empty() {
        cfg.labels = a.labels;
    }
    set(&mut cfg.phases, a.phases);
    set(&mut cfg.provider.provider, a.provider);
    set(&mut cfg.provider.model, a.model);
    set(&mut cfg.provider.endpoint, a.endpoint);
    cfg.offline |= a.offline;

    let cache = require(&cfg.cache, "--cache")?;
    let mut labels = cfg.labels.clone();
    if let Some(m) = &cfg.manifest {
        labels.extend(pda_core::data::DatasetManifest::load(m)?.vocabulary);
    }
    if labels.is_empty() {
        return Err(PdaError::Config("no labels; pass --labels or --manifest".into()));
    }
    let mut store = JsonFileStore::open(cache, cfg.provider.identity())?;
    let client: Box<dyn LlmClient> = if cfg.offline {
        Box::new(OfflineClient {
            identity: cfg.provider.identity(),
        })
    } else {
        Box::new(HttpClient::from_env(cfg.provider.clone())?)
    };
    for label in &labels {
        let set = decompose_label(label, &cfg.phases, client.as_ref(), &mut store)?;
        info!("{label}: {} phase descriptions", set.descriptions.len());
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EncodeConfig {
    descriptions: Option<PathBuf>,
    encoder: Option<PathBuf>,
    manifest: Option<PathBuf>,
    vocab: Vec<String>,
    phases: PhaseSet,
    out: Option<PathBuf>,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            descriptions: None,
            encoder: None,
            manifest: None,
            vocab: Vec::new(),
            phases: PhaseSet::canonical(),
            out: None,
        }
    }
}

#[derive(Serialize)]
struct EncodedBanks {
    classes: Vec<String>,
    dim: usize,
    /// Keyed by phase tag, plus `label` and `merged`.
    banks: BTreeMap<String, Vec<Vec<f64>>>,
}

pub fn encode(a: EncodeArgs) -> Result<()> {
    let mut cfg: EncodeConfig = load(a.config.as_deref())?;
    set_opt(&mut cfg.descriptions, a.descriptions);
    set_opt(&mut cfg.encoder, a.encoder);
    set_opt(&mut cfg.manifest, a.manifest);
    if !a.vocab.is_empty() {
        cfg.vocab = a.vocab;
    }
    set(&mut cfg.phases, a.phases);
    set_opt(&mut cfg.out, a.out);

    let descs = DescriptionCache::load(require(&cfg.descriptions, "--descriptions")?)?;
    let enc = read_encoder(require(&cfg.encoder, "--encoder")?)?;
    let out = require(&cfg.out, "--out")?;
    let vocab = match (&cfg.manifest, cfg.vocab.is_empty()) {
        (_, false) => cfg.vocab.clone(),
        (Some(m), true) => pda_core::data::DatasetManifest::load(m)?.vocabulary,
        (None, true) => return Err(PdaError::Config("no classes; pass --vocab or --manifest".into())),
    };
    let mut sources: Vec<TextSource> = cfg.phases.phases().iter().map(|&p| TextSource::Phase(p)).collect();
    sources.extend([TextSource::Label, TextSource::Merged]);
    let mut banks = BTreeMap::new();
    for source in sources {
        let m = encode_texts(&vocab, source, &cfg.phases, &descs, &enc)?;
        banks.insert(source.to_string(), m.rows().into_iter().map(|r| r.to_vec()).collect());
    }
    let encoded = EncodedBanks {
        classes: vocab,
        dim: pda_core::semantics::TextEncoder::dim(&enc),
        banks,
    };
    config::write(out, &serde_json::to_string(&encoded)?)?;
    info!("encoded {} classes to {}", encoded.classes.len(), out.display());
    Ok(())
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SplitConfig {
    manifest: Option<PathBuf>,
    fraction_seen: f64,
    n_splits: usize,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            fraction_seen: 0.5,
            n_splits: 10,
            seed: 0,
            out: None,
        }
    }
}

pub fn split(a: SplitArgs) -> Result<()> {
    let mut cfg: SplitConfig = load(a.config.as_deref())?;
    set_opt(&mut cfg.manifest, a.manifest);
    set(&mut cfg.fraction_seen, a.fraction_seen);
    set(&mut cfg.n_splits, a.n_splits);
    set(&mut cfg.seed, a.seed);
    set_opt(&mut cfg.out, a.out);
    let manifest = pda_core::data::DatasetManifest::load(require(&cfg.manifest, "--manifest")?)?;
    let splits = make_splits(&manifest.vocabulary, cfg.fraction_seen, cfg.n_splits, cfg.seed)?;
    let out = require(&cfg.out, "--out")?;
    config::write(out, &serde_json::to_string_pretty(&splits)?)?;
    info!("wrote {} splits to {}", splits.len(), out.display());
    Ok(())
}

fn apply_train_flags(cfg: &mut TrainConfig, f: TrainFlags) {
    set(&mut cfg.epochs, f.epochs);
    set(&mut cfg.warmup_epochs, f.warmup_epochs);
    set(&mut cfg.learning_rate, f.lr);
    set(&mut cfg.batch_size, f.batch_size);
    set(&mut cfg.scheduler, f.scheduler);
    set(&mut cfg.phase_set, f.phases);
    set(&mut cfg.filtering, f.filtering);
    set(&mut cfg.alignment, f.alignment);
    set(&mut cfg.weight_mode, f.weight_mode);
}

/// Inputs shared by the commands that need data, texts and a split.
#[derive(Default, Deserialize)]
#[serde(default)]
struct Inputs {
    manifest: Option<PathBuf>,
    splits: Option<PathBuf>,
    split_index: usize,
    descriptions: Option<PathBuf>,
    encoder: Option<PathBuf>,
}

impl Inputs {
    fn override_with(
        &mut self,
        manifest: Option<PathBuf>,
        splits: Option<PathBuf>,
        split_index: Option<usize>,
        descriptions: Option<PathBuf>,
        encoder: Option<PathBuf>,
    ) {
        set_opt(&mut self.manifest, manifest);
        set_opt(&mut self.splits, splits);
        set(&mut self.split_index, split_index);
        set_opt(&mut self.descriptions, descriptions);
        set_opt(&mut self.encoder, encoder);
    }

    fn dataset(&self) -> Result<Dataset> {
        Dataset::load(require(&self.manifest, "--manifest")?)
    }

    fn split(&self) -> Result<Option<pda_core::data::OpenVocabSplit>> {
        self.splits
            .as_deref()
            .map(|p| pick_split(p, self.split_index))
            .transpose()
    }

    fn texts(&self) -> Result<(DescriptionCache, StubEncoder)> {
        Ok((
            DescriptionCache::load(require(&self.descriptions, "--descriptions")?)?,
            read_encoder(require(&self.encoder, "--encoder")?)?,
        ))
    }
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    #[serde(flatten)]
    inputs: Inputs,
    out: Option<PathBuf>,
    loss_csv: Option<PathBuf>,
    train: TrainConfig,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainFile = load(a.config.as_deref())?;
    cfg.inputs
        .override_with(a.manifest, a.splits, a.split_index, a.descriptions, a.encoder);
    set_opt(&mut cfg.out, a.out);
    set_opt(&mut cfg.loss_csv, a.loss_csv);
    cfg.train.seed = a.seed;
    apply_train_flags(&mut cfg.train, a.flags);
    cfg.train.validate()?;

    let out = require(&cfg.out, "--out")?.to_path_buf();
    let dataset = cfg.inputs.dataset()?;
    let split = cfg.inputs.split()?;
    let seen = vocabulary(&[], split.as_ref(), true, &dataset.manifest);
    let (descs, enc) = cfg.inputs.texts()?;
    let trained = pipeline::train(&dataset, &seen, &cfg.train, &descs, &enc)?;
    trained.checkpoint.save(&out)?;
    let loss_path = cfg.loss_csv.unwrap_or_else(|| out.with_extension("loss.csv"));
    config::write(&loss_path, &loss_curve_csv(&trained.curve))?;
    if let Some(last) = trained.curve.last() {
        info!("final loss {:.4}; checkpoint {}", last.loss.total, out.display());
    }
    Ok(())
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DetectFile {
    #[serde(flatten)]
    inputs: Inputs,
    checkpoint: Option<PathBuf>,
    vocab: Vec<String>,
    out: Option<PathBuf>,
}

pub fn detect(a: DetectArgs) -> Result<()> {
    let mut cfg: DetectFile = load(a.config.as_deref())?;
    cfg.inputs
        .override_with(a.manifest, a.splits, a.split_index, a.descriptions, a.encoder);
    set_opt(&mut cfg.checkpoint, a.checkpoint);
    set_opt(&mut cfg.out, a.out);
    if !a.vocab.is_empty() {
        cfg.vocab = a.vocab;
    }
    let ckpt = Checkpoint::load(require(&cfg.checkpoint, "--checkpoint")?)?;
    let out = require(&cfg.out, "--out")?;
    let dataset = cfg.inputs.dataset()?;
    let split = cfg.inputs.split()?;
    let vocab = vocabulary(&cfg.vocab, split.as_ref(), false, &dataset.manifest);
    let (descs, enc) = cfg.inputs.texts()?;
    let videos = dataset.manifest.videos_with_only(&vocab);
    let dets = pipeline::detect(&ckpt, &dataset, &videos, &vocab, &descs, &enc)?;
    config::write(out, &to_json_lines(&dets))?;
    info!("{} detections over {} videos", dets.len(), videos.len());
    Ok(())
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalFile {
    manifest: Option<PathBuf>,
    splits: Option<PathBuf>,
    split_index: usize,
    detections: Option<PathBuf>,
    vocab: Vec<String>,
    thresholds: Vec<f64>,
    out: Option<PathBuf>,
    per_class: Option<PathBuf>,
}

impl Default for EvalFile {
    fn default() -> Self {
        Self {
            manifest: None,
            splits: None,
            split_index: 0,
            detections: None,
            vocab: Vec::new(),
            thresholds: EvalConfig::thumos().thresholds,
            out: None,
            per_class: None,
        }
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg: EvalFile = load(a.config.as_deref())?;
    set_opt(&mut cfg.manifest, a.manifest);
    set_opt(&mut cfg.splits, a.splits);
    set(&mut cfg.split_index, a.split_index);
    set_opt(&mut cfg.detections, a.detections);
    set_opt(&mut cfg.out, a.out);
    set_opt(&mut cfg.per_class, a.per_class);
    if !a.vocab.is_empty() {
        cfg.vocab = a.vocab;
    }
    if !a.thresholds.is_empty() {
        cfg.thresholds = a.thresholds;
    }
    let eval_cfg = EvalConfig::new(cfg.thresholds.clone())?;
    let manifest = pda_core::data::DatasetManifest::load(require(&cfg.manifest, "--manifest")?)?;
    let split = cfg
        .splits
        .as_deref()
        .map(|p| pick_split(p, cfg.split_index))
        .transpose()?;
    let vocab = vocabulary(&cfg.vocab, split.as_ref(), false, &manifest);
    let dets = from_json_lines(&fs::read_to_string(require(&cfg.detections, "--detections")?)?)?;
    let videos = manifest.videos_with_only(&vocab);
    let gts = manifest.ground_truth(&videos, &vocab);
    let result = pda_core::metrics::mean_ap(&dets, &gts, &eval_cfg)?;
    match &cfg.out {
        Some(p) => config::write(p, &result.to_csv())?,
        None => print!("{}", result.to_csv()),
    }
    if let Some(p) = &cfg.per_class {
        config::write(p, &result.per_class_csv())?;
    }
    info!("average mAP {:.4}", result.average);
    Ok(())
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AblateFile {
    #[serde(flatten)]
    inputs: Inputs,
    /// Explicit grid; ignored by the phase sweep and the transfer benchmark.
    grid: Vec<AblationCell>,
    /// Base settings for the phase sweep.
    train: TrainConfig,
    eval: Option<EvalConfig>,
    transfer: TransferBenchmark,
    out: Option<PathBuf>,
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut cfg: AblateFile = load(a.config.as_deref())?;
    cfg.inputs
        .override_with(a.manifest, a.splits, None, a.descriptions, a.encoder);
    set_opt(&mut cfg.out, a.out);
    let out = require(&cfg.out, "--out")?.to_path_buf();

    let rows = if a.transfer {
        if let Some(seed) = a.seed {
            cfg.transfer.seeds = (seed..seed + cfg.transfer.seeds.len() as u64).collect();
        }
        apply_train_flags(&mut cfg.transfer.train, a.flags);
        let cells = cfg.transfer.cells()?;
        cfg.transfer.run(&cells)?
    } else {
        set(&mut cfg.train.seed, a.seed);
        apply_train_flags(&mut cfg.train, a.flags);
        let grid = if a.phase_sweep {
            (1..=4)
                .map(|n| {
                    Ok(AblationCell {
                        name: format!("phases_{n}"),
                        config: TrainConfig {
                            phase_set: PhaseSet::with_count(n)?,
                            ..cfg.train.clone()
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            cfg.grid.clone()
        };
        let dataset = cfg.inputs.dataset()?;
        let splits = config::load_splits(require(&cfg.inputs.splits, "--splits")?)?;
        let (descs, enc) = cfg.inputs.texts()?;
        let eval = cfg.eval.clone().unwrap_or_else(EvalConfig::thumos);
        run_ablation(&dataset, &splits, &grid, &descs, &enc, &eval)?
    };
    config::write(&out, &ablation_csv(&rows))?;
    for r in &rows {
        info!("{}: {:.4} ± {:.4}", r.name, r.mean, r.std);
    }
    Ok(())
}
