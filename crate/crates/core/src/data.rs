//! Dataset files, open-vocabulary splits, and the synthetic phase-prototype
//! benchmark.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::backbone::FeatureSequence;
use crate::error::{PdaError, Result};
use crate::metrics::GroundTruth;
use crate::objectives::SnippetSegment;
use crate::postprocess::VideoTiming;
use crate::semantics::{illustrative_descriptions, DescriptionCache, Phase, PhaseDescriptionSet, StubEncoder};

pub const FEATURE_MAGIC: &[u8; 4] = b"PDAF";
pub const FEATURE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start_sec: f64,
    pub end_sec: f64,
    pub label: String,
}

pub type AnnotationSet = Vec<Annotation>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    /// Relative to the manifest's directory.
    pub feature_path: String,
    pub duration_seconds: f64,
    pub frame_rate: f64,
    pub snippet_stride: u32,
}

impl VideoEntry {
    pub fn seconds_per_snippet(&self) -> f64 {
        self.snippet_stride as f64 / self.frame_rate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub videos: Vec<VideoEntry>,
    pub annotations: BTreeMap<String, AnnotationSet>,
    pub vocabulary: Vec<String>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let vocab: BTreeSet<&str> = self.vocabulary.iter().map(String::as_str).collect();
        if vocab.len() != self.vocabulary.len() {
            return Err(PdaError::Data("vocabulary has duplicate classes".into()));
        }
        let mut ids = BTreeSet::new();
        for v in &self.videos {
            if !ids.insert(v.video_id.as_str()) {
                return Err(PdaError::Data(format!("duplicate video id {}", v.video_id)));
            }
            if !(v.duration_seconds > 0.0) || !(v.frame_rate > 0.0) || v.snippet_stride == 0 {
                return Err(PdaError::Data(format!(
                    "video {}: duration, frame rate and stride must be positive",
                    v.video_id
                )));
            }
        }
        for (vid, anns) in &self.annotations {
            let video = self
                .video(vid)
                .ok_or_else(|| PdaError::Data(format!("annotations for unknown video {vid}")))?;
            for a in anns {
                if !vocab.contains(a.label.as_str()) {
                    return Err(PdaError::Data(format!(
                        "video {vid}: label {} not in vocabulary",
                        a.label
                    )));
                }
                if !(0.0 <= a.start_sec && a.start_sec < a.end_sec && a.end_sec <= video.duration_seconds) {
                    return Err(PdaError::Data(format!(
                        "video {vid}: segment [{}, {}] outside [0, {}]",
                        a.start_sec, a.end_sec, video.duration_seconds
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn video(&self, id: &str) -> Option<&VideoEntry> {
        self.videos.iter().find(|v| v.video_id == id)
    }

    pub fn annotations_for(&self, id: &str) -> &[Annotation] {
        self.annotations.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Videos with at least one annotation, all of whose labels are in `classes`.
    pub fn videos_with_only(&self, classes: &[String]) -> Vec<&VideoEntry> {
        let allowed: BTreeSet<&str> = classes.iter().map(String::as_str).collect();
        self.videos
            .iter()
            .filter(|v| {
                let anns = self.annotations_for(&v.video_id);
                !anns.is_empty() && anns.iter().all(|a| allowed.contains(a.label.as_str()))
            })
            .collect()
    }

    /// Ground-truth segments of `classes` within `videos`.
    pub fn ground_truth(&self, videos: &[&VideoEntry], classes: &[String]) -> Vec<GroundTruth> {
        let allowed: BTreeSet<&str> = classes.iter().map(String::as_str).collect();
        videos
            .iter()
            .flat_map(|v| {
                self.annotations_for(&v.video_id)
                    .iter()
                    .filter(|a| allowed.contains(a.label.as_str()))
                    .map(|a| GroundTruth {
                        video_id: v.video_id.clone(),
                        start: a.start_sec,
                        end: a.end_sec,
                        label: a.label.clone(),
                    })
            })
            .collect()
    }

    /// Annotations in snippet units with class indices into `vocab`; labels
    /// outside `vocab` are skipped.
    pub fn snippet_segments(&self, video: &VideoEntry, vocab: &[String]) -> Vec<SnippetSegment> {
        let sps = video.seconds_per_snippet();
        self.annotations_for(&video.video_id)
            .iter()
            .filter_map(|a| {
                let class = vocab.iter().position(|c| *c == a.label)?;
                Some(SnippetSegment {
                    start: a.start_sec / sps,
                    end: a.end_sec / sps,
                    class,
                })
            })
            .collect()
    }

    pub fn timing(&self, video: &VideoEntry) -> VideoTiming {
        VideoTiming {
            video_id: video.video_id.clone(),
            snippet_stride: video.snippet_stride,
            frame_rate: video.frame_rate,
            duration: video.duration_seconds,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let m: Self = serde_json::from_str(&text).map_err(|e| PdaError::Data(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn load_annotations(path: &Path) -> Result<BTreeMap<String, AnnotationSet>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| PdaError::Data(format!("{}: {e}", path.display())))
}

pub fn save_annotations(anns: &BTreeMap<String, AnnotationSet>, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(anns)?)?;
    Ok(())
}

/// Serializes `features` in the PDAF layout.
pub fn encode_features(features: &Array2<f64>) -> Result<Vec<u8>> {
    let (t, d) = features.dim();
    let t32 = u32::try_from(t).map_err(|_| PdaError::Format("T does not fit in u32".into()))?;
    let d32 = u32::try_from(d).map_err(|_| PdaError::Format("D does not fit in u32".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t * d);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&t32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    for v in features.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(PdaError::Format("feature file shorter than its header".into()));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(PdaError::Format("bad feature file magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_VERSION {
        return Err(PdaError::Format(format!("unsupported feature file version {version}")));
    }
    let t = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    if t == 0 || d == 0 {
        return Err(PdaError::Format(format!(
            "feature file has T={t}, D={d}; both must be positive"
        )));
    }
    let expected = t
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| PdaError::Format("feature dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(PdaError::Format(format!(
            "feature file is {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok(Array2::from_shape_vec((t, d), values).expect("length checked"))
}

pub fn write_features(seq: &FeatureSequence, path: &Path) -> Result<()> {
    let bytes = encode_features(&seq.features)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_features(path: &Path, video_id: &str, snippet_stride: u32) -> Result<FeatureSequence> {
    let bytes = fs::read(path)?;
    let features = decode_features(&bytes).map_err(|e| match e {
        PdaError::Format(m) => PdaError::Format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    FeatureSequence::new(video_id, features, snippet_stride)
}

/// A manifest together with every video's features.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub features: BTreeMap<String, FeatureSequence>,
}

impl Dataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut features = BTreeMap::new();
        for v in &manifest.videos {
            let seq = read_features(&root.join(&v.feature_path), &v.video_id, v.snippet_stride)?;
            features.insert(v.video_id.clone(), seq);
        }
        Ok(Self { manifest, features })
    }

    /// Writes `manifest.json` and one feature file per video under `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        for v in &self.manifest.videos {
            let seq = self
                .features
                .get(&v.video_id)
                .ok_or_else(|| PdaError::Data(format!("no features for {}", v.video_id)))?;
            let path = dir.join(&v.feature_path);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            write_features(seq, &path)?;
        }
        let manifest_path = dir.join("manifest.json");
        self.manifest.save(&manifest_path)?;
        Ok(manifest_path)
    }

    pub fn sequence(&self, video_id: &str) -> Result<&FeatureSequence> {
        self.features
            .get(video_id)
            .ok_or_else(|| PdaError::Data(format!("no features for {video_id}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenVocabSplit {
    pub seed: u64,
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    pub fraction_seen: f64,
}

/// `n_splits` seeded shuffles of `vocab`; split `i` uses seed `seed + i`.
/// The seen count is `round(fraction * |vocab|)`.
pub fn make_splits(vocab: &[String], fraction_seen: f64, n_splits: usize, seed: u64) -> Result<Vec<OpenVocabSplit>> {
    let distinct: BTreeSet<&String> = vocab.iter().collect();
    if distinct.len() != vocab.len() {
        return Err(PdaError::Data("vocabulary has duplicate classes".into()));
    }
    if !(fraction_seen > 0.0 && fraction_seen < 1.0) {
        return Err(PdaError::Config(format!(
            "seen fraction {fraction_seen} must lie in (0, 1)"
        )));
    }
    let n_seen = (fraction_seen * vocab.len() as f64).round() as usize;
    if n_seen == 0 || n_seen >= vocab.len() {
        return Err(PdaError::Data(format!(
            "{} classes with seen fraction {fraction_seen} leave an empty side",
            vocab.len()
        )));
    }
    Ok((0..n_splits as u64)
        .map(|i| {
            let split_seed = seed.wrapping_add(i);
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
            let mut shuffled = vocab.to_vec();
            shuffled.shuffle(&mut rng);
            let unseen = shuffled.split_off(n_seen);
            OpenVocabSplit {
                seed: split_seed,
                seen: shuffled,
                unseen,
                fraction_seen,
            }
        })
        .collect())
}

/// Two classes that share the prototype (and description) of one phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedPhase {
    pub class_a: usize,
    pub class_b: usize,
    pub phase: Phase,
}

/// Synthetic benchmark parameters. Noise magnitudes are relative to the unit
/// prototype norm: a noise level of `s` adds an isotropic Gaussian whose
/// expected squared norm is `s²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_videos: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub d_in: usize,
    pub phase_prototype_dim: usize,
    pub shared_phase_pairs: Vec<SharedPhase>,
    pub noise_std: f64,
    pub background_std: f64,
    /// Weight of a direction common to every action prototype.
    pub common_component: f64,
    /// Per phase (start, middle, end), the weight of a direction shared by
    /// every class in that phase; larger values make the phase less
    /// distinctive.
    pub phase_generic: [f64; 3],
    /// Noise on each description word vector.
    pub text_noise_std: f64,
    /// Noise on the bare label token.
    pub label_noise_std: f64,
    pub words_per_phase: usize,
    pub instance_min: usize,
    pub instance_max: usize,
    pub max_instances: usize,
    pub frame_rate: f64,
    pub snippet_stride: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 8,
            n_videos: 200,
            t_min: 40,
            t_max: 80,
            d_in: 32,
            phase_prototype_dim: 32,
            shared_phase_pairs: Vec::new(),
            noise_std: 0.3,
            background_std: 0.3,
            common_component: 0.5,
            phase_generic: [0.0; 3],
            text_noise_std: 0.1,
            label_noise_std: 1.0,
            words_per_phase: 3,
            instance_min: 8,
            instance_max: 20,
            max_instances: 3,
            frame_rate: 30.0,
            snippet_stride: 15,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Four pairs `(k, k + n/2)` sharing start, middle, end, start.
    pub fn with_default_pairs(mut self) -> Self {
        let half = self.n_classes / 2;
        let phases = [Phase::Start, Phase::Middle, Phase::End, Phase::Start];
        self.shared_phase_pairs = (0..half.min(4))
            .map(|k| SharedPhase {
                class_a: k,
                class_b: k + half,
                phase: phases[k],
            })
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_classes", self.n_classes),
            ("n_videos", self.n_videos),
            ("t_min", self.t_min),
            ("d_in", self.d_in),
            ("phase_prototype_dim", self.phase_prototype_dim),
            ("words_per_phase", self.words_per_phase),
            ("max_instances", self.max_instances),
            ("snippet_stride", self.snippet_stride as usize),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PdaError::Config(format!("synthetic {name} must be positive")));
            }
        }
        if self.t_max < self.t_min {
            return Err(PdaError::Config("synthetic t_max below t_min".into()));
        }
        if self.d_in < self.phase_prototype_dim {
            return Err(PdaError::Config(
                "synthetic d_in must be at least the prototype dimension".into(),
            ));
        }
        if self.instance_min < 3 || self.instance_max < self.instance_min {
            return Err(PdaError::Config(
                "synthetic instances need 3 <= instance_min <= instance_max".into(),
            ));
        }
        if self.instance_max > self.t_min {
            return Err(PdaError::Data(format!(
                "instances of up to {} snippets do not fit videos of {} snippets",
                self.instance_max, self.t_min
            )));
        }
        if !(self.frame_rate > 0.0) {
            return Err(PdaError::Config("synthetic frame_rate must be positive".into()));
        }
        let noises = [
            self.noise_std,
            self.background_std,
            self.common_component,
            self.text_noise_std,
            self.label_noise_std,
            self.phase_generic[0],
            self.phase_generic[1],
            self.phase_generic[2],
        ];
        if noises.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(PdaError::Config(
                "synthetic noise levels must be finite and non-negative".into(),
            ));
        }
        for p in &self.shared_phase_pairs {
            if p.class_a >= self.n_classes || p.class_b >= self.n_classes || p.class_a == p.class_b {
                return Err(PdaError::Config(format!(
                    "shared phase pair ({}, {}) does not name two distinct classes",
                    p.class_a, p.class_b
                )));
            }
            if !matches!(p.phase, Phase::Start | Phase::Middle | Phase::End) {
                return Err(PdaError::Config(format!(
                    "shared phase {} must be start, middle or end",
                    p.phase
                )));
            }
        }
        Ok(())
    }

    pub fn class_name(c: usize) -> String {
        format!("Action{c:02}")
    }
}

/// Everything the synthetic generator produces.
#[derive(Clone, Debug)]
pub struct SyntheticBundle {
    pub dataset: Dataset,
    pub descriptions: DescriptionCache,
    pub encoder: StubEncoder,
    /// Unit prototypes indexed `[class][k]` for start, middle, end.
    pub prototypes: Vec<[Vec<f64>; 3]>,
}

/// Words that carry no class information in generated descriptions.
pub const TEMPLATE_WORDS: [&str; 9] = [
    "a", "video", "of", "people's", "motion", "that", "the", "person", "would",
];

const PROTO_PHASES: [Phase; 3] = [Phase::Start, Phase::Middle, Phase::End];

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    let s = scale / (dim as f64).sqrt();
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * s
        })
        .collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

fn plus(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Snippet counts of the start, middle and end thirds of an instance.
fn phase_lengths(len: usize) -> [usize; 3] {
    let base = len / 3;
    let rem = len % 3;
    [0, 1, 2].map(|i| base + usize::from(i < rem))
}

/// The shipped description cache for `spec`: the illustrative actions plus
/// every synthetic class. Texts do not depend on the seed.
pub fn bundled_descriptions(spec: &SyntheticSpec) -> Result<DescriptionCache> {
    let mut cache = illustrative_descriptions();
    cache.merge(&generate_synthetic(spec)?.descriptions);
    Ok(cache)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticBundle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pd = spec.phase_prototype_dim;
    let n = spec.n_classes;

    // a phase is owned by the lowest class it is shared with
    let mut owner: Vec<[usize; 3]> = (0..n).map(|c| [c; 3]).collect();
    loop {
        let mut changed = false;
        for p in &spec.shared_phase_pairs {
            let k = PROTO_PHASES.iter().position(|&q| q == p.phase).expect("validated");
            let o = owner[p.class_a][k].min(owner[p.class_b][k]);
            for c in [p.class_a, p.class_b] {
                if owner[c][k] != o {
                    owner[c][k] = o;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let common = normalized(gaussian(&mut rng, pd, 1.0));
    let generic: [Vec<f64>; 3] = [0, 1, 2].map(|_| normalized(gaussian(&mut rng, pd, 1.0)));
    let mut drawn: Vec<[Vec<f64>; 3]> = Vec::with_capacity(n);
    for _ in 0..n {
        drawn.push([0, 1, 2].map(|k| {
            let r = normalized(gaussian(&mut rng, pd, 1.0));
            let mixed: Vec<f64> = (0..pd)
                .map(|j| r[j] + spec.common_component * common[j] + spec.phase_generic[k] * generic[k][j])
                .collect();
            normalized(mixed)
        }));
    }
    let prototypes: Vec<[Vec<f64>; 3]> = (0..n)
        .map(|c| [0, 1, 2].map(|k| drawn[owner[c][k]][k].clone()))
        .collect();
    let global: Vec<Vec<f64>> = prototypes
        .iter()
        .map(|ps| normalized(plus(&plus(&ps[0], &ps[1]), &ps[2])))
        .collect();

    let mut encoder = StubEncoder::new(pd, spec.seed);
    for w in TEMPLATE_WORDS {
        encoder.insert_token(w, vec![0.0; pd]);
    }
    let mut descriptions = DescriptionCache::default();
    let vocabulary: Vec<String> = (0..n).map(SyntheticSpec::class_name).collect();

    // word tokens keyed by (owning class, phase tag); shared phases reuse text
    let mut word_cache: BTreeMap<(usize, &'static str), Vec<String>> = BTreeMap::new();
    let mut words_for = |rng: &mut ChaCha8Rng, encoder: &mut StubEncoder, key: (usize, &'static str), base: &[f64]| {
        word_cache
            .entry(key)
            .or_insert_with(|| {
                (0..spec.words_per_phase)
                    .map(|i| {
                        let token = format!("c{}{}{i}", key.0, key.1);
                        let v = plus(base, &gaussian(rng, pd, spec.text_noise_std));
                        encoder.insert_token(&token, v);
                        token
                    })
                    .collect()
            })
            .clone()
    };
    for c in 0..n {
        let mut texts = BTreeMap::new();
        for (k, phase) in PROTO_PHASES.iter().enumerate() {
            let o = owner[c][k];
            let words = words_for(&mut rng, &mut encoder, (o, phase.tag()), &prototypes[c][k]);
            texts.insert(*phase, format!("The person would {}.", words.join(" ")));
        }
        for (phase, tag) in [(Phase::Mid1, "mida"), (Phase::Mid2, "midb"), (Phase::Mid3, "midc")] {
            let o = owner[c][1];
            let words = words_for(&mut rng, &mut encoder, (o, tag), &prototypes[c][1]);
            texts.insert(phase, format!("The person would {}.", words.join(" ")));
        }
        let words = words_for(&mut rng, &mut encoder, (c, "glob"), &global[c]);
        texts.insert(Phase::Global, format!("The person would {}.", words.join(" ")));
        let label_vec = plus(&global[c], &gaussian(&mut rng, pd, spec.label_noise_std));
        encoder.insert_token(&vocabulary[c], label_vec);
        descriptions.insert(&PhaseDescriptionSet::new(vocabulary[c].clone(), texts)?);
    }

    let sps = spec.snippet_stride as f64 / spec.frame_rate;
    let mut videos = Vec::with_capacity(spec.n_videos);
    let mut annotations = BTreeMap::new();
    let mut features = BTreeMap::new();
    for v in 0..spec.n_videos {
        let class = v % n;
        let video_id = format!("video_{v:04}");
        let t = rng.random_range(spec.t_min..=spec.t_max);
        let n_inst = rng.random_range(1..=spec.max_instances);
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for _ in 0..100 {
            if spans.len() == n_inst {
                break;
            }
            let len = rng.random_range(spec.instance_min..=spec.instance_max);
            let start = rng.random_range(0..=t - len);
            let end = start + len;
            // keep one background snippet between instances
            if spans.iter().all(|&(a, b)| end < a || start > b) {
                spans.push((start, end));
            }
        }
        spans.sort_unstable();

        let mut x = Array2::zeros((t, spec.d_in));
        for i in 0..t {
            let bg = gaussian(&mut rng, spec.d_in, spec.background_std);
            for (j, b) in bg.into_iter().enumerate() {
                x[[i, j]] = b;
            }
        }
        let mut anns = Vec::new();
        for &(a, b) in &spans {
            let lens = phase_lengths(b - a);
            let mut i = a;
            for (k, &l) in lens.iter().enumerate() {
                for _ in 0..l {
                    let noise = gaussian(&mut rng, pd, spec.noise_std);
                    for j in 0..pd {
                        x[[i, j]] = prototypes[class][k][j] + noise[j];
                    }
                    i += 1;
                }
            }
            anns.push(Annotation {
                start_sec: a as f64 * sps,
                end_sec: (b - 1) as f64 * sps,
                label: vocabulary[class].clone(),
            });
        }
        // stored features are single precision
        x.mapv_inplace(|v| v as f32 as f64);
        videos.push(VideoEntry {
            video_id: video_id.clone(),
            feature_path: format!("features/{video_id}.pdaf"),
            duration_seconds: t as f64 * sps,
            frame_rate: spec.frame_rate,
            snippet_stride: spec.snippet_stride,
        });
        annotations.insert(video_id.clone(), anns);
        features.insert(
            video_id.clone(),
            FeatureSequence::new(video_id, x, spec.snippet_stride)?,
        );
    }
    let manifest = DatasetManifest {
        videos,
        annotations,
        vocabulary,
    };
    manifest.validate()?;
    Ok(SyntheticBundle {
        dataset: Dataset { manifest, features },
        descriptions,
        encoder,
        prototypes,
    })
}
