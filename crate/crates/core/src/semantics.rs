//! Phase-wise label decomposition: prompt construction, LLM response parsing,
//! description caching, text encoding, and per-phase projection into the
//! shared embedding space.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PdaError, Result};
use crate::nn::Linear;
use crate::params::ParamStore;

/// A temporal sub-stage of an action, or the holistic description.
///
/// Variants are declared in canonical order; `Ord` follows it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Start,
    Middle,
    Mid1,
    Mid2,
    Mid3,
    End,
    #[serde(alias = "glob")]
    Global,
}

impl Phase {
    pub const CANONICAL: [Phase; 4] = [Phase::Start, Phase::Middle, Phase::End, Phase::Global];
    pub const ALL: [Phase; 7] = [
        Phase::Start,
        Phase::Middle,
        Phase::Mid1,
        Phase::Mid2,
        Phase::Mid3,
        Phase::End,
        Phase::Global,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Phase::Start => "start",
            Phase::Middle => "middle",
            Phase::Mid1 => "mid1",
            Phase::Mid2 => "mid2",
            Phase::Mid3 => "mid3",
            Phase::End => "end",
            Phase::Global => "global",
        }
    }

    pub fn is_temporal(self) -> bool {
        self != Phase::Global
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Phase {
    type Err = PdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "start" => Ok(Phase::Start),
            "middle" | "mid" => Ok(Phase::Middle),
            "mid1" => Ok(Phase::Mid1),
            "mid2" => Ok(Phase::Mid2),
            "mid3" => Ok(Phase::Mid3),
            "end" => Ok(Phase::End),
            "global" | "glob" => Ok(Phase::Global),
            other => Err(PdaError::InvalidArgument(format!("unknown phase tag {other:?}"))),
        }
    }
}

/// An ordered set of distinct phases.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Phase>", into = "Vec<Phase>")]
pub struct PhaseSet(Vec<Phase>);

impl PhaseSet {
    pub fn new(mut phases: Vec<Phase>) -> Result<Self> {
        phases.sort();
        let before = phases.len();
        phases.dedup();
        if phases.is_empty() || phases.len() != before {
            return Err(PdaError::InvalidArgument(
                "phase set must be non-empty with distinct phases".into(),
            ));
        }
        if phases.contains(&Phase::Middle)
            && phases
                .iter()
                .any(|p| matches!(p, Phase::Mid1 | Phase::Mid2 | Phase::Mid3))
        {
            return Err(PdaError::InvalidArgument(
                "phase set cannot mix middle with mid1..mid3".into(),
            ));
        }
        Ok(Self(phases))
    }

    /// Start, middle, end and global.
    pub fn canonical() -> Self {
        Self(Phase::CANONICAL.to_vec())
    }

    /// The named phase sets of the phase-count ablation, by total size.
    pub fn with_count(n: usize) -> Result<Self> {
        use Phase::*;
        let phases = match n {
            1 => vec![Global],
            2 => vec![Start, End],
            3 => vec![Start, Middle, End],
            4 => vec![Start, Middle, End, Global],
            5 => vec![Start, Mid1, Mid2, End, Global],
            6 => vec![Start, Mid1, Mid2, Mid3, End, Global],
            _ => {
                return Err(PdaError::InvalidArgument(format!(
                    "phase count must be in 1..=6, got {n}"
                )))
            }
        };
        Ok(Self(phases))
    }

    pub fn phases(&self) -> &[Phase] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: Phase) -> bool {
        self.0.contains(&p)
    }

    pub fn temporal(&self) -> Vec<Phase> {
        self.0.iter().copied().filter(|p| p.is_temporal()).collect()
    }

    pub fn n_temporal(&self) -> usize {
        self.temporal().len()
    }

    /// Position of `p` among the temporal phases of this set.
    pub fn temporal_index(&self, p: Phase) -> Option<usize> {
        self.temporal().iter().position(|&q| q == p)
    }
}

impl TryFrom<Vec<Phase>> for PhaseSet {
    type Error = PdaError;

    fn try_from(v: Vec<Phase>) -> Result<Self> {
        PhaseSet::new(v)
    }
}

impl From<PhaseSet> for Vec<Phase> {
    fn from(s: PhaseSet) -> Self {
        s.0
    }
}

impl FromStr for PhaseSet {
    type Err = PdaError;

    /// Accepts a count (`"4"`) or a comma-separated tag list (`"start,end"`).
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(n) = s.trim().parse::<usize>() {
            return PhaseSet::with_count(n);
        }
        let phases = s.split(',').map(|t| t.trim().parse()).collect::<Result<Vec<Phase>>>()?;
        PhaseSet::new(phases)
    }
}

/// Temporal phases named in a decomposition answer with `n` parts.
pub fn temporal_phases_for(n: usize) -> Result<Vec<Phase>> {
    use Phase::*;
    Ok(match n {
        2 => vec![Start, End],
        3 => vec![Start, Middle, End],
        4 => vec![Start, Mid1, Mid2, End],
        5 => vec![Start, Mid1, Mid2, Mid3, End],
        _ => {
            return Err(PdaError::InvalidArgument(format!(
                "decomposition supports 2..=5 temporal phases, got {n}"
            )))
        }
    })
}

fn spelled(n: usize) -> Option<&'static str> {
    ["two", "three", "four", "five", "six"].get(n.checked_sub(2)?).copied()
}

pub fn build_phase_prompt(action: &str, n_phases: usize) -> Result<String> {
    if action.trim().is_empty() {
        return Err(PdaError::InvalidArgument("action name is empty".into()));
    }
    let count = spelled(n_phases)
        .ok_or_else(|| PdaError::InvalidArgument(format!("phase count must be in 2..=6, got {n_phases}")))?;
    Ok(format!(
        "Decompose the action of {action} into coherent {count} phases based on the natural \
         temporal progression of the action. Please provide the output step by step."
    ))
}

pub fn build_global_prompt(action: &str) -> Result<String> {
    if action.trim().is_empty() {
        return Err(PdaError::InvalidArgument("action name is empty".into()));
    }
    Ok(format!("Describe how a person does {action}."))
}

const WRAP_PREFIX: &str = "a video of people's motion that ";

/// Prefixes a description with the fixed video template, lower-casing its
/// first character. Already-wrapped input is rejected.
pub fn wrap_description(d: &str) -> Result<String> {
    let d = d.trim();
    if d.is_empty() {
        return Err(PdaError::InvalidArgument("description is empty".into()));
    }
    let normalized = d.replace('\u{2019}', "'").to_lowercase();
    if normalized.starts_with(WRAP_PREFIX.trim_end()) {
        return Err(PdaError::InvalidArgument(format!(
            "description is already wrapped: {d:?}"
        )));
    }
    let mut chars = d.chars();
    let first = chars.next().expect("non-empty");
    Ok(format!("{WRAP_PREFIX}{}{}", first.to_lowercase(), chars.as_str()))
}

/// Per-class texts, one per phase.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseDescriptionSet {
    pub class_name: String,
    pub descriptions: BTreeMap<Phase, String>,
}

impl PhaseDescriptionSet {
    pub fn new(class_name: impl Into<String>, descriptions: BTreeMap<Phase, String>) -> Result<Self> {
        let class_name = class_name.into();
        if let Some((p, _)) = descriptions.iter().find(|(_, d)| d.trim().is_empty()) {
            return Err(PdaError::InvalidArgument(format!(
                "empty {p} description for {class_name:?}"
            )));
        }
        Ok(Self {
            class_name,
            descriptions,
        })
    }

    pub fn get(&self, p: Phase) -> Option<&str> {
        self.descriptions.get(&p).map(String::as_str)
    }

    /// Restricts to `phases`; `None` if any is missing.
    pub fn restrict(&self, phases: &PhaseSet) -> Option<Self> {
        let descriptions = phases
            .phases()
            .iter()
            .map(|p| self.descriptions.get(p).map(|d| (*p, d.clone())))
            .collect::<Option<BTreeMap<_, _>>>()?;
        Some(Self {
            class_name: self.class_name.clone(),
            descriptions,
        })
    }
}

/// Parses the phase-tagged answer:
/// `In the start phase, the person would .... In the middle phase, the person would ....`
///
/// Every expected phase must appear once, in order, and the answer must start
/// with the first marker (an optional leading `Answer:` is allowed).
pub fn parse_phase_answer(raw: &str, phases: &[Phase]) -> Result<BTreeMap<Phase, String>> {
    let parse_err = || PdaError::DecompositionParse { raw: raw.to_string() };
    let body = strip_answer_label(raw);
    let markers: Vec<String> = phases
        .iter()
        .map(|p| format!("in the {} phase, the person would ", p.tag()))
        .collect();
    let lower = body.to_lowercase();
    // byte offsets are only valid if lower-casing kept lengths
    if lower.len() != body.len() {
        return Err(parse_err());
    }
    let mut starts = Vec::with_capacity(markers.len());
    let mut from = 0;
    for m in &markers {
        let at = lower[from..].find(m.as_str()).ok_or_else(parse_err)? + from;
        starts.push(at);
        from = at + m.len();
    }
    if starts.first() != Some(&0) {
        return Err(parse_err());
    }
    let mut out = BTreeMap::new();
    for (i, p) in phases.iter().enumerate() {
        let text_start = starts[i] + markers[i].len();
        let text_end = starts.get(i + 1).copied().unwrap_or(body.len());
        let text = body[text_start..text_end].trim();
        out.insert(*p, finish_sentence(text).ok_or_else(parse_err)?);
    }
    Ok(out)
}

/// Parses `The person would ....`.
pub fn parse_global_answer(raw: &str) -> Result<String> {
    let body = strip_answer_label(raw);
    let prefix = "the person would ";
    if body.len() <= prefix.len()
        || !body.is_char_boundary(prefix.len())
        || !body[..prefix.len()].eq_ignore_ascii_case(prefix)
    {
        return Err(PdaError::DecompositionParse { raw: raw.to_string() });
    }
    finish_sentence(body[prefix.len()..].trim()).ok_or_else(|| PdaError::DecompositionParse { raw: raw.to_string() })
}

fn strip_answer_label(raw: &str) -> &str {
    let t = raw.trim();
    match t.get(..7) {
        Some(head) if head.eq_ignore_ascii_case("answer:") => t[7..].trim_start(),
        _ => t,
    }
}

fn finish_sentence(text: &str) -> Option<String> {
    let text = text.trim_end_matches('.').trim();
    if text.is_empty() || text.contains('\n') {
        return None;
    }
    Some(format!("The person would {text}."))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProviderIdentity {
    pub provider: String,
    pub model: String,
}

impl ProviderIdentity {
    pub fn new(provider: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            model: model.into(),
        }
    }
}

pub trait LlmClient {
    fn identity(&self) -> ProviderIdentity;
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Replays canned responses keyed by prompt; counts calls.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    identity: Option<ProviderIdentity>,
    responses: HashMap<String, String>,
    calls: Mutex<usize>,
}

impl ScriptedClient {
    pub fn new(identity: ProviderIdentity) -> Self {
        Self {
            identity: Some(identity),
            ..Default::default()
        }
    }

    pub fn with_response(mut self, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        self.responses.insert(prompt.into(), response.into());
        self
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("poisoned")
    }
}

impl LlmClient for ScriptedClient {
    fn identity(&self) -> ProviderIdentity {
        self.identity
            .clone()
            .unwrap_or_else(|| ProviderIdentity::new("scripted", "scripted"))
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        *self.calls.lock().expect("poisoned") += 1;
        self.responses
            .get(prompt)
            .cloned()
            .ok_or_else(|| PdaError::Provider(format!("no scripted response for {prompt:?}")))
    }
}

/// A client that always fails; pairs with a populated cache for offline use.
#[derive(Debug, Clone)]
pub struct OfflineClient {
    pub identity: ProviderIdentity,
}

impl LlmClient for OfflineClient {
    fn identity(&self) -> ProviderIdentity {
        self.identity.clone()
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        Err(PdaError::Provider(format!(
            "offline client cannot answer {prompt:?}; populate the description cache"
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub identity: ProviderIdentity,
    pub action: String,
    pub phases: PhaseSet,
}

pub trait DescriptionStore {
    fn get(&self, key: &CacheKey) -> Result<Option<PhaseDescriptionSet>>;
    fn put(&mut self, key: &CacheKey, set: &PhaseDescriptionSet) -> Result<()>;
}

/// Class name to phase texts; the on-disk description cache format.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DescriptionCache {
    classes: BTreeMap<String, BTreeMap<Phase, String>>,
}

impl DescriptionCache {
    pub fn insert(&mut self, set: &PhaseDescriptionSet) {
        let entry = self.classes.entry(set.class_name.clone()).or_default();
        for (p, d) in &set.descriptions {
            entry.insert(*p, d.clone());
        }
    }

    /// Adds every entry of `other`, which wins on conflicts.
    pub fn merge(&mut self, other: &DescriptionCache) {
        for (class, phases) in &other.classes {
            self.classes.entry(class.clone()).or_default().extend(phases.clone());
        }
    }

    pub fn lookup_phase(&self, class: &str, phase: Phase) -> Option<String> {
        self.classes.get(class)?.get(&phase).cloned()
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cache: Self = serde_json::from_str(s)?;
        for (class, phases) in &cache.classes {
            if let Some((p, _)) = phases.iter().find(|(_, d)| d.trim().is_empty()) {
                return Err(PdaError::Data(format!("empty {p} description for {class:?}")));
            }
        }
        Ok(cache)
    }

    /// Pretty JSON with classes sorted by name and phases in canonical order.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("string maps serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = File::open(path)?;
        f.lock_shared()?;
        let mut s = String::new();
        f.read_to_string(&mut s)?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = OpenOptions::new().create(true).write(true).truncate(false).open(path)?;
        f.lock()?;
        f.set_len(0)?;
        f.write_all(self.to_json().as_bytes())?;
        f.sync_all()?;
        Ok(())
    }
}

/// Read access to per-class descriptions, as consumed by training and inference.
pub trait DescriptionSource: Sync {
    fn lookup(&self, class: &str) -> Option<BTreeMap<Phase, String>>;
}

impl DescriptionSource for DescriptionCache {
    fn lookup(&self, class: &str) -> Option<BTreeMap<Phase, String>> {
        self.classes.get(class).cloned()
    }
}

/// Records every class looked up through it.
pub struct TrackingSource<'a, S: DescriptionSource> {
    inner: &'a S,
    seen: Mutex<HashSet<String>>,
}

impl<'a, S: DescriptionSource> TrackingSource<'a, S> {
    pub fn new(inner: &'a S) -> Self {
        Self {
            inner,
            seen: Mutex::new(HashSet::new()),
        }
    }

    pub fn accessed(&self) -> HashSet<String> {
        self.seen.lock().expect("poisoned").clone()
    }
}

impl<S: DescriptionSource> DescriptionSource for TrackingSource<'_, S> {
    fn lookup(&self, class: &str) -> Option<BTreeMap<Phase, String>> {
        self.seen.lock().expect("poisoned").insert(class.to_string());
        self.inner.lookup(class)
    }
}

/// In-memory store keyed on the full cache key.
#[derive(Debug, Default)]
pub struct MemoryStore {
    entries: HashMap<CacheKey, PhaseDescriptionSet>,
}

impl DescriptionStore for MemoryStore {
    fn get(&self, key: &CacheKey) -> Result<Option<PhaseDescriptionSet>> {
        Ok(self.entries.get(key).cloned())
    }

    fn put(&mut self, key: &CacheKey, set: &PhaseDescriptionSet) -> Result<()> {
        self.entries.insert(key.clone(), set.clone());
        Ok(())
    }
}

/// A JSON description cache file bound to one provider identity. Lookups
/// for a different identity miss; a hit requires every requested phase.
pub struct JsonFileStore {
    path: PathBuf,
    identity: ProviderIdentity,
    cache: DescriptionCache,
}

impl JsonFileStore {
    pub fn open(path: impl Into<PathBuf>, identity: ProviderIdentity) -> Result<Self> {
        let path = path.into();
        let cache = if path.exists() {
            DescriptionCache::load(&path)?
        } else {
            DescriptionCache::default()
        };
        Ok(Self { path, identity, cache })
    }

    pub fn cache(&self) -> &DescriptionCache {
        &self.cache
    }
}

impl DescriptionStore for JsonFileStore {
    fn get(&self, key: &CacheKey) -> Result<Option<PhaseDescriptionSet>> {
        if key.identity != self.identity {
            return Ok(None);
        }
        let Some(texts) = self.cache.lookup(&key.action) else {
            return Ok(None);
        };
        let set = PhaseDescriptionSet::new(key.action.clone(), texts)?;
        Ok(set.restrict(&key.phases))
    }

    fn put(&mut self, key: &CacheKey, set: &PhaseDescriptionSet) -> Result<()> {
        if key.identity != self.identity {
            return Err(PdaError::InvalidArgument(format!(
                "cache {} is bound to {}/{}",
                self.path.display(),
                self.identity.provider,
                self.identity.model
            )));
        }
        // merge with whatever other writers stored since we opened
        if self.path.exists() {
            let on_disk = DescriptionCache::load(&self.path)?;
            for (class, phases) in on_disk.classes {
                let entry = self.cache.classes.entry(class).or_default();
                for (p, d) in phases {
                    entry.entry(p).or_insert(d);
                }
            }
        }
        self.cache.insert(set);
        self.cache.save(&self.path)
    }
}

/// Returns the cached decomposition of `action`, asking `client` on a miss.
pub fn decompose_label(
    action: &str,
    phases: &PhaseSet,
    client: &dyn LlmClient,
    store: &mut dyn DescriptionStore,
) -> Result<PhaseDescriptionSet> {
    if action.trim().is_empty() {
        return Err(PdaError::InvalidArgument("action name is empty".into()));
    }
    let key = CacheKey {
        identity: client.identity(),
        action: action.to_string(),
        phases: phases.clone(),
    };
    if let Some(hit) = store.get(&key)? {
        return Ok(hit);
    }

    let mut descriptions = BTreeMap::new();
    let temporal = phases.temporal();
    if !temporal.is_empty() {
        let answer_phases = temporal_phases_for(temporal.len())?;
        if answer_phases != temporal {
            return Err(PdaError::InvalidArgument(format!(
                "phase set {:?} does not match a {}-phase decomposition",
                phases.phases(),
                temporal.len()
            )));
        }
        let raw = client.complete(&build_phase_prompt(action, temporal.len())?)?;
        descriptions.extend(parse_phase_answer(&raw, &temporal)?);
    }
    if phases.contains(Phase::Global) {
        let raw = client.complete(&build_global_prompt(action)?)?;
        descriptions.insert(Phase::Global, parse_global_answer(&raw)?);
    }
    let set = PhaseDescriptionSet::new(action, descriptions)?;
    store.put(&key, &set)?;
    Ok(set)
}

pub trait TextEncoder: Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Vec<f64>;
}

/// Offline text encoder: each token maps to a fixed Gaussian vector derived
/// from a hash of the token and a seed (or to an explicit table entry);
/// token vectors are mean-pooled and L2-normalized.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StubEncoder {
    pub dim: usize,
    pub seed: u64,
    #[serde(default)]
    pub table: BTreeMap<String, Vec<f64>>,
}

impl StubEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            table: BTreeMap::new(),
        }
    }

    pub fn with_token(mut self, token: &str, vector: Vec<f64>) -> Self {
        self.insert_token(token, vector);
        self
    }

    pub fn insert_token(&mut self, token: &str, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim, "token vector dimension");
        self.table.insert(token.to_lowercase(), vector);
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.table.get(token) {
            return v.clone();
        }
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let scale = 1.0 / (self.dim as f64).sqrt();
        (0..self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect()
    }
}

/// Lower-cases and splits on whitespace, trimming surrounding punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '-'))
                .replace('\u{2019}', "'")
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

impl TextEncoder for StubEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let mut acc = vec![0.0; self.dim];
        for tok in &tokens {
            for (a, v) in acc.iter_mut().zip(self.token_vector(tok)) {
                *a += v;
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|v| *v /= norm);
        }
        acc
    }
}

/// Which text a semantic bank row is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextSource {
    /// The wrapped description of one phase.
    Phase(Phase),
    /// The bare class label.
    Label,
    /// All descriptions of the phase set concatenated, then wrapped.
    Merged,
}

impl fmt::Display for TextSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TextSource::Phase(p) => write!(f, "{p}"),
            TextSource::Label => f.write_str("label"),
            TextSource::Merged => f.write_str("merged"),
        }
    }
}

/// The text encoded for `class` under `source`.
pub fn source_text(
    class: &str,
    source: TextSource,
    phases: &PhaseSet,
    descs: &dyn DescriptionSource,
) -> Result<String> {
    let missing = |p: Phase| PdaError::MissingDescription {
        class: class.to_string(),
        phase: p.to_string(),
    };
    match source {
        TextSource::Label => Ok(class.to_string()),
        TextSource::Phase(p) => {
            let texts = descs.lookup(class).ok_or_else(|| missing(p))?;
            wrap_description(texts.get(&p).ok_or_else(|| missing(p))?)
        }
        TextSource::Merged => {
            let texts = descs.lookup(class).ok_or_else(|| missing(phases.phases()[0]))?;
            let joined = phases
                .phases()
                .iter()
                .map(|p| texts.get(p).cloned().ok_or_else(|| missing(*p)))
                .collect::<Result<Vec<_>>>()?
                .join(" ");
            wrap_description(&joined)
        }
    }
}

/// Encodes the `source` text of every class in `vocab`: a C×D_txt matrix.
pub fn encode_texts(
    vocab: &[String],
    source: TextSource,
    phases: &PhaseSet,
    descs: &dyn DescriptionSource,
    enc: &dyn TextEncoder,
) -> Result<Array2<f64>> {
    if vocab.is_empty() {
        return Err(PdaError::InvalidArgument("empty vocabulary".into()));
    }
    let mut out = Array2::zeros((vocab.len(), enc.dim()));
    for (row, class) in vocab.iter().enumerate() {
        let text = source_text(class, source, phases, descs)?;
        for (j, v) in enc.encode(&text).into_iter().enumerate() {
            out[[row, j]] = v;
        }
    }
    Ok(out)
}

/// Per-phase class embeddings in the shared space.
#[derive(Clone, Debug)]
pub struct PhaseEmbeddingBank {
    pub phase: Phase,
    pub embeddings: Array2<f64>,
    pub class_index: BTreeMap<String, usize>,
}

impl PhaseEmbeddingBank {
    pub fn row(&self, class: &str) -> Option<ndarray::ArrayView1<'_, f64>> {
        self.class_index.get(class).map(|&i| self.embeddings.row(i))
    }
}

/// Encodes each class's wrapped `phase` description and maps it through the
/// phase's projection.
pub fn encode_phase_bank(
    vocab: &[String],
    descs: &dyn DescriptionSource,
    enc: &dyn TextEncoder,
    phase: Phase,
    store: &ParamStore,
    proj: &Linear,
) -> Result<PhaseEmbeddingBank> {
    let phases = PhaseSet::new(vec![phase])?;
    let texts = encode_texts(vocab, TextSource::Phase(phase), &phases, descs, enc)?;
    let embeddings = proj.apply(store, &texts)?;
    if embeddings.iter().any(|v| !v.is_finite()) {
        return Err(PdaError::NonFinite {
            context: format!("{phase} embedding bank"),
        });
    }
    Ok(PhaseEmbeddingBank {
        phase,
        embeddings,
        class_index: vocab.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect(),
    })
}

/// Descriptions of the two illustrative actions used in examples and tests.
pub fn illustrative_descriptions() -> DescriptionCache {
    let mut cache = DescriptionCache::default();
    let entries = [
        (
            "LongJump",
            [
                "The person would run down the track to gain speed.",
                "The person would plant one foot and push off the ground.",
                "The person would extend their legs and land in the sand.",
                "The person would sprint down the track and jump forward into the sandpit.",
            ],
        ),
        (
            "PoleVault",
            [
                "The person would run down the track to gain speed.",
                "The person would plant the pole and push off the ground.",
                "The person would clear the bar and fall onto the landing mat.",
                "The person would sprint down the track, vault with a pole, and clear a high bar.",
            ],
        ),
    ];
    for (class, texts) in entries {
        let descriptions = Phase::CANONICAL
            .iter()
            .zip(texts)
            .map(|(p, t)| (*p, t.to_string()))
            .collect();
        cache.insert(&PhaseDescriptionSet::new(class, descriptions).expect("non-empty"));
    }
    cache
}
