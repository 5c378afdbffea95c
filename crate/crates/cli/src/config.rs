use std::fs;
use std::path::{Path, PathBuf};

use pda_core::data::{DatasetManifest, OpenVocabSplit};
use pda_core::{PdaError, Result};
use serde::de::DeserializeOwned;

/// Reads a JSON config file, or the type's defaults when no file is given.
/// Unreadable or malformed files are config errors.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| PdaError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PdaError::Config(format!("{}: {e}", path.display())))
}

/// Replaces `slot` with a command-line value when one was given.
pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

pub fn set_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

pub fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| PdaError::Config(format!("missing {what}; pass it as a flag or in --config")))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

pub fn load_splits(path: &Path) -> Result<Vec<OpenVocabSplit>> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| PdaError::Data(format!("{}: {e}", path.display())))
}

pub fn pick_split(path: &Path, index: usize) -> Result<OpenVocabSplit> {
    let mut splits = load_splits(path)?;
    if index >= splits.len() {
        return Err(PdaError::Config(format!(
            "split index {index} out of range; {} holds {} splits",
            path.display(),
            splits.len()
        )));
    }
    Ok(splits.swap_remove(index))
}

/// Which classes a command works on, from most to least specific: an explicit
/// list, one side of a split, or the whole manifest vocabulary.
pub fn vocabulary(
    explicit: &[String],
    split: Option<&OpenVocabSplit>,
    seen_side: bool,
    manifest: &DatasetManifest,
) -> Vec<String> {
    if !explicit.is_empty() {
        return explicit.to_vec();
    }
    match split {
        Some(s) if seen_side => s.seen.clone(),
        Some(s) => s.unseen.clone(),
        None => manifest.vocabulary.clone(),
    }
}
