//! JSON-lines manifests and conversion from the speechocean762 score file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

pub const MIN_HUMAN_SCORE: f64 = 0.0;
pub const MAX_HUMAN_SCORE: f64 = 10.0;

/// One manifest line: `{"utt_id": str, "wav": str, "score": number}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub wav: PathBuf,
    #[serde(rename = "score")]
    pub human_score: f64,
}

fn score_in_range(score: f64) -> bool {
    score.is_finite() && (MIN_HUMAN_SCORE..=MAX_HUMAN_SCORE).contains(&score)
}

/// Reads a manifest. Relative `wav` paths are resolved against the
/// manifest's directory. Blank lines are skipped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(path)?;
    let err = |line: usize, message: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| err(lineno, e.to_string()))?;
        if !seen.insert(entry.utt_id.clone()) {
            return Err(err(lineno, format!("duplicate utt_id {:?}", entry.utt_id)));
        }
        if !score_in_range(entry.human_score) {
            return Err(err(
                lineno,
                format!(
                    "score {} outside [{MIN_HUMAN_SCORE}, {MAX_HUMAN_SCORE}]",
                    entry.human_score
                ),
            ));
        }
        if entry.wav.is_relative() {
            entry.wav = base.join(&entry.wav);
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(err(0, "manifest has no entries".into()));
    }
    Ok(entries)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = Vec::new();
    for entry in entries {
        serde_json::to_writer(&mut out, entry)?;
        out.push(b'\n');
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    /// Sorted by `utt_id`.
    pub entries: Vec<ManifestEntry>,
    /// Utterances in the score file without a WAV under the audio directory.
    pub missing: Vec<String>,
}

/// Builds a manifest from the dataset's `scores.json` (utterance id to an
/// object whose `total` field is the sentence-level score) and a directory
/// searched recursively for `<utt_id>.wav` (extension case-insensitive).
///
/// Utterances without audio are reported in [`Conversion::missing`] and left
/// out, so pointing `wav_dir` at one split's audio yields that split.
pub fn convert_speechocean(scores_path: impl AsRef<Path>, wav_dir: impl AsRef<Path>) -> Result<Conversion> {
    let scores_path = scores_path.as_ref();
    let wav_dir = wav_dir.as_ref();
    let malformed = |message: String| Error::ScoreFile {
        path: scores_path.to_path_buf(),
        message,
    };
    if !scores_path.is_file() {
        return Err(Error::FileNotFound(scores_path.to_path_buf()));
    }
    if !wav_dir.is_dir() {
        return Err(Error::FileNotFound(wav_dir.to_path_buf()));
    }

    let text = fs::read_to_string(scores_path)?;
    if text.trim().is_empty() {
        return Err(malformed("file is empty".into()));
    }
    let root: serde_json::Value = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    let object = root
        .as_object()
        .ok_or_else(|| malformed("expected a JSON object keyed by utterance id".into()))?;
    if object.is_empty() {
        return Err(malformed("no utterances".into()));
    }

    let mut totals = BTreeMap::new();
    for (utt_id, record) in object {
        let total = record
            .get("total")
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| malformed(format!("{utt_id}: missing numeric \"total\"")))?;
        if !score_in_range(total) {
            return Err(malformed(format!(
                "{utt_id}: total {total} outside [{MIN_HUMAN_SCORE}, {MAX_HUMAN_SCORE}]"
            )));
        }
        totals.insert(utt_id.clone(), total);
    }

    let wav_root = wav_dir.canonicalize()?;
    let mut wavs: HashMap<String, PathBuf> = HashMap::new();
    for entry in WalkDir::new(&wav_root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        let path = entry.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if entry.file_type().is_file() && is_wav {
            if let Some(stem) = path.file_stem() {
                wavs.entry(stem.to_string_lossy().into_owned())
                    .or_insert_with(|| path.to_path_buf());
            }
        }
    }

    let mut entries = Vec::new();
    let mut missing = Vec::new();
    for (utt_id, total) in totals {
        match wavs.get(&utt_id) {
            Some(wav) => entries.push(ManifestEntry {
                utt_id,
                wav: wav.clone(),
                human_score: total,
            }),
            None => missing.push(utt_id),
        }
    }
    Ok(Conversion { entries, missing })
}
