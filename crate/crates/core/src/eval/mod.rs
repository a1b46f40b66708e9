//! Corpus-level evaluation: score every utterance for every seed and
//! correlate engine scores with human ratings.

mod manifest;
mod pcc;
mod sweep;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::load_audio;
use crate::backend::AcousticBackend;
use crate::error::{Error, Result};
use crate::scoring::{score, ConfigSnapshot, ScoreConfig, DEFAULT_SEEDS};

pub use manifest::{
    convert_speechocean, read_manifest, write_manifest, Conversion, ManifestEntry, MAX_HUMAN_SCORE,
    MIN_HUMAN_SCORE,
};
pub use pcc::{mean_std, pcc};
pub use sweep::{sweep, write_sweep_csv, SweepParam, SweepRow, SWEEP_CSV_HEADER};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// The seed inside is ignored; `seeds` drives random plans.
    pub scoring: ScoreConfig,
    pub seeds: Vec<u64>,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    /// Drop manifest entries whose audio is missing instead of failing.
    pub skip_missing: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scoring: ScoreConfig::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            workers: 0,
            skip_missing: false,
        }
    }
}

impl EvalConfig {
    /// Seeds actually run: the configured list for random masking, a single
    /// seedless run for regular masking.
    fn runs(&self) -> Vec<Option<u64>> {
        if self.scoring.strategy.is_random() {
            self.seeds.iter().copied().map(Some).collect()
        } else {
            vec![None]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub utt_id: String,
    pub seed: Option<u64>,
    pub score: f64,
    pub amrt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPcc {
    pub seed: Option<u64>,
    pub pcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    #[serde(flatten)]
    pub scoring: ConfigSnapshot,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Sorted by utterance id, then seed.
    pub per_utterance: Vec<UtteranceScore>,
    pub pcc_per_seed: Vec<SeedPcc>,
    pub pcc_mean: f64,
    /// Population standard deviation over runs.
    pub pcc_std: f64,
    pub config: EvalSnapshot,
    /// Utterances dropped because their audio was missing.
    pub skipped: Vec<String>,
}

/// Scores every manifest entry for every run and reports per-run PCC against
/// the human scores. Work is spread over `config.workers` threads, each with
/// its own forked backend; aggregation is ordered by utterance id.
pub fn evaluate(
    entries: &[ManifestEntry],
    backend: &dyn AcousticBackend,
    config: &EvalConfig,
) -> Result<EvalResult> {
    if entries.is_empty() {
        return Err(Error::InvalidParams("manifest is empty".into()));
    }
    if config.scoring.strategy.is_random() && config.seeds.is_empty() {
        return Err(Error::InvalidParams("at least one seed is required".into()));
    }
    config.scoring.strategy.validate()?;
    backend.codebook(config.scoring.layer)?;

    let mut skipped = Vec::new();
    let mut present: Vec<&ManifestEntry> = Vec::with_capacity(entries.len());
    for entry in entries {
        if entry.wav.is_file() {
            present.push(entry);
        } else if config.skip_missing {
            skipped.push(entry.utt_id.clone());
        } else {
            return Err(Error::MissingAudio {
                utt_id: entry.utt_id.clone(),
                path: entry.wav.clone(),
            });
        }
    }
    present.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    skipped.sort();

    let runs = config.runs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;

    let scored: Vec<Result<Vec<UtteranceScore>>> = pool.install(|| {
        present
            .par_iter()
            .map_init(
                || backend.fork(),
                |worker, entry| {
                    let worker = worker.as_mut().map_err(|e| Error::GraphExecution(e.to_string()))?;
                    let mut clip = load_audio(&entry.wav)?;
                    clip.source_id = entry.utt_id.clone();
                    runs.iter()
                        .map(|&seed| {
                            let cfg = ScoreConfig {
                                seed: seed.unwrap_or_default(),
                                ..config.scoring
                            };
                            let report = score(worker, &clip, &cfg)?;
                            Ok(UtteranceScore {
                                utt_id: entry.utt_id.clone(),
                                seed,
                                score: report.score,
                                amrt: report.amrt,
                            })
                        })
                        .collect()
                },
            )
            .collect()
    });
    let per_utt: Vec<Vec<UtteranceScore>> = scored.into_iter().collect::<Result<_>>()?;

    let human: Vec<f64> = present.iter().map(|e| e.human_score).collect();
    let mut pcc_per_seed = Vec::with_capacity(runs.len());
    for (r, &seed) in runs.iter().enumerate() {
        let engine: Vec<f64> = per_utt.iter().map(|u| u[r].score).collect();
        pcc_per_seed.push(SeedPcc {
            seed,
            pcc: pcc(&engine, &human)?,
        });
    }
    let values: Vec<f64> = pcc_per_seed.iter().map(|s| s.pcc).collect();
    let (pcc_mean, pcc_std) = mean_std(&values);

    let mut snapshot = config.scoring.snapshot();
    snapshot.seed = None;
    Ok(EvalResult {
        per_utterance: per_utt.into_iter().flatten().collect(),
        pcc_per_seed,
        pcc_mean,
        pcc_std,
        config: EvalSnapshot {
            scoring: snapshot,
            seeds: runs.iter().flatten().copied().collect(),
        },
        skipped,
    })
}
