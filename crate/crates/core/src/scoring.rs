//! Average mis-recovered token count (aMRT) and the end-to-end scorer.

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::backend::AcousticBackend;
use crate::error::{Error, Result};
use crate::masking::{plan_masks, MaskPlan, MaskStrategy, SpanBudget};
use crate::quantizer::{tokenize, tokenize_rows, TokenSequence};

/// Default Transformer layer whose features are quantized.
pub const DEFAULT_LAYER: usize = 7;
/// Default seeds of an evaluation run.
pub const DEFAULT_SEEDS: [u64; 3] = [13, 21, 100];

/// Repetitions contextualized per backend call.
const REPETITION_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Amrt {
    pub amrt: f64,
    pub per_repetition_mismatches: Vec<usize>,
}

/// `(1/k) Σ_j Σ_{i ∈ M_j} [z_i ≠ z*_i]`.
///
/// `recovered[j]` must be restricted to exactly the indices of repetition `j`.
pub fn amrt(reference: &TokenSequence, recovered: &[TokenSequence], plan: &MaskPlan) -> Result<Amrt> {
    if reference.positions.is_some() || reference.len() != plan.num_frames {
        return Err(Error::LengthMismatch {
            expected: plan.num_frames,
            found: reference.len(),
        });
    }
    if recovered.len() != plan.k() {
        return Err(Error::LengthMismatch {
            expected: plan.k(),
            found: recovered.len(),
        });
    }
    let mut per_repetition_mismatches = Vec::with_capacity(plan.k());
    for (j, (rec, set)) in recovered.iter().zip(&plan.repetitions).enumerate() {
        if rec.positions.as_deref() != Some(set.indices()) {
            return Err(Error::PlanMismatch { repetition: j });
        }
        let mismatches = rec
            .iter()
            .filter(|&(pos, tok)| reference.tokens[pos] != tok)
            .count();
        per_repetition_mismatches.push(mismatches);
    }
    let total: usize = per_repetition_mismatches.iter().sum();
    Ok(Amrt {
        amrt: total as f64 / plan.k() as f64,
        per_repetition_mismatches,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub strategy: MaskStrategy,
    pub layer: usize,
    pub seed: u64,
    /// Divide aMRT by the mean mask size before negating.
    pub normalize: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            strategy: MaskStrategy::default(),
            layer: DEFAULT_LAYER,
            seed: DEFAULT_SEEDS[0],
            normalize: false,
        }
    }
}

impl ScoreConfig {
    pub fn snapshot(&self) -> ConfigSnapshot {
        let (p, l, k, slices, seed, budget) = match self.strategy {
            MaskStrategy::Random(r) => (
                Some(r.mask_percent),
                Some(r.span_len),
                r.repetitions,
                None,
                Some(self.seed),
                Some(r.budget).filter(|b| *b != SpanBudget::TotalFraction),
            ),
            MaskStrategy::Regular(r) => (None, None, r.slices, Some(r.slices), None, None),
        };
        ConfigSnapshot {
            strategy: self.strategy.name().to_string(),
            p,
            l,
            k,
            slices,
            layer: self.layer,
            seed,
            normalized: self.normalize,
            budget,
        }
    }
}

/// Provenance of a score. `p` is a percentage; `seed`, `p` and `l` are null
/// for regular masking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub strategy: String,
    pub p: Option<f64>,
    pub l: Option<usize>,
    pub k: usize,
    pub slices: Option<usize>,
    pub layer: usize,
    pub seed: Option<u64>,
    pub normalized: bool,
    /// Present only for the non-default start-fraction budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<SpanBudget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub utterance_id: String,
    pub amrt: f64,
    pub score: f64,
    pub per_repetition_mismatches: Vec<usize>,
    pub config: ConfigSnapshot,
    #[serde(rename = "T")]
    pub num_frames: usize,
}

/// Final score: `-aMRT`, or `-aMRT / mean |M_j|` when normalizing.
pub fn final_score(amrt: f64, plan: &MaskPlan, normalize: bool) -> f64 {
    let value = if normalize { amrt / plan.mean_masked() } else { amrt };
    // 0 - x keeps a perfect score at +0.0
    0.0 - value
}

/// Scores one clip: clean pass for reference tokens, one corrupted pass per
/// repetition for recovered tokens, then aMRT.
pub fn score<B: AcousticBackend + ?Sized>(backend: &mut B, clip: &AudioClip, config: &ScoreConfig) -> Result<ScoreReport> {
    config.strategy.validate()?;
    let codebook = backend.codebook(config.layer)?;
    let frames = backend.encode_frames(clip)?;

    let clean = backend.contextualize(&frames, &[], config.layer)?;
    let reference = tokenize(&clean, &codebook)?;

    let plan = plan_masks(frames.len(), &config.strategy, config.seed, &clip.source_id)?;
    let mut recovered = Vec::with_capacity(plan.k());
    for chunk in plan.repetitions.chunks(REPETITION_CHUNK) {
        let masks: Vec<&[usize]> = chunk.iter().map(|s| s.indices()).collect();
        let outputs = backend.contextualize_batch(&frames, &masks, config.layer)?;
        for (features, mask) in outputs.iter().zip(&masks) {
            recovered.push(tokenize_rows(features, &codebook, mask)?);
        }
    }

    let result = amrt(&reference, &recovered, &plan)?;
    Ok(ScoreReport {
        utterance_id: clip.source_id.clone(),
        score: final_score(result.amrt, &plan, config.normalize),
        amrt: result.amrt,
        per_repetition_mismatches: result.per_repetition_mismatches,
        config: config.snapshot(),
        num_frames: plan.num_frames,
    })
}
