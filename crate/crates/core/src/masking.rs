//! Mask plans: which frames to corrupt on each repetition.
//!
//! Random plans draw disjoint fixed-length spans independently per repetition;
//! regular plans split the sequence into near-equal slices and mask one slice
//! per repetition.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the masking percentage translates into a number of spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanBudget {
    /// `p` is the fraction of frames to mask in total: `round(p·T / l)` spans.
    #[default]
    TotalFraction,
    /// `p` is the fraction of frames drawn as span starts: `round(p·T)` spans,
    /// fewer if disjoint placements run out.
    StartFraction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMasking {
    /// Masking percentage `p`, in (0, 100].
    pub mask_percent: f64,
    /// Span length `l` in frames.
    pub span_len: usize,
    /// Repetitions `k`.
    pub repetitions: usize,
    #[serde(default)]
    pub budget: SpanBudget,
}

impl Default for RandomMasking {
    fn default() -> Self {
        Self {
            mask_percent: 20.0,
            span_len: 5,
            repetitions: 50,
            budget: SpanBudget::TotalFraction,
        }
    }
}

impl RandomMasking {
    pub fn validate(&self) -> Result<()> {
        let p = self.mask_percent;
        if !(p.is_finite() && p > 0.0 && p <= 100.0) {
            return Err(Error::InvalidParams(format!("mask percentage must be in (0, 100], got {p}")));
        }
        if self.span_len < 1 {
            return Err(Error::InvalidParams("mask span length must be at least 1".into()));
        }
        if self.repetitions < 1 {
            return Err(Error::InvalidParams("repetitions must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of spans each repetition aims for on a sequence of `t` frames.
    pub fn target_spans(&self, t: usize) -> usize {
        let starts = self.mask_percent * t as f64 / 100.0;
        let n = match self.budget {
            SpanBudget::TotalFraction => (self.mask_percent * t as f64 / (100.0 * self.span_len as f64)).round(),
            SpanBudget::StartFraction => starts.round(),
        };
        (n as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularMasking {
    pub slices: usize,
}

impl Default for RegularMasking {
    fn default() -> Self {
        Self { slices: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum MaskStrategy {
    Random(RandomMasking),
    Regular(RegularMasking),
}

impl Default for MaskStrategy {
    fn default() -> Self {
        MaskStrategy::Random(RandomMasking::default())
    }
}

impl MaskStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            MaskStrategy::Random(_) => "random",
            MaskStrategy::Regular(_) => "regular",
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, MaskStrategy::Random(_))
    }

    /// Checks the parameters that do not depend on the sequence length.
    pub fn validate(&self) -> Result<()> {
        match self {
            MaskStrategy::Random(r) => r.validate(),
            MaskStrategy::Regular(r) if r.slices < 1 => {
                Err(Error::InvalidParams("slices must be at least 1".into()))
            }
            MaskStrategy::Regular(_) => Ok(()),
        }
    }
}

/// One repetition's masked frames, as sorted disjoint half-open spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    spans: Vec<Range<usize>>,
    indices: Vec<usize>,
}

impl MaskSet {
    /// Spans are sorted by start; they must not overlap.
    pub fn from_spans(mut spans: Vec<Range<usize>>) -> Self {
        spans.retain(|s| !s.is_empty());
        spans.sort_by_key(|s| s.start);
        debug_assert!(spans.windows(2).all(|w| w[0].end <= w[1].start));
        let indices = spans.iter().flat_map(|s| s.clone()).collect();
        Self { spans, indices }
    }

    /// Groups arbitrary indices into maximal runs.
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        let mut spans: Vec<Range<usize>> = Vec::new();
        for &i in &indices {
            match spans.last_mut() {
                Some(last) if last.end == i => last.end += 1,
                _ => spans.push(i..i + 1),
            }
        }
        Self { spans, indices }
    }

    pub fn spans(&self) -> &[Range<usize>] {
        &self.spans
    }

    /// Masked frame indices in increasing order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub num_frames: usize,
    pub strategy: MaskStrategy,
    /// Seed of a random plan; `None` for regular plans.
    pub seed: Option<u64>,
    pub repetitions: Vec<MaskSet>,
}

impl MaskPlan {
    /// Number of repetitions `k`.
    pub fn k(&self) -> usize {
        self.repetitions.len()
    }

    pub fn mean_masked(&self) -> f64 {
        let total: usize = self.repetitions.iter().map(MaskSet::len).sum();
        total as f64 / self.k() as f64
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for repetition `repetition` of utterance `utterance`:
/// `splitmix64(splitmix64(splitmix64(seed) ^ fnv1a64(utterance)) ^ repetition)`.
pub fn hash64(seed: u64, utterance: &str, repetition: u64) -> u64 {
    let h = splitmix64(seed);
    let h = splitmix64(h ^ fnv1a64(utterance.as_bytes()));
    splitmix64(h ^ repetition)
}

/// Builds a random plan for a sequence of `num_frames` frames.
///
/// Each repetition shuffles the candidate starts `0..=T-l` with its own RNG
/// and greedily accepts starts whose span does not overlap an accepted one,
/// until the target span count is reached or candidates run out.
pub fn plan_random_masks(
    num_frames: usize,
    params: &RandomMasking,
    seed: u64,
    utterance: &str,
) -> Result<MaskPlan> {
    params.validate()?;
    if num_frames < 1 {
        return Err(Error::InvalidParams("sequence has no frames".into()));
    }
    let l = params.span_len;
    let target = params.target_spans(num_frames);

    let repetitions = (0..params.repetitions)
        .map(|j| {
            if num_frames <= l {
                return MaskSet::from_indices((0..num_frames).collect());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(hash64(seed, utterance, j as u64));
            let mut starts: Vec<usize> = (0..=num_frames - l).collect();
            starts.shuffle(&mut rng);

            let mut occupied = vec![false; num_frames];
            let mut spans = Vec::with_capacity(target);
            for s in starts {
                if spans.len() == target {
                    break;
                }
                if occupied[s..s + l].iter().any(|&o| o) {
                    continue;
                }
                occupied[s..s + l].fill(true);
                spans.push(s..s + l);
            }
            MaskSet::from_spans(spans)
        })
        .collect();

    Ok(MaskPlan {
        num_frames,
        strategy: MaskStrategy::Random(*params),
        seed: Some(seed),
        repetitions,
    })
}

/// Splits `0..num_frames` into `slices` contiguous parts whose sizes differ by
/// at most one (the larger ones first); repetition `j` masks slice `j`.
pub fn plan_regular_masks(num_frames: usize, slices: usize) -> Result<MaskPlan> {
    if num_frames < 1 {
        return Err(Error::InvalidParams("sequence has no frames".into()));
    }
    if slices < 1 || slices > num_frames {
        return Err(Error::InvalidParams(format!(
            "slices must be in 1..={num_frames}, got {slices}"
        )));
    }
    let base = num_frames / slices;
    let extra = num_frames % slices;
    let mut start = 0;
    let repetitions = (0..slices)
        .map(|j| {
            let size = base + usize::from(j < extra);
            let span = start..start + size;
            start += size;
            MaskSet::from_spans(vec![span])
        })
        .collect();
    Ok(MaskPlan {
        num_frames,
        strategy: MaskStrategy::Regular(RegularMasking { slices }),
        seed: None,
        repetitions,
    })
}

/// Dispatches on the strategy; `seed` and `utterance` only matter for random plans.
pub fn plan_masks(num_frames: usize, strategy: &MaskStrategy, seed: u64, utterance: &str) -> Result<MaskPlan> {
    match strategy {
        MaskStrategy::Random(r) => plan_random_masks(num_frames, r, seed, utterance),
        MaskStrategy::Regular(r) => plan_regular_masks(num_frames, r.slices),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageStats {
    /// Frames masked in at least one repetition.
    pub frames_covered: usize,
    /// How many repetitions mask each frame.
    pub per_frame_counts: Vec<usize>,
}

impl CoverageStats {
    /// Masking count to number of frames with that count.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for &c in &self.per_frame_counts {
            *h.entry(c).or_insert(0) += 1;
        }
        h
    }

    pub fn fraction_covered(&self) -> f64 {
        self.frames_covered as f64 / self.per_frame_counts.len() as f64
    }
}

pub fn coverage_stats(plan: &MaskPlan) -> CoverageStats {
    let mut per_frame_counts = vec![0usize; plan.num_frames];
    for rep in &plan.repetitions {
        for &i in rep.indices() {
            per_frame_counts[i] += 1;
        }
    }
    let frames_covered = per_frame_counts.iter().filter(|&&c| c > 0).count();
    CoverageStats {
        frames_covered,
        per_frame_counts,
    }
}
