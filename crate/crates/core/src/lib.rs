//! Zero-shot pronunciation scoring with a self-supervised speech model.
//!
//! An utterance is encoded once, tokenized against a k-means codebook of one
//! Transformer layer, then re-encoded under many frame masks. The fraction of
//! masked tokens that come back different (aMRT) is the mispronunciation
//! signal; the score is its negation.
//!
//! ```
//! use zs_apa::{score, AudioClip, MockBackend, ScoreConfig};
//!
//! let clip = AudioClip::new(vec![0.25; 16_000], 16_000, "demo").unwrap();
//! let report = score(&mut MockBackend::new(), &clip, &ScoreConfig::default()).unwrap();
//! assert_eq!(report.score, 0.0);
//! ```

pub mod audio;
pub mod backend;
pub mod error;
pub mod eval;
pub mod masking;
pub mod mock;
pub mod quantizer;
pub mod scoring;

pub use audio::{load_audio, resample, AudioClip, SAMPLE_RATE};
pub use backend::{AcousticBackend, FrameGeometry, FrameSequence, LayerFeatures, ModelBundle};
#[cfg(feature = "onnx")]
pub use backend::OnnxBackend;
pub use error::{Error, Result};
pub use masking::{
    plan_masks, plan_random_masks, plan_regular_masks, MaskPlan, MaskSet, MaskStrategy,
    RandomMasking, RegularMasking, SpanBudget,
};
pub use mock::{synthetic_signal, MockBackend};
pub use quantizer::{load_codebook, save_codebook, tokenize, tokenize_rows, Codebook, TokenSequence};
pub use scoring::{amrt, score, Amrt, ScoreConfig, ScoreReport};
