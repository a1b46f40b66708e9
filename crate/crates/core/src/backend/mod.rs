//! Acoustic backend contract: waveform to frames, frames (optionally masked)
//! to per-layer contextual features.

mod bundle;
#[cfg(feature = "onnx")]
mod onnx;

use std::sync::Arc;

use ndarray::Array2;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::quantizer::Codebook;

pub use bundle::{write_bundle_files, BundleMetadata, ModelBundle, BUNDLE_FORMAT_VERSION};
#[cfg(feature = "onnx")]
pub use onnx::{OnnxBackend, INPUT_FRAME_MASK, INPUT_MASK_EMBEDDING, INPUT_WAVEFORM, OUTPUT_FRAMES, OUTPUT_HIDDEN_STATES};

/// Encoder output `X`: one row per frame.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Array2<f32>,
    pub source_id: String,
    /// Waveform the frames were computed from, for backends whose graph
    /// recomputes the convolutional front end on every pass.
    pub waveform: Option<Arc<[f32]>>,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// Hidden states of one Transformer layer (1-based) for a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatures {
    pub layer: usize,
    pub features: Array2<f32>,
}

impl LayerFeatures {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Sliding-window geometry of the convolutional front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGeometry {
    pub sample_rate: u32,
    pub hop_samples: usize,
    pub receptive_field_samples: usize,
}

impl FrameGeometry {
    /// `1 + floor((n - receptive_field) / hop)`, or zero when the clip is
    /// shorter than one receptive field.
    pub fn frame_count(&self, num_samples: usize) -> usize {
        if num_samples < self.receptive_field_samples || self.hop_samples == 0 {
            0
        } else {
            1 + (num_samples - self.receptive_field_samples) / self.hop_samples
        }
    }

    pub fn checked_frame_count(&self, num_samples: usize) -> Result<usize> {
        match self.frame_count(num_samples) {
            0 => Err(Error::AudioTooShort {
                samples: num_samples,
                receptive_field: self.receptive_field_samples,
            }),
            t => Ok(t),
        }
    }
}

/// An acoustic model able to produce frames and contextualized layer features.
///
/// Mutating calls take `&mut self`; evaluation forks one instance per worker.
/// All operations must be deterministic.
pub trait AcousticBackend: Send + Sync {
    fn geometry(&self) -> FrameGeometry;

    fn num_layers(&self) -> usize;

    fn encode_frames(&mut self, clip: &AudioClip) -> Result<FrameSequence>;

    /// Replaces the rows listed in `masked` by the mask embedding, runs the
    /// Transformer and returns the hidden states of `layer`. An empty mask
    /// yields the clean sequence's features.
    fn contextualize(
        &mut self,
        frames: &FrameSequence,
        masked: &[usize],
        layer: usize,
    ) -> Result<LayerFeatures>;

    /// Several corruptions of the same sequence. Must equal calling
    /// [`contextualize`](Self::contextualize) once per mask.
    fn contextualize_batch(
        &mut self,
        frames: &FrameSequence,
        masks: &[&[usize]],
        layer: usize,
    ) -> Result<Vec<LayerFeatures>> {
        masks
            .iter()
            .map(|m| self.contextualize(frames, m, layer))
            .collect()
    }

    /// Codebook quantizing the features of `layer`.
    fn codebook(&self, layer: usize) -> Result<Arc<Codebook>>;

    /// A fresh instance backed by the same model, for another worker.
    fn fork(&self) -> Result<Box<dyn AcousticBackend>>;
}

impl AcousticBackend for Box<dyn AcousticBackend> {
    fn geometry(&self) -> FrameGeometry {
        (**self).geometry()
    }

    fn num_layers(&self) -> usize {
        (**self).num_layers()
    }

    fn encode_frames(&mut self, clip: &AudioClip) -> Result<FrameSequence> {
        (**self).encode_frames(clip)
    }

    fn contextualize(
        &mut self,
        frames: &FrameSequence,
        masked: &[usize],
        layer: usize,
    ) -> Result<LayerFeatures> {
        (**self).contextualize(frames, masked, layer)
    }

    fn contextualize_batch(
        &mut self,
        frames: &FrameSequence,
        masks: &[&[usize]],
        layer: usize,
    ) -> Result<Vec<LayerFeatures>> {
        (**self).contextualize_batch(frames, masks, layer)
    }

    fn codebook(&self, layer: usize) -> Result<Arc<Codebook>> {
        (**self).codebook(layer)
    }

    fn fork(&self) -> Result<Box<dyn AcousticBackend>> {
        (**self).fork()
    }
}

pub(crate) fn check_layer(layer: usize, num_layers: usize) -> Result<()> {
    if layer == 0 || layer > num_layers {
        return Err(Error::LayerOutOfRange { layer, num_layers });
    }
    Ok(())
}

pub(crate) fn check_mask(masked: &[usize], frames: usize) -> Result<()> {
    match masked.iter().find(|&&i| i >= frames) {
        Some(&index) => Err(Error::MaskIndexOutOfRange { index, frames }),
        None => Ok(()),
    }
}

pub(crate) fn check_sample_rate(clip: &AudioClip, geometry: &FrameGeometry) -> Result<()> {
    if clip.sample_rate != geometry.sample_rate {
        return Err(Error::InvalidParams(format!(
            "clip sample rate {} does not match model rate {}",
            clip.sample_rate, geometry.sample_rate
        )));
    }
    Ok(())
}
