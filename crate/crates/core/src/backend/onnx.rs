//! Backend executing the bundle's `encoder.onnx` with tract.
//!
//! Graph contract:
//!
//! | name             | dir | type | shape        |
//! |------------------|-----|------|--------------|
//! | `waveform`       | in  | f32  | `[B, N]`     |
//! | `frame_mask`     | in  | bool | `[B, T]`     |
//! | `mask_embedding` | in  | f32  | `[D]`        |
//! | `frames`         | out | f32  | `[B, T, D]`  |
//! | `hidden_states`  | out | f32  | `[L, B, T, H]` |
//!
//! `T` follows the bundle's frame-count formula. Rows of the projected frames
//! where `frame_mask` is true are replaced by `mask_embedding` before the
//! first Transformer block; `hidden_states[l-1]` is the output of block `l`.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use tract_onnx::prelude::*;

use super::{
    check_layer, check_mask, check_sample_rate, AcousticBackend, FrameGeometry, FrameSequence,
    LayerFeatures, ModelBundle,
};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::quantizer::Codebook;

pub const INPUT_WAVEFORM: &str = "waveform";
pub const INPUT_FRAME_MASK: &str = "frame_mask";
pub const INPUT_MASK_EMBEDDING: &str = "mask_embedding";
pub const OUTPUT_FRAMES: &str = "frames";
pub const OUTPUT_HIDDEN_STATES: &str = "hidden_states";

type Plan = Arc<TypedRunnableModel>;

fn graph_err(e: impl std::fmt::Display) -> Error {
    Error::GraphExecution(e.to_string())
}

pub struct OnnxBackend {
    bundle: Arc<ModelBundle>,
    model: Arc<InferenceModel>,
    max_batch: usize,
    /// Optimized plans for the current waveform length, keyed by batch size.
    plans: HashMap<usize, Plan>,
    plans_len: usize,
}

impl OnnxBackend {
    pub fn load(bundle: ModelBundle) -> Result<Self> {
        let path = bundle.graph_path();
        if !path.is_file() {
            return Err(Error::FileNotFound(path));
        }
        let model = tract_onnx::onnx()
            .model_for_path(&path)
            .and_then(|m| m.with_input_names([INPUT_WAVEFORM, INPUT_FRAME_MASK, INPUT_MASK_EMBEDDING]))
            .and_then(|mut m| {
                m.select_outputs_by_name([OUTPUT_FRAMES, OUTPUT_HIDDEN_STATES])?;
                Ok(m)
            })
            .map_err(|e| Error::InvalidBundle(format!("{}: {e:#}", path.display())))?;
        Ok(Self {
            bundle: Arc::new(bundle),
            model: Arc::new(model),
            max_batch: 1,
            plans: HashMap::new(),
            plans_len: 0,
        })
    }

    pub fn open(dir: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::load(ModelBundle::load(dir)?)
    }

    /// Maximum number of corrupted copies run in one graph call.
    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    fn plan(&mut self, batch: usize, samples: usize, frames: usize) -> Result<Plan> {
        if self.plans_len != samples {
            self.plans.clear();
            self.plans_len = samples;
        }
        if let Some(plan) = self.plans.get(&batch) {
            return Ok(plan.clone());
        }
        let dim = self.bundle.metadata.feature_dim;
        let plan = (*self.model)
            .clone()
            .with_input_fact(0, f32::fact([batch, samples]).into())
            .and_then(|m| m.with_input_fact(1, bool::fact([batch, frames]).into()))
            .and_then(|m| m.with_input_fact(2, f32::fact([dim]).into()))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(graph_err)?;
        self.plans.insert(batch, plan.clone());
        Ok(plan)
    }

    /// Runs the graph on `masks.len()` copies of `waveform`.
    fn run(&mut self, waveform: &[f32], masks: &[&[usize]]) -> Result<(Tensor, Tensor)> {
        let geometry = self.geometry();
        let t = geometry.checked_frame_count(waveform.len())?;
        let batch = masks.len();
        let plan = self.plan(batch, waveform.len(), t)?;

        let mut wave = Vec::with_capacity(batch * waveform.len());
        let mut mask = vec![false; batch * t];
        for (b, m) in masks.iter().enumerate() {
            check_mask(m, t)?;
            wave.extend_from_slice(waveform);
            for &i in *m {
                mask[b * t + i] = true;
            }
        }
        let inputs = tvec!(
            Tensor::from_shape(&[batch, waveform.len()], &wave).map_err(graph_err)?.into(),
            Tensor::from_shape(&[batch, t], &mask).map_err(graph_err)?.into(),
            Tensor::from_shape(&[self.bundle.mask_vector.len()], &self.bundle.mask_vector)
                .map_err(graph_err)?
                .into(),
        );
        let mut outputs = plan.run(inputs).map_err(graph_err)?;
        if outputs.len() != 2 {
            return Err(Error::GraphExecution(format!("expected 2 outputs, got {}", outputs.len())));
        }
        let hidden = outputs.pop().unwrap().into_tensor();
        let frames = outputs.pop().unwrap().into_tensor();

        let meta = &self.bundle.metadata;
        let want_frames = [batch, t, meta.feature_dim];
        let want_hidden = [meta.num_layers, batch, t, meta.hidden_dim()];
        if frames.shape() != want_frames || hidden.shape() != want_hidden {
            return Err(Error::GraphExecution(format!(
                "output shapes {:?} / {:?}, expected {want_frames:?} / {want_hidden:?}",
                frames.shape(),
                hidden.shape()
            )));
        }
        Ok((frames, hidden))
    }

    fn waveform<'a>(&self, frames: &'a FrameSequence) -> Result<&'a [f32]> {
        frames.waveform.as_deref().ok_or_else(|| {
            Error::InvalidParams("frame sequence carries no waveform; encode it with this backend".into())
        })
    }
}

fn layer_rows(hidden: &Tensor, layer: usize, batch_index: usize) -> Result<Array2<f32>> {
    let view = hidden.to_plain_array_view::<f32>().map_err(graph_err)?;
    let rows = view
        .index_axis(Axis(0), layer - 1)
        .index_axis(Axis(0), batch_index)
        .to_owned()
        .into_dimensionality::<ndarray::Ix2>()
        .map_err(graph_err)?;
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::GraphExecution("non-finite hidden state".into()));
    }
    Ok(rows)
}

impl AcousticBackend for OnnxBackend {
    fn geometry(&self) -> FrameGeometry {
        self.bundle.metadata.geometry()
    }

    fn num_layers(&self) -> usize {
        self.bundle.metadata.num_layers
    }

    fn encode_frames(&mut self, clip: &AudioClip) -> Result<FrameSequence> {
        check_sample_rate(clip, &self.geometry())?;
        let (frames, _) = self.run(&clip.samples, &[&[]])?;
        let view = frames.to_plain_array_view::<f32>().map_err(graph_err)?;
        let frames = view
            .index_axis(Axis(0), 0)
            .to_owned()
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(graph_err)?;
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::GraphExecution("non-finite frame feature".into()));
        }
        Ok(FrameSequence {
            frames,
            source_id: clip.source_id.clone(),
            waveform: Some(clip.samples.as_slice().into()),
        })
    }

    fn contextualize(
        &mut self,
        frames: &FrameSequence,
        masked: &[usize],
        layer: usize,
    ) -> Result<LayerFeatures> {
        Ok(self.contextualize_batch(frames, &[masked], layer)?.remove(0))
    }

    fn contextualize_batch(
        &mut self,
        frames: &FrameSequence,
        masks: &[&[usize]],
        layer: usize,
    ) -> Result<Vec<LayerFeatures>> {
        check_layer(layer, self.num_layers())?;
        let waveform = self.waveform(frames)?;
        let waveform: Arc<[f32]> = Arc::from(waveform);
        let mut out = Vec::with_capacity(masks.len());
        for chunk in masks.chunks(self.max_batch) {
            let (_, hidden) = self.run(&waveform, chunk)?;
            for b in 0..chunk.len() {
                out.push(LayerFeatures {
                    layer,
                    features: layer_rows(&hidden, layer, b)?,
                });
            }
        }
        Ok(out)
    }

    fn codebook(&self, layer: usize) -> Result<Arc<Codebook>> {
        self.bundle.codebook(layer)
    }

    fn fork(&self) -> Result<Box<dyn AcousticBackend>> {
        Ok(Box::new(Self {
            bundle: self.bundle.clone(),
            model: self.model.clone(),
            max_batch: self.max_batch,
            plans: HashMap::new(),
            plans_len: 0,
        }))
    }
}
