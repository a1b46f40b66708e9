//! Closed-form stand-in for the acoustic model.
//!
//! Frames are summary statistics of non-overlapping 320-sample windows and
//! "contextualization" recovers masked rows by linear interpolation between
//! the nearest unmasked neighbours. Smooth signals are therefore recovered
//! exactly while rapidly varying ones are not.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};

use crate::audio::{AudioClip, SAMPLE_RATE};
use crate::backend::{
    check_layer, check_mask, check_sample_rate, AcousticBackend, FrameGeometry, FrameSequence,
    LayerFeatures,
};
use crate::error::Result;
use crate::quantizer::Codebook;

pub const MOCK_FEATURE_DIM: usize = 8;
pub const MOCK_WINDOW: usize = 320;
pub const MOCK_CLUSTERS: usize = 16;
pub const MOCK_NUM_LAYERS: usize = 12;

pub const MOCK_GEOMETRY: FrameGeometry = FrameGeometry {
    sample_rate: SAMPLE_RATE,
    hop_samples: MOCK_WINDOW,
    receptive_field_samples: MOCK_WINDOW,
};

#[derive(Debug, Clone)]
pub struct MockBackend {
    codebooks: Vec<Arc<Codebook>>,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        let codebooks = (1..=MOCK_NUM_LAYERS)
            .map(|layer| Arc::new(mock_codebook(layer)))
            .collect();
        Self { codebooks }
    }

    /// Always the zero vector.
    pub fn mask_vector(&self) -> [f32; MOCK_FEATURE_DIM] {
        [0.0; MOCK_FEATURE_DIM]
    }
}

/// 16 centroids spread evenly over the mean-amplitude axis:
/// centroid `i` is `[-1 + (2i+1)/16, 0, ..., 0]`.
pub fn mock_codebook(layer: usize) -> Codebook {
    let centroids = Array2::from_shape_fn((MOCK_CLUSTERS, MOCK_FEATURE_DIM), |(i, j)| {
        if j == 0 {
            -1.0 + (2 * i + 1) as f32 / MOCK_CLUSTERS as f32
        } else {
            0.0
        }
    });
    Codebook::new(centroids, layer).expect("mock centroids are distinct")
}

/// `[mean, rms, min, max, first, last, last - first, zero-crossing rate]`
/// for each non-overlapping window.
pub fn mock_encode(clip: &AudioClip) -> Result<FrameSequence> {
    check_sample_rate(clip, &MOCK_GEOMETRY)?;
    let t = MOCK_GEOMETRY.checked_frame_count(clip.len())?;
    let mut frames = Array2::zeros((t, MOCK_FEATURE_DIM));
    for (mut row, window) in frames
        .rows_mut()
        .into_iter()
        .zip(clip.samples.chunks_exact(MOCK_WINDOW))
    {
        row.assign(&ndarray::arr1(&window_stats(window)));
    }
    Ok(FrameSequence {
        frames,
        source_id: clip.source_id.clone(),
        waveform: None,
    })
}

fn window_stats(w: &[f32]) -> [f32; MOCK_FEATURE_DIM] {
    let n = w.len() as f64;
    let mean = w.iter().map(|&s| s as f64).sum::<f64>() / n;
    let rms = (w.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / n).sqrt();
    let min = w.iter().copied().fold(f32::INFINITY, f32::min);
    let max = w.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let first = w[0];
    let last = w[w.len() - 1];
    let crossings = w
        .windows(2)
        .filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0))
        .count();
    let zcr = if w.len() > 1 {
        crossings as f64 / (w.len() - 1) as f64
    } else {
        0.0
    };
    [
        mean as f32,
        rms as f32,
        min,
        max,
        first,
        last,
        last - first,
        zcr as f32,
    ]
}

/// Masked rows become the linear interpolation of the nearest unmasked rows
/// on either side; at the edges the single available neighbour is copied,
/// and a fully masked sequence becomes all zeros. `layer` is ignored.
pub fn mock_contextualize(frames: ArrayView2<f32>, masked: &[usize], layer: usize) -> LayerFeatures {
    let t = frames.nrows();
    let mut is_masked = vec![false; t];
    for &m in masked {
        is_masked[m] = true;
    }
    let mut out = frames.to_owned();
    if masked.is_empty() {
        return LayerFeatures { layer, features: out };
    }

    // nearest unmasked index to the left / right of every position
    let mut left = vec![None; t];
    let mut last = None;
    for i in 0..t {
        if !is_masked[i] {
            last = Some(i);
        }
        left[i] = last;
    }
    let mut right = vec![None; t];
    let mut next = None;
    for i in (0..t).rev() {
        if !is_masked[i] {
            next = Some(i);
        }
        right[i] = next;
    }

    for i in (0..t).filter(|&i| is_masked[i]) {
        let mut row = out.row_mut(i);
        match (left[i], right[i]) {
            (Some(a), Some(b)) => {
                let w = (i - a) as f32 / (b - a) as f32;
                for ((dst, &x), &y) in row.iter_mut().zip(frames.row(a)).zip(frames.row(b)) {
                    *dst = x + (y - x) * w;
                }
            }
            (Some(a), None) => row.assign(&frames.row(a)),
            (None, Some(b)) => row.assign(&frames.row(b)),
            (None, None) => row.fill(0.0),
        }
    }
    LayerFeatures { layer, features: out }
}

impl AcousticBackend for MockBackend {
    fn geometry(&self) -> FrameGeometry {
        MOCK_GEOMETRY
    }

    fn num_layers(&self) -> usize {
        MOCK_NUM_LAYERS
    }

    fn encode_frames(&mut self, clip: &AudioClip) -> Result<FrameSequence> {
        mock_encode(clip)
    }

    fn contextualize(
        &mut self,
        frames: &FrameSequence,
        masked: &[usize],
        layer: usize,
    ) -> Result<LayerFeatures> {
        check_layer(layer, MOCK_NUM_LAYERS)?;
        check_mask(masked, frames.len())?;
        Ok(mock_contextualize(frames.frames.view(), masked, layer))
    }

    fn codebook(&self, layer: usize) -> Result<Arc<Codebook>> {
        check_layer(layer, MOCK_NUM_LAYERS)?;
        Ok(self.codebooks[layer - 1].clone())
    }

    fn fork(&self) -> Result<Box<dyn AcousticBackend>> {
        Ok(Box::new(self.clone()))
    }
}

/// Synthetic test signal: a slow sine plus a level that jumps to a fresh
/// random value every window, scaled by `roughness`. With the mock backend
/// the aMRT grows with `roughness`, and a zero roughness is fully recovered
/// away from the clip edges.
pub fn synthetic_signal(roughness: f32, num_samples: usize, seed: u64) -> Vec<f32> {
    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut level = 0.0f32;
    (0..num_samples)
        .map(|n| {
            if n % MOCK_WINDOW == 0 {
                level = rng.random::<f32>() - 0.5;
            }
            let t = n as f32 / SAMPLE_RATE as f32;
            0.4 * (std::f32::consts::PI * t).sin() + roughness * level
        })
        .collect()
}
