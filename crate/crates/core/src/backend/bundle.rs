use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::FrameGeometry;
use crate::audio::SAMPLE_RATE;
use crate::error::{Error, Result};
use crate::quantizer::{load_codebook, Codebook};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

pub const METADATA_FILE: &str = "metadata.json";
pub const GRAPH_FILE: &str = "encoder.onnx";
pub const MASK_FILE: &str = "mask.f32";

/// Contents of `metadata.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub format_version: u32,
    pub sample_rate: u32,
    pub frame_hop_samples: usize,
    pub receptive_field_samples: usize,
    /// Width of the projected frames the mask embedding replaces.
    pub feature_dim: usize,
    /// Width of the Transformer hidden states; equals `feature_dim` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    pub num_layers: usize,
    /// Layer index (as a decimal string) to codebook file name.
    pub codebook_files: BTreeMap<String, String>,
}

impl BundleMetadata {
    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim.unwrap_or(self.feature_dim)
    }

    pub fn geometry(&self) -> FrameGeometry {
        FrameGeometry {
            sample_rate: self.sample_rate,
            hop_samples: self.frame_hop_samples,
            receptive_field_samples: self.receptive_field_samples,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidBundle(msg));
        if self.format_version != BUNDLE_FORMAT_VERSION {
            return bad(format!("unsupported format_version {}", self.format_version));
        }
        if self.sample_rate != SAMPLE_RATE {
            return bad(format!("sample_rate must be {SAMPLE_RATE}, got {}", self.sample_rate));
        }
        if self.frame_hop_samples == 0 || self.receptive_field_samples == 0 {
            return bad("frame geometry must be positive".into());
        }
        if self.feature_dim == 0 || self.hidden_dim() == 0 || self.num_layers == 0 {
            return bad("dimensions and num_layers must be positive".into());
        }
        for key in self.codebook_files.keys() {
            match key.parse::<usize>() {
                Ok(l) if (1..=self.num_layers).contains(&l) => {}
                _ => return bad(format!("codebook key {key:?} is not a layer in 1..={}", self.num_layers)),
            }
        }
        Ok(())
    }
}

/// A validated bundle directory: metadata, mask embedding and codebooks.
/// The inference graph is opened by the backend that executes it.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub dir: PathBuf,
    pub metadata: BundleMetadata,
    pub mask_vector: Vec<f32>,
    pub codebooks: BTreeMap<usize, Arc<Codebook>>,
}

impl ModelBundle {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let meta_path = dir.join(METADATA_FILE);
        if !meta_path.is_file() {
            return Err(Error::FileNotFound(meta_path));
        }
        let metadata: BundleMetadata = serde_json::from_slice(&fs::read(&meta_path)?)?;
        metadata.validate()?;

        let mask_path = dir.join(MASK_FILE);
        if !mask_path.is_file() {
            return Err(Error::FileNotFound(mask_path));
        }
        let mask_vector = read_f32_le(&fs::read(&mask_path)?, metadata.feature_dim)?;

        let mut codebooks = BTreeMap::new();
        for (key, file) in &metadata.codebook_files {
            let layer: usize = key.parse().expect("validated above");
            let codebook = load_codebook(dir.join(file))?;
            if codebook.dim() != metadata.hidden_dim() {
                return Err(Error::DimensionMismatch {
                    expected: metadata.hidden_dim(),
                    found: codebook.dim(),
                });
            }
            if codebook.layer != layer {
                return Err(Error::LayerMismatch {
                    features: layer,
                    codebook: codebook.layer,
                });
            }
            codebooks.insert(layer, Arc::new(codebook));
        }

        Ok(Self {
            dir,
            metadata,
            mask_vector,
            codebooks,
        })
    }

    pub fn graph_path(&self) -> PathBuf {
        self.dir.join(GRAPH_FILE)
    }

    pub fn codebook(&self, layer: usize) -> Result<Arc<Codebook>> {
        super::check_layer(layer, self.metadata.num_layers)?;
        self.codebooks.get(&layer).cloned().ok_or_else(|| {
            Error::InvalidBundle(format!("no codebook exported for layer {layer}"))
        })
    }
}

fn read_f32_le(bytes: &[u8], expected_len: usize) -> Result<Vec<f32>> {
    let expected = expected_len * 4;
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch {
            expected: expected_len,
            found: bytes.len() / 4,
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidBundle("mask vector contains non-finite values".into()));
    }
    Ok(values)
}

/// Writes `metadata.json` and `mask.f32` into `dir`; codebook files are
/// written separately with [`crate::quantizer::save_codebook`].
pub fn write_bundle_files(dir: &Path, metadata: &BundleMetadata, mask_vector: &[f32]) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(METADATA_FILE), serde_json::to_vec_pretty(metadata)?)?;
    let bytes: Vec<u8> = mask_vector.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.join(MASK_FILE), bytes)?;
    Ok(())
}
