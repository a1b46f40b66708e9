//! Codebooks of k-means centroids and nearest-centroid tokenization.
//!
//! Codebooks are stored in the KMCB format:
//!
//! | bytes | field                         |
//! |-------|-------------------------------|
//! | 4     | magic `b"KMCB"`               |
//! | 4     | version, u32 LE (= 1)         |
//! | 4     | n_clusters, u32 LE            |
//! | 4     | dim, u32 LE                   |
//! | 4     | layer, u32 LE                 |
//! | 4·n·d | centroids, f32 LE, row-major  |

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::backend::LayerFeatures;
use crate::error::{Error, Result};

pub const KMCB_MAGIC: &[u8; 4] = b"KMCB";
pub const KMCB_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// `C x dim` centroid matrix.
    pub centroids: Array2<f32>,
    /// Transformer layer whose features this codebook quantizes.
    pub layer: usize,
}

impl Codebook {
    pub fn new(centroids: Array2<f32>, layer: usize) -> Result<Self> {
        if centroids.nrows() < 2 {
            return Err(Error::InvalidCodebook(format!(
                "need at least 2 centroids, got {}",
                centroids.nrows()
            )));
        }
        if centroids.ncols() == 0 {
            return Err(Error::InvalidCodebook("zero-dimensional centroids".into()));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCodebook("non-finite centroid entry".into()));
        }
        let mut seen = HashSet::with_capacity(centroids.nrows());
        for (i, row) in centroids.rows().into_iter().enumerate() {
            let key: Vec<u32> = row.iter().map(|v| v.to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::InvalidCodebook(format!("centroid {i} duplicates an earlier row")));
            }
        }
        Ok(Self { centroids, layer })
    }

    /// Number of clusters `C`.
    pub fn len(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// Index of the closest centroid by squared Euclidean distance,
    /// accumulated in f64. Ties go to the lowest index.
    pub fn nearest(&self, frame: ArrayView1<f32>) -> u32 {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (i, centroid) in self.centroids.rows().into_iter().enumerate() {
            let dist: f64 = centroid
                .iter()
                .zip(frame.iter())
                .map(|(&c, &x)| {
                    let d = x as f64 - c as f64;
                    d * d
                })
                .sum();
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        best as u32
    }

    fn check_features(&self, features: &LayerFeatures) -> Result<()> {
        if features.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.dim(),
            });
        }
        if features.layer != self.layer {
            return Err(Error::LayerMismatch {
                features: features.layer,
                codebook: self.layer,
            });
        }
        Ok(())
    }
}

/// Discrete acoustic units. When `positions` is set, `tokens[i]` is the unit
/// at frame `positions[i]` (a sequence restricted to a mask set); otherwise
/// `tokens[t]` is the unit at frame `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub positions: Option<Vec<usize>>,
}

impl TokenSequence {
    pub fn full(tokens: Vec<u32>) -> Self {
        Self {
            tokens,
            positions: None,
        }
    }

    pub fn restricted(positions: Vec<usize>, tokens: Vec<u32>) -> Self {
        assert_eq!(positions.len(), tokens.len(), "one token per position");
        Self {
            tokens,
            positions: Some(positions),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `(frame index, token)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.tokens.iter().enumerate().map(move |(i, &tok)| {
            let pos = self.positions.as_ref().map_or(i, |p| p[i]);
            (pos, tok)
        })
    }
}

/// Assigns every frame of `features` to its nearest centroid.
pub fn tokenize(features: &LayerFeatures, codebook: &Codebook) -> Result<TokenSequence> {
    codebook.check_features(features)?;
    let tokens = features
        .features
        .rows()
        .into_iter()
        .map(|row| codebook.nearest(row))
        .collect();
    Ok(TokenSequence::full(tokens))
}

/// Tokenizes only the listed rows, producing a restricted sequence.
pub fn tokenize_rows(
    features: &LayerFeatures,
    codebook: &Codebook,
    rows: &[usize],
) -> Result<TokenSequence> {
    codebook.check_features(features)?;
    crate::backend::check_mask(rows, features.len())?;
    let tokens = rows
        .iter()
        .map(|&r| codebook.nearest(features.features.row(r)))
        .collect();
    Ok(TokenSequence::restricted(rows.to_vec(), tokens))
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    decode_codebook(&fs::read(path)?)
}

pub fn decode_codebook(bytes: &[u8]) -> Result<Codebook> {
    if bytes.len() < 4 || &bytes[..4] != KMCB_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != KMCB_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let clusters = word(8) as usize;
    let dim = word(12) as usize;
    let layer = word(16) as usize;

    let expected = clusters
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::InvalidCodebook("header sizes overflow".into()))?;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::InvalidCodebook(format!(
            "{} trailing bytes after centroid data",
            bytes.len() - expected
        )));
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let centroids = Array2::from_shape_vec((clusters, dim), values)
        .map_err(|e| Error::InvalidCodebook(e.to_string()))?;
    Codebook::new(centroids, layer)
}

pub fn encode_codebook(codebook: &Codebook) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + codebook.centroids.len() * 4);
    out.extend_from_slice(KMCB_MAGIC);
    for word in [
        KMCB_VERSION,
        codebook.len() as u32,
        codebook.dim() as u32,
        codebook.layer as u32,
    ] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for v in codebook.centroids.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn save_codebook(path: impl AsRef<Path>, codebook: &Codebook) -> Result<()> {
    fs::write(path, encode_codebook(codebook))?;
    Ok(())
}
