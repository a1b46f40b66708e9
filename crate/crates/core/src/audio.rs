//! WAV loading, channel mixdown and band-limited resampling to the engine rate.

use std::path::Path;

use audioadapter_buffers::direct::InterleavedSlice;
use hound::{SampleFormat, WavReader};
use rubato::{
    Async, FixedAsync, Resampler, SincInterpolationParameters, SincInterpolationType,
    WindowFunction,
};

use crate::error::{Error, Result};

/// Sample rate every clip is normalized to before encoding.
pub const SAMPLE_RATE: u32 = 16_000;

const RESAMPLE_CHUNK: usize = 1024;

/// Mono waveform with amplitudes nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        let source_id = source_id.into();
        if samples.is_empty() {
            return Err(Error::EmptyAudio(source_id.into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::UnsupportedFormat(format!(
                "non-finite sample at index {i} in {source_id}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a RIFF/WAVE file (integer PCM or 32-bit float), averages channels to
/// mono and resamples to [`SAMPLE_RATE`].
///
/// The clip's `source_id` is the file stem.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::UnsupportedFormat(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: zero channels",
            path.display()
        )));
    }

    let interleaved = read_samples(reader, spec, path)?;
    let mono = mixdown(&interleaved, channels);
    if mono.is_empty() {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }

    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let samples = resample(&mono, spec.sample_rate, SAMPLE_RATE)?;
    AudioClip::new(samples, SAMPLE_RATE, source_id)
}

fn read_samples<R: std::io::Read>(
    reader: WavReader<R>,
    spec: hound::WavSpec,
    path: &Path,
) -> Result<Vec<f32>> {
    let unsupported = |e: hound::Error| Error::UnsupportedFormat(format!("{}: {e}", path.display()));
    match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<Result<Vec<_>, _>>()
            .map_err(unsupported),
        (SampleFormat::Int, bits @ 8..=32) => {
            // full-scale integer maps to [-1, 1)
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 / scale) as f32))
                .collect::<Result<Vec<_>, _>>()
                .map_err(unsupported)
        }
        (format, bits) => Err(Error::UnsupportedFormat(format!(
            "{}: {bits}-bit {format:?} samples",
            path.display()
        ))),
    }
}

fn mixdown(interleaved: &[f32], channels: usize) -> Vec<f32> {
    if channels == 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().map(|&s| s as f64).sum::<f64>() / channels as f64) as f32)
        .collect()
}

/// Expected output length for a rate conversion, rounded to the nearest sample.
pub fn resampled_len(input_len: usize, from_rate: u32, to_rate: u32) -> usize {
    let num = input_len as u128 * to_rate as u128;
    ((num + from_rate as u128 / 2) / from_rate as u128) as usize
}

/// Windowed-sinc resampling of a mono signal. Identity when the rates match.
pub fn resample(samples: &[f32], from_rate: u32, to_rate: u32) -> Result<Vec<f32>> {
    if from_rate == 0 || to_rate == 0 {
        return Err(Error::UnsupportedFormat("zero sample rate".into()));
    }
    if from_rate == to_rate {
        return Ok(samples.to_vec());
    }
    let target_len = resampled_len(samples.len(), from_rate, to_rate);
    if target_len == 0 {
        return Ok(Vec::new());
    }

    let params = SincInterpolationParameters {
        sinc_len: 256,
        f_cutoff: None,
        oversampling_factor: 256,
        interpolation: SincInterpolationType::Cubic,
        window: WindowFunction::BlackmanHarris2,
    };
    let ratio = to_rate as f64 / from_rate as f64;
    let mut resampler = Async::<f64>::new_sinc(ratio, 1.0, &params, RESAMPLE_CHUNK, 1, FixedAsync::Input)
        .map_err(|e| Error::UnsupportedFormat(format!("resampler: {e}")))?;

    let input: Vec<f64> = samples.iter().map(|&s| s as f64).collect();
    let adapter = InterleavedSlice::new(&input, 1, input.len())
        .map_err(|e| Error::UnsupportedFormat(format!("resampler input: {e}")))?;
    let output = resampler
        .process_all(&adapter, input.len(), None)
        .map_err(|e| Error::UnsupportedFormat(format!("resampler: {e}")))?;

    let mut out: Vec<f32> = output.take_data().into_iter().map(|s| s as f32).collect();
    out.resize(target_len, 0.0);
    Ok(out)
}
