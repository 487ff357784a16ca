//! Long-audio preprocessing: silence removal, fixed-length chunking, noise
//! injection at a target SNR, and per-chunk encoding.
//!
//! `encode_clip` runs the whole chain and returns one encoder row per chunk,
//! in chunk order.

mod chunking;
mod encoder;
mod noise;
mod silence;
mod wav;

pub use chunking::{chunk, expected_chunk_count, ChunkSet, MIN_TAIL_S};
pub use encoder::{EncoderPlugin, ToyEncoder, TOY_BANDS, TOY_FRAME, TOY_LOG_FLOOR};
pub use noise::{mix_noise, scaled_noise, snr_db, NoiseSource, SnrSpec};
pub use silence::{remove_silence, SilenceConfig};
pub use wav::{read_wav, write_wav, WavFormat};

use crate::error::{Error, Result};
use crate::numerics::Tensor2D;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_CHUNK_LEN_S: f64 = 10.0;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if let Some((i, v)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::data(format!("sample {i} is {v}, outside [-1, 1]")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Builds a waveform from arbitrary samples, clamping into `[-1, 1]`.
    pub fn clamped(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite audio sample".into()));
        }
        Self::new(samples.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(), sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    /// Reduces the rate by an integer factor, averaging each block of `factor` samples.
    pub fn decimate(&self, factor: u32) -> Result<Waveform> {
        if factor == 0 || self.sample_rate % factor != 0 {
            return Err(Error::config(format!("cannot decimate {} Hz by {factor}", self.sample_rate)));
        }
        let f = factor as usize;
        let samples = self.samples.chunks(f).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        Waveform::new(samples, self.sample_rate / factor)
    }
}

pub(crate) fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Settings shared by every clip of a preprocessing run.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub silence: SilenceConfig,
    pub chunk_len_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            silence: SilenceConfig::default(),
            chunk_len_s: DEFAULT_CHUNK_LEN_S,
        }
    }
}

/// Silence removal, chunking, then one encoder row per chunk.
pub fn encode_clip(w: &Waveform, plugin: &dyn EncoderPlugin, config: &PreprocessConfig) -> Result<Tensor2D> {
    let trimmed = remove_silence(w, &config.silence)?;
    let chunks = chunk(&trimmed, config.chunk_len_s)?;
    encode_chunks(&chunks, plugin)
}

/// Encodes every chunk of `set`, one row each.
pub fn encode_chunks(set: &ChunkSet, plugin: &dyn EncoderPlugin) -> Result<Tensor2D> {
    let d = plugin.dim();
    let mut data = Vec::with_capacity(set.len() * d);
    for c in set.chunks() {
        let row = plugin.encode(c)?;
        if row.len() != d {
            return Err(Error::config(format!("encoder {} returned {} values, expected {d}", plugin.name(), row.len())));
        }
        data.extend(row);
    }
    Tensor2D::from_vec(set.len(), d, data)
}

#[cfg(test)]
mod tests;
