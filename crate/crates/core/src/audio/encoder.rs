//! Encoder interface and the deterministic toy encoder.
//!
//! The toy encoder splits a chunk into non-overlapping 512-sample frames,
//! applies a Hann window, and takes the power spectrum. Sixty-four triangular
//! bands with centers evenly spaced over the 257 spectrum bins sum the
//! power per frame; band energies are averaged over frames, floored at 1e-10,
//! and mapped through `log10`. A fixed Gaussian matrix (entries N(0, 1/64),
//! drawn from the seed) projects the 64 features to `d_model`.

use std::sync::Arc;

use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use sha2::{Digest, Sha256};

use super::Waveform;
use crate::error::{Error, Result};
use crate::numerics::{stream_rng, Stream, Tensor2D};

pub const TOY_BANDS: usize = 64;
pub const TOY_FRAME: usize = 512;
pub const TOY_LOG_FLOOR: f64 = 1e-10;

/// Maps one chunk to a `dim()`-vector.
pub trait EncoderPlugin: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Same chunk and configuration always give the same vector.
    fn deterministic(&self) -> bool;
    fn encode(&self, chunk: &Waveform) -> Result<Vec<f64>>;
}

/// Log band energies followed by a fixed random projection.
#[derive(Clone)]
pub struct ToyEncoder {
    seed: u64,
    projection: Tensor2D,
    bands: Vec<Vec<(usize, f64)>>,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ToyEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToyEncoder")
            .field("seed", &self.seed)
            .field("d_model", &self.projection.cols())
            .finish()
    }
}

fn triangular_bands() -> Vec<Vec<(usize, f64)>> {
    let bins = TOY_FRAME / 2 + 1;
    let spacing = (bins - 1) as f64 / (TOY_BANDS + 1) as f64;
    (1..=TOY_BANDS)
        .map(|b| {
            let center = b as f64 * spacing;
            (0..bins)
                .filter_map(|k| {
                    let w = 1.0 - (k as f64 - center).abs() / spacing;
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

impl ToyEncoder {
    pub fn new(seed: u64, d_model: usize) -> Result<Self> {
        if d_model == 0 {
            return Err(Error::config("encoder dimension must be positive"));
        }
        let normal = Normal::new(0.0, 1.0 / (TOY_BANDS as f64).sqrt()).expect("valid sigma");
        let mut rng = stream_rng(seed, Stream::Encoder, 0);
        let data = (0..TOY_BANDS * d_model).map(|_| normal.sample(&mut rng)).collect();
        let window = (0..TOY_FRAME)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / TOY_FRAME as f64).cos())
            .collect();
        Ok(Self {
            seed,
            projection: Tensor2D::from_vec(TOY_BANDS, d_model, data)?,
            bands: triangular_bands(),
            window,
            fft: FftPlanner::new().plan_fft_forward(TOY_FRAME),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn projection(&self) -> &Tensor2D {
        &self.projection
    }

    /// The 64 log band energies before projection.
    pub fn features(&self, chunk: &[f64]) -> Vec<f64> {
        let frames = (chunk.len() / TOY_FRAME).max(1);
        let mut energy = vec![0.0; TOY_BANDS];
        let mut buf = vec![Complex::new(0.0, 0.0); TOY_FRAME];
        let mut power = vec![0.0; TOY_FRAME / 2 + 1];
        for f in 0..frames {
            let start = f * TOY_FRAME;
            for (i, b) in buf.iter_mut().enumerate() {
                let x = chunk.get(start + i).copied().unwrap_or(0.0);
                *b = Complex::new(x * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (e, band) in energy.iter_mut().zip(&self.bands) {
                *e += band.iter().map(|&(k, w)| w * power[k]).sum::<f64>();
            }
        }
        energy
            .into_iter()
            .map(|e| (e / frames as f64).max(TOY_LOG_FLOOR).log10())
            .collect()
    }

    /// Projects a feature vector to `d_model`.
    pub fn project(&self, features: &[f64]) -> Vec<f64> {
        let d = self.projection.cols();
        let mut out = vec![0.0; d];
        for (r, &f) in features.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.projection.row(r)) {
                *o += f * w;
            }
        }
        out
    }

    /// SHA-256 over every constant the encoder uses.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        for v in self.projection.data().iter().chain(&self.window) {
            h.update(v.to_le_bytes());
        }
        for band in &self.bands {
            for &(k, w) in band {
                h.update((k as u64).to_le_bytes());
                h.update(w.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

impl EncoderPlugin for ToyEncoder {
    fn name(&self) -> &str {
        "toy"
    }

    fn dim(&self) -> usize {
        self.projection.cols()
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn encode(&self, chunk: &Waveform) -> Result<Vec<f64>> {
        Ok(self.project(&self.features(chunk.samples())))
    }
}
