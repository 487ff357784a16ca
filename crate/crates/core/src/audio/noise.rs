use rand::Rng;
use rand_distr::StandardNormal;

use super::{mean_square, Waveform};
use crate::error::{Error, Result};
use crate::numerics::{stream_rng, Stream};

/// Where interference comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSource {
    /// Gaussian white noise.
    White,
    /// Approximately 1/f noise.
    Pink,
    /// A recorded noise clip, tiled as needed.
    Clip(Waveform),
}

impl NoiseSource {
    /// `len` samples of this source. Generated sources are seeded; clips are
    /// returned as-is and tiled by [`mix_noise`].
    pub fn render(&self, len: usize, sample_rate: u32, seed: u64) -> Result<Waveform> {
        let mut rng = stream_rng(seed, Stream::Noise, 1);
        let raw: Vec<f64> = match self {
            NoiseSource::Clip(w) => return Ok(w.clone()),
            NoiseSource::White => (0..len).map(|_| rng.sample(StandardNormal)).collect(),
            NoiseSource::Pink => pink(len, &mut rng),
        };
        let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            return Err(Error::DegenerateAudio("generated noise is silent".into()));
        }
        Waveform::new(raw.into_iter().map(|v| v / peak).collect(), sample_rate)
    }
}

/// Paul Kellet's refined pink filter applied to white Gaussian noise.
fn pink<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..len)
        .map(|_| {
            let white: f64 = rng.sample(StandardNormal);
            b[0] = 0.99886 * b[0] + white * 0.0555179;
            b[1] = 0.99332 * b[1] + white * 0.0750759;
            b[2] = 0.96900 * b[2] + white * 0.1538520;
            b[3] = 0.86650 * b[3] + white * 0.3104856;
            b[4] = 0.55000 * b[4] + white * 0.5329522;
            b[5] = -0.7616 * b[5] - white * 0.0168980;
            let out = b.iter().sum::<f64>() + white * 0.5362;
            b[6] = white * 0.115926;
            out
        })
        .collect()
}

/// Target SNR plus the noise and the seed that picks the noise alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrSpec {
    pub snr_db: f64,
    pub source: NoiseSource,
    pub seed: u64,
}

/// `10·log10(P_signal / P_noise)` with `P` the mean square.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (mean_square(signal) / mean_square(noise)).log10()
}

/// The noise actually added by [`mix_noise`], scaled to the target SNR.
///
/// Noise at least as long as the signal is cropped at a seeded offset (so an
/// equal-length noise is used as-is); shorter noise is tiled circularly from a
/// seeded offset.
pub fn scaled_noise(signal: &Waveform, noise: &Waveform, snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if !snr_db.is_finite() {
        return Err(Error::config(format!("SNR must be finite, got {snr_db}")));
    }
    let n = signal.len();
    let mut rng = stream_rng(seed, Stream::Noise, 0);
    let offset = if noise.len() >= n {
        rng.random_range(0..=noise.len() - n)
    } else {
        rng.random_range(0..noise.len())
    };
    let src = noise.samples();
    let tiled: Vec<f64> = (0..n).map(|i| src[(offset + i) % src.len()]).collect();
    let p_signal = signal.power();
    let p_noise = mean_square(&tiled);
    if p_signal == 0.0 {
        return Err(Error::DegenerateAudio("signal has zero power".into()));
    }
    if p_noise == 0.0 {
        return Err(Error::DegenerateAudio("noise has zero power over the mixed span".into()));
    }
    let gain = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(tiled.into_iter().map(|v| v * gain).collect())
}

/// `signal + scaled noise`, clamped to `[-1, 1]`. The signal itself is never rescaled.
pub fn mix_noise(signal: &Waveform, noise: &Waveform, spec: &SnrSpec) -> Result<Waveform> {
    let scaled = scaled_noise(signal, noise, spec.snr_db, spec.seed)?;
    let mixed = signal.samples().iter().zip(&scaled).map(|(s, n)| s + n).collect();
    Waveform::clamped(mixed, signal.sample_rate())
}
