//! Synthetic paired audio/caption benchmark.
//!
//! Each class owns a unit latent `z`. An audio clip is one to three 10 s
//! blocks separated by pure silence: one block is the class event, a
//! broadband noise whose log spectral envelope is `A·z` plus Gaussian jitter,
//! the others are near-flat distractors. Caption token rows are `zᵀB` plus
//! Gaussian jitter. `A` and `B` are fixed random maps, so retrieval is
//! solvable but only through the shared latent.
//!
//! Block and gap lengths are whole multiples of the silence detector's hop,
//! so silence removal excises every gap exactly and each chunk is one block.

use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::dataset::{caption_id, AudioRef, Caption, Dataset, Item, Split};
use crate::audio::{encode_clip, PreprocessConfig, ToyEncoder, Waveform};
use crate::error::{Error, Result};
use crate::numerics::{stream_rng, Stream, Tensor2D};

/// Control points of the synthetic spectral envelope.
pub const ENVELOPE_POINTS: usize = 32;
/// RMS of every synthesized block (-20 dBFS).
pub const BLOCK_RMS: f64 = 0.1;
/// Spread of distractor envelopes, in natural-log amplitude.
pub const DISTRACTOR_SPREAD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDatasetSpec {
    pub num_classes: usize,
    pub pairs_per_class: usize,
    pub latent_dim: usize,
    pub audio_sigma: f64,
    pub text_sigma: f64,
    /// Blocks per clip, inclusive range; exactly one is the event.
    pub blocks: (usize, usize),
    pub block_s: f64,
    /// Silence between blocks, seconds, inclusive range.
    pub gap_s: (f64, f64),
    /// Caption tokens, inclusive range.
    pub tokens: (usize, usize),
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SyntheticDatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 32,
            pairs_per_class: 8,
            latent_dim: 16,
            audio_sigma: 0.1,
            text_sigma: 0.1,
            blocks: (1, 3),
            block_s: 10.0,
            gap_s: (1.5, 3.0),
            tokens: (3, 6),
            sample_rate: 16_000,
            seed: 0,
        }
    }
}

impl SyntheticDatasetSpec {
    pub fn new(num_classes: usize, pairs_per_class: usize, sigma: f64, seed: u64) -> Self {
        Self {
            num_classes,
            pairs_per_class,
            audio_sigma: sigma,
            text_sigma: sigma,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.num_classes == 0 || self.latent_dim == 0 {
            return bad("synthetic data needs at least one class and latent dimension".into());
        }
        if self.pairs_per_class < 3 {
            return bad(format!("pairs_per_class {} < 3 leaves a split empty", self.pairs_per_class));
        }
        if !(self.audio_sigma >= 0.0 && self.text_sigma >= 0.0) {
            return bad("noise levels must be nonnegative".into());
        }
        if self.blocks.0 == 0 || self.blocks.0 > self.blocks.1 {
            return bad(format!("invalid block range {:?}", self.blocks));
        }
        if self.tokens.0 == 0 || self.tokens.0 > self.tokens.1 {
            return bad(format!("invalid token range {:?}", self.tokens));
        }
        if !(self.block_s > 0.0) || !(self.gap_s.0 > 0.0 && self.gap_s.0 <= self.gap_s.1) {
            return bad("block and gap durations must be positive".into());
        }
        if self.sample_rate < 1_000 {
            return bad(format!("sample rate {} is too low", self.sample_rate));
        }
        Ok(())
    }

    /// Pairs per class held out for validation and for testing.
    pub fn held_out_per_class(&self) -> usize {
        (self.pairs_per_class / 8).max(1)
    }

    pub fn split_of(&self, index_in_class: usize) -> Split {
        let h = self.held_out_per_class();
        let p = self.pairs_per_class;
        if index_in_class >= p - h {
            Split::Test
        } else if index_in_class >= p - 2 * h {
            Split::Validation
        } else {
            Split::Train
        }
    }

    pub fn len(&self) -> usize {
        self.num_classes * self.pairs_per_class
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn hop(&self) -> usize {
        (self.sample_rate as usize / 100).max(1)
    }

    fn world(&self, d_model: usize) -> World {
        let mut rng = stream_rng(self.seed, Stream::Synthetic, 0);
        let mut gauss = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let latents = (0..self.num_classes)
            .map(|_| {
                let v = gauss(self.latent_dim);
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let audio_map = gauss(ENVELOPE_POINTS * self.latent_dim);
        let text_map = gauss(self.latent_dim * d_model);
        World { latents, audio_map, text_map, d_model }
    }

    /// Waveform of clip `index` (class `index / pairs_per_class`).
    pub fn render_clip(&self, index: usize) -> Result<Waveform> {
        self.validate()?;
        if index >= self.len() {
            return Err(Error::usage(format!("clip {index} out of range")));
        }
        // Audio does not depend on d_model; the text map is drawn last.
        let world = self.world(1);
        Synth::new(self).clip(&world, index)
    }

    /// Generates, encodes and splits the whole set.
    pub fn generate(&self, encoder: &ToyEncoder, d_model: usize) -> Result<Dataset> {
        self.validate()?;
        let world = self.world(d_model);
        let synth = Synth::new(self);
        let preprocess = PreprocessConfig {
            chunk_len_s: self.block_s,
            ..PreprocessConfig::default()
        };
        let mut items = Vec::with_capacity(self.len());
        for index in 0..self.len() {
            let class = index / self.pairs_per_class;
            let wave = synth.clip(&world, index)?;
            let audio = encode_clip(&wave, encoder, &preprocess)?;
            let mut rng = stream_rng(self.seed, Stream::Synthetic, 1 + 2 * index as u64 + 1);
            let n = rng.random_range(self.tokens.0..=self.tokens.1);
            let base = world.text_row(class);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    base.iter()
                        .map(|b| b + self.text_sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            let id = index as u64;
            items.push(Item {
                id,
                group: class as u64,
                split: self.split_of(index % self.pairs_per_class),
                audio,
                captions: vec![Caption {
                    id: caption_id(id, 0)?,
                    text: None,
                    seq: Tensor2D::from_rows(&rows)?,
                }],
                source: AudioRef::Synthetic(index),
            });
        }
        Ok(Dataset {
            items,
            encoder: encoder.clone(),
            preprocess,
            synthetic: Some(self.clone()),
        })
    }
}

struct World {
    latents: Vec<Vec<f64>>,
    /// ENVELOPE_POINTS × latent_dim, row-major.
    audio_map: Vec<f64>,
    /// latent_dim × d_model, row-major.
    text_map: Vec<f64>,
    d_model: usize,
}

impl World {
    fn envelope(&self, class: usize) -> Vec<f64> {
        let z = &self.latents[class];
        self.audio_map
            .chunks(z.len())
            .map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn text_row(&self, class: usize) -> Vec<f64> {
        let z = &self.latents[class];
        let mut out = vec![0.0; self.d_model];
        for (zi, row) in z.iter().zip(self.text_map.chunks(self.d_model)) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += zi * b;
            }
        }
        out
    }
}

struct Synth<'a> {
    spec: &'a SyntheticDatasetSpec,
    block_len: usize,
    ifft: Arc<dyn Fft<f64>>,
}

impl<'a> Synth<'a> {
    fn new(spec: &'a SyntheticDatasetSpec) -> Self {
        let hop = spec.hop();
        let block_len = ((spec.block_s * spec.sample_rate as f64 / hop as f64).round() as usize).max(1) * hop;
        Self {
            spec,
            block_len,
            ifft: FftPlanner::new().plan_fft_inverse(block_len),
        }
    }

    fn clip(&self, world: &World, index: usize) -> Result<Waveform> {
        let spec = self.spec;
        let class = index / spec.pairs_per_class;
        let mut rng = stream_rng(spec.seed, Stream::Synthetic, 1 + 2 * index as u64);
        let blocks = rng.random_range(spec.blocks.0..=spec.blocks.1);
        let event_at = rng.random_range(0..blocks);
        let event = world.envelope(class);
        let hop = spec.hop();
        let mut samples = Vec::new();
        for b in 0..blocks {
            if b > 0 {
                let gap_s = rng.random_range(spec.gap_s.0..=spec.gap_s.1);
                let gap = (gap_s * spec.sample_rate as f64 / hop as f64).round() as usize * hop;
                samples.resize(samples.len() + gap, 0.0);
            }
            let envelope: Vec<f64> = if b == event_at {
                event
                    .iter()
                    .map(|e| e + spec.audio_sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            } else {
                (0..ENVELOPE_POINTS)
                    .map(|_| DISTRACTOR_SPREAD * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            samples.extend(self.block(&envelope, &mut rng));
        }
        Waveform::clamped(samples, spec.sample_rate)
    }

    /// Random-phase noise with log-amplitude `envelope` interpolated across the spectrum.
    fn block<R: Rng>(&self, envelope: &[f64], rng: &mut R) -> Vec<f64> {
        let n = self.block_len;
        let half = n / 2;
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for k in 1..half.max(1) {
            let x = k as f64 / half as f64 * (ENVELOPE_POINTS - 1) as f64;
            let i = (x.floor() as usize).min(ENVELOPE_POINTS - 2);
            let t = x - i as f64;
            let amp = ((1.0 - t) * envelope[i] + t * envelope[i + 1]).exp();
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let c = Complex::from_polar(amp, phase);
            buf[k] = c;
            buf[n - k] = c.conj();
        }
        self.ifft.process(&mut buf);
        let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        let gain = if rms > 0.0 { BLOCK_RMS / rms } else { 0.0 };
        x.into_iter().map(|v| v * gain).collect()
    }
}

impl FromStr for SyntheticDatasetSpec {
    type Err = Error;

    /// Comma-separated `key=value` overrides, e.g. `classes=32,pairs=8,sigma=0.1,seed=3`.
    fn from_str(s: &str) -> Result<Self> {
        let mut spec = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::config(format!("synthetic spec: expected key=value, got {part:?}")))?;
            let f = || -> Result<f64> {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::config(format!("synthetic spec: bad number {v:?} for {k}")))
            };
            let u = || -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|_| Error::config(format!("synthetic spec: bad count {v:?} for {k}")))
            };
            match k {
                "classes" => spec.num_classes = u()?,
                "pairs" => spec.pairs_per_class = u()?,
                "latent" => spec.latent_dim = u()?,
                "sigma" => {
                    spec.audio_sigma = f()?;
                    spec.text_sigma = spec.audio_sigma;
                }
                "audio_sigma" => spec.audio_sigma = f()?,
                "text_sigma" => spec.text_sigma = f()?,
                "min_blocks" => spec.blocks.0 = u()?,
                "max_blocks" => spec.blocks.1 = u()?,
                "block_s" => spec.block_s = f()?,
                "min_gap_s" => spec.gap_s.0 = f()?,
                "max_gap_s" => spec.gap_s.1 = f()?,
                "min_tokens" => spec.tokens.0 = u()?,
                "max_tokens" => spec.tokens.1 = u()?,
                "sample_rate" => {
                    spec.sample_rate = v
                        .parse()
                        .map_err(|_| Error::config(format!("synthetic spec: bad sample rate {v:?}")))?
                }
                "seed" => {
                    spec.seed = v
                        .parse()
                        .map_err(|_| Error::config(format!("synthetic spec: bad seed {v:?}")))?
                }
                _ => return Err(Error::config(format!("synthetic spec: unknown key {k:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}
