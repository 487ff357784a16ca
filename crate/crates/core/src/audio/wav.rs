use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a mono 16-bit PCM or 32-bit float WAV file.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::data(format!("{}: {} channels, only mono is supported", path.display(), spec.channels)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => {
            return Err(Error::data(format!("{}: unsupported sample format {fmt:?} {bits}-bit", path.display())));
        }
    };
    if samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    Waveform::clamped(samples, spec.sample_rate).map_err(|e| match e {
        Error::Numeric(m) => Error::data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_wav(path: &Path, w: &Waveform, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, hound::SampleFormat::Int),
        WavFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err(path))?;
    for &s in w.samples() {
        match format {
            WavFormat::Pcm16 => writer.write_sample((s * 32767.0).round() as i16),
            WavFormat::Float32 => writer.write_sample(s as f32),
        }
        .map_err(wav_err(path))?;
    }
    writer.finalize().map_err(wav_err(path))
}
