use super::Waveform;
use crate::error::{Error, Result};

/// A trailing partial chunk shorter than this is dropped rather than padded.
pub const MIN_TAIL_S: f64 = 1.0;

/// Equal-length, non-overlapping segments of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSet {
    chunks: Vec<Waveform>,
    pub source_id: String,
}

impl ChunkSet {
    pub fn chunks(&self) -> &[Waveform] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunk_samples(&self) -> usize {
        self.chunks[0].len()
    }
}

fn chunk_samples(chunk_len_s: f64, rate: u32) -> Result<usize> {
    let n = (chunk_len_s * rate as f64).round();
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::config(format!("chunk length {chunk_len_s} s is too short")));
    }
    Ok(n as usize)
}

/// Number of chunks `chunk` yields for a clip of `samples` samples.
pub fn expected_chunk_count(samples: usize, rate: u32, chunk_len_s: f64) -> Result<usize> {
    let len = chunk_samples(chunk_len_s, rate)?;
    let min_tail = (MIN_TAIL_S * rate as f64).round() as usize;
    let full = samples / len;
    let tail = samples % len;
    Ok(if full == 0 {
        1
    } else {
        full + usize::from(tail >= min_tail)
    })
}

/// Splits `w` into `chunk_len_s` windows, zero-padding a tail of at least one
/// second and dropping a shorter one. A clip too short for any full window
/// yields a single padded chunk.
pub fn chunk(w: &Waveform, chunk_len_s: f64) -> Result<ChunkSet> {
    let len = chunk_samples(chunk_len_s, w.sample_rate())?;
    let count = expected_chunk_count(w.len(), w.sample_rate(), chunk_len_s)?;
    let x = w.samples();
    let chunks = (0..count)
        .map(|i| {
            let start = i * len;
            let end = (start + len).min(x.len());
            let mut c = x[start..end].to_vec();
            c.resize(len, 0.0);
            Waveform::new(c, w.sample_rate())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChunkSet {
        chunks,
        source_id: String::new(),
    })
}
