use super::Waveform;
use crate::error::{Error, Result};

/// Energy-based silence detector settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SilenceConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Frame RMS threshold in dB relative to full scale.
    pub threshold_db: f64,
    /// Silent runs strictly longer than this are cut.
    pub min_gap_s: f64,
}

impl Default for SilenceConfig {
    fn default() -> Self {
        Self {
            frame_ms: 20.0,
            hop_ms: 10.0,
            threshold_db: -40.0,
            min_gap_s: 1.0,
        }
    }
}

impl SilenceConfig {
    fn samples(&self, ms: f64, rate: u32) -> Result<usize> {
        let n = (ms * rate as f64 / 1000.0).round();
        if !(n >= 1.0) {
            return Err(Error::config(format!("{ms} ms is shorter than one sample at {rate} Hz")));
        }
        Ok(n as usize)
    }
}

/// Per-sample silence mask.
///
/// Frames start every hop and run `frame` samples (the last ones truncated at
/// the end of the clip). A sample counts as silent when at least one frame
/// covering it has RMS below the threshold, so silent stretches are located
/// to within one hop of their true edges.
pub(crate) fn silence_mask(w: &Waveform, config: &SilenceConfig) -> Result<Vec<bool>> {
    let frame = config.samples(config.frame_ms, w.sample_rate())?;
    let hop = config.samples(config.hop_ms, w.sample_rate())?;
    let threshold = 10f64.powf(config.threshold_db / 20.0);
    let x = w.samples();
    let mut silent = vec![false; x.len()];
    let mut start = 0;
    while start < x.len() {
        let end = (start + frame).min(x.len());
        let rms = super::mean_square(&x[start..end]).sqrt();
        if rms < threshold {
            silent[start..end].iter_mut().for_each(|s| *s = true);
        }
        start += hop;
    }
    Ok(silent)
}

/// Cuts every maximal silent run longer than `min_gap_s`; shorter pauses stay.
pub fn remove_silence(w: &Waveform, config: &SilenceConfig) -> Result<Waveform> {
    let silent = silence_mask(w, config)?;
    if silent.iter().all(|&s| s) {
        return Err(Error::EmptyAudio);
    }
    let max_gap = config.min_gap_s * w.sample_rate() as f64;
    let x = w.samples();
    let mut out = Vec::with_capacity(x.len());
    let mut i = 0;
    while i < x.len() {
        if !silent[i] {
            out.push(x[i]);
            i += 1;
            continue;
        }
        let run_end = silent[i..].iter().position(|&s| !s).map_or(x.len(), |p| i + p);
        if (run_end - i) as f64 <= max_gap {
            out.extend_from_slice(&x[i..run_end]);
        }
        i = run_end;
    }
    Waveform::new(out, w.sample_rate())
}
