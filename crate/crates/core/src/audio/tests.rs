use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::numerics::{stream_rng, Stream};

const SR: u32 = 16_000;

fn tone(seconds: f64, freq: f64, amp: f64) -> Vec<f64> {
    let n = (seconds * SR as f64).round() as usize;
    (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / SR as f64).sin())
        .collect()
}

fn silence(seconds: f64) -> Vec<f64> {
    vec![0.0; (seconds * SR as f64).round() as usize]
}

fn wave(parts: &[Vec<f64>]) -> Waveform {
    Waveform::new(parts.concat(), SR).unwrap()
}

fn trimmed_duration(w: &Waveform) -> f64 {
    remove_silence(w, &SilenceConfig::default()).unwrap().duration_s()
}

#[test]
fn loud_audio_is_untouched() {
    let w = wave(&[tone(3.0, 440.0, 0.5)]);
    assert_eq!(remove_silence(&w, &SilenceConfig::default()).unwrap(), w);
}

#[test]
fn long_gap_is_cut_exactly() {
    let w = wave(&[tone(5.0, 440.0, 0.5), silence(2.0), tone(5.0, 440.0, 0.5)]);
    assert_eq!(trimmed_duration(&w), 10.0);
}

#[test]
fn short_gap_is_kept_verbatim() {
    let w = wave(&[tone(5.0, 440.0, 0.5), silence(0.5), tone(5.0, 440.0, 0.5)]);
    let out = remove_silence(&w, &SilenceConfig::default()).unwrap();
    assert_eq!(out, w);
    assert_eq!(out.duration_s(), 10.5);
}

#[test]
fn gap_of_exactly_the_threshold_is_kept() {
    let w = wave(&[tone(2.0, 300.0, 0.5), silence(1.0), tone(2.0, 300.0, 0.5)]);
    assert_eq!(trimmed_duration(&w), 5.0);
    let w = wave(&[tone(2.0, 300.0, 0.5), silence(1.01), tone(2.0, 300.0, 0.5)]);
    assert_eq!(trimmed_duration(&w), 4.0);
}

#[test]
fn silent_input_is_empty_audio() {
    assert!(matches!(
        remove_silence(&wave(&[silence(3.0)]), &SilenceConfig::default()),
        Err(Error::EmptyAudio)
    ));
    let quiet = wave(&[tone(3.0, 200.0, 0.001)]);
    assert!(matches!(remove_silence(&quiet, &SilenceConfig::default()), Err(Error::EmptyAudio)));
}

#[test]
fn chunk_examples() {
    let c = chunk(&wave(&[tone(25.0, 440.0, 0.5)]), 10.0).unwrap();
    assert_eq!(c.len(), 3);
    assert!(c.chunks().iter().all(|x| x.len() == 160_000));
    assert!(c.chunks()[2].samples()[80_000..].iter().all(|&v| v == 0.0));

    let c = chunk(&wave(&[tone(10.0, 440.0, 0.5)]), 10.0).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c.chunks()[0].samples(), tone(10.0, 440.0, 0.5).as_slice());

    assert_eq!(chunk(&wave(&[tone(10.4, 440.0, 0.5)]), 10.0).unwrap().len(), 1);
    assert_eq!(chunk(&wave(&[tone(11.0, 440.0, 0.5)]), 10.0).unwrap().len(), 2);
    let short = chunk(&wave(&[tone(0.3, 440.0, 0.5)]), 10.0).unwrap();
    assert_eq!((short.len(), short.chunk_samples()), (1, 160_000));
}

#[test]
fn noise_hits_requested_snr() {
    let s = wave(&[tone(1.0, 440.0, 0.3)]);
    let n = NoiseSource::White.render(8000, SR, 3).unwrap();
    for target in [0.0, 10.0] {
        let scaled = scaled_noise(&s, &n, target, 9).unwrap();
        let ratio = s.power() / super::mean_square(&scaled);
        assert!((ratio - 10f64.powf(target / 10.0)).abs() < 1e-9);
    }
}

#[test]
fn identical_noise_at_zero_db_doubles_the_signal() {
    let s = wave(&[tone(0.5, 440.0, 0.3)]);
    let scaled = scaled_noise(&s, &s, 0.0, 11).unwrap();
    assert!(scaled.iter().zip(s.samples()).all(|(n, x)| (n - x).abs() < 1e-15));
    let spec = SnrSpec { snr_db: 0.0, source: NoiseSource::Clip(s.clone()), seed: 11 };
    let out = mix_noise(&s, &s, &spec).unwrap();
    assert!(out.samples().iter().zip(s.samples()).all(|(o, x)| (o - 2.0 * x).abs() < 1e-15));
}

#[test]
fn short_noise_is_tiled_and_long_noise_cropped() {
    let s = wave(&[tone(0.1, 440.0, 0.3)]);
    let short = Waveform::new((0..7).map(|i| i as f64 / 10.0 - 0.3).collect(), SR).unwrap();
    let scaled = scaled_noise(&s, &short, 3.0, 4).unwrap();
    assert_eq!(scaled.len(), s.len());
    for i in 7..scaled.len() {
        assert!((scaled[i] - scaled[i - 7]).abs() < 1e-15);
    }
    let long = NoiseSource::White.render(s.len() * 3, SR, 2).unwrap();
    let a = scaled_noise(&s, &long, 3.0, 4).unwrap();
    assert_eq!(a, scaled_noise(&s, &long, 3.0, 4).unwrap());
    assert_ne!(a, scaled_noise(&s, &long, 3.0, 5).unwrap());
}

#[test]
fn degenerate_mixes_are_rejected() {
    let s = wave(&[tone(0.1, 440.0, 0.3)]);
    let z = Waveform::new(vec![0.0; 100], SR).unwrap();
    let spec = SnrSpec { snr_db: 5.0, source: NoiseSource::White, seed: 0 };
    assert!(matches!(mix_noise(&z, &s, &spec), Err(Error::DegenerateAudio(_))));
    assert!(matches!(mix_noise(&s, &z, &spec), Err(Error::DegenerateAudio(_))));
}

#[test]
fn mixing_clamps_and_never_rescales_the_signal() {
    let s = wave(&[tone(0.2, 440.0, 0.9)]);
    let n = NoiseSource::Pink.render(s.len(), SR, 1).unwrap();
    let spec = SnrSpec { snr_db: -10.0, source: NoiseSource::Pink, seed: 2 };
    let out = mix_noise(&s, &n, &spec).unwrap();
    assert!(out.samples().iter().all(|v| v.abs() <= 1.0));
    let scaled = scaled_noise(&s, &n, -10.0, 2).unwrap();
    for ((o, x), e) in out.samples().iter().zip(s.samples()).zip(&scaled) {
        assert_eq!(*o, (x + e).clamp(-1.0, 1.0));
    }
}

#[test]
fn pink_noise_has_more_low_frequency_power_than_white() {
    let enc = ToyEncoder::new(0, 8).unwrap();
    let white = NoiseSource::White.render(32_768, SR, 4).unwrap();
    let pink = NoiseSource::Pink.render(32_768, SR, 4).unwrap();
    let tilt = |w: &Waveform| {
        let f = enc.features(w.samples());
        f[..8].iter().sum::<f64>() / 8.0 - f[56..].iter().sum::<f64>() / 8.0
    };
    assert!(tilt(&pink) > tilt(&white) + 0.5);
}

#[test]
fn toy_encoder_examples() {
    let enc = ToyEncoder::new(7, 16).unwrap();
    let c = Waveform::new(tone(1.0, 1000.0, 0.4), SR).unwrap();
    assert_eq!(enc.encode(&c).unwrap(), enc.encode(&c).unwrap());
    assert_eq!(enc.encode(&c).unwrap(), ToyEncoder::new(7, 16).unwrap().encode(&c).unwrap());
    assert_ne!(enc.encode(&c).unwrap(), ToyEncoder::new(8, 16).unwrap().encode(&c).unwrap());

    let zero = Waveform::new(vec![0.0; 16_000], SR).unwrap();
    let floor = vec![TOY_LOG_FLOOR.log10(); TOY_BANDS];
    assert_eq!(enc.encode(&zero).unwrap(), enc.project(&floor));

    // Doubling the amplitude quadruples every band energy.
    let noise = NoiseSource::White.render(16_000, SR, 1).unwrap();
    let half = Waveform::new(noise.samples().iter().map(|v| v * 0.5).collect(), SR).unwrap();
    let f1 = enc.features(half.samples());
    let f2 = enc.features(noise.samples());
    for (a, b) in f1.iter().zip(&f2) {
        assert!((b - a - 4f64.log10()).abs() < 1e-9);
    }
}

#[test]
fn toy_bands_cover_the_spectrum() {
    let enc = ToyEncoder::new(0, 4).unwrap();
    assert_eq!(enc.projection().shape(), (TOY_BANDS, 4));
    // A pure tone lights up the band whose center is nearest its bin.
    let f = enc.features(&tone(1.0, 4000.0, 0.5));
    let top = f.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    let bin = 4000.0 / (SR as f64 / TOY_FRAME as f64);
    let spacing = 256.0 / 65.0;
    assert!(((top + 1) as f64 * spacing - bin).abs() <= spacing);
}

#[test]
fn encode_clip_shapes() {
    let enc = ToyEncoder::new(1, 8).unwrap();
    let cfg = PreprocessConfig::default();
    assert_eq!(encode_clip(&wave(&[tone(25.0, 440.0, 0.4)]), &enc, &cfg).unwrap().shape(), (3, 8));
    let eight = wave(&[tone(8.0, 440.0, 0.4)]);
    let m = encode_clip(&eight, &enc, &cfg).unwrap();
    assert_eq!(m.shape(), (1, 8));
    assert_eq!(m, encode_clip(&eight, &enc, &cfg).unwrap());
    assert!(matches!(encode_clip(&wave(&[silence(2.0)]), &enc, &cfg), Err(Error::EmptyAudio)));
}

#[test]
fn wav_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let w = Waveform::new(tone(0.25, 440.0, 0.5), SR).unwrap();
    let f32_path = dir.path().join("a.wav");
    write_wav(&f32_path, &w, WavFormat::Float32).unwrap();
    let back = read_wav(&f32_path).unwrap();
    assert_eq!(back.sample_rate(), SR);
    assert!(back.samples().iter().zip(w.samples()).all(|(a, b)| (a - b).abs() < 1e-7));

    let pcm_path = dir.path().join("b.wav");
    write_wav(&pcm_path, &w, WavFormat::Pcm16).unwrap();
    let back = read_wav(&pcm_path).unwrap();
    assert!(back.samples().iter().zip(w.samples()).all(|(a, b)| (a - b).abs() < 1e-4));

    let stereo = dir.path().join("c.wav");
    let spec = hound::WavSpec { channels: 2, sample_rate: SR, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut wr = hound::WavWriter::create(&stereo, spec).unwrap();
    wr.write_sample(0i16).unwrap();
    wr.write_sample(0i16).unwrap();
    wr.finalize().unwrap();
    assert!(matches!(read_wav(&stereo), Err(Error::Data(_))));
    assert!(matches!(read_wav(&dir.path().join("missing.wav")), Err(Error::Wav { .. })));
}

#[test]
fn decimation_averages_blocks() {
    let w = Waveform::new(vec![0.1, 0.3, -0.2, 0.2, 0.5], 48_000).unwrap();
    let d = w.decimate(3).unwrap();
    assert_eq!(d.sample_rate(), 16_000);
    assert!((d.samples()[0] - 0.2 / 3.0).abs() < 1e-15);
    assert!((d.samples()[1] - 0.35).abs() < 1e-15);
    assert!(w.decimate(7).is_err());
}

#[test]
fn waveform_validation() {
    assert!(matches!(Waveform::new(vec![], SR), Err(Error::EmptyAudio)));
    assert!(Waveform::new(vec![1.5], SR).is_err());
    assert!(Waveform::new(vec![f64::NAN], SR).is_err());
    assert!(Waveform::new(vec![0.5], 0).is_err());
}

/// Blocks of ±0.5 random-sign samples separated by digital silence.
fn blocky(seed: u64, blocks: &[(bool, usize)]) -> Waveform {
    let mut rng = stream_rng(seed, Stream::Fuzz, 0);
    let mut x = Vec::new();
    for &(loud, n) in blocks {
        for _ in 0..n {
            x.push(if loud { if rng.random::<bool>() { 0.5 } else { -0.5 } } else { 0.0 });
        }
    }
    Waveform::new(x, SR).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn silence_removal_shrinks_and_is_idempotent(
        seed in 0u64..1000,
        blocks in proptest::collection::vec((any::<bool>(), 1usize..40_000), 1..8),
    ) {
        let mut blocks = blocks;
        blocks.push((true, 500));
        let w = blocky(seed, &blocks);
        let cfg = SilenceConfig::default();
        let once = remove_silence(&w, &cfg).unwrap();
        prop_assert!(once.len() <= w.len());
        let twice = remove_silence(&once, &cfg).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn chunk_count_follows_the_tail_rule(seconds in 0.2f64..120.0) {
        let n = (seconds * SR as f64) as usize;
        let w = Waveform::new(vec![0.1; n], SR).unwrap();
        let c = chunk(&w, 10.0).unwrap();
        let full = n / 160_000;
        let tail = n % 160_000;
        let expect = if full == 0 { 1 } else if tail >= 16_000 { full + 1 } else { full };
        prop_assert_eq!(c.len(), expect);
        let d = n as f64 / 160_000.0;
        prop_assert!(c.len() == d.floor() as usize || c.len() == d.ceil() as usize);
        let covered = c.len() * c.chunk_samples();
        if full > 0 {
            prop_assert!(covered + 16_000 > n);
        }
        prop_assert!(covered <= n + 160_000);
    }
}

#[test]
fn snr_fuzz_thousand_cases() {
    let mut rng = stream_rng(17, Stream::Fuzz, 5);
    for case in 0..1000u64 {
        let len = rng.random_range(16..4000);
        let noise_len = rng.random_range(8..6000);
        let amp = rng.random_range(0.01..1.0);
        let s: Vec<f64> = (0..len).map(|_| rng.random_range(-amp..amp)).collect();
        let nz: Vec<f64> = (0..noise_len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target = rng.random_range(-10.0..30.0);
        let s = Waveform::new(s, SR).unwrap();
        let nz = Waveform::new(nz, SR).unwrap();
        let scaled = scaled_noise(&s, &nz, target, case).unwrap();
        assert_snr(snr_db(s.samples(), &scaled), target);
    }
}

fn assert_snr(got: f64, target: f64) {
    assert!((got - target).abs() < 1e-6, "got {got} dB, wanted {target}");
}
