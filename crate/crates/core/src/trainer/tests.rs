use std::collections::HashSet;

use super::*;
use crate::audio::{write_wav, NoiseSource, SnrSpec, ToyEncoder, WavFormat, Waveform};
use crate::error::Error;

fn tiny_spec(seed: u64) -> SyntheticDatasetSpec {
    SyntheticDatasetSpec {
        num_classes: 4,
        pairs_per_class: 4,
        block_s: 1.0,
        sample_rate: 4_000,
        seed,
        ..SyntheticDatasetSpec::default()
    }
}

fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.refiner.d_model = 16;
    c.refiner.d_shared = 8;
    c.refiner.heads = 2;
    c.batch_size = 4;
    c.max_epochs = 3;
    c.learning_rate = 1e-2;
    c
}

fn tiny_data(seed: u64) -> Dataset {
    let c = tiny_config();
    let enc = ToyEncoder::new(c.encoder_seed, c.refiner.d_model).unwrap();
    tiny_spec(seed).generate(&enc, c.refiner.d_model).unwrap()
}

#[test]
fn synthetic_splits_are_disjoint_and_sized() {
    let spec = SyntheticDatasetSpec::new(32, 8, 0.1, 0);
    let counts: Vec<Split> = (0..8).map(|j| spec.split_of(j)).collect();
    assert_eq!(counts.iter().filter(|s| **s == Split::Train).count(), 6);
    assert_eq!(counts.iter().filter(|s| **s == Split::Validation).count(), 1);
    assert_eq!(counts.iter().filter(|s| **s == Split::Test).count(), 1);

    let data = tiny_data(1);
    let ids = |s| data.split(s).iter().map(|i| i.id).collect::<HashSet<_>>();
    let (tr, va, te) = (ids(Split::Train), ids(Split::Validation), ids(Split::Test));
    assert!(tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te));
    assert_eq!(tr.len() + va.len() + te.len(), data.items.len());
    for s in [Split::Train, Split::Validation, Split::Test] {
        let classes: HashSet<u64> = data.split(s).iter().map(|i| i.group).collect();
        assert_eq!(classes.len(), 4, "every class appears in {s:?}");
    }
}

#[test]
fn synthetic_chunks_match_blocks_and_classes_share_a_latent() {
    let spec = tiny_spec(2);
    let data = tiny_data(2);
    for it in &data.items {
        let wave = spec.render_clip(it.id as usize).unwrap();
        // Clip length = blocks·1 s + gaps of 1.5–3 s, so chunk count = block count.
        let secs = wave.duration_s();
        let blocks = it.audio.rows();
        assert!((1..=3).contains(&blocks));
        let gaps = secs - blocks as f64;
        assert!(gaps >= 1.5 * (blocks - 1) as f64 - 1e-9 && gaps <= 3.0 * (blocks - 1) as f64 + 1e-9, "{secs} s, {blocks} blocks");
    }
    // Text rows of one class sit near one point; other classes are far.
    let mean = |i: usize| {
        let s = &data.items[i].captions[0].seq;
        (0..s.cols()).map(|c| (0..s.rows()).map(|r| s.get(r, c)).sum::<f64>() / s.rows() as f64).collect::<Vec<_>>()
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (a0, a1, b0) = (mean(0), mean(1), mean(4));
    assert!(dist(&a0, &a1) < 0.5 * dist(&a0, &b0));
}

#[test]
fn synthetic_generation_is_deterministic() {
    let a = tiny_data(3);
    let b = tiny_data(3);
    assert_eq!(a.items, b.items);
    assert_ne!(a.items, tiny_data(4).items);
    let spec = tiny_spec(3);
    assert_eq!(spec.render_clip(5).unwrap(), spec.render_clip(5).unwrap());
}

#[test]
fn synthetic_spec_parses_overrides() {
    let s: SyntheticDatasetSpec = "classes=32, pairs=8, sigma=0.25, seed=9".parse().unwrap();
    assert_eq!((s.num_classes, s.pairs_per_class, s.audio_sigma, s.text_sigma, s.seed), (32, 8, 0.25, 0.25, 9));
    assert!("classes=0".parse::<SyntheticDatasetSpec>().is_err());
    assert!("pairs=2".parse::<SyntheticDatasetSpec>().is_err());
    assert!("colour=red".parse::<SyntheticDatasetSpec>().is_err());
}

#[test]
fn zero_learning_rate_freezes_validation_metrics() {
    let data = tiny_data(5);
    let mut c = tiny_config();
    c.learning_rate = 0.0;
    c.early_stop_patience = 100;
    let out = train(c.clone(), &data).unwrap();
    let maps: Vec<f64> = out.log.epochs.iter().map(|e| e.val_map).collect();
    assert_eq!(maps.len(), 3);
    assert!(maps.iter().all(|m| *m == maps[0]));
    let fresh = crate::refinement::RefinerParams::init(&c.refiner, c.seed, c.temperature).unwrap();
    assert_eq!(out.last.params, fresh);
}

#[test]
fn training_is_bit_reproducible() {
    let data = tiny_data(6);
    let a = train(tiny_config(), &data).unwrap();
    let b = train(tiny_config(), &data).unwrap();
    assert_eq!(a.log.steps_csv(), b.log.steps_csv());
    assert_eq!(a.log.epochs_csv(), b.log.epochs_csv());
    assert_eq!(a.best.encode().unwrap(), b.best.encode().unwrap());
    assert_eq!(a.last.encode().unwrap(), b.last.encode().unwrap());
    let mut other = tiny_config();
    other.seed = 1;
    assert_ne!(train(other, &data).unwrap().log.steps_csv(), a.log.steps_csv());
}

#[test]
fn resuming_from_a_checkpoint_is_bit_identical() {
    let data = tiny_data(7);
    let mut c = tiny_config();
    c.max_epochs = 4;
    c.early_stop_patience = 100;
    let straight = train(c.clone(), &data).unwrap();

    let mut first = Trainer::new(c, &data).unwrap();
    first.run_epoch().unwrap();
    first.run_epoch().unwrap();
    let saved = first.state().encode().unwrap();
    let resumed = Trainer::resume(Checkpoint::decode(&saved).unwrap(), &data).unwrap().run().unwrap();
    assert_eq!(resumed.last.encode().unwrap(), straight.last.encode().unwrap());
    assert_eq!(resumed.log.steps, straight.log.steps[straight.log.steps.len() - resumed.log.steps.len()..]);
}

#[test]
fn early_stopping_keeps_the_best_epoch() {
    let data = tiny_data(8);
    let mut c = tiny_config();
    c.max_epochs = 12;
    c.early_stop_patience = 2;
    c.learning_rate = 0.05;
    let out = train(c, &data).unwrap();
    let best_seen = out.log.epochs.iter().map(|e| e.val_map).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best.best_metric, best_seen);
    let best_epoch = out.log.epochs.iter().find(|e| e.val_map == best_seen).unwrap().epoch;
    assert_eq!(out.best.best_epoch, best_epoch);
    assert_eq!(out.best.epoch, best_epoch);
    let re = evaluate(&out.best.params, &data, Split::Validation, None).unwrap();
    assert_eq!(re.mean_map(), best_seen);
    if out.stopped_early {
        assert_eq!(out.last.epochs_since_best, 2);
    }
}

#[test]
fn training_leaves_the_encoder_untouched() {
    let data = tiny_data(9);
    let before = data.encoder.fingerprint();
    let items_before = data.items.clone();
    train(tiny_config(), &data).unwrap();
    assert_eq!(data.encoder.fingerprint(), before);
    assert_eq!(data.items, items_before);
    let fresh = ToyEncoder::new(tiny_config().encoder_seed, 16).unwrap();
    assert_eq!(fresh.fingerprint(), before);
}

#[test]
fn evaluation_reports_are_well_formed_with_and_without_noise() {
    let data = tiny_data(10);
    let params = train(tiny_config(), &data).unwrap().best.params;
    let clean = evaluate(&params, &data, Split::Test, None).unwrap();
    let spec = SnrSpec { snr_db: 5.0, source: NoiseSource::White, seed: 1 };
    let noisy = evaluate(&params, &data, Split::Test, Some(&spec)).unwrap();
    for r in [&clean.a2t, &clean.t2a, &noisy.a2t, &noisy.t2a] {
        assert!(r.recall_at_1 <= r.recall_at_5 && r.recall_at_5 <= r.recall_at_10);
        assert!((0.0..=1.0).contains(&r.map_at_10));
    }
    assert_eq!(clean.attention.len(), 4);
    for (_, a) in &clean.attention {
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert_ne!(clean.a2t.per_query_ap, noisy.a2t.per_query_ap);
}

#[test]
fn empty_training_split_fails_before_any_step() {
    let mut data = tiny_data(11);
    for it in &mut data.items {
        it.split = Split::Test;
    }
    assert!(matches!(Trainer::new(tiny_config(), &data), Err(Error::Data(_))));
    let mut c = tiny_config();
    c.refiner.d_model = 32;
    c.refiner.heads = 2;
    assert!(matches!(Trainer::new(c, &tiny_data(11)), Err(Error::Data(_))));
}

#[test]
fn ablation_csv_schema_is_stable() {
    let data = tiny_data(12);
    let mut base = tiny_config();
    base.max_epochs = 1;
    let grid = parse_grid("4, 3,8");
    let rows = ablate(&base, &data, AblationAxis::BatchSize, &grid);
    let csv = ablation_csv(&rows);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "axis,value,a2t_R@1,a2t_R@5,a2t_R@10,a2t_mAP@10,t2a_R@1,t2a_R@5,t2a_R@10,t2a_mAP@10,best_epoch,status"
    );
    assert_eq!(lines.len(), 4);
    for l in &lines {
        assert_eq!(l.split(',').count(), 12, "{l}");
    }
    assert!(lines[1].starts_with("batch-size,4,") && lines[1].ends_with(",1,ok"));
    assert!(lines[2].starts_with("batch-size,3,,,,,,,,,,error: "), "{}", lines[2]);
    assert!(lines[3].ends_with(",ok"));
}

#[test]
fn ablation_axes_set_the_right_fields() {
    let base = TrainConfig::default();
    let c = AblationAxis::LossWeights.apply(&base, "0.1:0.2:0.7").unwrap();
    assert_eq!(c.loss_weights, [0.1, 0.2, 0.7]);
    assert!(AblationAxis::LossWeights.apply(&base, "0.5:0.5:0.5").is_err());
    let c = AblationAxis::LossType.apply(&base, "contrastive").unwrap();
    assert_eq!(c.loss_weights, [0.0, 0.0, 1.0]);
    let c = AblationAxis::ProjectionType.apply(&base, "linear").unwrap();
    assert_eq!(c.refiner.projection, crate::refinement::ProjectionKind::Linear);
    assert_eq!(AblationAxis::BatchSize.default_grid(), ["4", "8", "16", "32", "64"]);
    assert_eq!(AblationAxis::LossWeights.default_grid().len(), 6);
    for a in ["loss-weights", "batch-size", "projection-type", "loss-type", "pooling"] {
        assert_eq!(a.parse::<AblationAxis>().unwrap().name(), a);
        for v in a.parse::<AblationAxis>().unwrap().default_grid() {
            a.parse::<AblationAxis>().unwrap().apply(&base, &v).unwrap();
        }
    }
}

fn tone(seconds: f64, rate: u32, freq: f64) -> Waveform {
    let n = (seconds * rate as f64) as usize;
    Waveform::new((0..n).map(|i| 0.3 * (i as f64 * freq / rate as f64 * std::f64::consts::TAU).sin()).collect(), rate).unwrap()
}

#[test]
fn manifests_load_wav_and_stored_audio() {
    let dir = tempfile::tempdir().unwrap();
    write_wav(&dir.path().join("a.wav"), &tone(2.0, 8_000, 440.0), WavFormat::Pcm16).unwrap();
    write_wav(&dir.path().join("b.wav"), &tone(12.0, 8_000, 880.0), WavFormat::Float32).unwrap();
    let rows = crate::numerics::Tensor2D::from_rows(&vec![vec![0.5; 16]; 3]).unwrap();
    let ids = [(9 << SUB_ID_BITS) | 1, 9 << SUB_ID_BITS, 4 << SUB_ID_BITS];
    write_embeddings(&dir.path().join("pre.aemb"), &ids, &rows).unwrap();
    let manifest = dir.path().join("m.jsonl");
    std::fs::write(
        &manifest,
        concat!(
            r#"{"id": 1, "audio": "a.wav", "captions": ["A dog barks.", "barking dog"]}"#,
            "\n",
            r#"{"id": 2, "audio": "b.wav", "captions": ["rain on a roof"], "split": "val"}"#,
            "\n\n",
            r#"{"id": 9, "audio": "aemb:pre.aemb#9", "captions": ["the wind"], "split": "test"}"#,
            "\n"
        ),
    )
    .unwrap();
    let data = Dataset::from_manifest(&manifest, 0, 16).unwrap();
    assert_eq!(data.items.len(), 3);
    assert_eq!(data.items[0].captions.len(), 2);
    assert_eq!(data.items[0].captions[1].id, caption_id(1, 1).unwrap());
    assert_eq!(data.items[1].audio.rows(), 2);
    assert_eq!(data.items[2].audio.rows(), 2);
    assert_eq!(data.items[1].split, Split::Validation);
    let rel = data.relevance(Split::Train);
    assert_eq!(rel.relevant(1).unwrap().len(), 2);

    let bad = |body: &str| {
        std::fs::write(&manifest, body).unwrap();
        Dataset::from_manifest(&manifest, 0, 16).unwrap_err()
    };
    assert!(matches!(bad(r#"{"id": 1, "audio": "missing.wav", "captions": ["x"]}"#), Error::Data(_)));
    assert!(matches!(
        bad("{\"id\": 1, \"audio\": \"a.wav\", \"captions\": [\"x\"]}\n{\"id\": 1, \"audio\": \"a.wav\", \"captions\": [\"y\"]}"),
        Error::Data(_)
    ));
    assert!(matches!(bad(r#"{"id": 1, "audio": "a.wav", "captions": []}"#), Error::Data(_)));
    assert!(matches!(bad(r#"{"id": 1, "audio": "aemb:pre.aemb#3", "captions": ["x"]}"#), Error::Data(_)));
    assert!(matches!(bad(r#"{"id": 1, "audio": "a.wav", "captions": ["x"], "extra": 1}"#), Error::Data(_)));
    assert!(matches!(bad("not json"), Error::Data(_)));
}
