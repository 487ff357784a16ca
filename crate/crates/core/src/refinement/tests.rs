use proptest::prelude::*;

use super::*;
use crate::numerics::{check_gradients, softmax_rows as softmax};

fn random(rows: usize, cols: usize, seed: u64) -> Tensor2D {
    let mut rng = stream_rng(seed, Stream::Fuzz, 0);
    Tensor2D::uniform(rows, cols, 1.0, &mut rng)
}

fn small_config() -> RefinerConfig {
    RefinerConfig {
        d_model: 4,
        d_shared: 3,
        heads: 2,
        ..RefinerConfig::default()
    }
}

fn zero_block(d_model: usize, heads: usize) -> TransformerBlockParams {
    let mut rng = stream_rng(0, Stream::Init, 0);
    let mut b = TransformerBlockParams::init(d_model, heads, 4, 0.0, false, &mut rng).unwrap();
    for t in b.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    b
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn zero_weight_block_is_identity() {
    let x = random(5, 8, 1);
    let mut rng = stream_rng(0, Stream::TrainStep, 0);
    let out = transformer_project(&x, &zero_block(8, 2), Mode::Infer, &mut rng).unwrap();
    assert_eq!(out, x);
}

#[test]
fn single_position_attends_to_itself() {
    // With n = 1 the attention weights are exactly 1, so MHA(x) = (x·W_v)·W_o.
    let mut b = zero_block(2, 1);
    b.w_value[0] = Tensor2D::from_rows(&[[2.0, 0.0], [0.0, 3.0]]).unwrap();
    b.w_out = Tensor2D::identity(2);
    b.w_query[0] = random(2, 2, 2);
    b.w_key[0] = random(2, 2, 3);
    let x = Tensor2D::from_rows(&[[1.0, -1.0]]).unwrap();
    let mut rng = stream_rng(0, Stream::TrainStep, 0);
    let out = transformer_project(&x, &b, Mode::Infer, &mut rng).unwrap();
    assert_eq!(out.data(), &[3.0, -4.0]);
}

/// Direct loop evaluation of one single-head block, independent of the tape.
fn block_oracle(x: &[[f64; 2]; 2], b: &TransformerBlockParams) -> Vec<[f64; 2]> {
    let lin = |v: &[f64; 2], w: &Tensor2D| -> Vec<f64> {
        (0..w.cols()).map(|c| (0..2).map(|r| v[r] * w.get(r, c)).sum()).collect()
    };
    let q: Vec<_> = x.iter().map(|r| lin(r, &b.w_query[0])).collect();
    let k: Vec<_> = x.iter().map(|r| lin(r, &b.w_key[0])).collect();
    let v: Vec<_> = x.iter().map(|r| lin(r, &b.w_value[0])).collect();
    let mut out = Vec::new();
    for i in 0..2 {
        let s: Vec<f64> = (0..2).map(|j| dot(&q[i], &k[j]) / 2f64.sqrt()).collect();
        let z: f64 = s.iter().map(|v| v.exp()).sum();
        let a: Vec<f64> = s.iter().map(|v| v.exp() / z).collect();
        let head = [a[0] * v[0][0] + a[1] * v[1][0], a[0] * v[0][1] + a[1] * v[1][1]];
        let mha = lin(&head, &b.w_out);
        let h = [mha[0] + x[i][0], mha[1] + x[i][1]];
        let hidden: Vec<f64> = lin(&h, &b.ffn_w1)
            .iter()
            .enumerate()
            .map(|(c, v)| {
                let u = v + b.ffn_b1.get(0, c);
                0.5 * u * (1.0 + libm::erf(u / 2f64.sqrt()))
            })
            .collect();
        let mut f = [b.ffn_b2.get(0, 0), b.ffn_b2.get(0, 1)];
        for (r, hv) in hidden.iter().enumerate() {
            for (c, fc) in f.iter_mut().enumerate() {
                *fc += hv * b.ffn_w2.get(r, c);
            }
        }
        out.push([f[0] + h[0], f[1] + h[1]]);
    }
    out
}

#[test]
fn two_position_block_matches_loop_oracle() {
    let mut rng = stream_rng(4, Stream::Init, 0);
    let mut b = TransformerBlockParams::init(2, 1, 4, 0.0, false, &mut rng).unwrap();
    b.ffn_b1 = random(1, 8, 5);
    b.ffn_b2 = random(1, 2, 6);
    let x = [[0.7, -0.2], [-1.1, 0.4]];
    let got = transformer_project(&Tensor2D::from_rows(&x).unwrap(), &b, Mode::Infer, &mut rng).unwrap();
    for (i, row) in block_oracle(&x, &b).iter().enumerate() {
        for c in 0..2 {
            assert!((got.get(i, c) - row[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_projection_is_affine() {
    let p = SharedProjectionParams {
        w_proj: Tensor2D::from_rows(&[[1.0, 2.0], [0.0, -1.0]]).unwrap(),
        b_proj: Tensor2D::row_vector(&[0.5, 0.5]),
    };
    let z = Tensor2D::from_rows(&[[1.0, 1.0], [2.0, 0.0]]).unwrap();
    assert_eq!(linear_project(&z, &p).unwrap().data(), &[1.5, 1.5, 2.5, 4.5]);
}

#[test]
fn cross_attention_starts_as_identity() {
    let p = CrossAttentionParams::init(3, &mut stream_rng(1, Stream::Init, 0));
    let a = random(4, 3, 7);
    let t = random(2, 3, 8);
    let (a2, t2) = cross_attend(&a, &t, &p).unwrap();
    assert_eq!((a2, t2), (a, t));
}

#[test]
fn cross_attention_weights_are_right_stochastic() {
    let params = RefinerParams::init(&small_config(), 3, 0.07).unwrap();
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let a = tape.constant(random(5, 3, 9));
    let t = tape.constant(random(2, 3, 10));
    let out = vars.cross.forward(&mut tape, a, t).unwrap();
    for w in [out.audio_to_text, out.text_to_audio] {
        let w = tape.value(w);
        for r in 0..w.rows() {
            assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.row(r).iter().all(|&v| v >= 0.0));
        }
    }
    assert_eq!(tape.value(out.audio_to_text).shape(), (5, 2));
    assert_eq!(tape.value(out.text_to_audio).shape(), (2, 5));
}

#[test]
fn embeddings_are_unit_length_and_deterministic() {
    let params = RefinerParams::init(&RefinerConfig::default(), 11, 0.07).unwrap();
    let audio = random(6, 64, 12);
    let text = random(4, 64, 13);
    for (seq, m) in [(&audio, Modality::Audio), (&text, Modality::Text)] {
        let e = embed_single(seq, m, &params).unwrap();
        assert_eq!(e.len(), 32);
        assert!((dot(&e, &e).sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(e, embed_single(seq, m, &params).unwrap());
    }
    let run = || refine_pair(&audio, &text, &params, &mut stream_rng(1, Stream::TrainStep, 0)).unwrap();
    let (a, t) = run();
    assert!((dot(&a, &a) - 1.0).abs() < 1e-12 && (dot(&t, &t) - 1.0).abs() < 1e-12);
    assert_eq!((a, t), run());
}

#[test]
fn same_seed_same_init_different_seed_differs() {
    let c = RefinerConfig::default();
    assert_eq!(RefinerParams::init(&c, 5, 0.07).unwrap(), RefinerParams::init(&c, 5, 0.07).unwrap());
    assert_ne!(RefinerParams::init(&c, 5, 0.07).unwrap(), RefinerParams::init(&c, 6, 0.07).unwrap());
}

#[test]
fn training_path_reduces_to_inference_when_cross_values_vanish() {
    // replace_prob = 1 forces q_pool, dropout = 0 removes randomness, and zero
    // value maps make cross-attention the identity.
    let config = RefinerConfig {
        dropout: 0.0,
        replace_prob: 1.0,
        ..RefinerConfig::default()
    };
    let mut params = RefinerParams::init(&config, 21, 0.07).unwrap();
    params.pool.q_pool = random(1, 32, 22);
    params.cross.w_value_text = Tensor2D::zeros(32, 32);
    params.cross.w_value_audio = Tensor2D::zeros(32, 32);
    let audio = random(5, 64, 23);
    let text = random(3, 64, 24);
    let (a, t) = refine_pair(&audio, &text, &params, &mut stream_rng(0, Stream::TrainStep, 0)).unwrap();
    let a_inf = embed_single(&audio, Modality::Audio, &params).unwrap();
    let t_inf = embed_single(&text, Modality::Text, &params).unwrap();
    for (x, y) in a.iter().zip(&a_inf).chain(t.iter().zip(&t_inf)) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn zero_q_pool_gives_uniform_inference_weights() {
    let params = RefinerParams::init(&RefinerConfig::default(), 2, 0.07).unwrap();
    let (_, alpha) = embed_single_with_attention(&random(4, 64, 3), Modality::Audio, &params).unwrap();
    assert_eq!(alpha.unwrap(), vec![0.25; 4]);
}

#[test]
fn mean_pooling_matches_uniform_attention() {
    let attn = RefinerParams::init(&RefinerConfig::default(), 2, 0.07).unwrap();
    let mut mean = attn.clone();
    mean.config.pooling = PoolingKind::Mean;
    let seq = random(4, 64, 3);
    let a = embed_single(&seq, Modality::Audio, &attn).unwrap();
    let m = embed_single(&seq, Modality::Audio, &mean).unwrap();
    for (x, y) in a.iter().zip(&m) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(embed_single_with_attention(&seq, Modality::Audio, &mean).unwrap().1.is_none());
}

#[test]
fn linear_baseline_skips_transformer() {
    let mut params = RefinerParams::init(&RefinerConfig::default(), 2, 0.07).unwrap();
    params.config.projection = ProjectionKind::Linear;
    let seq = random(3, 64, 4);
    let direct = linear_project(&seq, &params.text_proj).unwrap();
    let expect = {
        let m: Vec<f64> = (0..32).map(|c| (0..3).map(|r| direct.get(r, c)).sum::<f64>() / 3.0).collect();
        Tensor2D::row_vector(&m).normalized_rows().into_data()
    };
    let got = embed_single(&seq, Modality::Text, &params).unwrap();
    for (x, y) in got.iter().zip(&expect) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn empty_sequence_and_bad_width_are_rejected() {
    let params = RefinerParams::init(&small_config(), 1, 0.07).unwrap();
    assert!(matches!(embed_single(&Tensor2D::zeros(0, 4), Modality::Audio, &params), Err(Error::Usage(_))));
    assert!(matches!(embed_single(&Tensor2D::zeros(2, 5), Modality::Text, &params), Err(Error::Config(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        RefinerConfig { heads: 3, ..RefinerConfig::default() },
        RefinerConfig { dropout: 1.0, ..RefinerConfig::default() },
        RefinerConfig { replace_prob: 1.5, ..RefinerConfig::default() },
        RefinerConfig { d_shared: 0, ..RefinerConfig::default() },
    ];
    for c in bad {
        assert!(matches!(RefinerParams::init(&c, 0, 0.07), Err(Error::Config(_))));
    }
}

#[test]
fn tensor_views_share_one_order() {
    let config = RefinerConfig {
        pool_score: PoolScore::Bilinear,
        learnable_temperature: true,
        depth: 2,
        ..small_config()
    };
    let mut params = RefinerParams::init(&config, 1, 0.07).unwrap();
    let shapes: Vec<_> = params.tensors().iter().map(|(_, t)| t.shape()).collect();
    let names: Vec<_> = params.tensors().iter().map(|(n, _)| n.clone()).collect();
    let mut unique = names.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), names.len());
    assert_eq!(params.tensors_mut().iter().map(|t| t.shape()).collect::<Vec<_>>(), shapes);
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    assert_eq!(vars.all().iter().map(|&v| tape.shape(v)).collect::<Vec<_>>(), shapes);
    assert!((params.log_temperature.as_ref().unwrap().item() - 0.07f64.ln()).abs() < 1e-15);
}

fn pair_loss<'a>(params: &'a RefinerParams, audio: &Tensor2D, text: &Tensor2D) -> impl FnMut(&mut Tape, &[Var]) -> crate::Result<Var> + 'a {
    let audio = audio.clone();
    let text = text.clone();
    move |tape, vars| {
        let vars = params.vars_from(vars)?;
        let a = tape.constant(audio.clone());
        let t = tape.constant(text.clone());
        let mut rng = stream_rng(3, Stream::TrainStep, 0);
        let out = vars.refine_pair(tape, a, t, &mut rng)?;
        let w = tape.constant(Tensor2D::row_vector(&[0.3, -0.8, 0.5]));
        let wa = tape.mul(out.audio, w)?;
        let prod = tape.mul(wa, out.text)?;
        let s = tape.sum_all(prod)?;
        let b = tape.mul(out.audio, w)?;
        let b = tape.sum_all(b)?;
        tape.add(s, b)
    }
}

#[test]
fn pair_gradients_match_finite_differences() {
    for (score, pre_norm, replace) in [
        (PoolScore::ScaledDot, false, 0.0),
        (PoolScore::Bilinear, true, 0.0),
        (PoolScore::ScaledDot, false, 1.0),
    ] {
        let config = RefinerConfig {
            pool_score: score,
            pre_norm,
            replace_prob: replace,
            ..small_config()
        };
        let mut params = RefinerParams::init(&config, 31, 0.07).unwrap();
        params.pool.q_pool = random(1, 3, 32);
        for t in params.tensors_mut() {
            if t.data().iter().all(|&v| v == 0.0) {
                let (r, c) = t.shape();
                *t = Tensor2D::uniform(r, c, 0.3, &mut stream_rng(33, Stream::Fuzz, (r * 100 + c) as u64));
            }
        }
        let audio = random(3, 4, 34);
        let text = random(2, 4, 35);
        let tensors: Vec<Tensor2D> = params.tensors().into_iter().map(|(_, t)| t.clone()).collect();
        let report = check_gradients(&tensors, 1e-5, pair_loss(&params, &audio, &text)).unwrap();
        assert!(report.max_rel_error < 1e-4, "{score:?} pre_norm={pre_norm}: {report:?}");
    }
}

#[test]
fn collect_grads_fills_every_parameter() {
    let mut params = RefinerParams::init(&small_config(), 41, 0.07).unwrap();
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let a = tape.constant(random(3, 4, 42));
    let t = tape.constant(random(2, 4, 43));
    let out = vars.refine_pair(&mut tape, a, t, &mut stream_rng(0, Stream::TrainStep, 0)).unwrap();
    let prod = tape.mul(out.audio, out.text).unwrap();
    let loss = tape.sum_all(prod).unwrap();
    tape.backward(loss).unwrap();
    params.collect_grads(&tape, &vars);
    assert!(params.tensors().iter().all(|(_, t)| t.grad.is_some()));
    params.zero_grads();
    assert!(params.tensors().iter().all(|(_, t)| t.grad.is_none()));
}

fn permute_rows(x: &Tensor2D, order: &[usize]) -> Tensor2D {
    Tensor2D::from_rows(&order.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inference_embedding_ignores_row_order(seed in 0u64..10_000, n in 1usize..6) {
        let mut params = RefinerParams::init(&small_config(), seed, 0.07).unwrap();
        params.pool.q_pool = random(1, 3, seed + 1);
        let seq = random(n, 4, seed + 2);
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        order.rotate_left(seed as usize % n);
        for m in [Modality::Audio, Modality::Text] {
            let a = embed_single(&seq, m, &params).unwrap();
            let b = embed_single(&permute_rows(&seq, &order), m, &params).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_attention_rows_are_distributions(seed in 0u64..10_000, n in 1usize..8) {
        let params = RefinerParams::init(&small_config(), seed, 0.07).unwrap();
        let b = &params.audio_blocks[0];
        let x = random(n, 4, seed);
        for h in 0..b.heads() {
            let q = x.matmul(&b.w_query[h]).unwrap();
            let k = x.matmul(&b.w_key[h]).unwrap();
            let s = softmax(&q.matmul(&k.transpose()).unwrap());
            for r in 0..n {
                prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
