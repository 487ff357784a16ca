//! Cross-modal embedding refinement.
//!
//! Each modality's encoder sequence passes through a residual transformer
//! block (`H = MHA(X) + X`, `Z = FFN(H) + H`, dropout after each sublayer) and
//! an affine map into the shared space (`E = Z·W + b`). During training the two
//! projected sequences additionally attend to each other in both directions
//! and the attention outputs are added back residually. Inference skips the
//! cross-attention entirely, so each modality is embedded on its own.
//!
//! Audio rows are pooled with attention (text-conditioned query while
//! training, learned `q_pool` at inference); text rows are mean-pooled. Both
//! outputs are L2-normalized.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{stream_rng, Mode, Stream, Tape, Tensor2D, Var};
use crate::pooling::{attention_pool_on_tape, choose_query_mode, PoolParams, PoolScore, QueryMode, DEFAULT_REPLACE_PROB};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Audio,
    Text,
}

/// Whether the transformer stage runs or only the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    Transformer,
    /// Affine map only (the plain linear-projection baseline).
    Linear,
}

/// How audio chunk rows are reduced to one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingKind {
    Attention,
    Mean,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinerConfig {
    pub d_model: usize,
    pub d_shared: usize,
    pub heads: usize,
    /// Transformer blocks per modality.
    pub depth: usize,
    /// FFN hidden width as a multiple of `d_model`.
    pub ffn_mult: usize,
    pub dropout: f64,
    /// Layer-normalize sublayer inputs. Off by default: the blocks are purely residual.
    pub pre_norm: bool,
    pub projection: ProjectionKind,
    pub pooling: PoolingKind,
    pub pool_score: PoolScore,
    pub replace_prob: f64,
    /// Adds a learnable log-temperature to the parameter set.
    pub learnable_temperature: bool,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            d_shared: 32,
            heads: 8,
            depth: 1,
            ffn_mult: 4,
            dropout: 0.1,
            pre_norm: false,
            projection: ProjectionKind::Transformer,
            pooling: PoolingKind::Attention,
            pool_score: PoolScore::ScaledDot,
            replace_prob: DEFAULT_REPLACE_PROB,
            learnable_temperature: false,
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.d_shared == 0 {
            return Err(Error::config("d_model and d_shared must be positive"));
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.ffn_mult == 0 {
            return Err(Error::config("ffn_mult must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.replace_prob) {
            return Err(Error::config(format!("replace_prob {} outside [0, 1]", self.replace_prob)));
        }
        Ok(())
    }
}

/// Fan-in uniform initialization, `U(-1/√fan_in, 1/√fan_in)`.
fn fan_in<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor2D {
    Tensor2D::uniform(rows, cols, 1.0 / (rows as f64).sqrt(), rng)
}

/// One residual transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerBlockParams {
    /// Per-head d_model × d_head projections.
    pub w_query: Vec<Tensor2D>,
    pub w_key: Vec<Tensor2D>,
    pub w_value: Vec<Tensor2D>,
    /// d_model × d_model output projection applied to the concatenated heads.
    pub w_out: Tensor2D,
    pub ffn_w1: Tensor2D,
    pub ffn_b1: Tensor2D,
    pub ffn_w2: Tensor2D,
    pub ffn_b2: Tensor2D,
    pub dropout: f64,
    pub pre_norm: bool,
}

impl TransformerBlockParams {
    pub fn init<R: Rng>(d_model: usize, heads: usize, ffn_mult: usize, dropout: f64, pre_norm: bool, rng: &mut R) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::config(format!("d_model {d_model} is not divisible by {heads} heads")));
        }
        let d_head = d_model / heads;
        let hidden = ffn_mult * d_model;
        let per_head = |rng: &mut R| (0..heads).map(|_| fan_in(d_model, d_head, rng)).collect::<Vec<_>>();
        let w_query = per_head(rng);
        let w_key = per_head(rng);
        let w_value = per_head(rng);
        Ok(Self {
            w_query,
            w_key,
            w_value,
            w_out: fan_in(d_model, d_model, rng),
            ffn_w1: fan_in(d_model, hidden, rng),
            ffn_b1: Tensor2D::zeros(1, hidden),
            ffn_w2: fan_in(hidden, d_model, rng),
            ffn_b2: Tensor2D::zeros(1, d_model),
            dropout,
            pre_norm,
        })
    }

    pub fn heads(&self) -> usize {
        self.w_query.len()
    }

    pub fn d_model(&self) -> usize {
        self.w_out.rows()
    }

    fn tensors(&self) -> Vec<(String, &Tensor2D)> {
        let mut out = Vec::new();
        for (name, group) in [("wq", &self.w_query), ("wk", &self.w_key), ("wv", &self.w_value)] {
            for (h, t) in group.iter().enumerate() {
                out.push((format!("{name}{h}"), t));
            }
        }
        out.push(("wo".into(), &self.w_out));
        out.push(("ffn_w1".into(), &self.ffn_w1));
        out.push(("ffn_b1".into(), &self.ffn_b1));
        out.push(("ffn_w2".into(), &self.ffn_w2));
        out.push(("ffn_b2".into(), &self.ffn_b2));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor2D> {
        let mut out: Vec<&mut Tensor2D> = Vec::new();
        out.extend(self.w_query.iter_mut());
        out.extend(self.w_key.iter_mut());
        out.extend(self.w_value.iter_mut());
        out.push(&mut self.w_out);
        out.push(&mut self.ffn_w1);
        out.push(&mut self.ffn_b1);
        out.push(&mut self.ffn_w2);
        out.push(&mut self.ffn_b2);
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> BlockVars {
        let mut bind_all = |ts: &[Tensor2D]| ts.iter().map(|t| tape.param(t)).collect::<Vec<_>>();
        let w_query = bind_all(&self.w_query);
        let w_key = bind_all(&self.w_key);
        let w_value = bind_all(&self.w_value);
        BlockVars {
            w_query,
            w_key,
            w_value,
            w_out: tape.param(&self.w_out),
            ffn_w1: tape.param(&self.ffn_w1),
            ffn_b1: tape.param(&self.ffn_b1),
            ffn_w2: tape.param(&self.ffn_w2),
            ffn_b2: tape.param(&self.ffn_b2),
            dropout: self.dropout,
            pre_norm: self.pre_norm,
        }
    }
}

/// [`TransformerBlockParams`] recorded on a tape.
#[derive(Debug, Clone)]
pub struct BlockVars {
    w_query: Vec<Var>,
    w_key: Vec<Var>,
    w_value: Vec<Var>,
    w_out: Var,
    ffn_w1: Var,
    ffn_b1: Var,
    ffn_w2: Var,
    ffn_b2: Var,
    dropout: f64,
    pre_norm: bool,
}

impl BlockVars {
    fn all(&self, out: &mut Vec<Var>) {
        out.extend(&self.w_query);
        out.extend(&self.w_key);
        out.extend(&self.w_value);
        out.extend([self.w_out, self.ffn_w1, self.ffn_b1, self.ffn_w2, self.ffn_b2]);
    }

    fn multi_head_attention(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut heads = Vec::with_capacity(self.w_query.len());
        for h in 0..self.w_query.len() {
            let q = tape.matmul(x, self.w_query[h])?;
            let k = tape.matmul(x, self.w_key[h])?;
            let v = tape.matmul(x, self.w_value[h])?;
            let d_head = tape.shape(q).1;
            let kt = tape.transpose(k)?;
            let scores = tape.matmul(q, kt)?;
            let scores = tape.scale(scores, 1.0 / (d_head as f64).sqrt())?;
            let weights = tape.softmax_rows(scores)?;
            heads.push(tape.matmul(weights, v)?);
        }
        let joined = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
        tape.matmul(joined, self.w_out)
    }

    fn feed_forward(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let hidden = tape.matmul(h, self.ffn_w1)?;
        let hidden = tape.add_row(hidden, self.ffn_b1)?;
        let hidden = tape.gelu(hidden)?;
        let out = tape.matmul(hidden, self.ffn_w2)?;
        tape.add_row(out, self.ffn_b2)
    }

    /// Applies the block to an n×d_model sequence.
    pub fn forward<R: Rng>(&self, tape: &mut Tape, x: Var, mode: Mode, rng: &mut R) -> Result<Var> {
        let (n, d) = tape.shape(x);
        if n == 0 {
            return Err(Error::usage("transformer input has no rows"));
        }
        let d_model = tape.shape(self.w_out).0;
        if d != d_model {
            return Err(Error::config(format!("sequence has dim {d}, block expects {d_model}")));
        }
        let attn_in = if self.pre_norm { tape.layer_norm_rows(x)? } else { x };
        let attn = self.multi_head_attention(tape, attn_in)?;
        let attn = tape.dropout(attn, self.dropout, mode, rng)?;
        let h = tape.add(attn, x)?;

        let ffn_in = if self.pre_norm { tape.layer_norm_rows(h)? } else { h };
        let ffn = self.feed_forward(tape, ffn_in)?;
        let ffn = tape.dropout(ffn, self.dropout, mode, rng)?;
        tape.add(ffn, h)
    }
}

/// Affine map into the shared space.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedProjectionParams {
    /// d_model × d_shared
    pub w_proj: Tensor2D,
    /// 1 × d_shared
    pub b_proj: Tensor2D,
}

impl SharedProjectionParams {
    pub fn init<R: Rng>(d_model: usize, d_shared: usize, rng: &mut R) -> Self {
        Self {
            w_proj: fan_in(d_model, d_shared, rng),
            b_proj: Tensor2D::zeros(1, d_shared),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> ProjectionVars {
        ProjectionVars {
            w_proj: tape.param(&self.w_proj),
            b_proj: tape.param(&self.b_proj),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectionVars {
    w_proj: Var,
    b_proj: Var,
}

impl ProjectionVars {
    pub fn forward(&self, tape: &mut Tape, z: Var) -> Result<Var> {
        let e = tape.matmul(z, self.w_proj)?;
        tape.add_row(e, self.b_proj)
    }
}

/// Weights for both attention directions, each d_shared × d_shared.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttentionParams {
    /// Audio queries attending to text keys/values.
    pub w_query_audio: Tensor2D,
    pub w_key_text: Tensor2D,
    pub w_value_text: Tensor2D,
    /// Text queries attending to audio keys/values.
    pub w_query_text: Tensor2D,
    pub w_key_audio: Tensor2D,
    pub w_value_audio: Tensor2D,
}

impl CrossAttentionParams {
    /// Value maps start at zero, so training begins on the inference path and
    /// cross-modal mixing is grown from there.
    pub fn init<R: Rng>(d_shared: usize, rng: &mut R) -> Self {
        Self {
            w_query_audio: fan_in(d_shared, d_shared, rng),
            w_key_text: fan_in(d_shared, d_shared, rng),
            w_value_text: Tensor2D::zeros(d_shared, d_shared),
            w_query_text: fan_in(d_shared, d_shared, rng),
            w_key_audio: fan_in(d_shared, d_shared, rng),
            w_value_audio: Tensor2D::zeros(d_shared, d_shared),
        }
    }

    fn tensors(&self) -> [(&'static str, &Tensor2D); 6] {
        [
            ("wq_audio", &self.w_query_audio),
            ("wk_text", &self.w_key_text),
            ("wv_text", &self.w_value_text),
            ("wq_text", &self.w_query_text),
            ("wk_audio", &self.w_key_audio),
            ("wv_audio", &self.w_value_audio),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor2D; 6] {
        [
            &mut self.w_query_audio,
            &mut self.w_key_text,
            &mut self.w_value_text,
            &mut self.w_query_text,
            &mut self.w_key_audio,
            &mut self.w_value_audio,
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> CrossVars {
        let [qa, kt, vt, qt, ka, va] = self.tensors().map(|(_, t)| tape.param(t));
        CrossVars {
            w_query_audio: qa,
            w_key_text: kt,
            w_value_text: vt,
            w_query_text: qt,
            w_key_audio: ka,
            w_value_audio: va,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CrossVars {
    w_query_audio: Var,
    w_key_text: Var,
    w_value_text: Var,
    w_query_text: Var,
    w_key_audio: Var,
    w_value_audio: Var,
}

/// Outputs of [`CrossVars::forward`].
#[derive(Debug, Clone, Copy)]
pub struct CrossOutput {
    pub audio: Var,
    pub text: Var,
    /// n_a × n_t attention of audio positions over text tokens.
    pub audio_to_text: Var,
    /// n_t × n_a attention of text tokens over audio positions.
    pub text_to_audio: Var,
}

fn attend(tape: &mut Tape, queries_from: Var, keys_from: Var, wq: Var, wk: Var, wv: Var) -> Result<(Var, Var)> {
    let q = tape.matmul(queries_from, wq)?;
    let k = tape.matmul(keys_from, wk)?;
    let v = tape.matmul(keys_from, wv)?;
    let d_k = tape.shape(k).1;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, 1.0 / (d_k as f64).sqrt())?;
    let weights = tape.softmax_rows(scores)?;
    Ok((tape.matmul(weights, v)?, weights))
}

impl CrossVars {
    /// `a' = e_a + Attn(e_a, e_t)` and `t' = e_t + Attn(e_t, e_a)`.
    pub fn forward(&self, tape: &mut Tape, e_audio: Var, e_text: Var) -> Result<CrossOutput> {
        if tape.shape(e_audio).0 == 0 || tape.shape(e_text).0 == 0 {
            return Err(Error::usage("cross-attention over an empty sequence"));
        }
        let (a_attn, audio_to_text) = attend(tape, e_audio, e_text, self.w_query_audio, self.w_key_text, self.w_value_text)?;
        let (t_attn, text_to_audio) = attend(tape, e_text, e_audio, self.w_query_text, self.w_key_audio, self.w_value_audio)?;
        Ok(CrossOutput {
            audio: tape.add(e_audio, a_attn)?,
            text: tape.add(e_text, t_attn)?,
            audio_to_text,
            text_to_audio,
        })
    }

    fn all(&self, out: &mut Vec<Var>) {
        out.extend([
            self.w_query_audio,
            self.w_key_text,
            self.w_value_text,
            self.w_query_text,
            self.w_key_audio,
            self.w_value_audio,
        ]);
    }
}

/// Every learnable tensor of the refinement module.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinerParams {
    pub config: RefinerConfig,
    pub audio_blocks: Vec<TransformerBlockParams>,
    pub text_blocks: Vec<TransformerBlockParams>,
    pub audio_proj: SharedProjectionParams,
    pub text_proj: SharedProjectionParams,
    pub cross: CrossAttentionParams,
    pub pool: PoolParams,
    /// 1×1 log-temperature, present when the temperature is learned.
    pub log_temperature: Option<Tensor2D>,
}

impl RefinerParams {
    /// Fresh parameters. `temperature` seeds the learnable log-temperature when enabled.
    pub fn init(config: &RefinerConfig, seed: u64, temperature: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init, 0);
        let blocks = |rng: &mut _| -> Result<Vec<_>> {
            (0..config.depth)
                .map(|_| TransformerBlockParams::init(config.d_model, config.heads, config.ffn_mult, config.dropout, config.pre_norm, rng))
                .collect()
        };
        let audio_blocks = blocks(&mut rng)?;
        let text_blocks = blocks(&mut rng)?;
        let audio_proj = SharedProjectionParams::init(config.d_model, config.d_shared, &mut rng);
        let text_proj = SharedProjectionParams::init(config.d_model, config.d_shared, &mut rng);
        let cross = CrossAttentionParams::init(config.d_shared, &mut rng);
        let pool = PoolParams::new(config.d_shared, config.pool_score, config.replace_prob)?;
        if config.learnable_temperature && temperature <= 0.0 {
            return Err(Error::config("temperature must be positive"));
        }
        Ok(Self {
            config: config.clone(),
            audio_blocks,
            text_blocks,
            audio_proj,
            text_proj,
            cross,
            pool,
            log_temperature: config.learnable_temperature.then(|| Tensor2D::scalar(temperature.ln())),
        })
    }

    /// Named tensors in a fixed order; [`bind`](Self::bind) and
    /// [`tensors_mut`](Self::tensors_mut) use the same order.
    pub fn tensors(&self) -> Vec<(String, &Tensor2D)> {
        let mut out = Vec::new();
        for (prefix, blocks) in [("audio", &self.audio_blocks), ("text", &self.text_blocks)] {
            for (i, b) in blocks.iter().enumerate() {
                out.extend(b.tensors().into_iter().map(|(n, t)| (format!("{prefix}.block{i}.{n}"), t)));
            }
        }
        out.push(("audio.proj.w".into(), &self.audio_proj.w_proj));
        out.push(("audio.proj.b".into(), &self.audio_proj.b_proj));
        out.push(("text.proj.w".into(), &self.text_proj.w_proj));
        out.push(("text.proj.b".into(), &self.text_proj.b_proj));
        out.extend(self.cross.tensors().into_iter().map(|(n, t)| (format!("cross.{n}"), t)));
        out.push(("pool.q".into(), &self.pool.q_pool));
        if let Some(w) = &self.pool.w_score {
            out.push(("pool.w_score".into(), w));
        }
        if let Some(t) = &self.log_temperature {
            out.push(("log_temperature".into(), t));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor2D> {
        let mut out: Vec<&mut Tensor2D> = Vec::new();
        for b in self.audio_blocks.iter_mut().chain(self.text_blocks.iter_mut()) {
            out.extend(b.tensors_mut());
        }
        out.extend([
            &mut self.audio_proj.w_proj,
            &mut self.audio_proj.b_proj,
            &mut self.text_proj.w_proj,
            &mut self.text_proj.b_proj,
        ]);
        out.extend(self.cross.tensors_mut());
        out.push(&mut self.pool.q_pool);
        if let Some(w) = &mut self.pool.w_score {
            out.push(w);
        }
        if let Some(t) = &mut self.log_temperature {
            out.push(t);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Records every parameter on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> RefinerVars {
        let vars: Vec<Var> = self.tensors().into_iter().map(|(_, t)| tape.param(t)).collect();
        self.vars_from(&vars).expect("one var per tensor")
    }

    /// Assembles [`RefinerVars`] from vars already recorded in [`tensors`](Self::tensors) order.
    pub fn vars_from(&self, vars: &[Var]) -> Result<RefinerVars> {
        let expected = self.tensors().len();
        if vars.len() != expected {
            return Err(Error::usage(format!("expected {expected} parameter vars, got {}", vars.len())));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked");
        let block = |b: &TransformerBlockParams, next: &mut dyn FnMut() -> Var| {
            let h = b.heads();
            BlockVars {
                w_query: (0..h).map(|_| next()).collect(),
                w_key: (0..h).map(|_| next()).collect(),
                w_value: (0..h).map(|_| next()).collect(),
                w_out: next(),
                ffn_w1: next(),
                ffn_b1: next(),
                ffn_w2: next(),
                ffn_b2: next(),
                dropout: b.dropout,
                pre_norm: b.pre_norm,
            }
        };
        let audio_blocks = self.audio_blocks.iter().map(|b| block(b, &mut next)).collect();
        let text_blocks = self.text_blocks.iter().map(|b| block(b, &mut next)).collect();
        let audio_proj = ProjectionVars { w_proj: next(), b_proj: next() };
        let text_proj = ProjectionVars { w_proj: next(), b_proj: next() };
        let cross = CrossVars {
            w_query_audio: next(),
            w_key_text: next(),
            w_value_text: next(),
            w_query_text: next(),
            w_key_audio: next(),
            w_value_audio: next(),
        };
        let q_pool = next();
        let w_score = self.pool.w_score.as_ref().map(|_| next());
        let log_temperature = self.log_temperature.as_ref().map(|_| next());
        Ok(RefinerVars {
            config: self.config.clone(),
            replace_prob: self.pool.replace_prob,
            audio_blocks,
            text_blocks,
            audio_proj,
            text_proj,
            cross,
            q_pool,
            w_score,
            log_temperature,
        })
    }

    /// Copies gradients from `tape` into every parameter's grad slot.
    pub fn collect_grads(&mut self, tape: &Tape, vars: &RefinerVars) {
        for (t, v) in self.tensors_mut().into_iter().zip(vars.all()) {
            tape.write_grad(v, t);
        }
    }

    pub fn zero_grads(&mut self) {
        for t in self.tensors_mut() {
            t.grad = None;
        }
    }
}

/// [`RefinerParams`] recorded on a tape.
#[derive(Debug, Clone)]
pub struct RefinerVars {
    config: RefinerConfig,
    replace_prob: f64,
    audio_blocks: Vec<BlockVars>,
    text_blocks: Vec<BlockVars>,
    audio_proj: ProjectionVars,
    text_proj: ProjectionVars,
    cross: CrossVars,
    q_pool: Var,
    w_score: Option<Var>,
    pub log_temperature: Option<Var>,
}

/// Everything one training forward pass produces for a pair.
#[derive(Debug, Clone, Copy)]
pub struct PairOutput {
    /// 1×d_shared unit rows.
    pub audio: Var,
    pub text: Var,
    pub query_mode: QueryMode,
    pub audio_to_text: Var,
    pub text_to_audio: Var,
    /// 1×m pooling weights (absent with mean pooling).
    pub pool_alpha: Option<Var>,
}

impl RefinerVars {
    /// Parameter vars in [`RefinerParams::tensors`] order.
    pub fn all(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for b in self.audio_blocks.iter().chain(&self.text_blocks) {
            b.all(&mut out);
        }
        out.extend([self.audio_proj.w_proj, self.audio_proj.b_proj, self.text_proj.w_proj, self.text_proj.b_proj]);
        self.cross.all(&mut out);
        out.push(self.q_pool);
        out.extend(self.w_score);
        out.extend(self.log_temperature);
        out
    }

    /// Transformer stage (skipped for the linear baseline) then the affine map.
    pub fn project<R: Rng>(&self, tape: &mut Tape, seq: Var, modality: Modality, mode: Mode, rng: &mut R) -> Result<Var> {
        let (n, d) = tape.shape(seq);
        if n == 0 {
            return Err(Error::usage("cannot embed an empty sequence"));
        }
        if d != self.config.d_model {
            return Err(Error::config(format!("sequence dim {d} does not match d_model {}", self.config.d_model)));
        }
        let (blocks, proj) = match modality {
            Modality::Audio => (&self.audio_blocks, &self.audio_proj),
            Modality::Text => (&self.text_blocks, &self.text_proj),
        };
        let mut z = seq;
        if self.config.projection == ProjectionKind::Transformer {
            for b in blocks {
                z = b.forward(tape, z, mode, rng)?;
            }
        }
        proj.forward(tape, z)
    }

    fn pool_audio(&self, tape: &mut Tape, rows: Var, query: Var) -> Result<(Var, Option<Var>)> {
        match self.config.pooling {
            PoolingKind::Attention => {
                let (z, alpha) = attention_pool_on_tape(tape, rows, query, self.w_score)?;
                Ok((z, Some(alpha)))
            }
            PoolingKind::Mean => Ok((tape.mean_rows(rows)?, None)),
        }
    }

    /// Training path for one (audio, text) pair.
    pub fn refine_pair<R: Rng>(&self, tape: &mut Tape, audio_seq: Var, text_seq: Var, rng: &mut R) -> Result<PairOutput> {
        let e_audio = self.project(tape, audio_seq, Modality::Audio, Mode::Train, rng)?;
        let e_text = self.project(tape, text_seq, Modality::Text, Mode::Train, rng)?;
        let text_query = tape.mean_rows(e_text)?;
        let cross = self.cross.forward(tape, e_audio, e_text)?;
        let query_mode = choose_query_mode(self.replace_prob, rng);
        let query = match query_mode {
            QueryMode::Learned => self.q_pool,
            QueryMode::TextConditioned => text_query,
        };
        let (audio, pool_alpha) = self.pool_audio(tape, cross.audio, query)?;
        let text = tape.mean_rows(cross.text)?;
        Ok(PairOutput {
            audio: tape.normalize_rows(audio)?,
            text: tape.normalize_rows(text)?,
            query_mode,
            audio_to_text: cross.audio_to_text,
            text_to_audio: cross.text_to_audio,
            pool_alpha,
        })
    }

    /// Inference path: no cross-attention, no dropout, `q_pool` as the audio query.
    /// Returns the unit 1×d_shared embedding and the pooling weights, if any.
    pub fn embed_single(&self, tape: &mut Tape, seq: Var, modality: Modality) -> Result<(Var, Option<Var>)> {
        // Infer mode never draws from the generator.
        let mut rng = stream_rng(0, Stream::Init, 0);
        let e = self.project(tape, seq, modality, Mode::Infer, &mut rng)?;
        let (pooled, alpha) = match modality {
            Modality::Audio => self.pool_audio(tape, e, self.q_pool)?,
            Modality::Text => (tape.mean_rows(e)?, None),
        };
        Ok((tape.normalize_rows(pooled)?, alpha))
    }
}

/// Applies one transformer block to an n×d_model sequence.
pub fn transformer_project<R: Rng>(x: &Tensor2D, params: &TransformerBlockParams, mode: Mode, rng: &mut R) -> Result<Tensor2D> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let out = vars.forward(&mut tape, xv, mode, rng)?;
    Ok(tape.value(out).detached())
}

/// `E = Z·W_proj + b_proj`.
pub fn linear_project(z: &Tensor2D, params: &SharedProjectionParams) -> Result<Tensor2D> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let zv = tape.constant(z.clone());
    let out = vars.forward(&mut tape, zv)?;
    Ok(tape.value(out).detached())
}

/// Bidirectional residual cross-attention; returns `(audio', text')`.
pub fn cross_attend(e_audio: &Tensor2D, e_text: &Tensor2D, params: &CrossAttentionParams) -> Result<(Tensor2D, Tensor2D)> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let a = tape.constant(e_audio.clone());
    let t = tape.constant(e_text.clone());
    let out = vars.forward(&mut tape, a, t)?;
    Ok((tape.value(out.audio).detached(), tape.value(out.text).detached()))
}

/// Training-path embeddings of one pair, as unit vectors.
pub fn refine_pair<R: Rng>(audio_seq: &Tensor2D, text_seq: &Tensor2D, params: &RefinerParams, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let a = tape.constant(audio_seq.clone());
    let t = tape.constant(text_seq.clone());
    let out = vars.refine_pair(&mut tape, a, t, rng)?;
    Ok((tape.value(out.audio).data().to_vec(), tape.value(out.text).data().to_vec()))
}

/// Inference-path unit embedding of one sequence.
pub fn embed_single(seq: &Tensor2D, modality: Modality, params: &RefinerParams) -> Result<Vec<f64>> {
    embed_single_with_attention(seq, modality, params).map(|(v, _)| v)
}

/// [`embed_single`] plus the audio pooling weights.
pub fn embed_single_with_attention(seq: &Tensor2D, modality: Modality, params: &RefinerParams) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if seq.rows() == 0 {
        return Err(Error::usage("cannot embed an empty sequence"));
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let x = tape.constant(seq.clone());
    let (v, alpha) = vars.embed_single(&mut tape, x, modality)?;
    Ok((tape.value(v).data().to_vec(), alpha.map(|a| tape.value(a).data().to_vec())))
}

#[cfg(test)]
mod tests;
