//! Attention pooling over chunk embeddings.
//!
//! Chunk rows `h_i` are scored against a query `q` with
//! `g(h, q) = h·q / √d` (or `hᵀ W q / √d` with the bilinear option), the scores
//! are softmax-normalized into weights `α`, and the pooled vector is
//! `z = Σ α_i h_i`.
//!
//! During training the query is the paired text embedding, except that with
//! probability `replace_prob` it is swapped for the learned vector `q_pool`.
//! At inference only `q_pool` is used, so audio embeddings never depend on a
//! query and can be precomputed.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{softmax_rows, Tape, Tensor2D, Var};

/// Default probability of swapping the text query for `q_pool` during training.
pub const DEFAULT_REPLACE_PROB: f64 = 0.1;

/// Relevance function used to score chunks against the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolScore {
    /// `h·q / √d`
    ScaledDot,
    /// `hᵀ W q / √d` with a learned `W`.
    Bilinear,
}

/// Learnable pooling state.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolParams {
    /// 1×d learned inference query, initialized to zero (uniform weights).
    pub q_pool: Tensor2D,
    /// d×d scoring matrix, present only for [`PoolScore::Bilinear`].
    pub w_score: Option<Tensor2D>,
    pub replace_prob: f64,
}

impl PoolParams {
    pub fn new(d_shared: usize, score: PoolScore, replace_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&replace_prob) {
            return Err(Error::config(format!("replace_prob {replace_prob} outside [0, 1]")));
        }
        Ok(Self {
            q_pool: Tensor2D::zeros(1, d_shared),
            w_score: (score == PoolScore::Bilinear).then(|| Tensor2D::identity(d_shared)),
            replace_prob,
        })
    }

    pub fn score(&self) -> PoolScore {
        if self.w_score.is_some() {
            PoolScore::Bilinear
        } else {
            PoolScore::ScaledDot
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    TextConditioned,
    Learned,
}

/// Query vector together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolQuery {
    pub mode: QueryMode,
    pub vector: Vec<f64>,
}

impl PoolQuery {
    pub fn learned(params: &PoolParams) -> Self {
        Self {
            mode: QueryMode::Learned,
            vector: params.q_pool.data().to_vec(),
        }
    }

    pub fn text(vector: &[f64]) -> Self {
        Self {
            mode: QueryMode::TextConditioned,
            vector: vector.to_vec(),
        }
    }
}

/// Pooled vector and the weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub z: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Draws one uniform number and decides which query the training step uses.
pub fn choose_query_mode<R: Rng>(replace_prob: f64, rng: &mut R) -> QueryMode {
    if rng.random::<f64>() < replace_prob {
        QueryMode::Learned
    } else {
        QueryMode::TextConditioned
    }
}

/// Training-time query: `q_pool` with probability `replace_prob`, else the text vector.
pub fn select_train_query<R: Rng>(text_vec: &[f64], params: &PoolParams, rng: &mut R) -> PoolQuery {
    match choose_query_mode(params.replace_prob, rng) {
        QueryMode::Learned => PoolQuery::learned(params),
        QueryMode::TextConditioned => PoolQuery::text(text_vec),
    }
}

/// Pools the rows of `chunks` (m×d) against `query`.
pub fn attention_pool(chunks: &Tensor2D, query: &PoolQuery, w_score: Option<&Tensor2D>) -> Result<Pooled> {
    let (m, d) = chunks.shape();
    if m == 0 {
        return Err(Error::usage("attention pooling over zero chunks"));
    }
    if query.vector.len() != d {
        return Err(Error::config(format!("pool query has dim {}, chunks have {d}", query.vector.len())));
    }
    let q = Tensor2D::from_vec(d, 1, query.vector.clone())?;
    let q = match w_score {
        Some(w) => w.matmul(&q)?,
        None => q,
    };
    let scale = 1.0 / (d as f64).sqrt();
    let scores = chunks.matmul(&q)?.map(|s| s * scale).transpose();
    let alpha = softmax_rows(&scores);
    let z = alpha.matmul(chunks)?;
    Ok(Pooled {
        z: z.into_data(),
        alpha: alpha.into_data(),
    })
}

/// Tape version of [`attention_pool`]. `query` is 1×d. Returns `(z, α)`, both rows.
pub fn attention_pool_on_tape(tape: &mut Tape, chunks: Var, query: Var, w_score: Option<Var>) -> Result<(Var, Var)> {
    let (m, d) = tape.shape(chunks);
    if m == 0 {
        return Err(Error::usage("attention pooling over zero chunks"));
    }
    let q_col = tape.transpose(query)?;
    let q_col = match w_score {
        Some(w) => tape.matmul(w, q_col)?,
        None => q_col,
    };
    let scores = tape.matmul(chunks, q_col)?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt())?;
    let scores = tape.transpose(scores)?;
    let alpha = tape.softmax_rows(scores)?;
    let z = tape.matmul(alpha, chunks)?;
    Ok((z, alpha))
}
