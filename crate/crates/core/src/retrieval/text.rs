//! Caption retrieval baselines and caption filtering.
//!
//! Tokenization lowercases, turns every character that is neither
//! alphanumeric nor whitespace into a space, splits on whitespace and drops
//! the stopwords below. There is no stemming.

use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::index::{sort_hits, EmbeddingIndex, Hit, IndexModality};
use crate::error::{Error, Result};
use crate::numerics::Tensor2D;

/// The 127-word English list distributed with NLTK.
pub const STOPWORDS: [&str; 127] = [
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours", "yourself", "yourselves",
    "he", "him", "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself", "they", "them", "their",
    "theirs", "themselves", "what", "which", "who", "whom", "this", "that", "these", "those", "am", "is", "are",
    "was", "were", "be", "been", "being", "have", "has", "had", "having", "do", "does", "did", "doing", "a", "an",
    "the", "and", "but", "if", "or", "because", "as", "until", "while", "of", "at", "by", "for", "with", "about",
    "against", "between", "into", "through", "during", "before", "after", "above", "below", "to", "from", "up",
    "down", "in", "out", "on", "off", "over", "under", "again", "further", "then", "once", "here", "there", "when",
    "where", "why", "how", "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor",
    "not", "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don", "should",
    "now",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// Lowercased word tokens, stopwords included.
pub fn raw_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Lowercased word tokens with stopwords removed.
pub fn tokenize(text: &str) -> Vec<String> {
    raw_tokens(text).into_iter().filter(|t| !is_stopword(t)).collect()
}

/// A caption or query with its content tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct TextDoc {
    pub id: u64,
    pub text: String,
    pub tokens: Vec<String>,
}

impl TextDoc {
    pub fn new(id: u64, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self { id, text, tokens }
    }
}

fn nonempty_query(query: &TextDoc) -> Result<()> {
    if query.tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(())
}

fn top_k(mut hits: Vec<Hit>, k: usize) -> Vec<Hit> {
    sort_hits(&mut hits);
    hits.truncate(k);
    hits
}

/// Scores each document by how many distinct query tokens it contains.
pub fn lexical_search(query: &TextDoc, corpus: &[TextDoc], k: usize) -> Result<Vec<Hit>> {
    nonempty_query(query)?;
    let q: HashSet<&str> = query.tokens.iter().map(String::as_str).collect();
    let hits = corpus
        .iter()
        .map(|d| {
            let present: HashSet<&str> = d.tokens.iter().map(String::as_str).collect();
            Hit {
                id: d.id,
                score: q.intersection(&present).count() as f64,
            }
        })
        .collect();
    Ok(top_k(hits, k))
}

/// Okapi BM25 corpus statistics.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    k1: f64,
    b: f64,
    ids: Vec<u64>,
    lengths: Vec<usize>,
    avg_len: f64,
    term_freqs: Vec<HashMap<String, usize>>,
    doc_freq: HashMap<String, usize>,
}

impl Bm25Index {
    pub const DEFAULT_K1: f64 = 1.2;
    pub const DEFAULT_B: f64 = 0.75;

    pub fn new(corpus: &[TextDoc], k1: f64, b: f64) -> Result<Self> {
        if !(k1 >= 0.0) || !(0.0..=1.0).contains(&b) {
            return Err(Error::config(format!("invalid BM25 parameters k1={k1}, b={b}")));
        }
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let term_freqs: Vec<HashMap<String, usize>> = corpus
            .iter()
            .map(|d| {
                let mut tf: HashMap<String, usize> = HashMap::new();
                for t in &d.tokens {
                    *tf.entry(t.clone()).or_default() += 1;
                }
                for t in tf.keys() {
                    *doc_freq.entry(t.clone()).or_default() += 1;
                }
                tf
            })
            .collect();
        let lengths: Vec<usize> = corpus.iter().map(|d| d.tokens.len()).collect();
        let avg_len = if corpus.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / corpus.len() as f64
        };
        Ok(Self {
            k1,
            b,
            ids: corpus.iter().map(|d| d.id).collect(),
            lengths,
            avg_len,
            term_freqs,
            doc_freq,
        })
    }

    /// `ln((N − df + 0.5) / (df + 0.5) + 1)`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.ids.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    /// Score of document `pos` (corpus order); repeated query terms count once per occurrence.
    pub fn score(&self, query: &[String], pos: usize) -> f64 {
        let len_ratio = if self.avg_len > 0.0 {
            self.lengths[pos] as f64 / self.avg_len
        } else {
            1.0
        };
        query
            .iter()
            .map(|t| {
                let tf = self.term_freqs[pos].get(t).copied().unwrap_or(0) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(t) * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * len_ratio))
            })
            .sum()
    }

    pub fn search(&self, query: &TextDoc, k: usize) -> Result<Vec<Hit>> {
        nonempty_query(query)?;
        let hits = (0..self.ids.len())
            .map(|p| Hit {
                id: self.ids[p],
                score: self.score(&query.tokens, p),
            })
            .collect();
        Ok(top_k(hits, k))
    }
}

pub fn bm25_search(query: &TextDoc, corpus: &[TextDoc], k: usize, k1: f64, b: f64) -> Result<Vec<Hit>> {
    Bm25Index::new(corpus, k1, b)?.search(query, k)
}

/// Deterministic text-to-sequence encoder standing in for a pretrained text model.
///
/// Every token maps to a fixed Gaussian vector seeded by SHA-256 of the
/// encoder seed and the token, so identical words always share a vector and
/// no vocabulary is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTextEncoder {
    pub seed: u64,
    pub d_model: usize,
}

impl ToyTextEncoder {
    pub fn new(seed: u64, d_model: usize) -> Self {
        Self { seed, d_model }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        let scale = 1.0 / (self.d_model as f64).sqrt();
        (0..self.d_model)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect()
    }

    /// One row per content token; falls back to all tokens when every word is a stopword.
    pub fn sequence(&self, text: &str) -> Result<Tensor2D> {
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            tokens = raw_tokens(text);
        }
        if tokens.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let rows: Vec<Vec<f64>> = tokens.iter().map(|t| self.token_vector(t)).collect();
        Tensor2D::from_rows(&rows)
    }

    /// Unit mean of the token vectors.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let seq = self.sequence(text)?;
        let mut mean = vec![0.0; self.d_model];
        for r in 0..seq.rows() {
            for (m, v) in mean.iter_mut().zip(seq.row(r)) {
                *m += v;
            }
        }
        let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Numeric("text embedding has zero norm".into()));
        }
        Ok(mean.into_iter().map(|v| v / norm).collect())
    }
}

/// Cosine ranking of `corpus` against `query` under `embed`, same tie rule as
/// [`EmbeddingIndex::search`].
pub fn semantic_search(
    query: &str,
    corpus: &[TextDoc],
    embed: &dyn Fn(&str) -> Result<Vec<f64>>,
    k: usize,
) -> Result<Vec<Hit>> {
    let q = embed(query)?;
    let rows = corpus.iter().map(|d| embed(&d.text)).collect::<Result<Vec<_>>>()?;
    let vectors = if rows.is_empty() {
        Tensor2D::zeros(0, q.len())
    } else {
        Tensor2D::from_rows(&rows)?
    };
    let index = EmbeddingIndex::new(corpus.iter().map(|d| d.id).collect(), vectors, IndexModality::Text)?;
    index.search(&q, k.min(index.len()))
}

/// A generated caption with the two embeddings used to judge it.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCaption {
    pub text: String,
    pub audio_vec: Vec<f64>,
    pub text_vec: Vec<f64>,
}

/// Survivors of [`filter_captions`], best first.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredCaptions {
    /// `(input position, cosine)` of each kept caption.
    pub kept: Vec<(usize, f64)>,
    /// Kept texts joined by single spaces.
    pub joined: String,
}

pub const FILTER_TOP_K: usize = 5;
pub const FILTER_MIN_COS: f64 = 0.35;

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::config(format!("cosine of vectors with dims {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Keeps the `top_k` most audio-similar captions, then drops any below `min_cos`.
pub fn filter_captions(captions: &[CandidateCaption], top_k: usize, min_cos: f64) -> Result<FilteredCaptions> {
    let mut scored = captions
        .iter()
        .enumerate()
        .map(|(i, c)| Ok((i, cosine(&c.text_vec, &c.audio_vec)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(top_k);
    scored.retain(|&(_, s)| s >= min_cos);
    if scored.is_empty() {
        return Err(Error::EmptyCaptionSet);
    }
    let joined = scored.iter().map(|&(i, _)| captions[i].text.as_str()).collect::<Vec<_>>().join(" ");
    Ok(FilteredCaptions { kept: scored, joined })
}
