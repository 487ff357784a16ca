use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numerics::Tensor2D;

/// Unit-norm tolerance for stored rows and queries.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexModality {
    Audio,
    Text,
}

/// One search hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub id: u64,
    pub score: f64,
}

/// Exhaustive cosine index over unit rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    ids: Vec<u64>,
    vectors: Tensor2D,
    modality: IndexModality,
}

fn check_unit(v: &[f64], what: &str) -> Result<()> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::usage(format!("{what} has norm {n}, expected unit length")));
    }
    Ok(())
}

impl EmbeddingIndex {
    pub fn new(ids: Vec<u64>, vectors: Tensor2D, modality: IndexModality) -> Result<Self> {
        if ids.len() != vectors.rows() {
            return Err(Error::data(format!("{} ids for {} vectors", ids.len(), vectors.rows())));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        if let Some(dup) = ids.iter().find(|id| !seen.insert(**id)) {
            return Err(Error::data(format!("duplicate id {dup} in index")));
        }
        for (r, id) in ids.iter().enumerate() {
            check_unit(vectors.row(r), &format!("vector for id {id}"))?;
        }
        Ok(Self { ids, vectors, modality })
    }

    /// Builds an index from raw rows, L2-normalizing each one.
    pub fn from_unnormalized(ids: Vec<u64>, vectors: &Tensor2D, modality: IndexModality) -> Result<Self> {
        if vectors.row_norms().iter().any(|&n| n == 0.0) {
            return Err(Error::data("cannot index a zero vector"));
        }
        Self::new(ids, vectors.normalized_rows(), modality)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn vectors(&self) -> &Tensor2D {
        &self.vectors
    }

    pub fn modality(&self) -> IndexModality {
        self.modality
    }

    pub fn contains(&self, id: u64) -> bool {
        self.ids.contains(&id)
    }

    /// Top `k` rows by cosine, best first, ties broken by ascending id.
    /// `k` larger than the index is clamped with a warning.
    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<Hit>> {
        if query.len() != self.dim() && !self.is_empty() {
            return Err(Error::config(format!("query dim {} does not match index dim {}", query.len(), self.dim())));
        }
        check_unit(query, "query")?;
        let k = if k > self.len() {
            log::warn!("k = {k} exceeds index size {}; returning all {}", self.len(), self.len());
            self.len()
        } else {
            k
        };
        let mut hits: Vec<Hit> = self
            .ids
            .iter()
            .enumerate()
            .map(|(r, &id)| Hit {
                id,
                score: self.vectors.row(r).iter().zip(query).map(|(a, b)| a * b).sum(),
            })
            .collect();
        sort_hits(&mut hits);
        hits.truncate(k);
        Ok(hits)
    }
}

/// Score descending, then id ascending.
pub fn sort_hits(hits: &mut [Hit]) {
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
}
