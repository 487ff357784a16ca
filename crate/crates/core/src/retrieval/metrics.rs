use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::index::EmbeddingIndex;
use crate::error::{Error, Result};

/// Ground truth: query id → relevant document ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelevanceMap {
    map: BTreeMap<u64, BTreeSet<u64>>,
}

impl RelevanceMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: u64, doc: u64) {
        self.map.entry(query).or_default().insert(doc);
    }

    pub fn relevant(&self, query: u64) -> Result<&BTreeSet<u64>> {
        match self.map.get(&query) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(Error::data(format!("query {query} has no relevance judgments"))),
        }
    }

    pub fn queries(&self) -> impl Iterator<Item = u64> + '_ {
        self.map.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Checks that every referenced document exists in `target`.
    pub fn validate_against(&self, target: &EmbeddingIndex) -> Result<()> {
        for (q, docs) in &self.map {
            if let Some(d) = docs.iter().find(|d| !target.contains(**d)) {
                return Err(Error::data(format!("query {q} references unknown document {d}")));
            }
        }
        Ok(())
    }

    /// Swaps the roles of queries and documents.
    pub fn inverted(&self) -> RelevanceMap {
        let mut out = RelevanceMap::new();
        for (q, docs) in &self.map {
            for d in docs {
                out.insert(*d, *q);
            }
        }
        out
    }
}

/// Ranked document ids for one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query: u64,
    pub docs: Vec<u64>,
}

/// Denominator of AP@K when a query has `R` relevant documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApNormalizer {
    /// `min(R, K)`: a perfect top-K ranking scores 1.
    #[default]
    MinRk,
    /// `R`.
    Total,
}

pub fn recall_at_k(rankings: &[Ranking], relevance: &RelevanceMap, k: usize) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::data("no queries to evaluate"));
    }
    let mut hits = 0usize;
    for r in rankings {
        let rel = relevance.relevant(r.query)?;
        if r.docs.iter().take(k).any(|d| rel.contains(d)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / rankings.len() as f64)
}

/// AP@K of one ranking.
pub fn average_precision(docs: &[u64], relevant: &BTreeSet<u64>, k: usize, norm: ApNormalizer) -> f64 {
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, d) in docs.iter().take(k).enumerate() {
        if relevant.contains(d) {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    let denom = match norm {
        ApNormalizer::MinRk => relevant.len().min(k),
        ApNormalizer::Total => relevant.len(),
    };
    sum / denom as f64
}

/// Mean AP@K and the per-query values in input order.
pub fn map_at_k(rankings: &[Ranking], relevance: &RelevanceMap, k: usize, norm: ApNormalizer) -> Result<(f64, Vec<f64>)> {
    if rankings.is_empty() {
        return Err(Error::data("no queries to evaluate"));
    }
    let per_query = rankings
        .iter()
        .map(|r| Ok(average_precision(&r.docs, relevance.relevant(r.query)?, k, norm)))
        .collect::<Result<Vec<_>>>()?;
    Ok((per_query.iter().sum::<f64>() / per_query.len() as f64, per_query))
}

/// Retrieval quality for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub recall_at_10: f64,
    pub map_at_10: f64,
    /// `(query id, AP@10)` in query order.
    pub per_query_ap: Vec<(u64, f64)>,
}

impl MetricReport {
    pub fn from_rankings(rankings: &[Ranking], relevance: &RelevanceMap) -> Result<Self> {
        let (map_at_10, ap) = map_at_k(rankings, relevance, 10, ApNormalizer::MinRk)?;
        Ok(Self {
            recall_at_1: recall_at_k(rankings, relevance, 1)?,
            recall_at_5: recall_at_k(rankings, relevance, 5)?,
            recall_at_10: recall_at_k(rankings, relevance, 10)?,
            map_at_10,
            per_query_ap: rankings.iter().map(|r| r.query).zip(ap).collect(),
        })
    }

    /// Ranks every query against `docs` and scores the result.
    pub fn evaluate(queries: &EmbeddingIndex, docs: &EmbeddingIndex, relevance: &RelevanceMap) -> Result<Self> {
        relevance.validate_against(docs)?;
        let rankings = queries
            .ids()
            .iter()
            .enumerate()
            .map(|(r, &q)| {
                let hits = docs.search(queries.vectors().row(r), docs.len().min(10))?;
                Ok(Ranking {
                    query: q,
                    docs: hits.into_iter().map(|h| h.id).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rankings(&rankings, relevance)
    }

    pub fn values(&self) -> [f64; 4] {
        [self.recall_at_1, self.recall_at_5, self.recall_at_10, self.map_at_10]
    }
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub dataset: String,
    pub modality: String,
    pub report: MetricReport,
}

const HEADER: [&str; 7] = ["Model", "Dataset", "Modality", "R@1", "R@5", "R@10", "mAP@10"];

impl TableRow {
    fn cells(&self) -> Vec<String> {
        let mut c = vec![self.model.clone(), self.dataset.clone(), self.modality.clone()];
        c.extend(self.report.values().iter().map(|v| format!("{v:.4}")));
        c
    }
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells().join(","));
        out.push('\n');
    }
    out
}

/// Column-aligned plain-text table.
pub fn table_pretty(rows: &[TableRow]) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(TableRow::cells).collect();
    let widths: Vec<usize> = (0..HEADER.len())
        .map(|c| cells.iter().map(|r| r[c].len()).chain([HEADER[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, w))| if i < 3 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &HEADER);
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for r in &cells {
        line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
