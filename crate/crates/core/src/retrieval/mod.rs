//! Dual-encoder retrieval: cosine index, ranking metrics, significance
//! testing, and caption-level text baselines.

mod index;
mod metrics;
mod text;
mod wilcoxon;

pub use index::{sort_hits, EmbeddingIndex, Hit, IndexModality, UNIT_TOLERANCE};
pub use metrics::{
    average_precision, map_at_k, recall_at_k, table_csv, table_pretty, ApNormalizer, MetricReport, Ranking, RelevanceMap,
    TableRow,
};
pub use text::{
    bm25_search, filter_captions, is_stopword, lexical_search, raw_tokens, semantic_search, tokenize, Bm25Index,
    CandidateCaption, FilteredCaptions, TextDoc, ToyTextEncoder, FILTER_MIN_COS, FILTER_TOP_K, STOPWORDS,
};
pub use wilcoxon::{average_ranks, wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N, MIN_NONZERO};

#[cfg(test)]
mod tests;
