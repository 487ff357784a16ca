use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use super::*;
use crate::numerics::{stream_rng, Stream, Tensor2D};

/// Reference recall: position of the first relevant document, searched from scratch.
fn brute_recall(rankings: &[Ranking], rel: &RelevanceMap, k: usize) -> f64 {
    let mut hit = 0;
    for r in rankings {
        let relevant = rel.relevant(r.query).unwrap();
        let first = (0..r.docs.len()).find(|&i| relevant.contains(&r.docs[i]));
        if matches!(first, Some(i) if i < k) {
            hit += 1;
        }
    }
    hit as f64 / rankings.len() as f64
}

/// Reference AP@10 with Precision@r recounted at every rank.
fn brute_ap(docs: &[u64], relevant: &BTreeSet<u64>) -> f64 {
    let mut total = 0.0;
    for r in 1..=10.min(docs.len()) {
        if relevant.contains(&docs[r - 1]) {
            let precision = docs[..r].iter().filter(|d| relevant.contains(d)).count() as f64 / r as f64;
            total += precision;
        }
    }
    total / relevant.len().min(10) as f64
}

fn fuzz_instance(seed: u64) -> (Vec<Ranking>, RelevanceMap) {
    let mut rng = stream_rng(seed, Stream::Fuzz, 11);
    let n_docs = rng.random_range(1..30u64);
    let n_queries = rng.random_range(1..8u64);
    let mut rel = RelevanceMap::new();
    let mut rankings = Vec::new();
    for q in 0..n_queries {
        let r = rng.random_range(1..=n_docs.min(12));
        let mut docs: Vec<u64> = (0..n_docs).collect();
        docs.shuffle(&mut rng);
        for &d in &docs[..r as usize] {
            rel.insert(q, d);
        }
        docs.shuffle(&mut rng);
        docs.truncate(rng.random_range(1..=n_docs as usize));
        rankings.push(Ranking { query: q, docs });
    }
    (rankings, rel)
}

#[test]
fn metrics_match_brute_force_on_a_thousand_instances() {
    for seed in 0..1000 {
        let (rankings, rel) = fuzz_instance(seed);
        for k in [1, 5, 10] {
            assert_eq!(recall_at_k(&rankings, &rel, k).unwrap(), brute_recall(&rankings, &rel, k));
        }
        let (map, per) = map_at_k(&rankings, &rel, 10, ApNormalizer::MinRk).unwrap();
        for (r, ap) in rankings.iter().zip(&per) {
            assert_eq!(*ap, brute_ap(&r.docs, rel.relevant(r.query).unwrap()));
            assert!((0.0..=1.0).contains(ap));
        }
        assert_eq!(map, per.iter().sum::<f64>() / per.len() as f64);
    }
}

proptest! {
    #[test]
    fn ap_is_one_exactly_for_contiguous_top_ranks(r in 1usize..15, extra in 0usize..10, gap in 0usize..10) {
        let relevant: BTreeSet<u64> = (0..r as u64).collect();
        let filler = 100..(100 + extra as u64);
        let contiguous: Vec<u64> = (0..r as u64).chain(filler.clone()).collect();
        prop_assert_eq!(average_precision(&contiguous, &relevant, 10, ApNormalizer::MinRk), 1.0);
        // Push one relevant doc below an irrelevant one inside the top min(R, 10).
        let m = r.min(10);
        if gap > 0 && extra > 0 {
            let mut broken = contiguous.clone();
            let pos = (m - 1).min(gap - 1);
            broken.insert(pos, 100);
            broken.dedup();
            prop_assert!(average_precision(&broken, &relevant, 10, ApNormalizer::MinRk) < 1.0);
        }
    }

    #[test]
    fn search_ignores_insertion_order(seed in 0u64..10_000, n in 1usize..20) {
        let mut rng = stream_rng(seed, Stream::Fuzz, 12);
        // Coarse values make exact score ties common.
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-2i32..=2) as f64).collect()).collect();
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { if r.iter().all(|v| *v == 0.0) { r[0] = 1.0; } r }).collect();
        let ids: Vec<u64> = (0..n as u64).map(|i| i * 7 % 101).collect();
        let a = EmbeddingIndex::from_unnormalized(ids.clone(), &Tensor2D::from_rows(&rows).unwrap(), IndexModality::Audio).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let b = EmbeddingIndex::from_unnormalized(
            order.iter().map(|&i| ids[i]).collect(),
            &Tensor2D::from_rows(&order.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>()).unwrap(),
            IndexModality::Audio,
        ).unwrap();
        let q = [0.0, 0.6, 0.8];
        prop_assert_eq!(a.search(&q, n).unwrap(), b.search(&q, n).unwrap());
    }

    #[test]
    fn bm25_is_monotone_in_term_frequency(tf in 1usize..10, other in 0usize..5) {
        // Adding an occurrence of the query term also lengthens the document, so
        // corpus statistics are held fixed by comparing two documents of equal length.
        let mut low = vec!["rain"; tf];
        low.extend(std::iter::repeat_n("wind", other + 1));
        let mut high = vec!["rain"; tf + 1];
        high.extend(std::iter::repeat_n("wind", other));
        let corpus = [TextDoc::new(0, low.join(" ")), TextDoc::new(1, high.join(" ")), TextDoc::new(2, "dog bark")];
        let idx = Bm25Index::new(&corpus, 1.2, 0.75).unwrap();
        let q = vec!["rain".to_string()];
        prop_assert!(idx.score(&q, 1) >= idx.score(&q, 0));
    }
}
