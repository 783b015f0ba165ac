use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenrank::eval::{ap_at_k, evaluate, negative_baseline, percentile, time_rerank};
use tokenrank::{Qrels, RankedItem, RankedList};

/// AP from the definition: precision at each relevant rank, recomputed from
/// scratch, summed and divided by min(|P|, k).
fn brute_force_ap(ranked: &[String], positives: &HashSet<String>, k: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..ranked.len().min(k) {
        if positives.contains(&ranked[i]) {
            let relevant_so_far = ranked[..=i]
                .iter()
                .filter(|id| positives.contains(*id))
                .count();
            total += relevant_so_far as f64 / (i + 1) as f64;
        }
    }
    total / positives.len().min(k) as f64
}

fn as_list(query: &str, ids: &[String]) -> RankedList {
    RankedList {
        query_id: query.to_string(),
        items: ids
            .iter()
            .map(|id| RankedItem {
                image_id: id.clone(),
                s_g: 0.0,
                s_r: None,
                s_fused: None,
            })
            .collect(),
    }
}

#[test]
fn ap_matches_brute_force_on_fuzzed_rankings() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..1000 {
        let n = rng.random_range(1..=100usize);
        let mut ids: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        ids.shuffle(&mut rng);
        let n_pos = rng.random_range(1..=10usize);
        // positives may lie outside the ranking
        let positives: HashSet<String> = (0..n_pos)
            .map(|_| format!("i{}", rng.random_range(0..n + 5)))
            .collect();
        let k = rng.random_range(1..=120usize);
        let got = ap_at_k(ids.iter().map(String::as_str), &positives, k).unwrap();
        let want = brute_force_ap(&ids, &positives, k);
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}

#[test]
fn map_matches_brute_force_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut qrels = Qrels::new();
    let mut lists = Vec::new();
    let mut expected = HashMap::new();
    for q in 0..30 {
        let qid = format!("q{q}");
        let n = rng.random_range(5..=60usize);
        let mut ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
        ids.shuffle(&mut rng);
        let positives: HashSet<String> = (0..rng.random_range(1..=10))
            .map(|_| format!("d{}", rng.random_range(0..n)))
            .collect();
        for p in &positives {
            qrels.insert(&qid, p, None).unwrap();
        }
        expected.insert(qid.clone(), brute_force_ap(&ids, &positives, 50));
        lists.push(as_list(&qid, &ids));
    }
    let report = evaluate(&lists, &qrels, 50, false).unwrap();
    let mean = expected.values().sum::<f64>() / expected.len() as f64;
    assert!((report.map_at_k - mean).abs() <= 1e-12);
    for (q, ap) in &report.per_query {
        assert!((ap - expected[q]).abs() <= 1e-12);
    }
}

#[test]
fn percentile_matches_sorted_interpolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = rng.random_range(1..=50usize);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let p5 = percentile(&v, 5.0).unwrap();
        assert!(p5 >= s[0] && p5 <= s[n - 1]);
        assert_eq!(percentile(&v, 0.0).unwrap(), s[0]);
        assert_eq!(percentile(&v, 100.0).unwrap(), s[n - 1]);
    }
    let base = negative_baseline(&[("a", vec![0.0, 1.0]), ("b", vec![0.5])]).unwrap();
    assert!((base - (0.05 + 0.5) / 2.0).abs() < 1e-12);
}

#[test]
fn timing_summary_counts_every_query() {
    let queries = [1u64, 2, 3];
    let t = time_rerank(&queries, |_| Ok(())).unwrap().unwrap();
    assert_eq!(t.samples, 3);
    assert!(t.min <= t.p50 && t.p50 <= t.p95 && t.p95 <= t.max);
}
