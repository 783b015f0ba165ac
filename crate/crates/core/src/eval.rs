//! Retrieval metrics: truncated average precision, mAP with optional
//! grouping, percentile-based negative baselines and re-ranking latency.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::qrels::Qrels;
use crate::types::RankedList;

pub const DEFAULT_K: usize = 1000;
pub const NEGATIVE_PERCENTILE: f64 = 5.0;

/// Average precision truncated at rank `k`, normalized by
/// `min(|positives|, k)` so a perfect truncated ranking scores 1.
pub fn ap_at_k<'a, I, S>(ranked: I, positives: &HashSet<S>, k: usize) -> Result<f64>
where
    I: IntoIterator<Item = &'a str>,
    S: std::borrow::Borrow<str> + Eq + std::hash::Hash,
{
    if positives.is_empty() {
        return Err(Error::NoPositives);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, id) in ranked.into_iter().take(k).enumerate() {
        if positives.contains(id) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives.len().min(k) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSummary {
    pub samples: usize,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub map_at_k: f64,
    pub per_query: BTreeMap<String, f64>,
    pub per_group: Option<BTreeMap<String, f64>>,
    pub timing: Option<TimingSummary>,
}

impl EvalReport {
    /// `summary,k,map[,mean,p50,p95]`, then `query,<id>,<ap>` rows, then
    /// `group,<label>,<map>` rows when grouped.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        write!(out, "summary,{},{}", self.k, self.map_at_k).expect("string write");
        match &self.timing {
            Some(t) => writeln!(out, ",{},{},{}", t.mean, t.p50, t.p95),
            None => writeln!(out, ",,,"),
        }
        .expect("string write");
        for (q, ap) in &self.per_query {
            writeln!(out, "query,{q},{ap}").expect("string write");
        }
        if let Some(groups) = &self.per_group {
            for (g, m) in groups {
                writeln!(out, "group,{g},{m}").expect("string write");
            }
        }
        out
    }
}

/// mAP@k over `lists`. With `grouped`, each group label also gets a mean
/// over the queries holding at least one positive of that label; for that
/// query the group's positives are relevant and its other positives are
/// removed from the ranking.
pub fn evaluate(
    lists: &[RankedList],
    qrels: &Qrels,
    k: usize,
    grouped: bool,
) -> Result<EvalReport> {
    let mut per_query = BTreeMap::new();
    let mut group_aps: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for list in lists {
        let positives = qrels
            .positives(&list.query_id)
            .ok_or_else(|| Error::MissingQrels(list.query_id.clone()))?;
        let all: HashSet<&str> = positives.keys().map(String::as_str).collect();
        let ap = ap_at_k(list.ids(), &all, k)?;
        if per_query.insert(list.query_id.clone(), ap).is_some() {
            return Err(Error::InvalidParameter(format!(
                "query `{}` ranked twice",
                list.query_id
            )));
        }
        if grouped {
            let mut by_group: HashMap<&str, HashSet<&str>> = HashMap::new();
            for (img, g) in positives {
                if let Some(g) = g {
                    by_group.entry(g.as_str()).or_default().insert(img.as_str());
                }
            }
            for (g, members) in by_group {
                let filtered = list
                    .ids()
                    .filter(|id| members.contains(id) || !all.contains(id));
                group_aps
                    .entry(g.to_string())
                    .or_default()
                    .push(ap_at_k(filtered, &members, k)?);
            }
        }
    }
    let map_at_k = mean(per_query.values().copied());
    let per_group = grouped.then(|| {
        group_aps
            .into_iter()
            .map(|(g, aps)| (g, mean(aps.into_iter())))
            .collect()
    });
    Ok(EvalReport {
        k,
        map_at_k,
        per_query,
        per_group,
        timing: None,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Percentile `p` (0..=100) of `values` by linear interpolation between order
/// statistics: position `(n - 1) * p / 100` in the sorted sample.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Mean over queries of the 5th percentile of each query's negative scores.
pub fn negative_baseline<K: AsRef<str>>(negatives: &[(K, Vec<f64>)]) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::EmptyScores(String::new()));
    }
    let mut values = Vec::with_capacity(negatives.len());
    for (q, scores) in negatives {
        values.push(
            percentile(scores, NEGATIVE_PERCENTILE)
                .ok_or_else(|| Error::EmptyScores(q.as_ref().to_string()))?,
        );
    }
    Ok(mean(values.into_iter()))
}

pub fn summarize_timings(seconds: &[f64]) -> Option<TimingSummary> {
    if seconds.is_empty() {
        return None;
    }
    Some(TimingSummary {
        samples: seconds.len(),
        mean: mean(seconds.iter().copied()),
        p50: percentile(seconds, 50.0)?,
        p95: percentile(seconds, 95.0)?,
        min: seconds.iter().copied().fold(f64::INFINITY, f64::min),
        max: seconds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Times `rerank_one` once per query (wall clock, seconds). Returns `None`
/// for an empty query set.
pub fn time_rerank<Q>(
    queries: &[Q],
    mut rerank_one: impl FnMut(&Q) -> Result<()>,
) -> Result<Option<TimingSummary>> {
    let mut samples = Vec::with_capacity(queries.len());
    for q in queries {
        let start = Instant::now();
        rerank_one(q)?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(summarize_timings(&samples))
}
