//! First-stage exhaustive search over global descriptors.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::Index;
use crate::types::{rank_order, GlobalDescriptor, RankedItem, RankedList};

pub const DEFAULT_SHORTLIST: usize = 1000;
/// Shortlist sizes swept by the benchmark command.
pub const SHORTLIST_SWEEP: [usize; 7] = [10, 50, 100, 200, 400, 1000, 5000];

const SCAN_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct Shortlist {
    pub query_id: String,
    /// `(image_id, s_g)` by decreasing cosine similarity, ties by id.
    pub candidates: Vec<(String, f64)>,
}

impl Shortlist {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn into_ranked(self) -> RankedList {
        RankedList {
            query_id: self.query_id,
            items: self
                .candidates
                .into_iter()
                .map(|(image_id, s_g)| RankedItem {
                    image_id,
                    s_g,
                    s_r: None,
                    s_fused: None,
                })
                .collect(),
        }
    }
}

fn top_k_in_place(scored: &mut Vec<(&str, f64)>, k: usize) {
    let cmp = |a: &(&str, f64), b: &(&str, f64)| rank_order(a.1, a.0, b.1, b.0);
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, cmp);
        scored.truncate(k);
    }
    scored.sort_unstable_by(cmp);
}

/// Exact top-`k` by cosine similarity over `(ids, descriptors)`.
pub fn global_topk_over(
    query_id: &str,
    query: &GlobalDescriptor,
    ids: &[String],
    globals: &[GlobalDescriptor],
    k: usize,
) -> Result<Shortlist> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if ids.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if let Some(g) = globals.first() {
        if g.dim() != query.dim() {
            return Err(Error::DimensionMismatch {
                expected: g.dim(),
                found: query.dim(),
            });
        }
    }
    let partial: Vec<Vec<(&str, f64)>> = ids
        .par_chunks(SCAN_CHUNK)
        .zip(globals.par_chunks(SCAN_CHUNK))
        .map(|(ids, globals)| {
            let mut scored: Vec<(&str, f64)> = ids
                .iter()
                .zip(globals)
                .map(|(id, g)| (id.as_str(), query.cosine(g)))
                .collect();
            top_k_in_place(&mut scored, k);
            scored
        })
        .collect();
    let mut merged: Vec<(&str, f64)> = partial.into_iter().flatten().collect();
    top_k_in_place(&mut merged, k);
    Ok(Shortlist {
        query_id: query_id.to_string(),
        candidates: merged
            .into_iter()
            .map(|(id, s)| (id.to_string(), s))
            .collect(),
    })
}

pub fn global_topk(
    query_id: &str,
    query: &GlobalDescriptor,
    index: &Index,
    k: usize,
) -> Result<Shortlist> {
    global_topk_over(query_id, query, index.ids(), index.globals(), k)
}
