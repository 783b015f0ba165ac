//! Shortlist and ranked-list interchange: CSV with header
//! `query_id,rank,image_id,s_g[,s_r,s_fused]`, ranks starting at 1.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use tokenrank::{RankedItem, RankedList, Shortlist};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    query_id: String,
    rank: usize,
    image_id: String,
    s_g: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s_fused: Option<f64>,
}

pub fn write_lists(lists: &[RankedList]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let reranked = lists.iter().flat_map(|l| &l.items).any(|i| i.s_r.is_some());
    if lists.iter().all(|l| l.items.is_empty()) {
        let header: &[&str] = if reranked {
            &["query_id", "rank", "image_id", "s_g", "s_r", "s_fused"]
        } else {
            &["query_id", "rank", "image_id", "s_g"]
        };
        w.write_record(header)?;
    }
    for list in lists {
        for (i, item) in list.items.iter().enumerate() {
            w.serialize(Row {
                query_id: list.query_id.clone(),
                rank: i + 1,
                image_id: item.image_id.clone(),
                s_g: item.s_g,
                s_r: item.s_r,
                s_fused: item.s_fused,
            })?;
        }
    }
    w.into_inner().context("flushing CSV")
}

pub fn shortlists_to_lists(shortlists: Vec<Shortlist>) -> Vec<RankedList> {
    shortlists.into_iter().map(Shortlist::into_ranked).collect()
}

/// Reads ranked lists grouped by query (sorted by query id), items ordered
/// by their `rank` column.
pub fn read_lists(path: &Path) -> anyhow::Result<Vec<RankedList>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut by_query: BTreeMap<String, Vec<(usize, RankedItem)>> = BTreeMap::new();
    for (line, row) in r.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("{}: row {}", path.display(), line + 2))?;
        if row.s_r.is_some() != row.s_fused.is_some() {
            bail!(
                "{}: row {}: s_r and s_fused must appear together",
                path.display(),
                line + 2
            );
        }
        by_query.entry(row.query_id).or_default().push((
            row.rank,
            RankedItem {
                image_id: row.image_id,
                s_g: row.s_g,
                s_r: row.s_r,
                s_fused: row.s_fused,
            },
        ));
    }
    by_query
        .into_iter()
        .map(|(query_id, mut items)| {
            items.sort_by_key(|(rank, _)| *rank);
            if items.windows(2).any(|w| w[0].0 == w[1].0) {
                bail!("{}: duplicate rank for query `{query_id}`", path.display());
            }
            Ok(RankedList {
                query_id,
                items: items.into_iter().map(|(_, item)| item).collect(),
            })
        })
        .collect()
}

pub fn read_shortlists(path: &Path) -> anyhow::Result<Vec<Shortlist>> {
    Ok(read_lists(path)?
        .into_iter()
        .map(|l| Shortlist {
            query_id: l.query_id,
            candidates: l.items.into_iter().map(|i| (i.image_id, i.s_g)).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_exact_scores() {
        let lists = vec![RankedList {
            query_id: "q1".into(),
            items: vec![
                RankedItem {
                    image_id: "a".into(),
                    s_g: 0.1 + 0.2,
                    s_r: Some(1.0 / 3.0),
                    s_fused: Some(std::f64::consts::FRAC_1_SQRT_2),
                },
                RankedItem {
                    image_id: "b,c".into(),
                    s_g: -1e-300,
                    s_r: Some(0.0),
                    s_fused: Some(0.25),
                },
            ],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let bytes = write_lists(&lists).unwrap();
        assert!(bytes.starts_with(b"query_id,rank,image_id,s_g,s_r,s_fused\n"));
        std::fs::write(&path, bytes).unwrap();
        assert_eq!(read_lists(&path).unwrap(), lists);
    }

    #[test]
    fn rows_are_reordered_by_rank() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(
            &path,
            "query_id,rank,image_id,s_g\nq,2,b,0.5\nq,1,a,0.9\np,1,z,0.1\n",
        )
        .unwrap();
        let s = read_shortlists(&path).unwrap();
        assert_eq!(s[0].query_id, "p");
        assert_eq!(
            s[1].candidates,
            vec![("a".to_string(), 0.9), ("b".to_string(), 0.5)]
        );
    }
}
