//! Relevance judgments.
//!
//! File format: UTF-8 TSV, one positive per line,
//! `query_id<TAB>image_id<TAB>1[<TAB>group_label]`. Lines starting with `#`
//! and blank lines are ignored; a relevance of `0` is accepted and skipped.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    entries: BTreeMap<String, HashMap<String, Option<String>>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, image_id: &str, group: Option<&str>) -> Result<()> {
        if query_id.is_empty() || image_id.is_empty() {
            return Err(Error::Parse("empty query or image id".into()));
        }
        if group.is_some_and(str::is_empty) {
            return Err(Error::Parse("empty group label".into()));
        }
        self.entries
            .entry(query_id.to_string())
            .or_default()
            .insert(image_id.to_string(), group.map(str::to_string));
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut q = Qrels::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(Error::Parse(format!(
                    "qrels line {}: expected 3 or 4 tab-separated fields",
                    lineno + 1
                )));
            }
            let rel: u32 = fields[2].trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "qrels line {}: bad relevance `{}`",
                    lineno + 1,
                    fields[2]
                ))
            })?;
            if rel == 0 {
                continue;
            }
            q.insert(fields[0], fields[1], fields.get(3).copied())
                .map_err(|e| Error::Parse(format!("qrels line {}: {e}", lineno + 1)))?;
        }
        Ok(q)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, pos) in &self.entries {
            let mut pos: Vec<_> = pos.iter().collect();
            pos.sort();
            for (img, group) in pos {
                match group {
                    Some(g) => writeln!(out, "{q}\t{img}\t1\t{g}"),
                    None => writeln!(out, "{q}\t{img}\t1"),
                }
                .expect("writing to a String");
            }
        }
        out
    }

    pub fn positives(&self, query_id: &str) -> Option<&HashMap<String, Option<String>>> {
        self.entries.get(query_id)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
