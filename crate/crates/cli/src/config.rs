//! Config-file overlay. A TOML file holds an optional top-level `jobs` key
//! and one table per subcommand whose keys are the flag names (`-` or `_`):
//!
//! ```toml
//! jobs = 4
//!
//! [rerank]
//! lambda = 0.3
//! prompt = "landmark"
//! ```
//!
//! Flags given on the command line win over file values, which win over
//! built-in defaults.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::UsageError;

const SECTIONS: [&str; 7] = [
    "train-pq",
    "build-index",
    "search",
    "rerank",
    "eval",
    "robustness",
    "bench",
];

#[derive(Debug, Default)]
pub struct ConfigFile {
    pub jobs: Option<usize>,
    sections: Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e| UsageError(format!("config file: {e}")))?;
        let mut out = ConfigFile::default();
        for (key, value) in table {
            let key = key.replace('_', "-");
            match (key.as_str(), value) {
                ("jobs", Value::Integer(n)) if n > 0 => out.jobs = Some(n as usize),
                ("jobs", v) => return Err(UsageError(format!("config: bad jobs value {v}")).into()),
                (name, Value::Table(t)) if SECTIONS.contains(&name) => {
                    let t = t
                        .into_iter()
                        .map(|(k, v)| (k.replace('-', "_"), v))
                        .collect();
                    out.sections.insert(name.to_string(), Value::Table(t));
                }
                (name, _) => {
                    return Err(
                        UsageError(format!("config: unknown key or section `{name}`")).into(),
                    )
                }
            }
        }
        Ok(out)
    }

    pub fn section(&self, name: &str) -> Option<&Table> {
        self.sections.get(name).and_then(Value::as_table)
    }
}

/// Overlays the flags in `flags` on the file section `name`. `known` lists
/// the keys a section may contain; anything else is a usage error.
pub fn resolve<T>(
    flags: T,
    file: Option<&ConfigFile>,
    name: &str,
    known: &BTreeSet<String>,
) -> anyhow::Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut merged = file
        .and_then(|f| f.section(name))
        .cloned()
        .unwrap_or_default();
    if let Some(bad) = merged.keys().find(|k| !known.contains(*k)) {
        return Err(UsageError(format!("config: unknown key `{bad}` in [{name}]")).into());
    }
    let Value::Table(given) = Value::try_from(&flags).context("encoding flags")? else {
        unreachable!("argument structs serialize to tables");
    };
    merged.extend(given);
    Value::Table(merged)
        .try_into()
        .map_err(|e| UsageError(format!("config: [{name}]: {e}")).into())
}

/// Resolved settings echoed by `--verbose`.
pub fn render<T: Serialize>(name: &str, args: &T, jobs: Option<usize>) -> String {
    let mut table = Table::new();
    if let Some(j) = jobs {
        table.insert("jobs".into(), Value::Integer(j as i64));
    }
    if let Ok(Value::Table(t)) = Value::try_from(args) {
        table.insert(name.into(), Value::Table(t));
    }
    toml::to_string(&table).unwrap_or_default()
}
