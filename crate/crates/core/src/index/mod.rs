//! Compressed on-disk database: global descriptors for the first stage and
//! (optionally pruned, clustered, pooled or product-quantized) token grids for
//! the re-ranking stage.

mod file;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

pub use file::{build_index, Index, INDEX_MAGIC, INDEX_VERSION};

use crate::error::{Error, Result};
use crate::pq::PqCodebooks;
use crate::tokensel::SelectionConfig;
use crate::types::TokenGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    Fp16,
    Pq { sub_dim: usize },
}

impl Compression {
    /// Payload bytes for `m` tokens of dimension `dim`.
    pub fn payload_bytes(&self, m: usize, dim: usize) -> u64 {
        match *self {
            Compression::Fp16 => 2 * (m * dim) as u64,
            Compression::Pq { sub_dim } => (m * (dim / sub_dim)) as u64,
        }
    }
}

impl fmt::Display for Compression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Compression::Fp16 => f.write_str("fp16"),
            Compression::Pq { sub_dim } => write!(f, "pq:{sub_dim}"),
        }
    }
}

impl FromStr for Compression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "fp16" => Ok(Compression::Fp16),
            Some(("pq", d)) => match d.parse::<usize>() {
                Ok(sub_dim) if sub_dim > 0 => Ok(Compression::Pq { sub_dim }),
                _ => Err(Error::Parse(format!("bad PQ subspace dimension in `{s}`"))),
            },
            _ => Err(Error::Parse(format!("unknown compression `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    pub compression: Compression,
    pub selection: SelectionConfig,
    pub codebooks: Option<Arc<PqCodebooks>>,
}

impl IndexConfig {
    pub fn fp16(selection: SelectionConfig) -> Self {
        Self {
            compression: Compression::Fp16,
            selection,
            codebooks: None,
        }
    }

    pub fn pq(selection: SelectionConfig, codebooks: Arc<PqCodebooks>) -> Self {
        Self {
            compression: Compression::Pq {
                sub_dim: codebooks.sub_dim(),
            },
            selection,
            codebooks: Some(codebooks),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.compression, &self.codebooks) {
            (Compression::Fp16, None) => Ok(()),
            (Compression::Pq { sub_dim }, Some(cb)) if cb.sub_dim() == *sub_dim => Ok(()),
            (Compression::Pq { .. }, Some(_)) => Err(Error::InvalidParameter(
                "codebook subspace dimension disagrees with compression".into(),
            )),
            (Compression::Pq { .. }, None) => Err(Error::InvalidParameter(
                "PQ compression requires codebooks".into(),
            )),
            (Compression::Fp16, Some(_)) => Err(Error::InvalidParameter(
                "codebooks supplied for fp16 compression".into(),
            )),
        }
    }

    /// Canonical `key=value` text stored in the index header.
    pub fn canonical_text(&self) -> String {
        format!(
            "compression={}\nselection={}\n",
            self.compression, self.selection
        )
    }

    fn from_canonical_text(text: &str, codebooks: Option<Arc<PqCodebooks>>) -> Result<Self> {
        let mut compression = None;
        let mut selection = None;
        for line in text.lines().filter(|l| !l.is_empty()) {
            match line.split_once('=') {
                Some(("compression", v)) => compression = Some(v.parse()?),
                Some(("selection", v)) => selection = Some(v.parse()?),
                _ => return Err(Error::Parse(format!("unexpected config line `{line}`"))),
            }
        }
        let cfg = IndexConfig {
            compression: compression.ok_or_else(|| Error::Parse("missing compression".into()))?,
            selection: selection.ok_or_else(|| Error::Parse("missing selection".into()))?,
            codebooks,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Byte accounting for one indexed image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImageBytes {
    pub global: u64,
    pub payload: u64,
    pub positions: u64,
    /// Ids, block headers and table-of-contents entries.
    pub metadata: u64,
}

impl ImageBytes {
    pub fn total(&self) -> u64 {
        self.global + self.payload + self.positions + self.metadata
    }

    fn add(&mut self, o: &ImageBytes) {
        self.global += o.global;
        self.payload += o.payload;
        self.positions += o.positions;
        self.metadata += o.metadata;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MemoryReport {
    pub per_image: Vec<(String, ImageBytes)>,
    /// File bytes not attributable to one image: header, config, codebooks,
    /// checksums and footer.
    pub shared: u64,
}

impl MemoryReport {
    pub fn num_images(&self) -> usize {
        self.per_image.len()
    }

    pub fn totals(&self) -> ImageBytes {
        let mut t = ImageBytes::default();
        for (_, b) in &self.per_image {
            t.add(b);
        }
        t
    }

    /// Equals the index file size.
    pub fn file_bytes(&self) -> u64 {
        self.totals().total() + self.shared
    }

    pub fn mean_payload_per_image(&self) -> f64 {
        if self.per_image.is_empty() {
            return 0.0;
        }
        self.totals().payload as f64 / self.per_image.len() as f64
    }

    /// Non-payload bytes per image, including an equal share of `shared`.
    pub fn mean_overhead_per_image(&self) -> f64 {
        if self.per_image.is_empty() {
            return 0.0;
        }
        (self.file_bytes() - self.totals().payload) as f64 / self.per_image.len() as f64
    }
}

/// Source of database token grids for re-ranking.
pub trait TokenStore: Sync {
    fn fetch_tokens(&self, image_id: &str) -> Result<TokenGrid>;
}

impl TokenStore for HashMap<String, TokenGrid> {
    fn fetch_tokens(&self, image_id: &str) -> Result<TokenGrid> {
        self.get(image_id)
            .cloned()
            .ok_or_else(|| Error::UnknownId(image_id.to_string()))
    }
}

/// Opens an index file; shorthand for [`Index::open`].
pub fn open_index(path: &Path) -> Result<Index> {
    Index::open(path)
}
