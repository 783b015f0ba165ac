//! Two-stage instance-level image retrieval over compressed visual tokens.
//!
//! A global-descriptor shortlist is re-ranked by a token-level pair scorer;
//! the token index stores each image's grid in fp16 or product-quantized
//! form, optionally after token pruning or selection.

mod bytes;
pub mod dump;
pub mod error;
pub mod eval;
pub mod index;
pub mod kmeans;
pub mod pq;
pub mod qrels;
pub mod rerank;
pub mod robustness;
pub mod search;
pub mod synth;
pub mod tokensel;
pub mod types;

use std::io::Write;
use std::path::Path;

pub use error::{Error, Result};
pub use eval::{ap_at_k, evaluate, negative_baseline, EvalReport, TimingSummary};
pub use index::{
    build_index, open_index, Compression, ImageBytes, Index, IndexConfig, MemoryReport, TokenStore,
};
pub use pq::{PqCodebooks, PqCodes};
pub use qrels::Qrels;
pub use rerank::{
    fuse, rerank, two_token_similarity, ClientConfig, FusionConfig, MockScorer, PromptId,
    RemoteScorer, Scorer,
};
pub use robustness::{Image, TransformKind, TransformSpec};
pub use search::{global_topk, Shortlist};
pub use tokensel::SelectionConfig;
pub use types::{GlobalDescriptor, GridPos, ImageRecord, RankedItem, RankedList, TokenGrid};

/// Writes `bytes` to a temporary file beside `path`, then renames it into
/// place so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
