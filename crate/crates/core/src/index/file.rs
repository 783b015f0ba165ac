//! Index file layout (all integers little-endian):
//!
//! ```text
//! header    "TKIX" u16 version u32 flags
//!           u32 len + canonical config text
//!           u32 len + PQCB codebook blob (empty for fp16)
//!           u64 image count                                  u32 crc
//! globals   u32 D_g, per image: u32 len + id, D_g f32        u32 crc
//! tokens    per image: u32 len + id, u16 rows, u16 cols,
//!           u32 M, u32 D, u8 kind, payload, M x (u16, u16)   u32 crc
//! toc       per image: u32 len + id, u64 block offset        u32 crc
//! footer    u64 globals offset, u64 tokens offset,
//!           u64 toc offset                                   u32 crc
//! ```
//!
//! Payload kind 0 holds `M x D` f16 values, kind 1 holds `M x D/d` PQ codes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crc32fast::Hasher;
use rayon::prelude::*;

use super::{Compression, ImageBytes, IndexConfig, MemoryReport, TokenStore};
use crate::bytes::{PutLe, Reader};
use crate::error::{Error, Result};
use crate::pq::{self, PqCodebooks, PqCodes};
use crate::types::{validate_corpus, GlobalDescriptor, GridPos, ImageRecord, TokenGrid};

pub const INDEX_MAGIC: [u8; 4] = *b"TKIX";
pub const INDEX_VERSION: u16 = 1;

const KIND_FP16: u8 = 0;
const KIND_PQ: u8 = 1;
const FOOTER_LEN: u64 = 8 * 3 + 4;
const BLOCK_FIXED: u64 = 2 + 2 + 4 + 4 + 1;
const BUILD_CHUNK: usize = 256;

fn crc(bytes: &[u8]) -> u32 {
    let mut h = Hasher::new();
    h.update(bytes);
    h.finalize()
}

/// Applies token selection then compression to every record and writes the
/// index to `out` atomically. Returns the byte accounting of the new file.
pub fn build_index(records: &[ImageRecord], cfg: &IndexConfig, out: &Path) -> Result<MemoryReport> {
    cfg.validate()?;
    let global_dim = if records.is_empty() {
        0
    } else {
        let summary = validate_corpus(records)?;
        if let Some(cb) = &cfg.codebooks {
            if cb.dim() != summary.token_dim {
                return Err(Error::DimensionMismatch {
                    expected: cb.dim(),
                    found: summary.token_dim,
                });
            }
        }
        summary.global_dim
    };

    let dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir)?;
    let mut w = BufWriter::new(tmp.as_file());
    let mut report = MemoryReport::default();
    let mut offset = 0u64;

    // header
    let mut header = Vec::new();
    header.extend_from_slice(&INDEX_MAGIC);
    header.put_u16(INDEX_VERSION);
    header.put_u32(0);
    header.put_string(&cfg.canonical_text());
    let cb_blob = cfg
        .codebooks
        .as_ref()
        .map(|cb| cb.to_bytes())
        .unwrap_or_default();
    header.put_u32(cb_blob.len() as u32);
    header.extend_from_slice(&cb_blob);
    header.put_u64(records.len() as u64);
    header.put_u32(crc(&header));
    w.write_all(&header)?;
    offset += header.len() as u64;
    report.shared += header.len() as u64;

    // globals
    let globals_off = offset;
    let mut section = Vec::new();
    section.put_u32(global_dim as u32);
    for r in records {
        section.put_string(&r.image_id);
        section.put_f32s(r.global.as_slice());
        report.per_image.push((
            r.image_id.clone(),
            ImageBytes {
                global: 4 * global_dim as u64,
                metadata: 4 + r.image_id.len() as u64,
                ..Default::default()
            },
        ));
    }
    section.put_u32(crc(&section));
    w.write_all(&section)?;
    offset += section.len() as u64;
    report.shared += 8;

    // token blocks
    let tokens_off = offset;
    let mut hasher = Hasher::new();
    let mut toc = Vec::with_capacity(records.len());
    for (chunk_idx, chunk) in records.chunks(BUILD_CHUNK).enumerate() {
        let blocks: Vec<(Vec<u8>, u64, u64)> = chunk
            .par_iter()
            .map(|r| encode_block(r, cfg))
            .collect::<Result<_>>()?;
        for (i, (block, payload, positions)) in blocks.into_iter().enumerate() {
            let idx = chunk_idx * BUILD_CHUNK + i;
            toc.push((records[idx].image_id.as_str(), offset));
            let entry = &mut report.per_image[idx].1;
            entry.payload = payload;
            entry.positions = positions;
            entry.metadata += block.len() as u64 - payload - positions;
            hasher.update(&block);
            w.write_all(&block)?;
            offset += block.len() as u64;
        }
    }
    w.write_all(&hasher.finalize().to_le_bytes())?;
    offset += 4;
    report.shared += 4;

    // table of contents
    let toc_off = offset;
    let mut section = Vec::new();
    for (i, (id, block_off)) in toc.iter().enumerate() {
        section.put_string(id);
        section.put_u64(*block_off);
        report.per_image[i].1.metadata += 4 + id.len() as u64 + 8;
    }
    section.put_u32(crc(&section));
    w.write_all(&section)?;
    report.shared += 4;

    let mut footer = Vec::with_capacity(FOOTER_LEN as usize);
    footer.put_u64(globals_off);
    footer.put_u64(tokens_off);
    footer.put_u64(toc_off);
    footer.put_u32(crc(&footer));
    w.write_all(&footer)?;
    report.shared += FOOTER_LEN;

    w.flush()?;
    drop(w);
    tmp.as_file().sync_all()?;
    tmp.persist(out).map_err(|e| Error::Io(e.error))?;
    Ok(report)
}

/// Returns the encoded block plus its payload and position byte counts.
fn encode_block(record: &ImageRecord, cfg: &IndexConfig) -> Result<(Vec<u8>, u64, u64)> {
    let grid = cfg.selection.apply(&record.grid)?;
    let m = grid.len();
    let dim = grid.dim();
    let payload_len = cfg.compression.payload_bytes(m, dim);
    let positions_len = 4 * m as u64;
    let mut block =
        Vec::with_capacity(4 + record.image_id.len() + 13 + (payload_len + positions_len) as usize);
    block.put_string(&record.image_id);
    block.put_u16(grid.grid_rows());
    block.put_u16(grid.grid_cols());
    block.put_u32(m as u32);
    block.put_u32(dim as u32);
    match (&cfg.compression, &cfg.codebooks) {
        (Compression::Fp16, _) => {
            block.put_u8(KIND_FP16);
            block.put_f16s(grid.as_slice());
        }
        (Compression::Pq { .. }, Some(cb)) => {
            block.put_u8(KIND_PQ);
            block.extend_from_slice(pq::encode(&grid, cb)?.as_bytes());
        }
        (Compression::Pq { .. }, None) => unreachable!("validated config"),
    }
    for p in grid.positions() {
        block.put_u16(p.row);
        block.put_u16(p.col);
    }
    Ok((block, payload_len, positions_len))
}

/// Read handle over an index file. Global descriptors are memory resident;
/// token blocks are read on demand with positional reads, so one handle can
/// serve many threads.
#[derive(Debug)]
pub struct Index {
    file: File,
    config: IndexConfig,
    ids: Vec<String>,
    globals: Vec<GlobalDescriptor>,
    /// id -> (block offset, block length)
    blocks: HashMap<String, (u64, u64)>,
    file_len: u64,
}

impl Index {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path)?;
        let file_len = file.metadata()?.len();
        if file_len < 10 {
            return Err(Error::Corrupt("file too short".into()));
        }
        let mut lead = [0u8; 6];
        file.read_exact(&mut lead)?;
        if lead[..4] != INDEX_MAGIC {
            return Err(Error::BadMagic {
                expected: INDEX_MAGIC,
            });
        }
        let version = u16::from_le_bytes([lead[4], lead[5]]);
        if version != INDEX_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if file_len < FOOTER_LEN + 16 {
            return Err(Error::Corrupt("file too short".into()));
        }

        let footer = read_range(&file, file_len - FOOTER_LEN, FOOTER_LEN)?;
        let (globals_off, tokens_off, toc_off) = {
            let body = checked(&footer, "footer")?;
            let mut r = Reader::new(body);
            (r.u64()?, r.u64()?, r.u64()?)
        };
        let end = file_len - FOOTER_LEN;
        if !(globals_off >= 4
            && globals_off + 8 <= tokens_off
            && tokens_off + 4 <= toc_off
            && toc_off + 4 <= end)
        {
            return Err(Error::Corrupt("section offsets out of order".into()));
        }

        let header = read_range(&file, 0, globals_off)?;
        let mut r = Reader::new(checked(&header, "header")?);
        r.take(10)?;
        let text = r.string()?;
        let cb_len = r.u32()? as usize;
        let codebooks = match cb_len {
            0 => None,
            n => Some(Arc::new(PqCodebooks::from_bytes(r.take(n)?)?)),
        };
        let count = r.u64()? as usize;
        r.finish()?;
        let config = IndexConfig::from_canonical_text(&text, codebooks)
            .map_err(|e| Error::Corrupt(format!("index config: {e}")))?;

        let section = read_range(&file, globals_off, tokens_off - globals_off)?;
        let mut r = Reader::new(checked(&section, "globals")?);
        let global_dim = r.u32()? as usize;
        // each entry needs at least a length prefix
        if count > r.remaining() / 4 + 1 {
            return Err(Error::Corrupt("image count exceeds section size".into()));
        }
        let mut ids = Vec::with_capacity(count);
        let mut globals = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(r.string()?);
            let g = GlobalDescriptor::new(r.f32s(global_dim)?)
                .map_err(|e| Error::Corrupt(e.to_string()))?;
            globals.push(g);
        }
        r.finish()?;

        verify_streaming(&mut file, tokens_off, toc_off - tokens_off)?;

        let section = read_range(&file, toc_off, end - toc_off)?;
        let mut r = Reader::new(checked(&section, "toc")?);
        let mut blocks = HashMap::with_capacity(count);
        let mut offsets = Vec::with_capacity(count);
        for expected in &ids {
            let id = r.string()?;
            if &id != expected {
                return Err(Error::Corrupt("toc order disagrees with globals".into()));
            }
            offsets.push(r.u64()?);
        }
        r.finish()?;
        let data_end = toc_off - 4;
        for (i, id) in ids.iter().enumerate() {
            let start = offsets[i];
            let stop = offsets.get(i + 1).copied().unwrap_or(data_end);
            if (i == 0 && start != tokens_off) || stop <= start || stop > data_end {
                return Err(Error::Corrupt("toc offsets out of range".into()));
            }
            if blocks.insert(id.clone(), (start, stop - start)).is_some() {
                return Err(Error::Corrupt(format!("duplicate id `{id}`")));
            }
        }
        if ids.is_empty() && tokens_off != data_end {
            return Err(Error::Corrupt("token section not empty".into()));
        }

        Ok(Self {
            file,
            config,
            ids,
            globals,
            blocks,
            file_len,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Image ids in build order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Global descriptors, aligned with [`Index::ids`].
    pub fn globals(&self) -> &[GlobalDescriptor] {
        &self.globals
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.blocks.contains_key(image_id)
    }

    fn read_block(&self, image_id: &str) -> Result<Vec<u8>> {
        let &(off, len) = self
            .blocks
            .get(image_id)
            .ok_or_else(|| Error::UnknownId(image_id.to_string()))?;
        read_range(&self.file, off, len)
    }

    /// Decoded token grid: fp16 payloads widened to f32, PQ payloads
    /// reconstructed through the stored codebooks.
    pub fn fetch_tokens(&self, image_id: &str) -> Result<TokenGrid> {
        let block = self.read_block(image_id)?;
        let b = parse_block(&block)?;
        if b.id != image_id {
            return Err(Error::Corrupt(format!(
                "block id mismatch for `{image_id}`"
            )));
        }
        let tokens = match b.kind {
            KIND_FP16 => Reader::new(b.payload).f16s(b.m * b.dim)?,
            KIND_PQ => {
                let cb = self
                    .config
                    .codebooks
                    .as_ref()
                    .ok_or_else(|| Error::Corrupt("PQ block without codebooks".into()))?;
                let codes = PqCodes::from_bytes(b.payload.to_vec(), cb.num_subspaces())?;
                pq::reconstruct(&codes, cb)?
            }
            k => return Err(Error::Corrupt(format!("unknown payload kind {k}"))),
        };
        TokenGrid::new(tokens, b.dim, b.positions, b.rows, b.cols)
            .map_err(|e| Error::Corrupt(e.to_string()))
    }

    /// Byte accounting of the file, split per image into global, payload,
    /// positions and metadata; the grand total equals the file size.
    pub fn memory_report(&self) -> Result<MemoryReport> {
        let global_bytes = 4 * self.globals.first().map_or(0, |g| g.dim()) as u64;
        let mut report = MemoryReport::default();
        for id in &self.ids {
            let block = self.read_block(id)?;
            let b = parse_block(&block)?;
            let payload = b.payload.len() as u64;
            let positions = 4 * b.m as u64;
            let id_bytes = 4 + id.len() as u64;
            report.per_image.push((
                id.clone(),
                ImageBytes {
                    global: global_bytes,
                    payload,
                    positions,
                    metadata: block.len() as u64 - payload - positions + id_bytes + id_bytes + 8,
                },
            ));
        }
        report.shared = self.file_len - report.totals().total();
        Ok(report)
    }
}

impl TokenStore for Index {
    fn fetch_tokens(&self, image_id: &str) -> Result<TokenGrid> {
        Index::fetch_tokens(self, image_id)
    }
}

struct Block<'a> {
    id: String,
    rows: u16,
    cols: u16,
    m: usize,
    dim: usize,
    kind: u8,
    payload: &'a [u8],
    positions: Vec<GridPos>,
}

fn parse_block(bytes: &[u8]) -> Result<Block<'_>> {
    let mut r = Reader::new(bytes);
    let id = r.string()?;
    let rows = r.u16()?;
    let cols = r.u16()?;
    let m = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let kind = r.u8()?;
    let positions_len = m
        .checked_mul(4)
        .ok_or_else(|| Error::Corrupt("token count".into()))?;
    let payload_len = r
        .remaining()
        .checked_sub(positions_len)
        .ok_or_else(|| Error::Corrupt("block shorter than its positions".into()))?;
    let payload = r.take(payload_len)?;
    let mut positions = Vec::with_capacity(m);
    for _ in 0..m {
        positions.push(GridPos::new(r.u16()?, r.u16()?));
    }
    r.finish()?;
    debug_assert_eq!(
        bytes.len() as u64,
        4 + id.len() as u64 + BLOCK_FIXED + (payload_len + positions_len) as u64
    );
    Ok(Block {
        id,
        rows,
        cols,
        m,
        dim,
        kind,
        payload,
        positions,
    })
}

fn read_range(file: &File, offset: u64, len: u64) -> Result<Vec<u8>> {
    let mut buf =
        vec![0u8; usize::try_from(len).map_err(|_| Error::Corrupt("section too large".into()))?];
    file.read_exact_at(&mut buf, offset)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Corrupt("unexpected end of file".into()),
            _ => Error::Io(e),
        })?;
    Ok(buf)
}

/// Splits a section into body and trailing CRC, verifying the checksum.
fn checked<'a>(section: &'a [u8], name: &str) -> Result<&'a [u8]> {
    if section.len() < 4 {
        return Err(Error::Corrupt(format!("{name} section truncated")));
    }
    let (body, tail) = section.split_at(section.len() - 4);
    if crc(body).to_le_bytes() != tail {
        return Err(Error::Corrupt(format!("{name} checksum mismatch")));
    }
    Ok(body)
}

fn verify_streaming(file: &mut File, offset: u64, len: u64) -> Result<()> {
    file.seek(SeekFrom::Start(offset))?;
    let body_len = len - 4;
    let mut hasher = Hasher::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut left = body_len;
    while left > 0 {
        let n = left.min(buf.len() as u64) as usize;
        file.read_exact(&mut buf[..n])?;
        hasher.update(&buf[..n]);
        left -= n as u64;
    }
    let mut tail = [0u8; 4];
    file.read_exact(&mut tail)?;
    if hasher.finalize().to_le_bytes() != tail {
        return Err(Error::Corrupt("token section checksum mismatch".into()));
    }
    Ok(())
}
