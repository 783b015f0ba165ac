//! Per-image token dumps produced by an extractor.
//!
//! `<id>.tkdp`: magic `TKDP`, u16 version, u32 M, u32 D, u16 grid_rows,
//! u16 grid_cols, M u16 (row, col) pairs, then M x D little-endian f16 tokens.
//! `<id>.glob`: u32 D_g followed by D_g little-endian f32 values.

use std::fs;
use std::path::{Path, PathBuf};

use crate::bytes::{PutLe, Reader};
use crate::error::{Error, Result};
use crate::types::{GlobalDescriptor, GridPos, ImageRecord, TokenGrid};

pub const DUMP_MAGIC: [u8; 4] = *b"TKDP";
pub const DUMP_VERSION: u16 = 1;
pub const DUMP_EXT: &str = "tkdp";
pub const GLOBAL_EXT: &str = "glob";

pub fn encode_token_dump(grid: &TokenGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(18 + grid.len() * (4 + 2 * grid.dim()));
    out.extend_from_slice(&DUMP_MAGIC);
    out.put_u16(DUMP_VERSION);
    out.put_u32(grid.len() as u32);
    out.put_u32(grid.dim() as u32);
    out.put_u16(grid.grid_rows());
    out.put_u16(grid.grid_cols());
    for p in grid.positions() {
        out.put_u16(p.row);
        out.put_u16(p.col);
    }
    out.put_f16s(grid.as_slice());
    out
}

pub fn decode_token_dump(bytes: &[u8]) -> Result<TokenGrid> {
    let mut r = Reader::new(bytes);
    if r.array::<4>()? != DUMP_MAGIC {
        return Err(Error::BadMagic {
            expected: DUMP_MAGIC,
        });
    }
    let version = r.u16()?;
    if version != DUMP_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let m = r.u32()? as usize;
    let d = r.u32()? as usize;
    let rows = r.u16()?;
    let cols = r.u16()?;
    let needed = m
        .saturating_mul(4)
        .saturating_add(m.saturating_mul(d).saturating_mul(2));
    if needed != r.remaining() {
        return Err(Error::Corrupt(format!(
            "token dump body is {} bytes, header implies {needed}",
            r.remaining()
        )));
    }
    let mut positions = Vec::with_capacity(m);
    for _ in 0..m {
        positions.push(GridPos::new(r.u16()?, r.u16()?));
    }
    let tokens = r.f16s(m * d)?;
    r.finish()?;
    TokenGrid::new(tokens, d, positions, rows, cols)
}

pub fn encode_global(global: &GlobalDescriptor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * global.dim());
    out.put_u32(global.dim() as u32);
    out.put_f32s(global.as_slice());
    out
}

/// Decodes a global sidecar, renormalizing to unit length.
pub fn decode_global(bytes: &[u8]) -> Result<GlobalDescriptor> {
    let mut r = Reader::new(bytes);
    let n = r.u32()? as usize;
    if n.saturating_mul(4) != r.remaining() {
        return Err(Error::Corrupt("global descriptor length mismatch".into()));
    }
    let v = r.f32s(n)?;
    GlobalDescriptor::normalized(v)
}

pub fn read_token_dump(path: &Path) -> Result<TokenGrid> {
    decode_token_dump(&fs::read(path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn read_global(path: &Path) -> Result<GlobalDescriptor> {
    decode_global(&fs::read(path)?).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes `<dir>/<id>.tkdp` and `<dir>/<id>.glob`.
pub fn write_record(dir: &Path, record: &ImageRecord) -> Result<()> {
    fs::write(
        dir.join(format!("{}.{DUMP_EXT}", record.image_id)),
        encode_token_dump(&record.grid),
    )?;
    fs::write(
        dir.join(format!("{}.{GLOBAL_EXT}", record.image_id)),
        encode_global(&record.global),
    )?;
    Ok(())
}

/// Lists `(image_id, path)` for every `.tkdp` file in `dir`, sorted by id.
pub fn list_dumps(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(DUMP_EXT) {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Parse(format!("non UTF-8 dump name {}", path.display())))?
            .to_string();
        out.push((id, path));
    }
    out.sort();
    Ok(out)
}

/// Loads every dump in `dir` together with its global sidecar.
pub fn load_records(dir: &Path) -> Result<Vec<ImageRecord>> {
    list_dumps(dir)?
        .into_iter()
        .map(|(image_id, path)| {
            let grid = read_token_dump(&path)?;
            let global = read_global(&path.with_extension(GLOBAL_EXT))?;
            Ok(ImageRecord {
                image_id,
                global,
                grid,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_roundtrip_is_exact_for_f16_values() {
        let tokens: Vec<f32> = (0..24)
            .map(|i| half::f16::from_f32(i as f32 * 0.37 - 3.0).to_f32())
            .collect();
        let grid = TokenGrid::dense(tokens, 4, 2, 3).unwrap();
        let bytes = encode_token_dump(&grid);
        assert_eq!(bytes.len(), 18 + 6 * 4 + 24 * 2);
        assert_eq!(decode_token_dump(&bytes).unwrap(), grid);
    }

    #[test]
    fn dump_rejects_garbage() {
        let grid = TokenGrid::dense(vec![1.0; 4], 2, 1, 2).unwrap();
        let mut bytes = encode_token_dump(&grid);
        assert!(matches!(
            decode_token_dump(&bytes[..bytes.len() - 1]),
            Err(Error::Corrupt(_))
        ));
        bytes[4] = 9;
        assert!(matches!(
            decode_token_dump(&bytes),
            Err(Error::UnsupportedVersion(9))
        ));
        bytes[0] = b'X';
        assert!(matches!(
            decode_token_dump(&bytes),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn global_roundtrip() {
        let g = GlobalDescriptor::normalized(vec![1.0, 2.0, 2.0]).unwrap();
        let back = decode_global(&encode_global(&g)).unwrap();
        for (a, b) in g.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}
