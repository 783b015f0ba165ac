//! JSON documents exchanged with the scoring service (protocol 1).
//!
//! Token grids travel as base64 of row-major little-endian f16 values.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::bytes::{PutLe, Reader};
use crate::error::{Error, Result};
use crate::types::{GridPos, TokenGrid};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireGrid {
    pub rows: u16,
    pub cols: u16,
    pub positions: Vec<[u16; 2]>,
    pub tokens_b64: String,
}

impl WireGrid {
    pub fn from_grid(grid: &TokenGrid) -> Self {
        let mut raw = Vec::with_capacity(grid.as_slice().len() * 2);
        raw.put_f16s(grid.as_slice());
        Self {
            rows: grid.grid_rows(),
            cols: grid.grid_cols(),
            positions: grid.positions().iter().map(|p| [p.row, p.col]).collect(),
            tokens_b64: B64.encode(raw),
        }
    }

    pub fn to_grid(&self, dim: usize) -> Result<TokenGrid> {
        let raw = B64
            .decode(&self.tokens_b64)
            .map_err(|e| Error::ProtocolMismatch(format!("bad base64 tokens: {e}")))?;
        let m = self.positions.len();
        if raw.len() != m * dim * 2 {
            return Err(Error::ProtocolMismatch(format!(
                "{} token bytes for {m} tokens of dimension {dim}",
                raw.len()
            )));
        }
        let tokens = Reader::new(&raw).f16s(m * dim)?;
        let positions = self
            .positions
            .iter()
            .map(|p| GridPos::new(p[0], p[1]))
            .collect();
        TokenGrid::new(tokens, dim, positions, self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub protocol: u32,
    pub d: usize,
    pub prompt_id: String,
    pub query: WireGrid,
    pub candidates: Vec<WireGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub protocol: u32,
    pub scores: Vec<f64>,
    /// `[logit("0"), logit("1")]` per candidate.
    pub logits: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub protocol: u32,
    pub d: usize,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

/// Body of `POST /v1/extract` responses; the request body is the raw image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractResponse {
    pub protocol: u32,
    pub d: usize,
    #[serde(flatten)]
    pub grid: WireGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global: Option<Vec<f32>>,
}
