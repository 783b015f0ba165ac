//! Domain types shared across the retrieval pipeline.

use std::cmp::Ordering;
use std::collections::HashSet;

use crate::error::{Error, Result};

/// Position of a visual token on the 2-D patch grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPos {
    pub row: u16,
    pub col: u16,
}

impl GridPos {
    pub const fn new(row: u16, col: u16) -> Self {
        Self { row, col }
    }
}

/// A per-image sequence of `M` visual token embeddings of dimension `D`,
/// each tagged with its position on a `grid_rows x grid_cols` patch grid.
///
/// Tokens are stored row-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    tokens: Vec<f32>,
    dim: usize,
    positions: Vec<GridPos>,
    grid_rows: u16,
    grid_cols: u16,
}

impl TokenGrid {
    pub fn new(
        tokens: Vec<f32>,
        dim: usize,
        positions: Vec<GridPos>,
        grid_rows: u16,
        grid_cols: u16,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid(
                "token dimension must be positive".into(),
            ));
        }
        if positions.is_empty() {
            return Err(Error::InvalidGrid(
                "grid must hold at least one token".into(),
            ));
        }
        if tokens.len() != positions.len() * dim {
            return Err(Error::InvalidGrid(format!(
                "{} token values do not match {} positions of dimension {}",
                tokens.len(),
                positions.len(),
                dim
            )));
        }
        let mut seen = HashSet::with_capacity(positions.len());
        for p in &positions {
            if p.row >= grid_rows || p.col >= grid_cols {
                return Err(Error::InvalidGrid(format!(
                    "position ({}, {}) outside {}x{} grid",
                    p.row, p.col, grid_rows, grid_cols
                )));
            }
            if !seen.insert(*p) {
                return Err(Error::InvalidGrid(format!(
                    "duplicate position ({}, {})",
                    p.row, p.col
                )));
            }
        }
        Ok(Self {
            tokens,
            dim,
            positions,
            grid_rows,
            grid_cols,
        })
    }

    /// Builds a dense grid with positions enumerated in row-major order.
    pub fn dense(tokens: Vec<f32>, dim: usize, rows: u16, cols: u16) -> Result<Self> {
        let positions = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| GridPos::new(r, c)))
            .collect();
        Self::new(tokens, dim, positions, rows, cols)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid_rows(&self) -> u16 {
        self.grid_rows
    }

    pub fn grid_cols(&self) -> u16 {
        self.grid_cols
    }

    pub fn positions(&self) -> &[GridPos] {
        &self.positions
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &[f32] {
        &self.tokens[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_tokens(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.tokens.chunks_exact(self.dim)
    }

    /// Copies the rows at `indices` (in the given order) into a new grid on
    /// the same coordinate frame.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut tokens = Vec::with_capacity(indices.len() * self.dim);
        let mut positions = Vec::with_capacity(indices.len());
        for &i in indices {
            tokens.extend_from_slice(self.token(i));
            positions.push(self.positions[i]);
        }
        Self::new(tokens, self.dim, positions, self.grid_rows, self.grid_cols)
    }

    /// Replaces the token vectors, keeping positions and frame.
    pub fn with_tokens(&self, tokens: Vec<f32>) -> Result<Self> {
        Self::new(
            tokens,
            self.dim,
            self.positions.clone(),
            self.grid_rows,
            self.grid_cols,
        )
    }

    pub fn into_parts(self) -> (Vec<f32>, usize, Vec<GridPos>, u16, u16) {
        (
            self.tokens,
            self.dim,
            self.positions,
            self.grid_rows,
            self.grid_cols,
        )
    }
}

/// Unit-norm global image descriptor used by the first retrieval stage.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor(Vec<f32>);

impl GlobalDescriptor {
    pub const NORM_TOLERANCE: f64 = 1e-6;

    /// Wraps an already normalized vector.
    pub fn new(vector: Vec<f32>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::InvalidDescriptor("empty descriptor".into()));
        }
        let norm = l2_norm(&vector);
        if !norm.is_finite() || (norm - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(Error::InvalidDescriptor(format!(
                "descriptor norm {norm} is not 1"
            )));
        }
        Ok(Self(vector))
    }

    /// Scales `vector` to unit norm.
    pub fn normalized(mut vector: Vec<f32>) -> Result<Self> {
        let norm = l2_norm(&vector);
        if vector.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::InvalidDescriptor(
                "cannot normalize empty, zero or non-finite vector".into(),
            ));
        }
        for v in &mut vector {
            *v = (*v as f64 / norm) as f32;
        }
        Ok(Self(vector))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    /// Cosine similarity with another unit descriptor.
    pub fn cosine(&self, other: &GlobalDescriptor) -> f64 {
        dot(&self.0, &other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub global: GlobalDescriptor,
    pub grid: TokenGrid,
}

/// Dot product accumulated in double precision.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn l2_norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Ranking order used everywhere: higher score first, then ascending id.
pub fn rank_order(score_a: f64, id_a: &str, score_b: f64, id_b: &str) -> Ordering {
    score_b.total_cmp(&score_a).then_with(|| id_a.cmp(id_b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub image_id: String,
    pub s_g: f64,
    pub s_r: Option<f64>,
    pub s_fused: Option<f64>,
}

impl RankedItem {
    /// Score the list is ordered by: fused when present, otherwise global.
    pub fn active_score(&self) -> f64 {
        self.s_fused.unwrap_or(self.s_g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub items: Vec<RankedItem>,
}

impl RankedList {
    pub fn sort(&mut self) {
        self.items.sort_by(|a, b| {
            rank_order(a.active_score(), &a.image_id, b.active_score(), &b.image_id)
        });
    }

    pub fn is_sorted(&self) -> bool {
        self.items.windows(2).all(|w| {
            rank_order(
                w[0].active_score(),
                &w[0].image_id,
                w[1].active_score(),
                &w[1].image_id,
            ) != Ordering::Greater
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.image_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSummary {
    pub num_images: usize,
    pub token_dim: usize,
    pub global_dim: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

/// Checks corpus-level invariants: consistent token and descriptor
/// dimensions and unique, non-empty image ids.
pub fn validate_corpus(records: &[ImageRecord]) -> Result<CorpusSummary> {
    let first = records.first().ok_or(Error::EmptyCorpus)?;
    let token_dim = first.grid.dim();
    let global_dim = first.global.dim();
    let mut ids = HashSet::with_capacity(records.len());
    let mut min_tokens = usize::MAX;
    let mut max_tokens = 0;
    for r in records {
        if r.image_id.is_empty() {
            return Err(Error::InvalidParameter("empty image id".into()));
        }
        if !ids.insert(r.image_id.as_str()) {
            return Err(Error::DuplicateId(r.image_id.clone()));
        }
        if r.grid.dim() != token_dim {
            return Err(Error::DimensionMismatch {
                expected: token_dim,
                found: r.grid.dim(),
            });
        }
        if r.global.dim() != global_dim {
            return Err(Error::DimensionMismatch {
                expected: global_dim,
                found: r.global.dim(),
            });
        }
        min_tokens = min_tokens.min(r.grid.len());
        max_tokens = max_tokens.max(r.grid.len());
    }
    Ok(CorpusSummary {
        num_images: records.len(),
        token_dim,
        global_dim,
        min_tokens,
        max_tokens,
    })
}
