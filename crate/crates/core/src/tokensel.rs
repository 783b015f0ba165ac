//! Token-count reduction: diverse pruning, k-means selection, and 2x2
//! window sampling / pooling on the token grid.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::types::{squared_l2, GridPos, TokenGrid};

/// Default token budgets for pruning and clustering.
pub const DEFAULT_TARGETS: [usize; 2] = [150, 70];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionConfig {
    None,
    Prune { target: usize },
    Cluster { target: usize, seed: u64 },
    Sample2x2,
    Pool2x2,
}

impl SelectionConfig {
    pub fn apply(&self, grid: &TokenGrid) -> Result<TokenGrid> {
        match *self {
            SelectionConfig::None => Ok(grid.clone()),
            SelectionConfig::Prune { target } => prune_divprune(grid, target),
            SelectionConfig::Cluster { target, seed } => select_kmeans(grid, target, seed),
            SelectionConfig::Sample2x2 => sample_uniform_2x2(grid),
            SelectionConfig::Pool2x2 => pool_average_2x2(grid),
        }
    }
}

impl fmt::Display for SelectionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionConfig::None => f.write_str("none"),
            SelectionConfig::Prune { target } => write!(f, "prune:{target}"),
            SelectionConfig::Cluster { target, seed } => write!(f, "cluster:{target}:{seed}"),
            SelectionConfig::Sample2x2 => f.write_str("sample2x2"),
            SelectionConfig::Pool2x2 => f.write_str("pool2x2"),
        }
    }
}

/// Parses `none`, `prune:N`, `cluster:N[:SEED]`, `sample2x2` or `pool2x2`.
impl FromStr for SelectionConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let count = |p: &str| -> Result<usize> {
            match p.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::Parse(format!("bad token count `{p}` in `{s}`"))),
            }
        };
        match parts.as_slice() {
            ["none"] => Ok(Self::None),
            ["prune", n] => Ok(Self::Prune { target: count(n)? }),
            ["cluster", n] => Ok(Self::Cluster {
                target: count(n)?,
                seed: 0,
            }),
            ["cluster", n, seed] => Ok(Self::Cluster {
                target: count(n)?,
                seed: seed
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad seed in `{s}`")))?,
            }),
            ["sample2x2"] => Ok(Self::Sample2x2),
            ["pool2x2"] => Ok(Self::Pool2x2),
            _ => Err(Error::Parse(format!("unknown selection `{s}`"))),
        }
    }
}

fn check_target(target: usize, available: usize) -> Result<()> {
    if target == 0 {
        return Err(Error::InvalidParameter(
            "target count must be positive".into(),
        ));
    }
    if target > available {
        return Err(Error::TargetTooLarge { target, available });
    }
    Ok(())
}

/// Greedy max-min diverse selection of `target` tokens.
///
/// The first pick is the token farthest from its nearest neighbour; each
/// further pick maximises the distance to the closest already-selected
/// token. Ties go to the smaller index. Output keeps original grid order.
pub fn prune_divprune(grid: &TokenGrid, target: usize) -> Result<TokenGrid> {
    let m = grid.len();
    check_target(target, m)?;
    if target == m {
        return Ok(grid.clone());
    }
    let dist = |i: usize, j: usize| squared_l2(grid.token(i), grid.token(j));

    let mut first = 0;
    let mut first_nn = f64::NEG_INFINITY;
    for i in 0..m {
        let nn = (0..m)
            .filter(|&j| j != i)
            .map(|j| dist(i, j))
            .fold(f64::INFINITY, f64::min);
        if nn > first_nn {
            first_nn = nn;
            first = i;
        }
    }

    let mut selected = vec![false; m];
    selected[first] = true;
    let mut to_set: Vec<f64> = (0..m).map(|j| dist(first, j)).collect();
    for _ in 1..target {
        let mut best = None;
        let mut best_d = f64::NEG_INFINITY;
        for j in (0..m).filter(|&j| !selected[j]) {
            if to_set[j] > best_d {
                best_d = to_set[j];
                best = Some(j);
            }
        }
        let pick = best.expect("target <= M leaves a candidate");
        selected[pick] = true;
        for (j, d) in to_set.iter_mut().enumerate() {
            *d = d.min(dist(pick, j));
        }
    }
    let keep: Vec<usize> = (0..m).filter(|&i| selected[i]).collect();
    grid.subset(&keep)
}

/// Clusters the tokens into `target` groups. Output vectors are the cluster
/// centroids; each carries the position of its medoid (member nearest the
/// centroid, ties toward the smaller index). Output is ordered by medoid index.
pub fn select_kmeans(grid: &TokenGrid, target: usize, seed: u64) -> Result<TokenGrid> {
    check_target(target, grid.len())?;
    let dim = grid.dim();
    let km = kmeans(grid.as_slice(), dim, target, seed)?;
    let mut medoids: Vec<(usize, usize)> = (0..target)
        .map(|c| {
            let centroid = &km.centroids[c * dim..(c + 1) * dim];
            let mut best = (usize::MAX, f64::INFINITY);
            for (i, &a) in km.assignments.iter().enumerate() {
                if a != c {
                    continue;
                }
                let d = squared_l2(grid.token(i), centroid);
                if d < best.1 {
                    best = (i, d);
                }
            }
            (best.0, c)
        })
        .collect();
    medoids.sort_unstable();
    let mut tokens = Vec::with_capacity(target * dim);
    let mut positions = Vec::with_capacity(target);
    for &(medoid, c) in &medoids {
        tokens.extend_from_slice(&km.centroids[c * dim..(c + 1) * dim]);
        positions.push(grid.positions()[medoid]);
    }
    TokenGrid::new(tokens, dim, positions, grid.grid_rows(), grid.grid_cols())
}

/// Token indices of each non-overlapping 2x2 window in row-major window
/// order; edge windows on odd sides hold fewer members.
fn windows_2x2(grid: &TokenGrid) -> Result<Vec<Vec<usize>>> {
    let rows = grid.grid_rows() as usize;
    let cols = grid.grid_cols() as usize;
    if grid.len() != rows * cols {
        return Err(Error::NonRectangularGrid(format!(
            "{} tokens on a {rows}x{cols} grid",
            grid.len()
        )));
    }
    let at: HashMap<GridPos, usize> = grid
        .positions()
        .iter()
        .enumerate()
        .map(|(i, p)| (*p, i))
        .collect();
    let mut out = Vec::with_capacity(rows.div_ceil(2) * cols.div_ceil(2));
    for r in (0..rows).step_by(2) {
        for c in (0..cols).step_by(2) {
            let mut members = Vec::with_capacity(4);
            for rr in r..(r + 2).min(rows) {
                for cc in c..(c + 2).min(cols) {
                    members.push(at[&GridPos::new(rr as u16, cc as u16)]);
                }
            }
            out.push(members);
        }
    }
    Ok(out)
}

/// Keeps the top-left token of each 2x2 window, unmodified.
pub fn sample_uniform_2x2(grid: &TokenGrid) -> Result<TokenGrid> {
    let keep: Vec<usize> = windows_2x2(grid)?.into_iter().map(|w| w[0]).collect();
    grid.subset(&keep)
}

/// Averages each 2x2 window into one token placed at the window's top-left
/// position. Positions stay in the source grid's coordinate frame.
pub fn pool_average_2x2(grid: &TokenGrid) -> Result<TokenGrid> {
    let dim = grid.dim();
    let windows = windows_2x2(grid)?;
    let mut tokens = Vec::with_capacity(windows.len() * dim);
    let mut positions = Vec::with_capacity(windows.len());
    let mut acc = vec![0f64; dim];
    for w in &windows {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for &i in w {
            for (a, &v) in acc.iter_mut().zip(grid.token(i)) {
                *a += v as f64;
            }
        }
        tokens.extend(acc.iter().map(|a| (a / w.len() as f64) as f32));
        positions.push(grid.positions()[w[0]]);
    }
    TokenGrid::new(tokens, dim, positions, grid.grid_rows(), grid.grid_cols())
}
