use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use super::transforms::{apply_transform, factor_grid, TransformKind, TransformSpec};
use super::{Extractor, Image};
use crate::error::{Error, Result};
use crate::rerank::{PromptId, Scorer};

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCurve {
    pub kind: TransformKind,
    pub seed: u64,
    pub scorer_id: String,
    /// `(factor, mean similarity)` in order of increasing strength.
    pub points: Vec<(f64, f64)>,
}

impl RobustnessCurve {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# kind={} n={} seed={} scorer={}\nfactor,mean_similarity\n",
            self.kind,
            self.points.len(),
            self.seed,
            self.scorer_id
        );
        for (f, s) in &self.points {
            writeln!(out, "{f},{s}").expect("string write");
        }
        out
    }

    pub fn crossing(&self, baseline: f64) -> Result<Option<f64>> {
        crossing_point(&self.points, baseline)
    }
}

/// Element-wise mean of per-query score rows (`rows[q][i]` is query `q` at
/// factor `i`).
pub fn mean_curve(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = rows
        .first()
        .map(Vec::len)
        .ok_or(Error::EmptyScores(String::new()))?;
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter("ragged score rows".into()));
    }
    Ok((0..n)
        .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64)
        .collect())
}

/// Scores every query against its own transformed copy at each factor of
/// `factor_grid(kind, n)` and averages over queries. Query `i` uses seed
/// `seed + i` for the stochastic kinds.
#[allow(clippy::too_many_arguments)]
pub fn robustness_curve(
    scorer: &dyn Scorer,
    extractor: &dyn Extractor,
    queries: &[Image],
    kind: TransformKind,
    n: usize,
    seed: u64,
    aux: Option<Arc<Image>>,
    prompt: PromptId,
) -> Result<RobustnessCurve> {
    if queries.is_empty() {
        return Err(Error::InvalidParameter("no query images".into()));
    }
    let factors = factor_grid(kind, n)?;
    let rows: Vec<Vec<f64>> = queries
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let original = extractor.extract(img)?;
            let mut transformed = Vec::with_capacity(factors.len());
            for &f in &factors {
                let mut spec = TransformSpec::new(kind, f).with_seed(seed.wrapping_add(i as u64));
                spec.aux = aux.clone();
                transformed.push(extractor.extract(&apply_transform(img, &spec)?)?);
            }
            scorer.score_batch(&original, &transformed, prompt)
        })
        .collect::<Result<_>>()?;
    let means = mean_curve(&rows)?;
    Ok(RobustnessCurve {
        kind,
        seed,
        scorer_id: scorer.id(),
        points: factors.into_iter().zip(means).collect(),
    })
}

/// First factor at which the curve drops below `baseline`, linearly
/// interpolated between the bracketing points. A curve that starts below the
/// baseline crosses at its first factor. Factors must be strictly monotone.
pub fn crossing_point(curve: &[(f64, f64)], baseline: f64) -> Result<Option<f64>> {
    let Some(&(f0, s0)) = curve.first() else {
        return Err(Error::EmptyScores("curve".into()));
    };
    let increasing = curve.windows(2).all(|w| w[1].0 > w[0].0);
    let decreasing = curve.windows(2).all(|w| w[1].0 < w[0].0);
    if !(increasing || decreasing) {
        return Err(Error::InvalidParameter(
            "curve factors must be strictly monotone".into(),
        ));
    }
    if s0 < baseline {
        return Ok(Some(f0));
    }
    for w in curve.windows(2) {
        let ((fa, sa), (fb, sb)) = (w[0], w[1]);
        if sb < baseline {
            let t = (sa - baseline) / (sa - sb);
            return Ok(Some(fa + t * (fb - fa)));
        }
    }
    Ok(None)
}
