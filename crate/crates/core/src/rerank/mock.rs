use rayon::prelude::*;

use super::{PromptId, Scorer};
use crate::error::{Error, Result};
use crate::types::{dot, l2_norm, TokenGrid};

/// Normalized Chamfer similarity: the mean over query tokens of the best
/// cosine against any candidate token, mapped from `[-1, 1]` to `[0, 1]`.
/// Zero vectors have cosine 0 with everything.
pub fn mock_chamfer_score(query: &TokenGrid, cand: &TokenGrid) -> Result<f64> {
    if query.dim() != cand.dim() {
        return Err(Error::DimensionMismatch {
            expected: query.dim(),
            found: cand.dim(),
        });
    }
    let cand_norms: Vec<f64> = cand.iter_tokens().map(l2_norm).collect();
    let mut total = 0.0;
    for q in query.iter_tokens() {
        let qn = l2_norm(q);
        let mut best = f64::NEG_INFINITY;
        for (x, &xn) in cand.iter_tokens().zip(&cand_norms) {
            let cos = if qn == 0.0 || xn == 0.0 {
                0.0
            } else {
                dot(q, x) / (qn * xn)
            };
            best = best.max(cos);
        }
        total += best;
    }
    let s = total / query.len() as f64;
    Ok(((s + 1.0) / 2.0).clamp(0.0, 1.0))
}

/// Deterministic scorer backed by [`mock_chamfer_score`]; ignores the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

impl MockScorer {
    pub const ID: &'static str = "mock-chamfer-v1";
}

impl Scorer for MockScorer {
    fn id(&self) -> String {
        Self::ID.to_string()
    }

    fn score_batch(
        &self,
        query: &TokenGrid,
        candidates: &[TokenGrid],
        _prompt: PromptId,
    ) -> Result<Vec<f64>> {
        candidates
            .par_iter()
            .map(|c| mock_chamfer_score(query, c))
            .collect()
    }
}

/// Returns the same score for every pair.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn id(&self) -> String {
        format!("constant-{}", self.0)
    }

    fn score_batch(
        &self,
        _q: &TokenGrid,
        candidates: &[TokenGrid],
        _p: PromptId,
    ) -> Result<Vec<f64>> {
        Ok(vec![self.0; candidates.len()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_grids_score_one() {
        let g = TokenGrid::dense(vec![1.0, 2.0, -1.0, 0.5, 3.0, 3.0], 2, 1, 3).unwrap();
        assert!((mock_chamfer_score(&g, &g).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_grids_score_half() {
        let q = TokenGrid::dense(vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0], 3, 1, 2).unwrap();
        let c = TokenGrid::dense(vec![0.0, 0.0, 5.0], 3, 1, 1).unwrap();
        assert_eq!(mock_chamfer_score(&q, &c).unwrap(), 0.5);
    }

    #[test]
    fn zero_tokens_count_as_orthogonal() {
        let q = TokenGrid::dense(vec![0.0, 0.0], 2, 1, 1).unwrap();
        let c = TokenGrid::dense(vec![1.0, 0.0], 2, 1, 1).unwrap();
        assert_eq!(mock_chamfer_score(&q, &c).unwrap(), 0.5);
    }

    #[test]
    fn hand_set_angles_match_double_loop() {
        let deg = |a: f64| [(a.to_radians().cos()) as f32, (a.to_radians().sin()) as f32];
        let q = TokenGrid::dense([deg(0.0), deg(90.0)].concat(), 2, 1, 2).unwrap();
        let c = TokenGrid::dense([deg(30.0), deg(150.0)].concat(), 2, 1, 2).unwrap();
        // query 0 deg: best of cos30, cos150 = cos30; query 90 deg: cos60 either way
        let expected = ((30f64.to_radians().cos() + 60f64.to_radians().cos()) / 2.0 + 1.0) / 2.0;
        assert!((mock_chamfer_score(&q, &c).unwrap() - expected).abs() < 1e-7);
    }

    #[test]
    fn dimension_mismatch() {
        let q = TokenGrid::dense(vec![1.0, 0.0], 2, 1, 1).unwrap();
        let c = TokenGrid::dense(vec![1.0], 1, 1, 1).unwrap();
        assert!(matches!(
            mock_chamfer_score(&q, &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
