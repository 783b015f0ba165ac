//! Second-stage pairwise re-ranking.
//!
//! A [`Scorer`] maps a query token grid and a batch of candidate grids to
//! similarities in `[0, 1]`. Scores from a language model are read as the
//! probability of answering "1" rather than "0" ([`two_token_similarity`]).
//! The final ranking fuses the re-ranker score with the normalized global
//! similarity ([`fuse`]).

mod mock;
mod prompts;
pub mod remote;
#[cfg(feature = "stub-service")]
pub mod stub;
pub mod wire;

use rayon::prelude::*;

pub use mock::{mock_chamfer_score, ConstantScorer, MockScorer};
pub use prompts::PromptId;
pub use remote::{ClientConfig, RemoteScorer};

use crate::error::{Error, Result};
use crate::index::TokenStore;
use crate::search::Shortlist;
use crate::types::{RankedItem, RankedList, TokenGrid};

pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Pairwise similarity between a query grid and candidate grids.
///
/// Implementations must return one score in `[0, 1]` per candidate, in
/// candidate order, and be callable from several threads at once.
pub trait Scorer: Send + Sync {
    fn id(&self) -> String;

    fn score_batch(
        &self,
        query: &TokenGrid,
        candidates: &[TokenGrid],
        prompt: PromptId,
    ) -> Result<Vec<f64>>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn id(&self) -> String {
        (**self).id()
    }

    fn score_batch(&self, q: &TokenGrid, c: &[TokenGrid], p: PromptId) -> Result<Vec<f64>> {
        (**self).score_batch(q, c, p)
    }
}

impl<S: Scorer + ?Sized> Scorer for Box<S> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn score_batch(&self, q: &TokenGrid, c: &[TokenGrid], p: PromptId) -> Result<Vec<f64>> {
        (**self).score_batch(q, c, p)
    }
}

/// `exp(l1) / (exp(l0) + exp(l1))`, evaluated as `1 / (1 + exp(l0 - l1))`.
///
/// The result never underflows to zero; it is at least the smallest
/// positive normal `f64`.
pub fn two_token_similarity(logit_one: f64, logit_zero: f64) -> Result<f64> {
    if !logit_one.is_finite() || !logit_zero.is_finite() {
        return Err(Error::NonFinite);
    }
    let s = 1.0 / (1.0 + (logit_zero - logit_one).exp());
    Ok(s.max(f64::MIN_POSITIVE))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    lambda: f64,
}

impl FusionConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::OutOfRange(format!("lambda {lambda} not in [0, 1]")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
        }
    }
}

/// Maps a cosine similarity from `[-1, 1]` onto `[0, 1]`.
pub fn normalize_global(s_g: f64) -> f64 {
    (s_g + 1.0) / 2.0
}

// float slack for cosines computed from unit vectors
const COSINE_SLACK: f64 = 1e-6;

/// `(1 - lambda) * (s_g + 1) / 2 + lambda * s_r`.
pub fn fuse(s_g: f64, s_r: f64, cfg: &FusionConfig) -> Result<f64> {
    if !(-1.0 - COSINE_SLACK..=1.0 + COSINE_SLACK).contains(&s_g) {
        return Err(Error::OutOfRange(format!(
            "global similarity {s_g} not in [-1, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&s_r) {
        return Err(Error::OutOfRange(format!(
            "re-ranker score {s_r} not in [0, 1]"
        )));
    }
    let l = cfg.lambda;
    Ok((1.0 - l) * normalize_global(s_g) + l * s_r)
}

/// Re-scores every shortlist candidate with `scorer`, fuses with the global
/// similarity and sorts. Any fetch or scoring failure fails the whole query.
pub fn rerank<S: Scorer + ?Sized>(
    shortlist: &Shortlist,
    store: &dyn TokenStore,
    query_grid: &TokenGrid,
    scorer: &S,
    cfg: &FusionConfig,
    prompt: PromptId,
) -> Result<RankedList> {
    if shortlist.is_empty() {
        return Err(Error::InvalidParameter("empty shortlist".into()));
    }
    let grids: Vec<TokenGrid> = shortlist
        .candidates
        .par_iter()
        .map(|(id, _)| store.fetch_tokens(id))
        .collect::<Result<_>>()?;
    let scores = scorer.score_batch(query_grid, &grids, prompt)?;
    if scores.len() != grids.len() {
        return Err(Error::InvalidParameter(format!(
            "scorer returned {} scores for {} candidates",
            scores.len(),
            grids.len()
        )));
    }
    let items = shortlist
        .candidates
        .iter()
        .zip(scores)
        .map(|((id, s_g), s_r)| {
            Ok(RankedItem {
                image_id: id.clone(),
                s_g: *s_g,
                s_r: Some(s_r),
                s_fused: Some(fuse(*s_g, s_r, cfg)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranked = RankedList {
        query_id: shortlist.query_id.clone(),
        items,
    };
    ranked.sort();
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits_give_one_half() {
        assert_eq!(two_token_similarity(3.0, 3.0).unwrap(), 0.5);
    }

    #[test]
    fn logistic_point() {
        let s = two_token_similarity(1.0, -1.0).unwrap();
        assert!((s - 0.8807970779778823).abs() < 1e-12);
    }

    #[test]
    fn strongly_negative_margin_stays_positive() {
        let s = two_token_similarity(-25.0, 25.0).unwrap();
        // 1 / (1 + e^50)
        let expected = (-50f64).exp() / (1.0 + (-50f64).exp());
        assert!(s > 0.0 && s < 1.0);
        assert!(s >= f64::MIN_POSITIVE);
        assert!((s - expected).abs() / expected < 1e-12);
        assert!(two_token_similarity(-1e6, 1e6).unwrap() >= f64::MIN_POSITIVE);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            two_token_similarity(f64::NAN, 0.0),
            Err(Error::NonFinite)
        ));
        assert!(matches!(
            two_token_similarity(0.0, f64::INFINITY),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn fusion_endpoints_and_points() {
        let one = FusionConfig::new(1.0).unwrap();
        let zero = FusionConfig::new(0.0).unwrap();
        let half = FusionConfig::default();
        assert_eq!(fuse(0.3, 0.71, &one).unwrap(), 0.71);
        assert_eq!(fuse(0.3, 0.71, &zero).unwrap(), 0.65);
        assert_eq!(fuse(1.0, 1.0, &half).unwrap(), 1.0);
        assert!((fuse(0.0, 0.8, &half).unwrap() - 0.65).abs() < 1e-15);
        assert!(fuse(1.5, 0.5, &half).is_err());
        assert!(fuse(0.5, 1.5, &half).is_err());
        assert!(FusionConfig::new(1.2).is_err());
        assert!(FusionConfig::new(f64::NAN).is_err());
    }
}
