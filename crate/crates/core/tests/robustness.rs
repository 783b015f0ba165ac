use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenrank::rerank::{ConstantScorer, MockScorer, PromptId, Scorer};
use tokenrank::robustness::{
    apply_transform, crossing_point, factor_grid, robustness_curve, Extractor, Image,
    PatchExtractor, TransformKind, TransformSpec, PADDING,
};
use tokenrank::{Result, TokenGrid};

fn photo(w: u32, h: u32, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [u8; 3] = rng.random();
    Image::from_fn(w, h, |x, y| {
        [
            base[0].wrapping_add((x * 5) as u8),
            base[1].wrapping_add((y * 7) as u8),
            base[2].wrapping_add(((x + y) * 3) as u8),
        ]
    })
    .unwrap()
}

#[test]
fn identity_factors_are_padded_identities() {
    let img = photo(33, 21, 1);
    for (kind, f) in [
        (TransformKind::Contrast, 1.0),
        (TransformKind::Occlusion, 0.0),
        (TransformKind::Noise, 0.0),
    ] {
        let out = apply_transform(&img, &TransformSpec::new(kind, f).with_seed(4)).unwrap();
        assert_eq!(
            (out.width(), out.height()),
            (33 + 2 * PADDING, 21 + 2 * PADDING)
        );
        assert_eq!(out.crop(PADDING, PADDING, 33, 21).unwrap(), img, "{kind}");
        assert_eq!(out, img.pad(PADDING), "{kind}");
    }
}

#[test]
fn rotation_180_twice_restores_content() {
    let img = photo(16, 16, 2);
    let spec = TransformSpec::new(TransformKind::Rotation, 180.0);
    let once = apply_transform(&img, &spec)
        .unwrap()
        .crop(PADDING, PADDING, 16, 16)
        .unwrap();
    for y in 0..16 {
        for x in 0..16 {
            assert_eq!(once.get(x, y), img.get(15 - x, 15 - y));
        }
    }
    let twice = apply_transform(&once, &spec)
        .unwrap()
        .crop(PADDING, PADDING, 16, 16)
        .unwrap();
    assert_eq!(twice, img);
}

#[test]
fn factor_grids_span_documented_ranges() {
    let blur = factor_grid(TransformKind::Blur, 15).unwrap();
    assert_eq!(blur, (1..=15).map(f64::from).collect::<Vec<_>>());
    let clutter = factor_grid(TransformKind::Clutter, 28).unwrap();
    assert_eq!(clutter, (1..=28).map(f64::from).collect::<Vec<_>>());
    let occ = factor_grid(TransformKind::Occlusion, 11).unwrap();
    assert_eq!(occ, (0..=10).map(|i| i as f64 / 10.0).collect::<Vec<_>>());
    let contrast = factor_grid(TransformKind::Contrast, 3).unwrap();
    assert_eq!(contrast[0], 0.05);
    assert!((contrast[1] - 1.0).abs() < 1e-12);
    assert_eq!(contrast[2], 20.0);
    for kind in TransformKind::ALL {
        let g = factor_grid(kind, 6).unwrap();
        assert!(g.windows(2).all(|w| w[0] != w[1]), "{kind}: {g:?}");
        let up = g.windows(2).all(|w| w[1] > w[0]);
        let down = g.windows(2).all(|w| w[1] < w[0]);
        assert!(up || down, "{kind}");
    }
}

/// Linear interpolation written out per segment.
fn interpolation_oracle(curve: &[(f64, f64)], baseline: f64) -> Option<f64> {
    if curve[0].1 < baseline {
        return Some(curve[0].0);
    }
    for i in 1..curve.len() {
        let (x0, y0) = curve[i - 1];
        let (x1, y1) = curve[i];
        if y1 < baseline {
            let slope = (y1 - y0) / (x1 - x0);
            return Some(x0 + (baseline - y0) / slope);
        }
    }
    None
}

#[test]
fn crossing_point_matches_interpolation_oracle() {
    assert_eq!(
        crossing_point(&[(0.0, 0.9), (1.0, 0.1)], 0.5).unwrap(),
        Some(0.5)
    );
    assert_eq!(
        crossing_point(&[(0.0, 0.9), (1.0, 0.8)], 0.5).unwrap(),
        None
    );
    assert_eq!(
        crossing_point(&[(3.0, 0.2), (4.0, 0.9)], 0.5).unwrap(),
        Some(3.0)
    );

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..500 {
        let n = rng.random_range(2..=12);
        let mut x = rng.random_range(-5.0..5.0);
        let mut curve = Vec::new();
        let mut y: f64 = rng.random_range(0.3..1.0);
        for _ in 0..n {
            curve.push((x, y));
            x += rng.random_range(0.01..3.0);
            y -= rng.random_range(-0.05..0.2);
        }
        let baseline = rng.random_range(0.0..0.8);
        let got = crossing_point(&curve, baseline).unwrap();
        let want = interpolation_oracle(&curve, baseline);
        match (got, want) {
            (Some(g), Some(w)) => assert!((g - w).abs() <= 1e-12, "{g} vs {w}"),
            (None, None) => {}
            other => panic!("{other:?}"),
        }
        // appending points after the first crossing changes nothing
        if let Some(g) = got {
            let mut longer = curve.clone();
            longer.push((x + 1.0, 1.0));
            longer.push((x + 2.0, -1.0));
            assert_eq!(crossing_point(&longer, baseline).unwrap(), Some(g));
        }
    }
}

#[test]
fn constant_scorer_gives_flat_curve() {
    let queries = vec![photo(24, 16, 1), photo(16, 24, 2)];
    let curve = robustness_curve(
        &ConstantScorer(0.42),
        &PatchExtractor::new(8),
        &queries,
        TransformKind::Blur,
        5,
        0,
        None,
        PromptId::Object,
    )
    .unwrap();
    assert_eq!(curve.points.len(), 5);
    assert!(curve.points.iter().all(|&(_, s)| s == 0.42));
}

/// Returns preset per-factor scores keyed by the query grid's first value.
struct PresetScorer(HashMap<u32, Vec<f64>>);

impl Scorer for PresetScorer {
    fn id(&self) -> String {
        "preset".into()
    }

    fn score_batch(&self, q: &TokenGrid, c: &[TokenGrid], _: PromptId) -> Result<Vec<f64>> {
        let scores = self.0[&q.as_slice()[0].to_bits()].clone();
        assert_eq!(scores.len(), c.len());
        Ok(scores)
    }
}

#[test]
fn curve_is_the_mean_over_queries() {
    let queries = vec![photo(16, 16, 5), photo(16, 16, 6)];
    let ex = PatchExtractor::new(8);
    let a = vec![0.9, 0.7, 0.4, 0.1];
    let b = vec![0.8, 0.6, 0.6, 0.3];
    let key = |img: &Image| ex.extract(img).unwrap().as_slice()[0].to_bits();
    let scorer = PresetScorer(HashMap::from([
        (key(&queries[0]), a.clone()),
        (key(&queries[1]), b.clone()),
    ]));
    let curve = robustness_curve(
        &scorer,
        &ex,
        &queries,
        TransformKind::Occlusion,
        4,
        3,
        None,
        PromptId::Object,
    )
    .unwrap();
    let factors = factor_grid(TransformKind::Occlusion, 4).unwrap();
    for (i, &(f, s)) in curve.points.iter().enumerate() {
        assert_eq!(f, factors[i]);
        assert_eq!(s, (a[i] + b[i]) / 2.0);
    }
    let csv = curve.to_csv();
    assert!(csv.starts_with("# kind=occlusion n=4 seed=3 scorer=preset\nfactor,mean_similarity\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn mock_pipeline_under_occlusion_starts_at_self_similarity() {
    let queries = vec![photo(40, 32, 8), photo(32, 40, 9)];
    let ex = PatchExtractor::new(8);
    let curve = robustness_curve(
        &MockScorer,
        &ex,
        &queries,
        TransformKind::Occlusion,
        6,
        1,
        None,
        PromptId::Object,
    )
    .unwrap();
    assert_eq!(curve.points.len(), 6);
    let self_sim: f64 = queries
        .iter()
        .map(|q| {
            let a = ex.extract(q).unwrap();
            let b = ex.extract(&q.pad(PADDING)).unwrap();
            MockScorer.score_batch(&a, &[b], PromptId::Object).unwrap()[0]
        })
        .sum::<f64>()
        / 2.0;
    assert!((curve.points[0].1 - self_sim).abs() < 1e-12);
    let last = curve.points.last().unwrap().1;
    assert!(last < curve.points[0].1);
}

#[test]
fn aux_kinds_run_with_background() {
    let img = photo(30, 24, 3);
    let aux = Arc::new(photo(50, 50, 4));
    for kind in [
        TransformKind::Tiling,
        TransformKind::Clutter,
        TransformKind::ScaleBg,
    ] {
        for f in factor_grid(kind, 4).unwrap() {
            let spec = TransformSpec::new(kind, f)
                .with_aux(aux.clone())
                .with_seed(7);
            let out = apply_transform(&img, &spec).unwrap();
            assert_eq!((out.width(), out.height()), (70, 64));
            assert_eq!(out, apply_transform(&img, &spec).unwrap());
        }
    }
}
