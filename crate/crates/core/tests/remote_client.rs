use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenrank::rerank::stub::{StubConfig, StubLogits, StubService};
use tokenrank::rerank::wire::{ScoreResponse, WireGrid};
use tokenrank::rerank::{mock_chamfer_score, ClientConfig, PromptId, RemoteScorer, Scorer};
use tokenrank::robustness::{Extractor, Image, PatchExtractor, RemoteExtractor};
use tokenrank::{Error, TokenGrid};

fn grids(n: usize, dim: usize, seed: u64) -> Vec<TokenGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let rows = rng.random_range(1..=4u16);
            let cols = rng.random_range(1..=4u16);
            let len = rows as usize * cols as usize * dim;
            TokenGrid::dense(
                (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                dim,
                rows,
                cols,
            )
            .unwrap()
        })
        .collect()
}

/// Tokens travel as fp16 on the wire.
fn f16_round(g: &TokenGrid) -> TokenGrid {
    g.with_tokens(
        g.as_slice()
            .iter()
            .map(|&v| f16::from_f32(v).to_f32())
            .collect(),
    )
    .unwrap()
}

fn client(stub: &StubService, batch_size: usize) -> ClientConfig {
    let mut cfg = ClientConfig::new(stub.endpoint());
    cfg.batch_size = batch_size;
    cfg.backoff = Duration::from_millis(5);
    cfg
}

#[test]
fn batching_is_transparent() {
    let stub = StubService::start(StubConfig::default()).unwrap();
    let query = &grids(1, 8, 0)[0];
    let cands = grids(21, 8, 1);
    let one = RemoteScorer::connect(client(&stub, 1)).unwrap();
    let eight = RemoteScorer::connect(client(&stub, 8)).unwrap();
    let a = one.score_batch(query, &cands, PromptId::Object).unwrap();
    let b = eight.score_batch(query, &cands, PromptId::Object).unwrap();
    assert_eq!(a, b);
    for (s, c) in a.iter().zip(&cands) {
        let expected = mock_chamfer_score(&f16_round(query), &f16_round(c)).unwrap();
        assert!((s - expected).abs() < 1e-9);
    }
    let mut sizes = stub.stats().batch_sizes.lock().unwrap().clone();
    sizes.sort_unstable();
    assert_eq!(sizes.iter().sum::<usize>(), 42);
    assert_eq!(sizes.iter().filter(|&&s| s == 1).count(), 21);
    assert_eq!(sizes.iter().filter(|&&s| s == 8).count(), 2);
    assert_eq!(sizes.iter().filter(|&&s| s == 5).count(), 1);
    assert_eq!(one.dim(), 8);
    assert_eq!(one.model(), "stub");
    assert!(one
        .score_batch(query, &[], PromptId::Object)
        .unwrap()
        .is_empty());
}

#[test]
fn retries_then_succeeds() {
    let stub = StubService::start(StubConfig {
        fail_first: 2,
        ..StubConfig::default()
    })
    .unwrap();
    let scorer = RemoteScorer::connect(client(&stub, 8)).unwrap();
    let query = &grids(1, 8, 2)[0];
    let cands = grids(3, 8, 3);
    let scores = scorer
        .score_batch(query, &cands, PromptId::Generic)
        .unwrap();
    assert_eq!(scores.len(), 3);
    assert_eq!(stub.stats().failures_sent.load(Ordering::SeqCst), 2);
}

#[test]
fn gives_up_after_retry_budget() {
    let stub = StubService::start(StubConfig {
        fail_first: 10,
        ..StubConfig::default()
    })
    .unwrap();
    let scorer = RemoteScorer::connect(client(&stub, 8)).unwrap();
    let err = scorer
        .score_batch(&grids(1, 8, 0)[0], &grids(2, 8, 1), PromptId::Object)
        .unwrap_err();
    assert!(
        matches!(err, Error::ServiceError { status: 503, .. }),
        "{err}"
    );
    assert!(err.is_remote());
    // first attempt plus two retries
    assert_eq!(stub.stats().failures_sent.load(Ordering::SeqCst), 3);
}

#[test]
fn protocol_mismatch_is_surfaced() {
    let stub = StubService::start(StubConfig {
        protocol: 2,
        ..StubConfig::default()
    })
    .unwrap();
    assert!(matches!(
        RemoteScorer::connect(client(&stub, 8)),
        Err(Error::ProtocolMismatch(_))
    ));

    let stub = StubService::start(StubConfig::default()).unwrap();
    let scorer = RemoteScorer::connect(client(&stub, 8)).unwrap();
    assert!(matches!(
        scorer.score_batch(&grids(1, 4, 0)[0], &grids(1, 4, 1), PromptId::Object),
        Err(Error::ProtocolMismatch(_))
    ));
}

#[test]
fn fixed_logits_give_closed_form_score() {
    let stub = StubService::start(StubConfig {
        logits: StubLogits::Fixed {
            zero: -1.0,
            one: 1.0,
        },
        ..StubConfig::default()
    })
    .unwrap();
    let scorer = RemoteScorer::connect(client(&stub, 8)).unwrap();
    let scores = scorer
        .score_batch(&grids(1, 8, 0)[0], &grids(3, 8, 1), PromptId::Landmark)
        .unwrap();
    for s in scores {
        assert!((s - 0.8807970779778823).abs() < 1e-12);
    }
}

#[test]
fn slow_service_times_out() {
    let stub = StubService::start(StubConfig {
        delay_per_pair: Duration::from_millis(400),
        ..StubConfig::default()
    })
    .unwrap();
    let mut cfg = client(&stub, 8);
    cfg.timeout = Duration::from_millis(100);
    cfg.retries = 0;
    let scorer = RemoteScorer::connect(cfg).unwrap();
    let start = Instant::now();
    let err = scorer
        .score_batch(&grids(1, 8, 0)[0], &grids(2, 8, 1), PromptId::Object)
        .unwrap_err();
    assert!(matches!(err, Error::Timeout), "{err}");
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let mut cfg = ClientConfig::new("http://127.0.0.1:9");
    cfg.retries = 0;
    let err = RemoteScorer::connect(cfg).unwrap_err();
    assert!(err.is_remote(), "{err}");
}

#[test]
fn wire_grid_roundtrip() {
    for g in grids(5, 3, 9) {
        let wire = WireGrid::from_grid(&g);
        let json = serde_json::to_string(&wire).unwrap();
        let back: WireGrid = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_grid(3).unwrap(), f16_round(&g));
        assert!(back.to_grid(4).is_err());
    }
    let resp: ScoreResponse =
        serde_json::from_str(r#"{"protocol":1,"scores":[0.5],"logits":[[0.0,0.0]]}"#).unwrap();
    assert_eq!(resp.logits, vec![[0.0, 0.0]]);
}

#[test]
fn remote_extraction_matches_local_extractor() {
    let stub = StubService::start(StubConfig::default()).unwrap();
    let img = Image::from_fn(40, 24, |x, y| [(x * 6) as u8, (y * 10) as u8, 128]).unwrap();
    let remote = RemoteExtractor::new(&client(&stub, 8), None);
    let (grid, global) = remote.extract_full(&img).unwrap();
    assert_eq!(
        grid,
        f16_round(&PatchExtractor::new(8).extract(&img).unwrap())
    );
    assert_eq!((grid.grid_rows(), grid.grid_cols()), (3, 5));
    let global = global.unwrap();
    let norm: f64 = global
        .iter()
        .map(|v| (*v as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!((norm - 1.0).abs() < 1e-6);

    let resized = RemoteExtractor::new(&client(&stub, 8), Some(80));
    let g = resized.extract(&img).unwrap();
    assert_eq!((g.grid_rows(), g.grid_cols()), (6, 10));
    let bad = RemoteExtractor::new(&client(&stub, 8), Some(12));
    assert!(matches!(
        bad.extract(&img),
        Err(Error::ServiceError { status: 422, .. })
    ));
}

#[test]
fn in_flight_limit_is_shared_by_config_clones() {
    let stub = StubService::start(StubConfig {
        delay_per_pair: Duration::from_millis(15),
        ..StubConfig::default()
    })
    .unwrap();
    let mut cfg = client(&stub, 2);
    cfg.max_in_flight = 2;
    let query = &grids(1, 8, 40)[0];
    let cands = grids(12, 8, 41);
    let scorers: Vec<RemoteScorer> = (0..3)
        .map(|_| RemoteScorer::connect(cfg.clone()).unwrap())
        .collect();
    std::thread::scope(|s| {
        for scorer in &scorers {
            s.spawn(|| scorer.score_batch(query, &cands, PromptId::Object).unwrap());
        }
    });
    let peak = stub.stats().max_concurrent.load(Ordering::SeqCst);
    assert_eq!(peak, 2);
}
