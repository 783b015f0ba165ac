use std::collections::HashMap;
use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tokenrank::pq::{encode, train_codebooks};
use tokenrank::rerank::mock_chamfer_score;
use tokenrank::search::global_topk_over;
use tokenrank::synth::SynthConfig;
use tokenrank::tokensel::{pool_average_2x2, prune_divprune};
use tokenrank::{
    build_index, open_index, rerank, FusionConfig, IndexConfig, MockScorer, PromptId,
    SelectionConfig, TokenGrid, TokenStore,
};
use tokenrank_bench::{random_globals, random_grid, random_vectors};

fn pq(c: &mut Criterion) {
    let dim = 64;
    let train = random_vectors(4096, dim, 1);
    let grid = random_grid(24, 24, dim, 2);
    let mut g = c.benchmark_group("pq_encode_576x64");
    for d in [4usize, 8, 16] {
        let cb = train_codebooks(&train, dim, d, 256, 0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(d), &cb, |b, cb| {
            b.iter(|| encode(black_box(&grid), cb).unwrap())
        });
    }
    g.finish();
}

fn global_search(c: &mut Criterion) {
    let (ids, globals) = random_globals(100_000, 128, 3);
    let query = globals[17].clone();
    let mut g = c.benchmark_group("global_topk_100k");
    for k in [100usize, 1000] {
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| global_topk_over("q", black_box(&query), &ids, &globals, k).unwrap())
        });
    }
    g.finish();
}

fn selection(c: &mut Criterion) {
    let grid = random_grid(24, 24, 64, 4);
    c.bench_function("divprune_576_to_150", |b| {
        b.iter(|| prune_divprune(black_box(&grid), 150).unwrap())
    });
    c.bench_function("pool2x2_576", |b| {
        b.iter(|| pool_average_2x2(black_box(&grid)).unwrap())
    });
}

fn scoring(c: &mut Criterion) {
    let query = random_grid(16, 16, 64, 5);
    let cand = random_grid(16, 16, 64, 6);
    c.bench_function("chamfer_256x256x64", |b| {
        b.iter(|| mock_chamfer_score(black_box(&query), black_box(&cand)).unwrap())
    });
}

fn rerank_shortlist(c: &mut Criterion) {
    let corpus = SynthConfig::default().generate();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.tkix");
    build_index(
        &corpus.database,
        &IndexConfig::fp16(SelectionConfig::None),
        &path,
    )
    .unwrap();
    let index = open_index(&path).unwrap();
    let tokens: Vec<f32> = corpus
        .database
        .iter()
        .flat_map(|r| r.grid.as_slice())
        .copied()
        .collect();
    let cb = Arc::new(train_codebooks(&tokens, 16, 4, 256, 0).unwrap());
    let pq_path = dir.path().join("pq.tkix");
    build_index(
        &corpus.database,
        &IndexConfig::pq(SelectionConfig::None, cb),
        &pq_path,
    )
    .unwrap();
    let pq_index = open_index(&pq_path).unwrap();
    let memory: HashMap<String, TokenGrid> = corpus
        .database
        .iter()
        .map(|r| (r.image_id.clone(), r.grid.clone()))
        .collect();
    let q = &corpus.queries[0];
    let fusion = FusionConfig::new(0.5).unwrap();
    let shortlist = tokenrank::global_topk(&q.image_id, &q.global, &index, 50).unwrap();
    let stores: [(&str, &dyn TokenStore); 3] =
        [("memory", &memory), ("fp16", &index), ("pq4", &pq_index)];
    let mut g = c.benchmark_group("rerank_k50");
    for (name, store) in stores {
        g.bench_function(name, |b| {
            b.iter(|| {
                rerank(
                    &shortlist,
                    store,
                    &q.grid,
                    &MockScorer,
                    &fusion,
                    PromptId::Object,
                )
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    pq,
    global_search,
    selection,
    scoring,
    rerank_shortlist
);
criterion_main!(benches);
