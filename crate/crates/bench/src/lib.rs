//! Seeded inputs for the retrieval benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenrank::{GlobalDescriptor, TokenGrid};

pub fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect()
}

pub fn random_grid(rows: u16, cols: u16, dim: usize, seed: u64) -> TokenGrid {
    let len = rows as usize * cols as usize;
    TokenGrid::dense(random_vectors(len, dim, seed), dim, rows, cols).expect("dense grid")
}

/// `n` unit descriptors with ids `db000000`, `db000001`, ...
pub fn random_globals(n: usize, dim: usize, seed: u64) -> (Vec<String>, Vec<GlobalDescriptor>) {
    let v = random_vectors(n, dim, seed);
    let ids = (0..n).map(|i| format!("db{i:06}")).collect();
    let globals = v
        .chunks_exact(dim)
        .map(|c| GlobalDescriptor::normalized(c.to_vec()).expect("non-zero vector"))
        .collect();
    (ids, globals)
}
