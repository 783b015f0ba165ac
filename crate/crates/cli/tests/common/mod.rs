#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokenrank::dump::write_record;
use tokenrank::{GlobalDescriptor, ImageRecord, TokenGrid};

pub fn tokenrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tokenrank"))
        .args(args)
        .env_remove("TOKENRANK_ENDPOINT")
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn random_records(
    prefix: &str,
    n: usize,
    dim: usize,
    global_dim: usize,
    seed: u64,
) -> Vec<ImageRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let rows = rng.random_range(2..=5u16);
            let cols = rng.random_range(2..=5u16);
            let len = rows as usize * cols as usize * dim;
            ImageRecord {
                image_id: format!("{prefix}{i:03}"),
                grid: TokenGrid::dense(
                    (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                    dim,
                    rows,
                    cols,
                )
                .unwrap(),
                global: GlobalDescriptor::normalized(
                    (0..global_dim)
                        .map(|_| rng.random_range(-1.0f32..1.0))
                        .collect(),
                )
                .unwrap(),
            }
        })
        .collect()
}

pub fn write_records(dir: &Path, records: &[ImageRecord]) {
    std::fs::create_dir_all(dir).unwrap();
    for r in records {
        write_record(dir, r).unwrap();
    }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
