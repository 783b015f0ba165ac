//! Seeded synthetic corpora with instance groups.
//!
//! Every group owns a set of signature tokens and a global prototype. Each
//! database image of a group carries noisy copies of the signatures among
//! random background tokens, and a global descriptor near the prototype.
//! For the first `misleading` groups, the query's global descriptor leans
//! towards another group's prototype, so global search ranks that group's
//! images first while the token grids still identify the right instance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::qrels::Qrels;
use crate::types::{GlobalDescriptor, ImageRecord, TokenGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub groups: usize,
    pub per_group: usize,
    /// Groups whose query global descriptor points at a decoy group.
    pub misleading: usize,
    pub token_dim: usize,
    pub rows: u16,
    pub cols: u16,
    pub global_dim: usize,
    /// Signature tokens planted in every image of a group.
    pub signatures: usize,
    /// Standard deviation of the per-coordinate noise on planted signatures.
    pub token_noise: f64,
    /// Per-coordinate noise on global descriptors, relative to a unit prototype.
    pub global_noise: f64,
    /// Weight of the decoy prototype in a misleading query's descriptor
    /// (the own prototype has weight 1).
    pub decoy_weight: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            groups: 20,
            per_group: 10,
            misleading: 5,
            token_dim: 16,
            rows: 6,
            cols: 6,
            global_dim: 32,
            signatures: 18,
            token_noise: 0.08,
            global_noise: 0.12,
            decoy_weight: 1.3,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub database: Vec<ImageRecord>,
    /// One query per group, id `q<group>`.
    pub queries: Vec<ImageRecord>,
    pub qrels: Qrels,
}

impl SynthConfig {
    /// Decoy group for misleading query `g`.
    pub fn decoy(&self, g: usize) -> usize {
        (g + self.groups / 2) % self.groups
    }

    pub fn generate(&self) -> SynthCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let signatures: Vec<Vec<Vec<f32>>> = (0..self.groups)
            .map(|_| {
                (0..self.signatures)
                    .map(|_| unit(&mut rng, self.token_dim))
                    .collect()
            })
            .collect();
        let prototypes: Vec<Vec<f32>> = (0..self.groups)
            .map(|_| unit(&mut rng, self.global_dim))
            .collect();

        let mut database = Vec::with_capacity(self.groups * self.per_group);
        let mut queries = Vec::with_capacity(self.groups);
        let mut qrels = Qrels::new();
        for g in 0..self.groups {
            let query_id = format!("q{g:02}");
            for i in 0..self.per_group {
                let image_id = format!("g{g:02}_{i:02}");
                let global = self.noisy_global(&mut rng, &[(&prototypes[g], 1.0)]);
                database.push(ImageRecord {
                    grid: self.grid(&mut rng, &signatures[g]),
                    global,
                    image_id: image_id.clone(),
                });
                qrels
                    .insert(&query_id, &image_id, None)
                    .expect("generated ids are valid");
            }
            let global = if g < self.misleading {
                let decoy = &prototypes[self.decoy(g)];
                self.noisy_global(
                    &mut rng,
                    &[(&prototypes[g], 1.0), (decoy, self.decoy_weight)],
                )
            } else {
                self.noisy_global(&mut rng, &[(&prototypes[g], 1.0)])
            };
            queries.push(ImageRecord {
                image_id: query_id,
                global,
                grid: self.grid(&mut rng, &signatures[g]),
            });
        }
        SynthCorpus {
            database,
            queries,
            qrels,
        }
    }

    fn grid(&self, rng: &mut ChaCha8Rng, signatures: &[Vec<f32>]) -> TokenGrid {
        let m = self.rows as usize * self.cols as usize;
        let mut slots: Vec<usize> = (0..m).collect();
        slots.shuffle(rng);
        let mut tokens: Vec<Vec<f32>> = (0..m).map(|_| unit(rng, self.token_dim)).collect();
        for (sig, &slot) in signatures.iter().zip(&slots) {
            tokens[slot] = sig
                .iter()
                .map(|&v| v + (self.token_noise * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
        }
        TokenGrid::dense(tokens.concat(), self.token_dim, self.rows, self.cols)
            .expect("generated grid is dense")
    }

    fn noisy_global(&self, rng: &mut ChaCha8Rng, parts: &[(&Vec<f32>, f64)]) -> GlobalDescriptor {
        let v: Vec<f32> = (0..self.global_dim)
            .map(|j| {
                let base: f64 = parts.iter().map(|(p, w)| p[j] as f64 * w).sum();
                (base + self.global_noise * rng.sample::<f64, _>(StandardNormal)) as f32
            })
            .collect();
        GlobalDescriptor::normalized(v).expect("generated descriptor is non-zero")
    }
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| (x / n) as f32).collect();
        }
    }
}
