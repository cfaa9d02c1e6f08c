//! Seeded data generators shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use harvest_core::vectorstore::IndexEntry;
use harvest_core::EmbeddingVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const PROVIDER: &str = "synthetic";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(values: Vec<f32>) -> Vec<f32> {
    let norm = values.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
    values.iter().map(|v| (*v as f64 / norm) as f32).collect()
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return unit(v);
        }
    }
}

/// Unit vectors scattered around `clusters` random centres.
pub fn gaussian_mixture(n: usize, dim: usize, clusters: usize, spread: f32, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = rng(seed);
    let centres: Vec<Vec<f32>> = (0..clusters).map(|_| random_unit(&mut rng, dim)).collect();
    (0..n)
        .map(|_| {
            let c = &centres[rng.random_range(0..clusters)];
            let noise: Vec<f32> = (0..dim)
                .map(|_| {
                    let z: f32 = StandardNormal.sample(&mut rng);
                    spread * z / (dim as f32).sqrt()
                })
                .collect();
            unit(c.iter().zip(noise).map(|(a, b)| a + b).collect())
        })
        .collect()
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i:05}")).collect()
}

pub fn entries(ids: &[String], vectors: &[Vec<f32>]) -> Vec<IndexEntry> {
    ids.iter()
        .zip(vectors)
        .map(|(id, v)| IndexEntry::new(id.clone(), embedding(v)))
        .collect()
}

pub fn embedding(v: &[f32]) -> EmbeddingVector {
    EmbeddingVector::from_unit(v.to_vec(), PROVIDER).expect("unit vector")
}

pub fn mini_corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mini-corpus")
}
