use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::rng::hash_bytes;

/// Deterministic stand-in for a pretrained sentence encoder: the sentence
/// bytes and `seed` pick a ChaCha stream, `dim` standard normals are drawn
/// and the result is scaled to unit length.
pub fn toy_embed(sentence: &str, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(hash_bytes(sentence.as_bytes(), seed));
    let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    unit(&raw)
}

pub(crate) fn unit(v: &[f64]) -> Vec<f32> {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm == 0.0 {
        return v.iter().map(|&x| x as f32).collect();
    }
    v.iter().map(|x| (x / norm) as f32).collect()
}
