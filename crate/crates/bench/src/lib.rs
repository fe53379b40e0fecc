//! Shared fixtures for the benches.

use neuroprobe::attribution::NeuronScoreMap;
use neuroprobe::engine::Params;
use neuroprobe::{Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random f32 model shaped like the trained fixture (2 x 256 neurons).
pub fn model(n_layers: usize, d_ffn: usize) -> Model<f32> {
    let cfg = ModelConfig::new(n_layers, 64, 4, d_ffn, 160, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    Model::new(cfg.clone(), Params::random(&cfg, 0.05, &mut rng)).unwrap()
}

pub fn prompt(len: usize) -> Vec<usize> {
    (0..len).map(|i| (i * 37 + 11) % 160).collect()
}

pub fn score_maps(n: usize, n_layers: usize, d_ffn: usize) -> Vec<NeuronScoreMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    (0..n)
        .map(|_| {
            let mut m = NeuronScoreMap::zeros(n_layers, d_ffn, "bench");
            m.scores.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            m
        })
        .collect()
}
