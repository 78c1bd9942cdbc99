use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filling::Filling;
use crate::space::FiniteMetricMeasureSpace;

/// An independent stream of the experiment seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `amplitude * max(0, 1 - d(., center) / scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tent {
    pub center: usize,
    pub scale: f64,
    pub amplitude: f64,
}

/// Three to five tents centred at points drawn from `centers`, with scales in
/// `[0.1, 0.5]` times the diameter and amplitudes in `[-1, 1]`.
pub fn random_tents(space: &FiniteMetricMeasureSpace, centers: &[usize], rng: &mut ChaCha8Rng) -> Vec<Tent> {
    let count = rng.gen_range(3..=5);
    let diam = space.declared_diam();
    (0..count)
        .map(|_| Tent {
            center: centers[rng.gen_range(0..centers.len())],
            scale: rng.gen_range(0.1..=0.5) * diam,
            amplitude: rng.gen_range(-1.0..=1.0),
        })
        .collect()
}

pub fn eval_tents(space: &FiniteMetricMeasureSpace, tents: &[Tent]) -> Vec<f64> {
    (0..space.len())
        .map(|i| {
            tents
                .iter()
                .map(|t| t.amplitude * (1.0 - space.distance(i, t.center) / t.scale).max(0.0))
                .sum()
        })
        .collect()
}

/// A random Lipschitz function: a sum of random tents.
pub fn random_lipschitz(space: &FiniteMetricMeasureSpace, centers: &[usize], rng: &mut ChaCha8Rng) -> Vec<f64> {
    eval_tents(space, &random_tents(space, centers, rng))
}

/// Independent `U(-1, 1)` samples.
pub fn random_noise(space: &FiniteMetricMeasureSpace, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..space.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `u(e) = 2^{-|e| s} U(-1, 1)`, zero where `support` is false.
pub fn random_edge_sequence(
    filling: &Filling,
    s: f64,
    support: Option<&[bool]>,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    filling
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let v = 2f64.powf(-(edge.level as f64) * s) * rng.gen_range(-1.0..1.0);
            match support {
                Some(flags) if !flags[e] => 0.0,
                _ => v,
            }
        })
        .collect()
}
