//! Seeded sampling helpers shared by tests, certification runs, and the CLI.
//!
//! Everything here is deterministic given the seed: ChaCha8 streams only,
//! no thread-local entropy, so artifacts are reproducible bit-for-bit.

use crate::measure::DiscreteMeasure;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for a root seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream from a root seed and a stream index.
/// SplitMix64 finalizer: decorrelates consecutive indices.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Uniform cloud: n points drawn coordinate-wise from [-spread, spread]^d,
/// uniform weights.
pub fn uniform_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> DiscreteMeasure {
    let points = (0..n.max(1))
        .map(|_| (0..dim).map(|_| rng.gen_range(-spread..=spread)).collect())
        .collect();
    DiscreteMeasure::uniform(points).expect("sampled cloud is valid")
}

/// Cloud with random positive weights, same support law as `uniform_cloud`.
pub fn weighted_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> DiscreteMeasure {
    let n = n.max(1);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-spread..=spread)).collect())
        .collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    DiscreteMeasure::new(points, weights).expect("sampled cloud is valid")
}

/// Standard-normal vector via Box-Muller (avoids a distribution dependency).
pub fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    while out.len() < dim {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        out.push(r * c);
        if out.len() < dim {
            out.push(r * s);
        }
    }
    out
}
