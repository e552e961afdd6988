//! Deterministic random streams.
//!
//! Every stochastic routine takes an explicit generator. Parallel work derives
//! one independent stream per work item from a root seed and a path of indices,
//! so results never depend on scheduling or thread count.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream from a root seed and an index path, e.g. `(seed, [entry, run])`.
pub fn derive(seed: u64, path: &[u64]) -> Stream {
    let mut h = splitmix(seed);
    for &p in path {
        h = splitmix(h ^ splitmix(p.wrapping_add(0xA5A5_A5A5)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// A plain `u64` seed derived the same way as [`derive`], for configs that
/// store their own seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    derive(seed, path).random()
}

pub fn seeded(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `rows × cols` matrix of i.i.d. standard normals, filled row-major.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}
