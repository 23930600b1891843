//! Deterministic random streams.
//!
//! Every random quantity in the pipeline is derived from a single user seed
//! through named substreams, so that e.g. the DNS initial conditions do not
//! shift when the training configuration changes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed of the substream `name`/`index` of `seed`.
pub fn substream_seed(seed: u64, name: &str, index: u64) -> u64 {
    splitmix64(
        splitmix64(seed ^ fnv1a(name)) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)),
    )
}

pub fn substream(seed: u64, name: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(substream_seed(seed, name, index))
}

pub fn fill_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = rng.sample(StandardNormal);
    }
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    fill_normal(rng, &mut v);
    v
}
