//! Labeled RNG substreams.
//!
//! Every stochastic stage derives its generator from a single master seed
//! and a textual label (`"datagen/vol:3"`, `"train/step:120"`, ...), so a
//! command re-run with the same seed reproduces each stream regardless of
//! scheduling, and independent jobs never share a stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::Real;

/// Deterministic child seed for `(master_seed, label)`, for stages that
/// take a plain seed.
pub fn derive_seed(master_seed: u64, label: &str) -> u64 {
    substream(master_seed, label).gen()
}

/// Deterministic generator for `(master_seed, label)`.
pub fn substream(master_seed: u64, label: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}

/// Standard-normal draw. Sampling happens in f64 and is cast to the working
/// type, so the stream of underlying uniforms is identical for f32 and f64.
pub fn standard_normal<T: Real>(rng: &mut impl Rng) -> T {
    // Box-Muller on two uniforms; u1 in (0,1] to keep ln finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    crate::real(r * (2.0 * std::f64::consts::PI * u2).cos())
}

/// Image of i.i.d. standard-normal pixels.
pub fn normal_image<T: Real>(
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> crate::Image2D<T> {
    let data = (0..rows * cols).map(|_| standard_normal::<T>(rng)).collect();
    crate::Image2D::from_vec(rows, cols, data).expect("normal draws are finite")
}
