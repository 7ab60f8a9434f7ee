//! Seeded random number helpers. Every stochastic step in the crate draws
//! from a `ChaCha8Rng` derived here so runs are reproducible across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;

pub type SpnRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SpnRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for a named stream under a base seed, independent of the order
/// in which streams are requested.
pub fn stream(seed: u64, name: &str) -> SpnRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Tensor with entries drawn uniformly from `[lo, hi)`.
pub fn uniform_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}
