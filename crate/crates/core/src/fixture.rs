//! Deterministic seeded fixtures for tests and the `make-fixture` command.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::tensor::Tensor;

/// Uniform value in `[0, 1)` with 24 bits of resolution; stable across
/// platforms because it uses the raw ChaCha8 stream directly.
pub(crate) fn unit_f32(rng: &mut ChaCha8Rng) -> f32 {
    (rng.next_u32() >> 8) as f32 / 16_777_216.0
}

/// Tensor of uniform `[0, 1)` values drawn from a fixed seed.
pub fn seeded_tensor(seed: u64, dims: &[usize]) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let numel: usize = dims.iter().product();
    let data = (0..numel).map(|_| unit_f32(&mut rng)).collect();
    Tensor::new(dims.to_vec(), data).expect("fixture dims are valid")
}
