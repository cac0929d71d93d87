//! Deterministic RNG derivation.
//!
//! Every randomized task in this crate draws from a ChaCha8 generator keyed
//! by a master seed, with one dedicated stream per task index. Streams of a
//! ChaCha generator are statistically independent, so replications and grid
//! points can run concurrently while the overall experiment stays
//! bit-reproducible from `(master_seed, task_index)`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for task `task` under `master_seed`.
pub fn task_rng(master_seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(task);
    rng
}

/// Stable 64-bit sub-seed for task `task` under `master_seed`
/// (SplitMix64 finalizer over the pair).
pub fn derive_seed(master_seed: u64, task: u64) -> u64 {
    let mut z = master_seed ^ task.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
