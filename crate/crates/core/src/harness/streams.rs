//! Random-stream derivation for simulations.
//!
//! Every random draw in the harness comes from a ChaCha stream whose seed
//! is computed from the master seed and a short label, by folding the
//! label's parts through splitmix64:
//!
//! ```text
//! seed = splitmix64(master)
//! for part in [tag, replication, flow, device]:
//!     seed = splitmix64(seed ^ part)
//! ```
//!
//! Derivation is pure arithmetic on the label, so it does not matter in
//! which order streams are created or on which thread they are consumed:
//! replication 7 of flow 2 draws the same numbers whether the run is
//! serial or parallel, and two policies given the same scenario see the
//! same exogenous traffic.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Label for a policy's own randomness (which device to sample).
pub(crate) const TAG_POLICY: u64 = 1;

/// Label for one device's exogenous traffic coin.
pub(crate) const TAG_DEVICE: u64 = 2;

/// Label for configuration draws (flow lengths, crosspoint positions,
/// randomly drawn reset probabilities).
pub(crate) const TAG_CONFIG: u64 = 3;

/// Label for deriving per-cell seeds inside a reproduction grid.
pub(crate) const TAG_CELL: u64 = 4;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a stream label into a 64-bit seed.
pub(crate) fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |acc, &part| splitmix64(acc ^ part))
}

/// The stream for a fully qualified label.
pub(crate) fn stream(master: u64, tag: u64, replication: u64, flow: u64, device: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, &[tag, replication, flow, device]))
}
