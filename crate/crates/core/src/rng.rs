//! Named random sub-streams derived from one master seed.
//!
//! Every random quantity in a run is drawn from a stream selected by
//! `(seed, purpose, index)`. Arrival streams are indexed by node and never
//! touched by control decisions, so two controllers run with the same seed
//! see the same exogenous demand.
//!
//! A stream's 128-bit state is taken from ChaCha8 stream `(purpose, index)`
//! of the master seed; the stream itself is a PCG64 (MCG variant), which keeps
//! the thousands of per-node generators of a large grid small enough to stay
//! in cache.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_pcg::Pcg64Mcg;

pub type SimRng = Pcg64Mcg;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Exogenous arrivals at a node and their routing.
    Arrivals = 1,
    /// Routing of vehicles transferred into a node.
    Routing = 2,
    /// Replication index of a drift estimate.
    Drift = 3,
    /// Parameter sample generation.
    Sample = 4,
    /// Child seeds (per sample, per replication).
    Seed = 5,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> SimRng {
    let mut key = ChaCha8Rng::seed_from_u64(seed);
    key.set_stream(((purpose as u64) << 48) | (index & ((1 << 48) - 1)));
    let mut state = [0u8; 16];
    key.fill_bytes(&mut state);
    Pcg64Mcg::from_seed(state)
}

/// Deterministic child seed for sub-experiment `index`.
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((purpose as u64) << 56));
    rng.set_stream(((Purpose::Seed as u64) << 48) | (index & ((1 << 48) - 1)));
    rng.next_u64()
}
