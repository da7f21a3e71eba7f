//! Deterministic random streams.
//!
//! Every random quantity in a run is drawn from a stream addressed by a tuple
//! (master seed, scenario, replicate, role, ...). The tuple is folded into a
//! 64-bit key with the SplitMix64 finaliser, strings are first reduced with
//! 64-bit FNV-1a, and the key seeds a ChaCha8 generator. The derivation uses
//! no global state, so results do not depend on scheduling or worker count.
//! Changing this file changes every simulated number; treat it as frozen.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// A node in the stream derivation tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(master_seed: u64) -> Self {
        StreamKey(splitmix(master_seed ^ GOLDEN))
    }

    pub fn child(self, word: u64) -> Self {
        StreamKey(splitmix(self.0.wrapping_add(GOLDEN) ^ splitmix(word.wrapping_add(GOLDEN))))
    }

    pub fn child_str(self, tag: &str) -> Self {
        self.child(fnv1a(tag.as_bytes()))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> SimRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// What a stream is used for within one (scenario, replicate) work unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamRole {
    /// Indication- and study-level treatment effects.
    Effects,
    /// Patient-level simulation of one study; `attempt` advances on
    /// re-simulation after a degenerate Cox fit.
    Study { index: usize, attempt: u32 },
    /// One MCMC fit, identified by a stable component name.
    Fit(String),
    /// Random pairing of draws when composing two fits.
    Compose(String),
}

/// Stream for `role` within work unit (`scenario_id`, `replicate`).
pub fn seed_for(master_seed: u64, scenario_id: usize, replicate: usize, role: &StreamRole) -> StreamKey {
    let unit = StreamKey::root(master_seed).child(scenario_id as u64).child(replicate as u64);
    match role {
        StreamRole::Effects => unit.child(1),
        StreamRole::Study { index, attempt } => unit.child(2).child(*index as u64).child(*attempt as u64),
        StreamRole::Fit(name) => unit.child(3).child_str(name),
        StreamRole::Compose(name) => unit.child(4).child_str(name),
    }
}
