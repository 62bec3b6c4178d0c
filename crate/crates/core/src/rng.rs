//! Seed expansion.
//!
//! Every random draw comes from a ChaCha8 stream keyed by
//! `(master seed, domain)` and selected by a per-unit stream index, so any
//! unit (respondent, replicate) can be regenerated on its own and parallel
//! generation reproduces sequential generation exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const RNG_NAME: &str = "chacha8";
pub const RNG_VERSION: u32 = 1;

/// Generator identity recorded in configs and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub name: String,
    pub version: u32,
}

impl Default for RngSpec {
    fn default() -> Self {
        Self {
            name: RNG_NAME.to_string(),
            version: RNG_VERSION,
        }
    }
}

impl RngSpec {
    pub fn is_supported(&self) -> bool {
        self.name == RNG_NAME && self.version == RNG_VERSION
    }
}

/// Domains keep the streams of unrelated draws apart.
pub mod domain {
    pub const ITEM_BANK: u64 = 1;
    pub const HUMAN: u64 = 2;
    pub const AGENT: u64 = 3;
    pub const NULL_PATTERN: u64 = 4;
    pub const MIX: u64 = 5;
    pub const REPLICATE: u64 = 6;
    /// Inline data sources; source `k` uses `SOURCE + k`.
    pub const SOURCE: u64 = 1000;
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(seed, domain)`.
pub fn derive_seed(seed: u64, domain: u64) -> u64 {
    splitmix64(seed ^ splitmix64(domain))
}

/// ChaCha8 stream `index` under `(seed, domain)`.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain));
    rng.set_stream(index);
    rng
}
