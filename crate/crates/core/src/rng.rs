//! Seed splitting and counter-based random streams.
//!
//! Every random draw in a campaign descends from one `u64` master seed. A
//! ChaCha key is derived from the seed, and each logical consumer (a
//! particle at a level, a duplication step, a plug-in integral) reads from
//! its own ChaCha stream identified by a [`StreamId`]. Streams are
//! independent of how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer. Bijective on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index` under `master`.
///
/// Counter-based: `derive_seed(m, r)` depends only on `(m, r)`, so adding
/// replications never reshuffles earlier ones.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Identifies one random stream inside a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Initial,
    Duplication { level: u32 },
    Mutation { level: u32, particle: u32 },
    FinalDuplication,
    FinalChain { particle: u32 },
    PlugIn { input: u32, purpose: u32 },
    Auxiliary(u32),
}

impl StreamId {
    fn encode(self) -> u64 {
        // tag in the top byte, level in the next 16 bits, index in the low 40
        let (tag, level, index) = match self {
            StreamId::Initial => (1u64, 0u64, 0u64),
            StreamId::Duplication { level } => (2, level as u64, 0),
            StreamId::Mutation { level, particle } => (3, level as u64, particle as u64),
            StreamId::FinalDuplication => (4, 0, 0),
            StreamId::FinalChain { particle } => (5, 0, particle as u64),
            StreamId::PlugIn { input, purpose } => (6, purpose as u64, input as u64),
            StreamId::Auxiliary(k) => (7, 0, k as u64),
        };
        (tag << 56) | ((level & 0xFFFF) << 40) | (index & 0xFF_FFFF_FFFF)
    }
}

/// Factory for the streams of one run.
#[derive(Debug, Clone)]
pub struct StreamFactory {
    key: [u8; 32],
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_mut(8).enumerate() {
            chunk.copy_from_slice(&mix64(seed ^ mix64(i as u64)).to_le_bytes());
        }
        Self { key }
    }

    pub fn stream(&self, id: StreamId) -> Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(id.encode());
        rng
    }
}
