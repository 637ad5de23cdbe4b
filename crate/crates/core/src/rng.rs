//! Deterministic random streams.
//!
//! Every draw in a run comes from a ChaCha stream keyed by the run seed and a
//! `(user, round, batch, purpose)` tuple. Keying the stream instead of
//! threading one generator through the run keeps trainers comparable draw for
//! draw: turning noise off never shifts the minibatch sampling stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Sampling = 1,
    Noise = 2,
    UserSelection = 3,
    Partition = 4,
    Synthetic = 5,
    Init = 6,
    Split = 7,
}

/// Position of a stream within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub user: u64,
    pub round: u64,
    pub batch: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(purpose: Purpose) -> Self {
        Self {
            user: 0,
            round: 0,
            batch: 0,
            purpose,
        }
    }

    pub fn user(mut self, user: usize) -> Self {
        self.user = user as u64;
        self
    }

    pub fn round(mut self, round: usize) -> Self {
        self.round = round as u64;
        self
    }

    pub fn batch(mut self, batch: usize) -> Self {
        self.batch = batch as u64;
        self
    }
}

/// Builds the generator for `key` under `seed`.
///
/// The 256-bit ChaCha key is the concatenation of the seed, user, round,
/// batch and purpose words, so distinct keys never share a stream.
pub fn stream(seed: u64, key: StreamKey) -> ChaCha12Rng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&key.user.to_le_bytes());
    bytes[16..24].copy_from_slice(&key.round.to_le_bytes());
    // batch occupies 7 bytes, purpose the top byte
    let tail = (key.batch & 0x00ff_ffff_ffff_ffff) | ((key.purpose as u64) << 56);
    bytes[24..32].copy_from_slice(&tail.to_le_bytes());
    ChaCha12Rng::from_seed(bytes)
}
