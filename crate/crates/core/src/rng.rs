//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator. A run is
//! identified by one `u64` seed; each component gets its own ChaCha stream
//! id derived from a [`Stream`] tag and an index, so adding draws in one
//! component never shifts the sequence seen by another. ChaCha output is
//! specified bit-for-bit, so a seed reproduces on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Component that owns a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Stream {
    Data = 1,
    Env = 2,
    Agent = 3,
    Bootstrap = 4,
    Replay = 5,
    Init = 6,
}

/// Generator for `stream` under the run seed `seed`.
pub fn substream(seed: u64, stream: Stream) -> SimRng {
    indexed_substream(seed, stream, 0)
}

/// Like [`substream`], with an extra index for families of streams (one
/// per dataset, per training run, ...).
pub fn indexed_substream(seed: u64, stream: Stream, index: u32) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | index as u64);
    rng
}
