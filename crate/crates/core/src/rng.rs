//! Seed derivation.
//!
//! Every random quantity in the toolkit is drawn from a ChaCha8 stream keyed by
//! `(master seed, stream tag, index)`. The key is produced by a SplitMix64
//! finalizer chain, so results never depend on the order in which parallel jobs
//! are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Logical stream tags. Distinct tags never share a substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    PulsePhase = 1,
    DetectorNoise = 2,
    LoDrift = 3,
    Bootstrap = 4,
    SweepPoint = 5,
    ScanPoint = 6,
    Photon = 7,
    Placement = 8,
    Misc = 9,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `(master, stream, index)` into a 64-bit child seed.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ (stream as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Independent generator for one task.
pub fn substream(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
