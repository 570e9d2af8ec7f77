//! Deterministic per-pair random streams.
//!
//! The generator is xoshiro256** with its 256-bit state expanded from a 64-bit
//! seed by SplitMix64. The per-pair seed is the 64-bit FNV-1a hash of the
//! little-endian run seed followed by the UTF-8 pair id. Indices are drawn by
//! rejection sampling on the raw 64-bit outputs, so a stream is reproducible
//! from these definitions alone.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes
        .into_iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn stream_seed(rng_seed: u64, pair_id: &str) -> u64 {
    fnv1a64(rng_seed.to_le_bytes().into_iter().chain(pair_id.bytes()))
}

#[derive(Debug, Clone)]
pub struct PairRng(Xoshiro256StarStar);

impl PairRng {
    pub fn from_seed(seed: u64) -> Self {
        PairRng(Xoshiro256StarStar::seed_from_u64(seed))
    }

    pub fn for_pair(rng_seed: u64, pair_id: &str) -> Self {
        Self::from_seed(stream_seed(rng_seed, pair_id))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// `K` distinct indices from `0..n`, in draw order. Requires `n >= K`.
    pub fn distinct<const K: usize>(&mut self, n: usize) -> [usize; K] {
        let mut out = [0usize; K];
        let mut filled = 0;
        while filled < K {
            let i = self.index(n);
            if !out[..filled].contains(&i) {
                out[filled] = i;
                filled += 1;
            }
        }
        out
    }
}
