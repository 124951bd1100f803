//! Seeded random streams.
//!
//! Every random consumer in the crate receives its own [`RngStream`], addressed by
//! `(master_seed, stream_id)`. Child streams are derived from a parent's address
//! rather than from its state, so the draws a job sees do not depend on which
//! worker runs it or in what order jobs are scheduled.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Name of the generator family, recorded in reports.
pub const GENERATOR: &str = "ChaCha8 (256-bit key from SplitMix64(master_seed), 64-bit stream id)";

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A counter-based random stream addressed by `(master_seed, stream_id)`.
///
/// Streams are single-owner; clone one only to replay it.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// Builds the stream `(master_seed, stream_id)`.
pub fn make_stream(master_seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(master_seed, stream_id)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = master_seed;
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream `label` of this stream. Depends only on the address, never on
    /// how many values have been drawn.
    pub fn derive(&self, label: u64) -> RngStream {
        let id =
            splitmix64(self.stream_id ^ splitmix64(label.wrapping_mul(GOLDEN_GAMMA) ^ 0x5bd1_e995));
        RngStream::new(self.master_seed, id)
    }

    /// Shorthand for `derive(a).derive(b)`.
    pub fn derive2(&self, a: u64, b: u64) -> RngStream {
        self.derive(a).derive(b)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// Draws `k` distinct elements of `pool`, uniformly over k-subsets, in draw order.
///
/// Partial Fisher-Yates over a copy of the pool.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    pool: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if k > pool.len() {
        return Err(Error::invalid(format!(
            "cannot draw {k} items from a pool of {}",
            pool.len()
        )));
    }
    let mut work = pool.to_vec();
    for i in 0..k {
        let j = rng.gen_range(i..work.len());
        work.swap(i, j);
    }
    work.truncate(k);
    Ok(work)
}

/// Uniform k-subset of `0..n`, in draw order. Floyd's algorithm, O(k) memory.
pub fn sample_range<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::invalid(format!(
            "cannot draw {k} items from a range of {n}"
        )));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for j in (n - k)..n {
        let t = rng.gen_range(0..=j);
        if chosen.contains(&t) {
            chosen.push(j);
        } else {
            chosen.push(t);
        }
    }
    Ok(chosen)
}
