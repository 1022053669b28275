//! Counter-based random streams.
//!
//! Every stream is a ChaCha20 keystream keyed by the run seed and selected by
//! a 64-bit stream index, so replica `i` draws the same numbers no matter
//! which worker thread evaluates it or in which order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type StreamRng = ChaCha20Rng;

/// Independent stream families. The family occupies the upper 16 bits of the
/// stream index so that replica indices of different experiments never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Domain {
    Paths = 1,
    Chain = 2,
    Moments = 3,
    Selftest = 4,
    User = 5,
}

pub fn stream_index(domain: Domain, index: u64) -> u64 {
    debug_assert!(index < (1 << 48));
    ((domain as u64) << 48) | index
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn domain_rng(seed: u64, domain: Domain, index: u64) -> StreamRng {
    stream_rng(seed, stream_index(domain, index))
}

#[inline]
pub fn standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = rng.sample(StandardNormal);
    T::lit(z)
}

pub fn fill_standard_normal<T: Real, R: Rng + ?Sized>(rng: &mut R, out: &mut [T]) {
    for v in out.iter_mut() {
        *v = standard_normal(rng);
    }
}

#[inline]
pub fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}

/// Position of a stream, for checkpoints.
pub fn stream_position(rng: &StreamRng) -> (u64, u128) {
    (rng.get_stream(), rng.get_word_pos())
}

pub fn restore_stream(seed: u64, stream: u64, word_pos: u128) -> StreamRng {
    let mut rng = stream_rng(seed, stream);
    rng.set_word_pos(word_pos);
    rng
}
