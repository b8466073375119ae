//! Deterministic indexed uniforms.
//!
//! Every construction in this crate consumes randomness as a two-sided
//! array of uniform `[0,1)` values that can be read at any index `i ∈ ℤ`,
//! any number of times, in any order. [`UniformStream`] realizes the array
//! as a counter-based generator: `value(i)` is a pure function of
//! `(seed, stream_id, i)`, so replay and random access at arbitrary
//! negative indices are free.

use serde::{Deserialize, Serialize};

/// Golden-ratio increment of the SplitMix64 counter sequence.
const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Domain-separation tags for the randomness lanes used by the coders.
///
/// Distinct lanes must never share uniforms: the age chain, the
/// thinning/block-filling steps and the excursion fills each read their
/// own family of values.
pub mod tags {
    /// Uniforms driving age-chain transitions.
    pub const CHAIN: u64 = 1;
    /// Uniforms for thinning and block filling.
    pub const FILL: u64 = 2;
    /// Uniforms for excursion path sampling.
    pub const EXCURSION: u64 = 3;
    /// Uniforms consumed by the exact stationary sampler.
    pub const ORACLE: u64 = 4;
    /// Per-state uniforms for coupling from the past.
    pub const CFTP: u64 = 5;
}

/// Read access to an indexed family of uniforms on `[0,1)`.
pub trait UniformSource {
    /// The uniform at index `i`.
    fn value(&self, i: i64) -> f64;
}

impl<S: UniformSource + ?Sized> UniformSource for &S {
    fn value(&self, i: i64) -> f64 {
        (**self).value(i)
    }
}

/// Counter-based uniform stream: a pure function of `(seed, stream_id, index)`.
///
/// Repeated queries at the same index return bit-identical values, and
/// streams with distinct ids behave as independent families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformStream {
    seed: u64,
    stream_id: u64,
}

impl UniformStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        UniformStream { seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Raw 64 random bits at index `i`.
    #[inline]
    pub fn bits(&self, i: i64) -> u64 {
        let key = mix64(self.seed ^ GAMMA)
            .wrapping_add(mix64(self.stream_id.wrapping_mul(0xd134_2543_de82_ef95)));
        mix64(key.wrapping_add((i as u64).wrapping_mul(GAMMA)))
    }

    /// Derived stream for lane `tag`, keyed at `anchor`.
    ///
    /// Fills and excursions consume many uniforms per block while the
    /// source construction hands them a single value at the block anchor;
    /// the derived stream expands that value into an indexed sub-family
    /// that is a pure function of `(parent, tag, anchor)` alone, so the
    /// fill of one block can never depend on values outside it.
    pub fn substream(&self, tag: u64, anchor: i64) -> UniformStream {
        UniformStream {
            seed: mix64(self.seed ^ tag.wrapping_mul(0xa076_1d64_78bd_642f))
                .wrapping_add((anchor as u64).wrapping_mul(GAMMA)),
            stream_id: mix64(self.stream_id ^ mix64(tag)).wrapping_add(anchor as u64),
        }
    }
}

impl UniformSource for UniformStream {
    #[inline]
    fn value(&self, i: i64) -> f64 {
        // 53 high bits, uniform on [0,1).
        (self.bits(i) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
