//! Counter-based random streams.
//!
//! A stream is addressed by `(seed, index)`. Draw `c` of a stream is a pure
//! function of `(seed, index, c)`, so Monte Carlo sample `i` can be generated
//! on any worker without shared state and still reproduce bit for bit.
//!
//! Construction:
//! - `key = fmix(fmix(seed ^ SEED_SALT) ^ (index · INDEX_MUL))`
//! - draw `c` (starting at 1) is `mix(key + c · GAMMA)`
//!
//! where `mix` is the SplitMix64 finaliser (Stafford variant 13) and `fmix`
//! is the MurmurHash3 64-bit finaliser.

use crate::special::normal_quantile_unchecked;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const SEED_SALT: u64 = 0x5851_F42D_4C95_7F2D;
const INDEX_MUL: u64 = 0xD2B7_4407_B1CE_6E93;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn fmix(mut z: u64) -> u64 {
    z ^= z >> 33;
    z = z.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    z ^= z >> 33;
    z = z.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    z ^ (z >> 33)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
    index: u64,
    key: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let key = fmix(fmix(seed ^ SEED_SALT) ^ index.wrapping_mul(INDEX_MUL));
        Self {
            seed,
            index,
            key,
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Number of 64-bit draws consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform on the open interval `(0, 1)`: `(⌊u / 2¹²⌋ + ½) · 2⁻⁵²`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// Standard normal by inverse-CDF transform of [`Self::next_uniform`].
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        normal_quantile_unchecked(self.next_uniform())
    }
}
