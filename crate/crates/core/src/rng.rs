//! Stream-partitioned random numbers.
//!
//! Every consumer derives its generator from `(seed, domain, index)`. The
//! ChaCha key comes from the seed and the 64-bit stream id packs the domain
//! tag into the top 16 bits, so work split into numbered blocks reproduces
//! bit-for-bit no matter how the blocks are scheduled across threads.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which part of the program is drawing. Distinct domains never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Domain {
    GaussianSample = 1,
    Covariates = 2,
    ResponseNoise = 3,
    Permutation = 4,
    MomentEstimate = 5,
    Oracle = 6,
}

const INDEX_BITS: u32 = 48;

pub fn stream_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    debug_assert!(index < (1 << INDEX_BITS));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << INDEX_BITS) | index);
    rng
}

/// Sub-seed for nested partitioning (e.g. one permutation stream per bin).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
#[inline]
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal quantile function.
#[inline]
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Standard normal draw by inversion; consumes exactly one `u64` per call.
#[inline]
pub fn standard_normal(rng: &mut impl RngCore) -> f64 {
    normal_quantile(open_unit(rng))
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
