//! Deterministic PRNG shared by all stages.
//!
//! SplitMix64, pinned by recurrence so any reimplementation in another
//! language produces bit-identical streams for regression tests.

/// SplitMix64 generator. Identical seed + identical call sequence gives an
/// identical output sequence on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1). Scales the top 53 bits; a plain f64 division
    /// by 2^64 can round up to exactly 1.0 for outputs near u64::MAX.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
