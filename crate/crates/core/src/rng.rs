//! SplitMix64, the 64-bit generator from Steele, Lea & Flood (OOPSLA 2014),
//! in the form popularised by Vigna's reference C code.
//!
//! Bundle plans must be reproducible by other implementations, so the plan
//! shuffle is pinned to this generator and to the bounded-draw rule in
//! [`SplitMix64::below`] rather than to a library whose stream may change.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw from `0..bound` by rejection: values below
    /// `2^64 mod bound` are discarded, the rest reduced modulo `bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }
}
