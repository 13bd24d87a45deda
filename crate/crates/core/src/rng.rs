//! Seeded uniform generator shared by every sampler.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood, 2014): the state
//! advances by the golden-ratio increment `0x9E3779B97F4A7C15` and each
//! output is the state passed through the MurmurHash3-style finalizer with
//! constants `0xBF58476D1CE4E5B9` / `0x94D049BB133111EB`. A uniform variate
//! in the open interval (0, 1) is `((x >> 12) + 0.5) · 2⁻⁵²`. Everything is
//! integer arithmetic plus one exact conversion, so streams are identical
//! on every platform.
//!
//! First five uniforms for seed 1:
//!
//! ```text
//! 0.5665615751722809
//! 0.7457817572627011
//! 0.9710027535867963
//! 0.4443592170557721
//! 0.44426470082635816
//! ```

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
    state: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform variate strictly inside (0, 1).
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// Independent generator for stream `key`, derived from this
    /// generator's seed (not its current position): `mix(seed ^ mix(key + γ))`.
    pub fn split(&self, key: u64) -> SeededRng {
        SeededRng::new(mix(self.seed ^ mix(key.wrapping_add(GOLDEN_GAMMA))))
    }
}
