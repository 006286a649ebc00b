//! Seeded counter-based random generator.
//!
//! Every draw is a pure function of (key, counter), so streams can be split
//! per tensor, per sample, or per chunk and replayed independently of
//! evaluation order. Gaussian samples come from Box-Muller.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct CounterRng {
    key: u64,
    counter: u64,
    cached_normal: Option<f64>,
}

impl CounterRng {
    pub fn new(key: u64) -> Self {
        CounterRng {
            key,
            counter: 0,
            cached_normal: None,
        }
    }

    /// Independent substream identified by an integer tag.
    pub fn derive(&self, tag: u64) -> CounterRng {
        CounterRng::new(mix(self.key ^ mix(tag.wrapping_add(GOLDEN))))
    }

    /// Independent substream identified by a string tag (FNV-1a fold).
    pub fn derive_str(&self, tag: &str) -> CounterRng {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in tag.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.derive(h)
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// First draw of this stream without advancing it; for keying
    /// substreams.
    pub fn next_key(&self) -> u64 {
        self.clone().next_u64()
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.cached_normal = Some(r * s);
        r * c
    }

    /// Unbiased-enough index draw for shuffling (multiply-shift).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Seeded Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
