//! Splittable counter-based random generator.
//!
//! Every random quantity in the library flows from one 64-bit seed. Draw `i`
//! of stream `key` is `mix64(key + i * GAMMA)`, so identical seeds give
//! bit-identical output and independent streams can be split off by label
//! without sharing state.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitRng {
    key: u64,
    counter: u64,
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        SplitRng {
            key: mix64(seed ^ GAMMA),
            counter: 0,
        }
    }

    /// Independent stream derived from this one; does not consume draws.
    pub fn split(&self, label: u64) -> Self {
        SplitRng {
            key: mix64(self.key ^ mix64(label.wrapping_mul(GAMMA) ^ 0x1656_67b1_9e37_79f9)),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)));
        self.counter += 1;
        v
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller (two uniforms per draw).
    pub fn normal(&mut self) -> f64 {
        let u1 = (1.0 - self.uniform()).max(f64::MIN_POSITIVE);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
