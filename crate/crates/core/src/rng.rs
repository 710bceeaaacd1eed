//! Seeded, splittable random number generation.
//!
//! One fixed generator (ChaCha12, a counter-mode stream cipher) backs every
//! random draw in the toolkit. Children are derived from `(seed, label)` via
//! an FNV-1a hash, so each consumer — dataset generation, weight init,
//! dequantization, attack starts — gets an independent stream that is
//! reproducible from the root seed alone, regardless of draw order elsewhere.

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::math;

/// Name of the fixed generator, recorded in run metadata.
pub const ALGORITHM: &str = "chacha12";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, label: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic RNG with labeled splitting.
#[derive(Debug, Clone)]
pub struct DetRng {
    seed: u64,
    inner: ChaCha12Rng,
    /// Cached second Box–Muller output.
    spare_normal: Option<f64>,
}

impl DetRng {
    pub fn from_seed(seed: u64) -> Self {
        DetRng {
            seed,
            inner: ChaCha12Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// The seed this generator was constructed from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Words consumed from the stream so far.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Child generator derived from this generator's seed and `label`.
    ///
    /// Splitting depends only on `(seed, label)`, never on how many draws
    /// have been made, so sub-experiments stay independently reproducible.
    pub fn split(&self, label: &str) -> DetRng {
        DetRng::from_seed(fnv1a(self.seed, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal draw (Box–Muller; both outputs are consumed).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u ∈ (0, 1] keeps the log argument strictly positive.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = math::sqrt(-2.0 * math::ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare_normal = Some(r * math::sin(theta));
        r * math::cos(theta)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.normal();
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        let mut v = alloc::vec![0.0; n];
        self.fill_normal(&mut v);
        v
    }
}

/// Label path helper for nested consumers ("data/ring", "train/init", ...).
pub fn join_label(parent: &str, child: &str) -> String {
    let mut s = String::with_capacity(parent.len() + child.len() + 1);
    s.push_str(parent);
    s.push('/');
    s.push_str(child);
    s
}
