//! Deterministic counter-based random streams.
//!
//! A stream is keyed by `(seed, label)`:
//!
//! ```text
//! key      = splitmix_finalize(fnv1a_64(seed.to_le_bytes() ++ label.as_bytes()))
//! draw(i)  = splitmix_finalize(key + (i + 1) * 0x9E3779B97F4A7C15)   (wrapping, i = 0, 1, ...)
//! ```
//!
//! where `fnv1a_64` uses offset basis `0xcbf29ce484222325` and prime
//! `0x100000001b3`, and `splitmix_finalize(z)` is
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! Derived quantities:
//! * `next_f64`: `(draw >> 11) * 2^-53`, uniform in `[0, 1)`.
//! * `below(n)`: rejection sampling; draws below `2^64 mod n` are discarded,
//!   otherwise `draw % n`.
//! * `fork(label)` on a stream `(seed, parent)` yields `(seed, parent + "/" + label)`.
//!
//! Every draw is a pure function of `(key, counter)`, so the sequence can be
//! reproduced bit-exactly by any port that follows the above.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(FNV_OFFSET, |h, b| {
        (h ^ b as u64).wrapping_mul(FNV_PRIME)
    })
}

/// Stream key for `(seed, label)`.
pub fn stream_key(seed: u64, label: &str) -> u64 {
    finalize(fnv1a(
        seed.to_le_bytes().into_iter().chain(label.bytes()),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    label: String,
    key: u64,
    counter: u64,
}

/// Opens the stream for `(seed, label)` at counter zero.
pub fn rng_fork(seed: u64, label: &str) -> RngStream {
    RngStream {
        seed,
        label: label.to_owned(),
        key: stream_key(seed, label),
        counter: 0,
    }
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Child stream labelled `parent/label`; does not advance `self`.
    pub fn fork(&self, label: &str) -> RngStream {
        rng_fork(self.seed, &format!("{}/{}", self.label, label))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        finalize(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return (x % n) as usize;
            }
        }
    }

    /// Fisher-Yates, iterating from the last index down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Index drawn from unnormalized non-negative weights by inverse CDF.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut target = self.next_f64() * total;
        for (i, w) in weights.iter().enumerate() {
            if target < *w {
                return i;
            }
            target -= w;
        }
        // Rounding can leave `target` marginally past the last bucket.
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}
