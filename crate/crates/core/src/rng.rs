//! Seeded random streams.
//!
//! The generator is ChaCha8 keyed by the 64-bit seed (little-endian in the
//! first 8 key bytes, remaining 24 bytes zero) and selecting the ChaCha stream
//! id given to [`Rng::with_stream`]. Derived draws are defined on top of the
//! raw `u64` output:
//!
//! - `uniform`: `(x >> 11) * 2^-53`, in `[0, 1)`.
//! - `normal`: Box-Muller, `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`; one value per
//!   two uniforms, nothing cached.
//! - `below(n)`: rejection sampling, accepting `x <= u64::MAX - (2^64 mod n)`
//!   and returning `x mod n`.
//! - `shuffle`: Fisher-Yates from the back, `j = below(i + 1)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::linalg::MathError;

/// Stream ids used by the library so that independent consumers of one seed
/// never share draws.
pub mod streams {
    pub const MODEL_INIT: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const META_BATCHES: u64 = 3;
    pub const DATA_GEN: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const NOISE: u64 = 6;
    pub const PROBE: u64 = 7;
}

#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
    seed: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream);
        Self { inner, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let rem = (u64::MAX % n + 1) % n;
        let limit = u64::MAX - rem;
        loop {
            let x = self.next_u64();
            if x <= limit {
                return x % n;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn choice<'a, T>(&mut self, items: &'a [T]) -> Result<&'a T, MathError> {
        if items.is_empty() {
            return Err(MathError::EmptyChoice);
        }
        Ok(&items[self.below(items.len() as u64) as usize])
    }

    /// A shuffled `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = Rng::with_stream(42, 1);
        let mut b = Rng::with_stream(42, 2);
        let da: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let db: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(da, db);
    }

    #[test]
    fn shuffle_of_one_is_identity() {
        let mut rng = Rng::new(3);
        let mut v = [7];
        rng.shuffle(&mut v);
        assert_eq!(v, [7]);
    }

    #[test]
    fn uniform_mean_near_half() {
        let mut rng = Rng::new(11);
        let n = 100_000;
        let mean = (0..n).map(|_| rng.uniform()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng::new(5);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn choice_on_empty_errors() {
        let mut rng = Rng::new(0);
        let empty: [u8; 0] = [];
        assert_eq!(rng.choice(&empty), Err(MathError::EmptyChoice));
        assert_eq!(*rng.choice(&[9]).unwrap(), 9);
    }

    #[test]
    fn below_stays_in_range() {
        let mut rng = Rng::new(8);
        let mut seen = [0usize; 3];
        for _ in 0..3000 {
            seen[rng.below(3) as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c > 900), "{seen:?}");
    }
}
