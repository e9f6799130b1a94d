//! Seeded random streams.
//!
//! Every stream is a xoshiro256++ generator whose 256-bit state is expanded
//! from a 64-bit seed with splitmix64 (`SeedableRng::seed_from_u64`).
//! Independent substreams are derived from `(seed, tag, index)` without
//! consuming anything from a parent stream, so adding a consumer never shifts
//! another consumer's draws.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::{Distribution, Gamma, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Clone, Debug)]
pub struct Rng {
    inner: Xoshiro256PlusPlus,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    /// Substream keyed by a module tag and an index (round, client, ...).
    pub fn derive(seed: u64, tag: &str, index: u64) -> Self {
        let mixed = splitmix64(seed ^ splitmix64(fnv1a(tag) ^ splitmix64(index)));
        Self::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform on `[lo, hi)`; returns `lo` when the range is empty.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// `log` of a Gamma(shape, 1) draw. Shapes below one use
    /// `G(a) = G(a + 1) · U^(1/a)` in log space, which stays finite for the
    /// tiny concentrations that Dirichlet label splits produce.
    pub fn log_gamma_sample(&mut self, shape: f64) -> f64 {
        assert!(shape > 0.0, "gamma shape must be positive");
        if shape >= 1.0 {
            let g: f64 = Gamma::new(shape, 1.0).expect("valid gamma").sample(&mut self.inner);
            return g.ln();
        }
        let g: f64 = Gamma::new(shape + 1.0, 1.0)
            .expect("valid gamma")
            .sample(&mut self.inner);
        // 1 - U lies in (0, 1], so the log is finite.
        let u = 1.0 - self.uniform();
        g.ln() + u.ln() / shape
    }

    /// Dirichlet draw; every concentration must be positive.
    pub fn dirichlet(&mut self, alpha: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = alpha.iter().map(|&a| self.log_gamma_sample(a)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    /// Index drawn proportionally to non-negative `weights`. Falls back to a
    /// uniform draw when every weight is zero.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return self.below(weights.len());
        }
        let mut target = self.uniform() * total;
        for (i, &w) in weights.iter().enumerate() {
            if target < w {
                return i;
            }
            target -= w;
        }
        // rounding left us past the end; take the last positive weight
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        // partial Fisher-Yates
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
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
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ_by_tag_and_index() {
        let a = Rng::derive(7, "data", 0).next_u64();
        let b = Rng::derive(7, "model", 0).next_u64();
        let c = Rng::derive(7, "data", 1).next_u64();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, Rng::derive(7, "data", 0).next_u64());
    }

    #[test]
    fn dirichlet_tiny_concentration_is_a_distribution() {
        let mut rng = Rng::new(3);
        for _ in 0..200 {
            let q = rng.dirichlet(&[0.001; 10]);
            let s: f64 = q.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(q.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn dirichlet_mean_matches_concentration() {
        let mut rng = Rng::new(11);
        let alpha = [2.0, 1.0, 1.0];
        let n = 20_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            for (m, v) in mean.iter_mut().zip(rng.dirichlet(&alpha)) {
                *m += v / n as f64;
            }
        }
        assert!((mean[0] - 0.5).abs() < 0.01, "{mean:?}");
        assert!((mean[1] - 0.25).abs() < 0.01, "{mean:?}");
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            let i = rng.categorical(&[0.0, 1.0, 0.0, 2.0]);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn without_replacement_is_distinct() {
        let mut rng = Rng::new(9);
        let mut s = rng.sample_without_replacement(20, 20);
        s.sort_unstable();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
    }
}
