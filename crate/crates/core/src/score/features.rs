//! Gaussian random features for time conditioning.
//!
//! Frequencies are drawn once at construction and frozen; the embedding of
//! time t is [sin(f₁t), cos(f₁t), …, sin(f_F t), cos(f_F t)].

use crate::rng::{standard_normal, substream};
use crate::{real, Real};

#[derive(Debug, Clone)]
pub struct TimeEmbedding<T> {
    frequencies: Vec<T>,
    scale: f64,
    seed: u64,
}

impl<T: Real> TimeEmbedding<T> {
    /// `n_features` frequency draws f_k = 2π·scale·n_k with n_k ~ N(0,1),
    /// frozen for the given seed. The embedding has length `2·n_features`.
    pub fn new(n_features: usize, scale: f64, seed: u64) -> Self {
        let mut rng = substream(seed, "time-embedding");
        let two_pi = 2.0 * std::f64::consts::PI;
        let frequencies = (0..n_features)
            .map(|_| {
                let n: f64 = standard_normal(&mut rng);
                real(two_pi * scale * n)
            })
            .collect();
        Self {
            frequencies,
            scale,
            seed,
        }
    }

    pub fn n_features(&self) -> usize {
        self.frequencies.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Feature vector at time t ∈ [0,1].
    pub fn features(&self, t: T) -> Vec<T> {
        assert!(
            t >= T::zero() && t <= T::one(),
            "time_features: t must be in [0,1]"
        );
        let mut out = Vec::with_capacity(self.dim());
        for &f in &self.frequencies {
            let a = f * t;
            out.push(a.sin());
            out.push(a.cos());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_t_same_vector() {
        let emb = TimeEmbedding::<f64>::new(16, 16.0, 5);
        assert_eq!(emb.features(0.37), emb.features(0.37));
        let rebuilt = TimeEmbedding::<f64>::new(16, 16.0, 5);
        assert_eq!(emb.features(0.37), rebuilt.features(0.37));
    }

    #[test]
    fn components_bounded_by_one() {
        let emb = TimeEmbedding::<f64>::new(32, 16.0, 1);
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert!(emb.features(t).iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn distinct_times_distinct_vectors() {
        // collision check over a grid of 10^3 t values
        let emb = TimeEmbedding::<f64>::new(32, 16.0, 9);
        let grid: Vec<Vec<f64>> = (0..1000)
            .map(|k| emb.features(k as f64 / 999.0))
            .collect();
        for w in grid.windows(2) {
            assert_ne!(w[0], w[1], "adjacent grid times collided");
        }
    }
}
