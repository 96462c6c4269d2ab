//! Albert–Chib latent utilities for probit models.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

/// Below this lower bound plain rejection from N(0,1) is efficient enough.
const NAIVE_BOUND: f64 = 0.45;

/// Draws `X ~ N(0, 1)` conditioned on `X > lower`.
///
/// Uses plain rejection for modest bounds and Robert's exponential proposal
/// for the far tail, so it stays finite for bounds many sds out.
pub fn truncated_standard_normal<R: Rng + ?Sized>(lower: f64, rng: &mut R) -> f64 {
    if lower < NAIVE_BOUND {
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x > lower {
                return x;
            }
        }
    }
    let rate = 0.5 * (lower + (lower * lower + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let x = lower + e / rate;
        let u: f64 = rng.random();
        if u <= (-0.5 * (x - rate) * (x - rate)).exp() && x > lower {
            return x;
        }
    }
}

/// One latent draw: `N(mean, 1)` truncated to `(0, ∞)` when `positive`,
/// otherwise to `(-∞, 0]`.
#[inline]
pub fn draw_latent<R: Rng + ?Sized>(positive: bool, mean: f64, rng: &mut R) -> f64 {
    if positive {
        mean + truncated_standard_normal(-mean, rng)
    } else {
        mean - truncated_standard_normal(mean, rng)
    }
}

/// Draws the latent utility for every observation.
pub fn sample_latent<R: Rng + ?Sized>(y: &[u8], fit: &[f64], rng: &mut R) -> Vec<f64> {
    assert_eq!(y.len(), fit.len(), "response and fit lengths differ");
    y.iter().zip(fit).map(|(&yi, &m)| draw_latent(yi == 1, m, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::chain_rng;

    #[test]
    fn half_normal_mean() {
        let mut rng = chain_rng(7);
        let n = 100_000;
        let draws = sample_latent(&vec![1; n], &vec![0.0; n], &mut rng);
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.7979).abs() < 0.01, "{mean}");
        assert!(draws.iter().all(|&z| z > 0.0));
    }

    #[test]
    fn negative_truncation() {
        let mut rng = chain_rng(8);
        let draws = sample_latent(&vec![0; 10_000], &vec![0.0; 10_000], &mut rng);
        assert!(draws.iter().all(|&z| z <= 0.0));
    }

    #[test]
    fn extreme_truncation_stays_finite() {
        let mut rng = chain_rng(9);
        for &mean in &[-5.0, -12.0, -40.0] {
            for _ in 0..2_000 {
                let z = draw_latent(true, mean, &mut rng);
                assert!(z.is_finite() && z > 0.0, "mean={mean} z={z}");
            }
            for _ in 0..2_000 {
                let z = draw_latent(false, -mean, &mut rng);
                assert!(z.is_finite() && z <= 0.0);
            }
        }
    }

    #[test]
    fn tail_sampler_matches_truncated_mean() {
        // E[X | X > a] = φ(a) / (1 - Φ(a))
        let mut rng = chain_rng(10);
        let a = 2.5;
        let n = 200_000;
        let mean = (0..n).map(|_| truncated_standard_normal(a, &mut rng)).sum::<f64>() / n as f64;
        let want = crate::normal::pdf(a) / crate::normal::sf(a);
        assert!((mean - want).abs() < 0.005, "{mean} vs {want}");
    }
}
