//! Non-adaptive samplers: independent leverage-score inclusion and uniform
//! sampling with replacement. Both emit [`SampleSet`]s with loss weights
//! (the fit minimizes `sum_i w_i (beta'x_i - y_i)^2`), so a leverage weight
//! is `1/p` rather than the `1/sqrt(p)` row scaling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::asura::SampleSet;
use crate::error::{Error, Result};
use crate::linalg::{leverage_scores, SvdFactors};
use crate::rng::seeded_rng;

pub const DEFAULT_OVERSAMPLE_C: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageConfig {
    pub epsilon: f64,
    pub oversample_c: f64,
    pub rng_seed: u64,
}

impl LeverageConfig {
    pub fn new(epsilon: f64) -> Self {
        LeverageConfig {
            epsilon,
            oversample_c: DEFAULT_OVERSAMPLE_C,
            rng_seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// Expected sample size `ceil(C d ln(d) / epsilon)`, at least 1.
    /// `ln` is replaced by 1 for `d = 1`, where it would vanish.
    pub fn target_size(&self, dim: usize) -> usize {
        let d = dim as f64;
        let log_d = if dim > 1 { d.ln() } else { 1.0 };
        ((self.oversample_c * d * log_d / self.epsilon).ceil() as usize).max(1)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(self.oversample_c > 0.0 && self.oversample_c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "oversample_c must be positive, got {}",
                self.oversample_c
            )));
        }
        Ok(())
    }
}

/// Inclusion probabilities `min(1, (m/d) ||U(x)||^2)` for target size `m`.
pub fn inclusion_probabilities(svd: &SvdFactors, m: usize) -> Vec<f64> {
    let scale = m as f64 / svd.rank().max(1) as f64;
    leverage_scores(svd)
        .into_iter()
        .map(|s| (scale * s).min(1.0))
        .collect()
}

pub fn leverage_sample(svd: &SvdFactors, cfg: &LeverageConfig) -> Result<SampleSet> {
    cfg.validate()?;
    let probs = inclusion_probabilities(svd, cfg.target_size(svd.rank()));
    let mut rng = seeded_rng(cfg.rng_seed);
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    for (i, &p) in probs.iter().enumerate() {
        // One uniform draw per row keeps the stream aligned across instances.
        let r: f64 = rng.random();
        if p > 0.0 && r < p {
            indices.push(i);
            weights.push(1.0 / p);
        }
    }
    Ok(SampleSet {
        indices,
        weights,
        coefficients: None,
        gamma: None,
        u_final: None,
        l_final: None,
    })
}

pub fn uniform_sample(n_rows: usize, m: usize, rng_seed: u64) -> Result<SampleSet> {
    if m == 0 {
        return Err(Error::InvalidInput("uniform sample size must be at least 1".into()));
    }
    if n_rows == 0 {
        return Err(Error::InvalidInput("cannot sample from zero rows".into()));
    }
    let mut rng = seeded_rng(rng_seed);
    let indices: Vec<usize> = (0..m).map(|_| rng.random_range(0..n_rows)).collect();
    let w = n_rows as f64 / m as f64;
    Ok(SampleSet {
        weights: vec![w; m],
        indices,
        coefficients: None,
        gamma: None,
        u_final: None,
        l_final: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{thin_svd, Matrix, DEFAULT_RANK_TOL};

    #[test]
    fn target_size_formula() {
        let cfg = LeverageConfig::new(0.1);
        assert_eq!(cfg.target_size(10), (15.0 * 10.0 * 10f64.ln() / 0.1).ceil() as usize);
        assert_eq!(cfg.target_size(1), 150);
    }

    #[test]
    fn identity_with_m_equal_d_takes_every_row() {
        let svd = thin_svd(&Matrix::identity(4), DEFAULT_RANK_TOL).unwrap();
        let probs = inclusion_probabilities(&svd, 4);
        assert!(probs.iter().all(|&p| (p - 1.0).abs() < 1e-12));
        // Any target of at least d saturates every probability.
        let cfg = LeverageConfig::new(0.5).with_seed(3);
        let s = leverage_sample(&svd, &cfg).unwrap();
        assert_eq!(s.indices, vec![0, 1, 2, 3]);
        assert!(s.weights.iter().all(|&w| w == 1.0));
        assert!(s.coefficients.is_none());
    }

    #[test]
    fn saturated_rows_always_included() {
        let mut rows = vec![vec![10.0, 0.0]];
        rows.extend((0..50).map(|i| vec![0.0, 1.0 + i as f64 * 0.01]));
        let svd = thin_svd(&Matrix::from_rows(&rows).unwrap(), DEFAULT_RANK_TOL).unwrap();
        for seed in 0..20 {
            let s = leverage_sample(&svd, &LeverageConfig::new(0.9).with_seed(seed)).unwrap();
            assert_eq!(s.indices[0], 0);
            assert_eq!(s.weights[0], 1.0);
        }
    }

    #[test]
    fn uniform_single_row() {
        let s = uniform_sample(1, 3, 0).unwrap();
        assert_eq!(s.indices, vec![0, 0, 0]);
        assert!(s.weights.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert!(uniform_sample(5, 0, 0).is_err());
    }

    #[test]
    fn uniform_is_unbiased_per_row() {
        let (n, m, trials) = (6, 4, 6000);
        let mut totals = vec![0.0; n];
        for t in 0..trials {
            let s = uniform_sample(n, m, t).unwrap();
            for (&i, &w) in s.indices.iter().zip(&s.weights) {
                totals[i] += w;
            }
        }
        for t in totals {
            assert!((t / trials as f64 - 1.0).abs() < 0.05);
        }
    }
}
