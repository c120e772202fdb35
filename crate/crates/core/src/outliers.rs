//! Bernoulli outlier labels with a symmetric displaced-Gaussian outlier likelihood.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    /// prior outlier probability
    pub q: f64,
    /// outlier displacement in predictive standard deviations
    pub d: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self { q: 0.065, d: 2.48 }
    }
}

impl OutlierConfig {
    pub fn new(q: f64, d: f64) -> Result<Self> {
        let c = Self { q, d };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid(format!("q must lie in (0, 1), got {}", self.q)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::invalid(format!("d must be positive, got {}", self.d)));
        }
        Ok(())
    }

    /// `log(L₁ / L₀)` for a standardized residual `r`.
    pub fn log_likelihood_ratio(&self, r: f64) -> f64 {
        // log[½e^{-(r-d)²/2} + ½e^{-(r+d)²/2}] + r²/2 = -d²/2 + log cosh(d r)
        -0.5 * self.d * self.d + log_cosh(self.d * r)
    }
}

fn log_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Posterior probability that an observation is an outlier.
///
/// `total_var` is the inlier predictive variance `ν + Λ` at the observation.
pub fn posterior_prob_outlier(y: f64, mu: f64, total_var: f64, cfg: &OutlierConfig) -> Result<f64> {
    if !(total_var > 0.0) {
        return Err(Error::invalid(format!(
            "predictive variance must be positive, got {total_var}"
        )));
    }
    Ok(prob_from_residual((y - mu) / total_var.sqrt(), cfg))
}

/// Same as [`posterior_prob_outlier`] for an already standardized residual.
pub fn prob_from_residual(r: f64, cfg: &OutlierConfig) -> f64 {
    let log_odds = cfg.q.ln() - (-cfg.q).ln_1p() + cfg.log_likelihood_ratio(r);
    logistic(log_odds)
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Independent Bernoulli draws, one uniform consumed per entry in order.
pub fn sample_labels<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Vec<bool> {
    probs.iter().map(|&p| rng.random::<f64>() < p).collect()
}

pub fn sample_labels_seeded(probs: &[f64], seed: u64) -> Vec<bool> {
    sample_labels(probs, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierState {
    /// `true` marks an outlier
    pub labels: Vec<bool>,
    pub posterior_probs: Vec<f64>,
}

impl OutlierState {
    pub fn all_inliers(n: usize) -> Self {
        Self {
            labels: vec![false; n],
            posterior_probs: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inlier_indices(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| !self.labels[i]).collect()
    }

    pub fn outlier_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&l| l).count() as f64 / self.labels.len() as f64
    }

    /// Deterministic classification: outlier when the posterior probability is at least `threshold`.
    pub fn classify(&self, threshold: f64) -> Vec<bool> {
        self.posterior_probs.iter().map(|&p| p >= threshold).collect()
    }

    /// Maximum a posteriori labels (`threshold = 0.5`).
    pub fn map_labels(&self) -> Vec<bool> {
        self.classify(0.5)
    }
}
