//! Bayesian inversion of the calibration: sample `p(x | y) ∝ p(y | x) p(x)`
//! with a one-dimensional random-walk Metropolis chain per observation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Standardization;
use crate::trainer::ModelArtifact;

const ADAPT_BATCH: usize = 25;
const ADAPT_FACTOR: f64 = 1.1;
const TARGET_ACCEPT: (f64, f64) = (0.2, 0.5);

/// Anything that gives a Gaussian predictive distribution of the
/// standardized proxy at a standardized covariate.
pub trait PredictiveModel {
    fn standardization(&self) -> Standardization;
    /// `(mean, total variance)` in standardized units.
    fn predictive(&self, x_std: f64) -> Result<(f64, f64)>;
}

impl PredictiveModel for ModelArtifact {
    fn standardization(&self) -> Standardization {
        self.standardization
    }

    fn predictive(&self, x_std: f64) -> Result<(f64, f64)> {
        let p = self.predict_std(x_std)?;
        Ok((p.mu, p.total_var()))
    }
}

/// Prior over the covariate, in raw units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriorSpec {
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PriorSpec::Gaussian { mean, sd } => {
                if !(mean.is_finite() && sd > 0.0 && sd.is_finite()) {
                    return Err(Error::invalid("gaussian prior needs a finite mean and sd > 0"));
                }
            }
            PriorSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi && (hi - lo).is_finite()) {
                    return Err(Error::invalid("uniform prior needs finite lo < hi with a finite width"));
                }
            }
        }
        Ok(())
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            PriorSpec::Gaussian { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
            }
            PriorSpec::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Chain starting point: the mean, or the interval midpoint.
    pub fn center(&self) -> f64 {
        match *self {
            PriorSpec::Gaussian { mean, .. } => mean,
            PriorSpec::Uniform { lo, hi } => lo + 0.5 * (hi - lo),
        }
    }
}

impl FromStr for PriorSpec {
    type Err = Error;

    /// `gaussian:MEAN,SD` or `uniform:LO,HI`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("prior `{s}` must look like kind:a,b")))?;
        let nums: Vec<&str> = rest.split(',').map(str::trim).collect();
        if nums.len() != 2 {
            return Err(Error::invalid(format!("prior `{s}` needs exactly two numbers")));
        }
        let parse = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::invalid(format!("prior value `{t}` is not a number")))
        };
        let (a, b) = (parse(nums[0])?, parse(nums[1])?);
        let prior = match kind.trim() {
            "gaussian" | "normal" => PriorSpec::Gaussian { mean: a, sd: b },
            "uniform" => PriorSpec::Uniform { lo: a, hi: b },
            other => {
                return Err(Error::UnknownTag {
                    what: "prior",
                    tag: other.to_string(),
                    available: "gaussian, uniform".into(),
                })
            }
        };
        prior.validate()?;
        Ok(prior)
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorSpec::Gaussian { mean, sd } => write!(f, "gaussian:{mean},{sd}"),
            PriorSpec::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// retained draws after burn-in and thinning
    pub n_samples: usize,
    pub burn_in: usize,
    /// initial proposal sd in standardized covariate units
    pub proposal_sd: f64,
    /// keep every `thin`-th post-burn-in state
    pub thin: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            burn_in: 1000,
            proposal_sd: 0.5,
            thin: 5,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.thin == 0 {
            return Err(Error::invalid("n_samples and thin must be positive"));
        }
        if !(self.proposal_sd > 0.0 && self.proposal_sd.is_finite()) {
            return Err(Error::invalid("proposal_sd must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q025: f64,
    pub q25: f64,
    pub q75: f64,
    pub q975: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    /// raw covariate units
    pub samples: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub quantiles: Quantiles,
    /// post-burn-in acceptance rate
    pub acceptance_rate: f64,
    /// batch-means Monte Carlo standard error of the mean
    pub mcse: f64,
    /// proposal sd after burn-in adaptation (standardized units)
    pub proposal_sd: f64,
}

/// Unnormalized log posterior of a raw covariate value given a raw proxy value.
pub fn log_unnormalized_posterior<M: PredictiveModel + ?Sized>(
    x_raw: f64,
    y_obs: f64,
    model: &M,
    prior: &PriorSpec,
) -> f64 {
    let lp = prior.log_density(x_raw);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    let s = model.standardization();
    let y = s.y_to_std(y_obs);
    match model.predictive(s.x_to_std(x_raw)) {
        Ok((m, v)) if v > 0.0 => -0.5 * ((2.0 * PI * v).ln() + (y - m).powi(2) / v) + lp,
        _ => f64::NEG_INFINITY,
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Batch-means Monte Carlo standard error of the sample mean.
pub fn batch_means_mcse(samples: &[f64]) -> f64 {
    let n = samples.len();
    let b = (n as f64).sqrt().floor() as usize;
    if b < 2 {
        return f64::NAN;
    }
    let m = n / b;
    let means: Vec<f64> = (0..b)
        .map(|k| samples[k * m..(k + 1) * m].iter().sum::<f64>() / m as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var_b = means.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var_b / b as f64).sqrt()
}

pub fn sample_posterior<M: PredictiveModel + ?Sized>(
    y_obs: f64,
    model: &M,
    prior: &PriorSpec,
    cfg: &ChainConfig,
) -> Result<PosteriorSummary> {
    cfg.validate()?;
    prior.validate()?;
    if !y_obs.is_finite() {
        return Err(Error::invalid(format!("observation {y_obs} is not finite")));
    }
    let s = model.standardization();
    let log_post = |x_std: f64| log_unnormalized_posterior(s.x_from_std(x_std), y_obs, model, prior);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = s.x_to_std(prior.center());
    let mut lp = log_post(x);
    if lp == f64::NEG_INFINITY {
        return Err(Error::invalid("log posterior is -inf at the prior center"));
    }
    let mut step = cfg.proposal_sd;

    let step_once = |x: &mut f64, lp: &mut f64, step: f64, rng: &mut ChaCha8Rng| -> bool {
        let z: f64 = rng.sample(StandardNormal);
        let cand = *x + step * z;
        let lc = log_post(cand);
        let u: f64 = rng.random();
        if lc > f64::NEG_INFINITY && (lc >= *lp || u.ln() < lc - *lp) {
            *x = cand;
            *lp = lc;
            true
        } else {
            false
        }
    };

    let mut accepted_in_batch = 0;
    for i in 0..cfg.burn_in {
        if step_once(&mut x, &mut lp, step, &mut rng) {
            accepted_in_batch += 1;
        }
        if (i + 1) % ADAPT_BATCH == 0 {
            let rate = accepted_in_batch as f64 / ADAPT_BATCH as f64;
            if rate > TARGET_ACCEPT.1 {
                step *= ADAPT_FACTOR;
            } else if rate < TARGET_ACCEPT.0 {
                step /= ADAPT_FACTOR;
            }
            accepted_in_batch = 0;
        }
    }

    let total = cfg.n_samples * cfg.thin;
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut accepted = 0usize;
    for i in 0..total {
        if step_once(&mut x, &mut lp, step, &mut rng) {
            accepted += 1;
        }
        if (i + 1) % cfg.thin == 0 {
            samples.push(s.x_from_std(x));
        }
    }
    if accepted == 0 {
        return Err(Error::NoAcceptedProposals);
    }
    Ok(summarize(samples, accepted as f64 / total as f64, step))
}

fn summarize(samples: Vec<f64>, acceptance_rate: f64, proposal_sd: f64) -> PosteriorSummary {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = if samples.len() > 1 {
        (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p| quantile_sorted(&sorted, p);
    PosteriorSummary {
        mcse: batch_means_mcse(&samples),
        mean,
        median: q(0.5),
        sd,
        quantiles: Quantiles {
            q025: q(0.025),
            q25: q(0.25),
            q75: q(0.75),
            q975: q(0.975),
        },
        acceptance_rate,
        proposal_sd,
        samples,
    }
}

/// One independent chain per observation, seeded `seed + index`.
///
/// `priors` holds either one prior per observation or a single shared prior.
pub fn invert_series<M: PredictiveModel + ?Sized>(
    y_series: &[f64],
    model: &M,
    priors: &[PriorSpec],
    cfg: &ChainConfig,
) -> Result<Vec<Result<PosteriorSummary>>> {
    if !(priors.len() == y_series.len() || priors.len() == 1) {
        if y_series.is_empty() {
            return Ok(Vec::new());
        }
        return Err(Error::DimensionMismatch {
            expected: y_series.len(),
            actual: priors.len(),
        });
    }
    Ok(y_series
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let prior = if priors.len() == 1 { &priors[0] } else { &priors[i] };
            let chain = ChainConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            sample_posterior(y, model, prior, &chain)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// μ(x) = x, total variance 1, identity standardization.
    struct Linear;

    impl PredictiveModel for Linear {
        fn standardization(&self) -> Standardization {
            Standardization::identity()
        }
        fn predictive(&self, x: f64) -> Result<(f64, f64)> {
            Ok((x, 1.0))
        }
    }

    #[test]
    fn prior_parsing() {
        assert_eq!(
            "gaussian:20,3".parse::<PriorSpec>().unwrap(),
            PriorSpec::Gaussian { mean: 20.0, sd: 3.0 }
        );
        assert_eq!(
            "uniform: 0, 30".parse::<PriorSpec>().unwrap(),
            PriorSpec::Uniform { lo: 0.0, hi: 30.0 }
        );
        for bad in ["gaussian:1", "uniform:3,1", "gaussian:0,-1", "cauchy:0,1", "x", "gaussian:a,b", "uniform:-1e308,1e308"] {
            assert!(bad.parse::<PriorSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn outside_uniform_support_is_negative_infinity() {
        let p = PriorSpec::Uniform { lo: 0.0, hi: 1.0 };
        assert_eq!(log_unnormalized_posterior(1.5, 0.0, &Linear, &p), f64::NEG_INFINITY);
    }

    #[test]
    fn zero_exponent_at_the_mean() {
        let p = PriorSpec::Gaussian { mean: 0.0, sd: 1.0 };
        let v = log_unnormalized_posterior(0.7, 0.7, &Linear, &p);
        let expect = -0.5 * (2.0 * PI).ln() + p.log_density(0.7);
        assert!((v - expect).abs() < 1e-14);
    }

    #[test]
    fn conjugate_mode_is_one_half() {
        let p = PriorSpec::Gaussian { mean: 0.0, sd: 1.0 };
        let f = |x: f64| log_unnormalized_posterior(x, 1.0, &Linear, &p);
        let grid: Vec<f64> = (-2000..=2000).map(|i| i as f64 / 1000.0).collect();
        let best = grid.iter().cloned().max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        assert!((best - 0.5).abs() < 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = PriorSpec::Gaussian { mean: 0.0, sd: 1.0 };
        let cfg = ChainConfig {
            n_samples: 500,
            burn_in: 200,
            seed: 11,
            ..ChainConfig::default()
        };
        let a = sample_posterior(1.0, &Linear, &p, &cfg).unwrap();
        let b = sample_posterior(1.0, &Linear, &p, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.quantiles.q025 <= a.quantiles.q25);
        assert!(a.quantiles.q25 <= a.median && a.median <= a.quantiles.q75);
        assert!(a.quantiles.q75 <= a.quantiles.q975);
    }

    #[test]
    fn series_handles_empty_and_shared_priors() {
        let p = PriorSpec::Gaussian { mean: 0.0, sd: 1.0 };
        let cfg = ChainConfig {
            n_samples: 200,
            burn_in: 100,
            ..ChainConfig::default()
        };
        assert!(invert_series(&[], &Linear, &[p], &cfg).unwrap().is_empty());
        let out = invert_series(&[1.0, f64::NAN, 0.0], &Linear, &[p], &cfg).unwrap();
        assert!(out[0].is_ok() && out[1].is_err() && out[2].is_ok());
        assert!(invert_series(&[1.0, 2.0], &Linear, &[p, p, p], &cfg).is_err());
    }

    #[test]
    fn mcse_of_iid_draws_matches_sd_over_root_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..40_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let m = batch_means_mcse(&v);
        assert!((m / (1.0 / 200.0) - 1.0).abs() < 0.25, "{m}");
    }
}
