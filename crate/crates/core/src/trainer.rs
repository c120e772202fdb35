//! The alternating training loop and its diagnostics.
//!
//! Each iteration, conditioned on the current inliers:
//! 1. tune kernel hyperparameters (warm-started from the previous iteration),
//! 2. fit the GP posterior and evaluate μ, ν at every point,
//! 3. every `k_reselect_every` iterations, re-select the bandwidth fraction K,
//! 4. rebuild Λ from the inlier residual weights,
//! 5. compute label posteriors for every point and resample the labels.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::TrainedPosterior;
use crate::hetvar::{residual_weights, select_k_from_moments, KernelKind, VarianceModel};
use crate::io::Standardization;
use crate::kernels::{FeatureMap, KernelParams};
use crate::outliers::{prob_from_residual, sample_labels, OutlierConfig, OutlierState};
use crate::tuning::{optimize_with_map, TuningConfig};

/// Finite-difference step for curvature, in standardized covariate units.
pub const CURVATURE_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLoopConfig {
    pub max_iters: usize,
    pub var_floor: f64,
    pub k_reselect_every: usize,
    pub k_candidates: Vec<f64>,
    pub outlier: OutlierConfig,
    /// `0` disables early stopping
    pub convergence_window: usize,
    pub convergence_rel_tol: f64,
    /// also stop when the window change is within this many standard errors
    /// of label-sampling noise; `0` leaves only the relative rule
    pub convergence_noise_z: f64,
    pub seed: u64,
    pub kernel_kind: KernelKind,
    pub feature_map: FeatureMap,
    pub tuning: TuningConfig,
    /// simplex edge for warm-started tuning after the first iteration
    pub warm_start_step: f64,
}

impl Default for TrainLoopConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            var_floor: 1e-8,
            k_reselect_every: 10,
            k_candidates: (1..=10).map(|i| i as f64 / 100.0).collect(),
            outlier: OutlierConfig::default(),
            convergence_window: 5,
            convergence_rel_tol: 1e-4,
            convergence_noise_z: 2.0,
            seed: 0,
            kernel_kind: KernelKind::Gaussian,
            feature_map: FeatureMap::default(),
            tuning: TuningConfig::default(),
            warm_start_step: 0.1,
        }
    }
}

impl TrainLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.k_reselect_every == 0 {
            return Err(Error::invalid("max_iters and k_reselect_every must be positive"));
        }
        if !(self.var_floor > 0.0) || !(self.warm_start_step > 0.0) {
            return Err(Error::invalid("var_floor and warm_start_step must be positive"));
        }
        if !(self.convergence_rel_tol >= 0.0 && self.convergence_noise_z >= 0.0) {
            return Err(Error::invalid("convergence tolerances must be non-negative"));
        }
        if self.k_candidates.is_empty()
            || self.k_candidates.iter().any(|c| !(*c > 0.0 && *c <= 1.0))
        {
            return Err(Error::invalid("K candidates must be non-empty fractions in (0, 1]"));
        }
        self.outlier.validate()?;
        if self.tuning.init.dim() != self.feature_map.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_map.dim(),
                actual: self.tuning.init.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub avg_inlier_loglik: f64,
    pub outlier_fraction: f64,
    pub k_fraction: f64,
}

/// Everything needed to predict, classify and invert.
///
/// `train_x`/`train_y` hold all observations (standardized, sorted by x).
/// `labels.labels` is the inlier mask the posterior and variance model were
/// conditioned on; `labels.posterior_probs` are the final label posteriors.
#[derive(Clone, Debug)]
pub struct ModelArtifact {
    pub standardization: Standardization,
    pub config: TrainLoopConfig,
    pub train_x: Vec<f64>,
    pub train_y: Vec<f64>,
    pub params: KernelParams,
    pub posterior: TrainedPosterior,
    pub variance: VarianceModel,
    pub labels: OutlierState,
    pub history: Vec<IterationRecord>,
}

/// Posterior moments at one standardized covariate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mu: f64,
    pub nu: f64,
    pub lambda: f64,
}

impl Prediction {
    pub fn total_var(&self) -> f64 {
        self.nu + self.lambda
    }
}

impl ModelArtifact {
    pub fn predict_std(&self, x: f64) -> Result<Prediction> {
        let (mu, nu) = self.posterior.predict(x)?;
        Ok(Prediction {
            mu,
            nu,
            lambda: self.variance.eval(x),
        })
    }

    pub fn predict_many_std(&self, xs: &[f64]) -> Result<Vec<Prediction>> {
        Ok(self
            .posterior
            .predict_many(xs)?
            .into_iter()
            .zip(xs)
            .map(|((mu, nu), &x)| Prediction {
                mu,
                nu,
                lambda: self.variance.eval(x),
            })
            .collect())
    }

    /// Predictive mean and standard deviation in raw units.
    pub fn predict_raw(&self, x_raw: f64) -> Result<(f64, f64)> {
        let s = &self.standardization;
        let p = self.predict_std(s.x_to_std(x_raw))?;
        Ok((s.y_from_std(p.mu), p.total_var().sqrt() * s.y_scale))
    }

    /// Final classification of the training points (posterior probability ≥ ½).
    pub fn map_labels(&self) -> Vec<bool> {
        self.labels.map_labels()
    }

    /// Label posterior for an arbitrary standardized observation.
    pub fn outlier_prob_std(&self, x: f64, y: f64) -> Result<f64> {
        let p = self.predict_std(x)?;
        Ok(prob_from_residual((y - p.mu) / p.total_var().sqrt(), &self.config.outlier))
    }
}

fn gauss_logpdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (y - mean).powi(2) / var)
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Runs the training loop on standardized data.
pub fn train(x: &[f64], y: &[f64], cfg: &TrainLoopConfig) -> Result<ModelArtifact> {
    train_standardized(x, y, Standardization::identity(), cfg)
}

/// Standardizes raw data with `s`, trains, and records `s` in the artifact.
pub fn train_raw(
    x_raw: &[f64],
    y_raw: &[f64],
    s: Standardization,
    cfg: &TrainLoopConfig,
) -> Result<ModelArtifact> {
    s.validate()?;
    let x: Vec<f64> = x_raw.iter().map(|&v| s.x_to_std(v)).collect();
    let y: Vec<f64> = y_raw.iter().map(|&v| s.y_to_std(v)).collect();
    train_standardized(&x, &y, s, cfg)
}

fn train_standardized(
    x: &[f64],
    y: &[f64],
    standardization: Standardization,
    cfg: &TrainLoopConfig,
) -> Result<ModelArtifact> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 10 {
        return Err(Error::invalid(format!(
            "training needs at least 10 observations, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data must be finite"));
    }

    // stable sort by x makes the artifact independent of input order
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let n = xs.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut labels = vec![false; n];
    let mut lambda_all = vec![sample_variance(&ys).max(cfg.var_floor); n];
    let mut params = cfg.tuning.init.clone();
    let mut k_fraction = cfg.k_candidates[0];
    let mut history = Vec::new();
    let mut last = None;

    for iter in 1..=cfg.max_iters {
        let inliers: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
        if inliers.len() < 3 {
            return Err(Error::TooFewInliers {
                iteration: iter,
                count: inliers.len(),
            });
        }
        let x_in: Vec<f64> = inliers.iter().map(|&i| xs[i]).collect();
        let y_in: Vec<f64> = inliers.iter().map(|&i| ys[i]).collect();
        let noise_in: Vec<f64> = inliers.iter().map(|&i| lambda_all[i]).collect();

        let tuning = TuningConfig {
            init: params.clone(),
            initial_step: if iter == 1 {
                cfg.tuning.initial_step
            } else {
                cfg.warm_start_step
            },
            ..cfg.tuning.clone()
        };
        params = optimize_with_map(cfg.feature_map, &x_in, &y_in, &noise_in, &tuning)?.params;
        let posterior = TrainedPosterior::fit(cfg.feature_map, &x_in, &y_in, &params, &noise_in)?;

        let (mu, nu): (Vec<f64>, Vec<f64>) = posterior.predict_many(&xs)?.into_iter().unzip();
        let mu_in: Vec<f64> = inliers.iter().map(|&i| mu[i]).collect();
        let nu_in: Vec<f64> = inliers.iter().map(|&i| nu[i]).collect();
        let weights = residual_weights(&y_in, &mu_in, &nu_in, cfg.var_floor);

        if (iter - 1) % cfg.k_reselect_every == 0 {
            k_fraction = select_k_from_moments(
                &x_in,
                &y_in,
                &mu_in,
                &nu_in,
                &weights,
                &cfg.k_candidates,
                cfg.kernel_kind,
            )?;
        }
        let variance = VarianceModel::new(&x_in, &weights, k_fraction, cfg.kernel_kind)?;
        lambda_all = variance.eval_many(&xs);

        let avg_inlier_loglik = inliers
            .iter()
            .map(|&i| gauss_logpdf(ys[i], mu[i], nu[i] + lambda_all[i]))
            .sum::<f64>()
            / inliers.len() as f64;

        let probs: Vec<f64> = (0..n)
            .map(|i| {
                let r = (ys[i] - mu[i]) / (nu[i] + lambda_all[i]).sqrt();
                prob_from_residual(r, &cfg.outlier)
            })
            .collect();
        let state = OutlierState {
            labels: labels.clone(),
            posterior_probs: probs.clone(),
        };
        labels = sample_labels(&probs, &mut rng);

        history.push(IterationRecord {
            iter,
            avg_inlier_loglik,
            outlier_fraction: labels.iter().filter(|&&l| l).count() as f64 / n as f64,
            k_fraction,
        });
        last = Some((posterior, variance, state));

        if convergence_check_noisy(
            &history,
            cfg.convergence_window,
            cfg.convergence_rel_tol,
            cfg.convergence_noise_z,
        ) {
            break;
        }
    }

    let (posterior, variance, state) = last.expect("at least one iteration");
    Ok(ModelArtifact {
        standardization,
        config: cfg.clone(),
        train_x: xs,
        train_y: ys,
        params,
        posterior,
        variance,
        labels: state,
        history,
    })
}

/// True when the mean of the last `window` log-likelihoods differs from the
/// mean of the `window` before it by less than `rel_tol` (relative).
pub fn convergence_check(history: &[IterationRecord], window: usize, rel_tol: f64) -> bool {
    convergence_check_noisy(history, window, rel_tol, 0.0)
}

/// Like [`convergence_check`], but also accepts a change smaller than
/// `noise_z` standard errors of a difference of window means, with the
/// per-iteration scatter estimated from the most recent window. A steady
/// trend never passes the noise test: its window-mean gap always exceeds
/// twice that standard error.
pub fn convergence_check_noisy(
    history: &[IterationRecord],
    window: usize,
    rel_tol: f64,
    noise_z: f64,
) -> bool {
    if window == 0 || history.len() < 2 * window {
        return false;
    }
    let vals: Vec<f64> = history[history.len() - 2 * window..]
        .iter()
        .map(|r| r.avg_inlier_loglik)
        .collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (early, late) = vals.split_at(window);
    let before = mean(early);
    let after = mean(late);
    let change = (after - before).abs();
    if change < rel_tol * before.abs().max(f64::MIN_POSITIVE) {
        return true;
    }
    if window < 2 || noise_z == 0.0 {
        return false;
    }
    let scatter = late.iter().map(|v| (v - after).powi(2)).sum::<f64>() / (window - 1) as f64;
    change < noise_z * (2.0 * scatter / window as f64).sqrt()
}

/// `rₙ = (yₙ − μₙ) / sqrt(νₙ + Λₙ)` for standardized observations.
pub fn standardized_residuals(artifact: &ModelArtifact, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    Ok(artifact
        .predict_many_std(x)?
        .iter()
        .zip(y)
        .map(|(p, y)| (y - p.mu) / p.total_var().sqrt())
        .collect())
}

/// Second derivative of the raw-unit mean over a raw-unit grid.
pub fn mean_curvature_profile(artifact: &ModelArtifact, grid_raw: &[f64]) -> Result<Vec<f64>> {
    let s = &artifact.standardization;
    let h = CURVATURE_STEP;
    let to_raw = s.y_scale / (s.x_scale * s.x_scale);
    grid_raw
        .iter()
        .map(|&g| {
            let x = s.x_to_std(g);
            let m = artifact.posterior.predict_many(&[x - h, x, x + h])?;
            Ok((m[0].0 - 2.0 * m[1].0 + m[2].0) / (h * h) * to_raw)
        })
        .collect()
}
