//! Closed-form GP posterior with a heteroscedastic noise diagonal.
//!
//! The training covariance `C = K₁₁ + ξ²I + Λ(X)` is factorized once at fit
//! time. Mean queries are `k₂₁·α` with `α = C⁻¹y`; variance queries are
//! `k₂₂ + ξ² − ‖L⁻¹k₁₂‖²` through the stored factor.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernels::{cross_column, gram_symmetric, FeatureMap, FeatureVector, KernelParams};
use crate::linalg::{dot, Cholesky};

const QUERY_TILE: usize = 16;

#[derive(Clone, Debug)]
pub struct TrainedPosterior {
    feature_map: FeatureMap,
    train_x: Vec<f64>,
    train_y: Vec<f64>,
    train_features: Vec<FeatureVector>,
    params: KernelParams,
    noise_diag: Vec<f64>,
    // ξ² actually placed on the diagonal; larger than params.xi² only after a retry
    xi_sq_eff: f64,
    factor: Cholesky,
    alpha: Vec<f64>,
}

fn validate_inputs(x: &[f64], y: &[f64], p: &KernelParams, noise: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty("training inputs"));
    }
    for len in [y.len(), noise.len()] {
        if len != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: len,
            });
        }
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data must be finite"));
    }
    if noise.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("noise variances must be finite and non-negative"));
    }
    if p.eta.is_nan() || p.sigma_diag.iter().any(|s| !(*s > 0.0)) || !(p.xi >= 0.0) {
        return Err(Error::invalid("kernel parameters out of range"));
    }
    Ok(())
}

/// Fits with the default `(1, x)` feature map.
pub fn fit_posterior(
    x: &[f64],
    y: &[f64],
    params: &KernelParams,
    noise_diag: &[f64],
) -> Result<TrainedPosterior> {
    TrainedPosterior::fit(FeatureMap::default(), x, y, params, noise_diag)
}

/// Log marginal likelihood `log N(y; 0, K₁₁ + ξ²I + Λ)`.
pub fn log_marginal_likelihood(
    x: &[f64],
    y: &[f64],
    params: &KernelParams,
    noise_diag: &[f64],
) -> Result<f64> {
    Ok(fit_posterior(x, y, params, noise_diag)?.log_marginal_likelihood())
}

impl TrainedPosterior {
    pub fn fit(
        feature_map: FeatureMap,
        x: &[f64],
        y: &[f64],
        params: &KernelParams,
        noise_diag: &[f64],
    ) -> Result<Self> {
        validate_inputs(x, y, params, noise_diag)?;
        let features = feature_map.apply_all(x)?;
        let gram = gram_symmetric(&features, params)?;
        let xi_sq = params.xi_sq();

        let build = |jitter: f64| {
            let mut c = gram.clone();
            c.add_to_diagonal(noise_diag.iter().map(|v| v + jitter));
            c
        };
        let cov = build(xi_sq);
        let (factor, xi_sq_eff) = match Cholesky::factor(&cov) {
            Ok(f) => (f, xi_sq),
            Err(first) if params.xi > 0.0 => {
                let mean_diag = cov.diagonal().iter().sum::<f64>() / cov.rows() as f64;
                let inflated = xi_sq.max(1e-10 * mean_diag);
                match Cholesky::factor(&build(inflated)) {
                    Ok(f) => (f, inflated),
                    Err(_) => return Err(first),
                }
            }
            Err(e) => return Err(e),
        };
        let alpha = factor.solve(y);
        Ok(Self {
            feature_map,
            train_x: x.to_vec(),
            train_y: y.to_vec(),
            train_features: features,
            params: params.clone(),
            noise_diag: noise_diag.to_vec(),
            xi_sq_eff,
            factor,
            alpha,
        })
    }

    /// Rebuilds a posterior with a known effective jitter, skipping the retry path.
    pub fn from_parts(
        feature_map: FeatureMap,
        x: &[f64],
        y: &[f64],
        params: &KernelParams,
        noise_diag: &[f64],
        xi_sq_eff: f64,
    ) -> Result<Self> {
        validate_inputs(x, y, params, noise_diag)?;
        let features = feature_map.apply_all(x)?;
        let mut cov = gram_symmetric(&features, params)?;
        cov.add_to_diagonal(noise_diag.iter().map(|v| v + xi_sq_eff));
        let factor = Cholesky::factor(&cov)?;
        let alpha = factor.solve(y);
        Ok(Self {
            feature_map,
            train_x: x.to_vec(),
            train_y: y.to_vec(),
            train_features: features,
            params: params.clone(),
            noise_diag: noise_diag.to_vec(),
            xi_sq_eff,
            factor,
            alpha,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.feature_map
    }

    pub fn train_x(&self) -> &[f64] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn noise_diag(&self) -> &[f64] {
        &self.noise_diag
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn xi_sq_eff(&self) -> f64 {
        self.xi_sq_eff
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        -0.5 * dot(&self.train_y, &self.alpha)
            - 0.5 * self.factor.log_det()
            - 0.5 * n * (2.0 * PI).ln()
    }

    /// Posterior mean and variance `(μ(x), ν(x))` at a standardized covariate.
    pub fn predict(&self, x: f64) -> Result<(f64, f64)> {
        Ok(self.predict_many(&[x])?[0])
    }

    /// Batched [`Self::predict`]; results are bitwise identical to single queries.
    pub fn predict_many(&self, xs: &[f64]) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(QUERY_TILE) {
            let mut feats = Vec::with_capacity(chunk.len());
            let mut cols = Vec::with_capacity(chunk.len());
            for &x in chunk {
                let f = self.feature_map.apply(x)?;
                cols.push(cross_column(&f, &self.train_features, &self.params)?);
                feats.push(f);
            }
            let mus: Vec<f64> = cols.iter().map(|k| dot(k, &self.alpha)).collect();
            self.factor.forward_solve_many(&mut cols);
            for ((f, v), mu) in feats.iter().zip(&cols).zip(mus) {
                let k22 = crate::kernels::kernel_eval(f, f, &self.params)?;
                let nu = k22 + self.xi_sq_eff - dot(v, v);
                out.push((mu, nu.max(0.0)));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::factorization_count;

    // Parameters whose Gram value at x = 0 is exactly 1.
    fn unit_gram_params() -> KernelParams {
        let eta = (1.0 / (2.0f64 / 3.0).asin()).sqrt();
        KernelParams::new(eta, vec![1.0, 1.0], 0.0).unwrap()
    }

    #[test]
    fn scalar_solve_and_prediction() {
        let p = unit_gram_params();
        let post = fit_posterior(&[0.0], &[2.0], &p, &[1.0]).unwrap();
        assert!((post.alpha()[0] - 1.0).abs() < 1e-14);
        let (mu, nu) = post.predict(0.0).unwrap();
        assert!((mu - 1.0).abs() < 1e-14);
        assert!((nu - 0.5).abs() < 1e-14);
    }

    #[test]
    fn scalar_log_marginal_likelihood() {
        // total variance 1 = gram 0.5·(1/asin(2/3))·asin(2/3) + noise 0.5
        let eta = (0.5 / (2.0f64 / 3.0).asin()).sqrt();
        let p = KernelParams::new(eta, vec![1.0, 1.0], 0.0).unwrap();
        let l0 = log_marginal_likelihood(&[0.0], &[0.0], &p, &[0.5]).unwrap();
        let l1 = log_marginal_likelihood(&[0.0], &[1.0], &p, &[0.5]).unwrap();
        assert!((l0 + 0.918939).abs() < 1e-6, "{l0}");
        assert!((l1 + 1.418939).abs() < 1e-6, "{l1}");
    }

    #[test]
    fn duplicated_inputs_without_noise_or_jitter_fail() {
        let p = KernelParams::new(1.0, vec![1.0, 1.0], 0.0).unwrap();
        let err = fit_posterior(&[0.3, 0.3], &[1.0, 1.0], &p, &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { index: 1, .. }), "{err}");
    }

    #[test]
    fn jitter_retry_rescues_duplicates() {
        let p = KernelParams::new(1.0, vec![1.0, 1.0], 1e-300).unwrap();
        let post = fit_posterior(&[0.3, 0.3], &[1.0, 1.0], &p, &[0.0, 0.0]).unwrap();
        assert!(post.xi_sq_eff() > 0.0);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let p = KernelParams::default();
        assert!(fit_posterior(&[0.0, 1.0], &[1.0], &p, &[1.0, 1.0]).is_err());
        assert!(fit_posterior(&[], &[], &p, &[]).is_err());
    }

    #[test]
    fn noiseless_interpolation_limit() {
        let p = KernelParams::new(1.0, vec![1.0, 1.0], 0.0).unwrap();
        let x = [-1.0, 0.0, 1.3];
        let y = [0.2, -0.4, 0.9];
        let post = fit_posterior(&x, &y, &p, &[1e-12; 3]).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            let (mu, nu) = post.predict(*xi).unwrap();
            assert!((mu - yi).abs() < 1e-6);
            assert!(nu < 1e-6);
        }
    }

    #[test]
    fn one_factorization_per_fit_none_per_predict() {
        let p = KernelParams::default();
        let before = factorization_count();
        let post = fit_posterior(&[0.0, 0.5, 1.0], &[1.0, 2.0, 1.5], &p, &[0.1; 3]).unwrap();
        assert_eq!(factorization_count(), before + 1);
        let _ = post.predict(0.25).unwrap();
        let _ = post.predict_many(&[0.1, 0.2, 3.0]).unwrap();
        assert_eq!(factorization_count(), before + 1);
    }

    #[test]
    fn batched_predictions_match_single_queries_bitwise() {
        let p = KernelParams::new(1.3, vec![1.0, 0.4], 1e-4).unwrap();
        let x: Vec<f64> = (0..40).map(|i| -2.0 + 0.1 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let post = fit_posterior(&x, &y, &p, &vec![0.01; x.len()]).unwrap();
        let q: Vec<f64> = (0..37).map(|i| -2.5 + 0.13 * i as f64).collect();
        let many = post.predict_many(&q).unwrap();
        for (x, pair) in q.iter().zip(many) {
            assert_eq!(post.predict(*x).unwrap(), pair);
        }
    }
}
