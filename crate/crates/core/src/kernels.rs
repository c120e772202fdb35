//! Feature map and the arcsine ("neural network") covariance.
//!
//! `k(f, g) = η² asin(2 fᵀΣg / sqrt((1 + 2 fᵀΣf)(1 + 2 gᵀΣg)))` with a diagonal Σ.
//! The jitter ξ² is not part of the kernel; callers add it on diagonals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// How far past ±1 the asin argument may drift from rounding before it is an error.
pub const ASIN_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("feature vector"));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("feature vector has non-finite entries"));
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Maps a standardized covariate to `(1, x, x², …, x^degree)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub degree: usize,
}

impl Default for FeatureMap {
    fn default() -> Self {
        Self { degree: 1 }
    }
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        self.degree + 1
    }

    pub fn apply(&self, x: f64) -> Result<FeatureVector> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("covariate {x} is not finite")));
        }
        let mut c = Vec::with_capacity(self.dim());
        let mut p = 1.0;
        for _ in 0..self.dim() {
            c.push(p);
            p *= x;
        }
        Ok(FeatureVector(c))
    }

    pub fn apply_all(&self, xs: &[f64]) -> Result<Vec<FeatureVector>> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }
}

/// The default `(1, x)` feature map.
pub fn feature_map(x: f64) -> Result<FeatureVector> {
    FeatureMap::default().apply(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub eta: f64,
    pub sigma_diag: Vec<f64>,
    pub xi: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            eta: 1.0,
            sigma_diag: vec![1.0, 1.0],
            xi: 1e-6,
        }
    }
}

impl KernelParams {
    pub fn new(eta: f64, sigma_diag: Vec<f64>, xi: f64) -> Result<Self> {
        let p = Self {
            eta,
            sigma_diag,
            xi,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if self.sigma_diag.is_empty() {
            return Err(Error::Empty("sigma diagonal"));
        }
        if self.sigma_diag[0] != 1.0 {
            return Err(Error::invalid(format!(
                "sigma[0,0] is pinned to 1, got {}",
                self.sigma_diag[0]
            )));
        }
        if self.sigma_diag.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("sigma diagonal entries must be positive"));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::invalid(format!("xi must be non-negative, got {}", self.xi)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.sigma_diag.len()
    }

    pub fn xi_sq(&self) -> f64 {
        self.xi * self.xi
    }

    fn bilinear(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(&self.sigma_diag)
            .map(|((a, b), s)| s * (a * b))
            .sum()
    }

    /// `1 + 2 fᵀΣf`, the normalizer for one side of the kernel.
    fn norm_term(&self, f: &[f64]) -> f64 {
        1.0 + 2.0 * self.bilinear(f, f)
    }

    #[inline]
    fn eval_with_norms(&self, f: &[f64], g: &[f64], nf: f64, ng: f64) -> Result<f64> {
        let arg = 2.0 * self.bilinear(f, g) / (nf * ng).sqrt();
        let arg = if arg.abs() > 1.0 {
            if arg.abs() > 1.0 + ASIN_SLACK || arg.is_nan() {
                return Err(Error::KernelDomain(arg));
            }
            arg.signum()
        } else {
            arg
        };
        Ok(self.eta * self.eta * arg.asin())
    }
}

pub fn kernel_eval(f: &FeatureVector, g: &FeatureVector, p: &KernelParams) -> Result<f64> {
    for v in [f, g] {
        if v.dim() != p.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                actual: v.dim(),
            });
        }
    }
    p.eval_with_norms(&f.0, &g.0, p.norm_term(&f.0), p.norm_term(&g.0))
}

fn check_dims(fs: &[FeatureVector], p: &KernelParams) -> Result<()> {
    match fs.iter().find(|f| f.dim() != p.dim()) {
        Some(f) => Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: f.dim(),
        }),
        None => Ok(()),
    }
}

/// Cross-covariance matrix with entry `(m, n) = k(a[m], b[n])`.
pub fn gram_matrix(a: &[FeatureVector], b: &[FeatureVector], p: &KernelParams) -> Result<Matrix> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("feature list"));
    }
    check_dims(a, p)?;
    check_dims(b, p)?;
    let na: Vec<f64> = a.iter().map(|f| p.norm_term(&f.0)).collect();
    let nb: Vec<f64> = b.iter().map(|f| p.norm_term(&f.0)).collect();
    let mut out = Matrix::zeros(a.len(), b.len());
    for (m, f) in a.iter().enumerate() {
        let row = out.row_mut(m);
        for (n, g) in b.iter().enumerate() {
            row[n] = p.eval_with_norms(&f.0, &g.0, na[m], nb[n])?;
        }
    }
    Ok(out)
}

/// Symmetric Gram matrix of one feature list: upper triangle evaluated, then mirrored.
pub fn gram_symmetric(a: &[FeatureVector], p: &KernelParams) -> Result<Matrix> {
    if a.is_empty() {
        return Err(Error::Empty("feature list"));
    }
    check_dims(a, p)?;
    let norms: Vec<f64> = a.iter().map(|f| p.norm_term(&f.0)).collect();
    let n = a.len();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = p.eval_with_norms(&a[i].0, &a[j].0, norms[i], norms[j])?;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

/// Kernel values `k(f, a[n])` for a single query against a list.
pub fn cross_column(f: &FeatureVector, a: &[FeatureVector], p: &KernelParams) -> Result<Vec<f64>> {
    check_dims(std::slice::from_ref(f), p)?;
    check_dims(a, p)?;
    let nf = p.norm_term(&f.0);
    a.iter()
        .map(|g| p.eval_with_norms(&f.0, &g.0, nf, p.norm_term(&g.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> KernelParams {
        KernelParams::new(1.0, vec![1.0, 1.0], 0.0).unwrap()
    }

    #[test]
    fn feature_map_prepends_constant() {
        assert_eq!(feature_map(0.0).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(feature_map(-3.0205).unwrap().as_slice(), &[1.0, -3.0205]);
        assert_eq!(feature_map(1.5).unwrap().as_slice(), &[1.0, 1.5]);
        assert!(feature_map(f64::NAN).is_err());
        assert!(feature_map(f64::INFINITY).is_err());
    }

    #[test]
    fn origin_self_covariance() {
        // asin(2 / (1 + 2)) for f = g = (1, 0), Σ = I
        let f = feature_map(0.0).unwrap();
        let v = kernel_eval(&f, &f, &unit()).unwrap();
        assert!((v - (2.0f64 / 3.0).asin()).abs() < 1e-15);
        assert!((v - 0.729728).abs() < 1e-6);
    }

    #[test]
    fn zero_output_scale_gives_zero() {
        let p = KernelParams {
            eta: 0.0,
            ..unit()
        };
        let f = feature_map(0.3).unwrap();
        let g = feature_map(-2.0).unwrap();
        assert_eq!(kernel_eval(&f, &g, &p).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = FeatureVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        let g = feature_map(0.0).unwrap();
        assert!(matches!(
            kernel_eval(&f, &g, &unit()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_entry_and_cross_gram() {
        let p = unit();
        let g = gram_matrix(&[feature_map(0.0).unwrap()], &[feature_map(0.0).unwrap()], &p).unwrap();
        assert!((g.get(0, 0) - 0.729728).abs() < 1e-6);

        let a = [feature_map(1.0).unwrap()];
        let b = [feature_map(0.0).unwrap(), feature_map(2.0).unwrap()];
        let g = gram_matrix(&a, &b, &p).unwrap();
        assert_eq!((g.rows(), g.cols()), (1, 2));
        for n in 0..2 {
            assert_eq!(g.get(0, n), kernel_eval(&a[0], &b[n], &p).unwrap());
        }
        assert!(gram_matrix(&[], &b, &p).is_err());
    }

    #[test]
    fn near_parallel_features_clamp_instead_of_nan() {
        // very large Σ pushes the argument to 1 from below or just above
        let p = KernelParams::new(1.0, vec![1.0, 1e12], 0.0).unwrap();
        let f = feature_map(1e3).unwrap();
        let v = kernel_eval(&f, &f, &p).unwrap();
        assert!(v.is_finite());
        assert!(v <= std::f64::consts::FRAC_PI_2 + 1e-12);
    }

    #[test]
    fn params_enforce_identification() {
        assert!(KernelParams::new(1.0, vec![0.5, 1.0], 0.0).is_err());
        assert!(KernelParams::new(-1.0, vec![1.0, 1.0], 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![1.0, 0.0], 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![1.0, 1.0], -1e-3).is_err());
    }

    fn params() -> impl Strategy<Value = KernelParams> {
        (0.1f64..3.0, 0.01f64..5.0).prop_map(|(eta, s)| KernelParams {
            eta,
            sigma_diag: vec![1.0, s],
            xi: 0.0,
        })
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_positive(x in -5.0f64..5.0, y in -5.0f64..5.0, p in params()) {
            let f = feature_map(x).unwrap();
            let g = feature_map(y).unwrap();
            let kfg = kernel_eval(&f, &g, &p).unwrap();
            prop_assert_eq!(kfg, kernel_eval(&g, &f, &p).unwrap());
            let bound = p.eta * p.eta * std::f64::consts::FRAC_PI_2;
            prop_assert!(kfg.abs() <= bound);
            prop_assert!(kernel_eval(&f, &f, &p).unwrap() > 0.0);
        }

        #[test]
        fn symmetric_gram_is_exactly_symmetric(xs in prop::collection::vec(-4.0f64..4.0, 1..20), p in params()) {
            let fs = FeatureMap::default().apply_all(&xs).unwrap();
            let g = gram_symmetric(&fs, &p).unwrap();
            prop_assert_eq!(&g, &g.transpose());
            prop_assert_eq!(&g, &gram_matrix(&fs, &fs, &p).unwrap());
        }
    }
}
