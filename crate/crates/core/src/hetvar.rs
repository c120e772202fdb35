//! Input-dependent noise variance Λ(x).
//!
//! Λ(x) is a Nadaraya–Watson average of the corrected squared residuals
//! `(yₙ − μₙ)² + νₙ` over inlier anchors, with a query-dependent K-nearest-
//! neighbour bandwidth. K is chosen by leave-one-out predictive log-density.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::TrainedPosterior;

/// Bandwidth used when every anchor coincides with the query.
pub const BANDWIDTH_FLOOR: f64 = 1e-6;

// exp(-u²/2h²) underflows to exactly 0.0 past this many bandwidths.
const GAUSSIAN_CUTOFF: f64 = 40.0;
// Epanechnikov radius in bandwidths, matching the Gaussian's variance.
const EPANECHNIKOV_RADIUS: f64 = 2.236_067_977_499_79;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl KernelKind {
    #[inline]
    fn weight(self, u: f64, h: f64) -> f64 {
        let z = u / h;
        match self {
            KernelKind::Gaussian => (-0.5 * z * z).exp(),
            KernelKind::Epanechnikov => {
                let t = z / EPANECHNIKOV_RADIUS;
                (1.0 - t * t).max(0.0)
            }
        }
    }

    fn support(self) -> f64 {
        match self {
            KernelKind::Gaussian => GAUSSIAN_CUTOFF,
            KernelKind::Epanechnikov => EPANECHNIKOV_RADIUS,
        }
    }
}

// ⌈fraction · n⌉, ignoring representation error such as 0.07 · 100 = 7.000000000000001
fn ceil_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 - 1e-9).ceil().max(0.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BandwidthRule {
    pub k_count: usize,
}

impl BandwidthRule {
    /// `⌈fraction · n⌉`, clamped to `[1, n]`.
    pub fn from_fraction(fraction: f64, n: usize) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(format!("K fraction {fraction} outside (0, 1]")));
        }
        if n == 0 {
            return Err(Error::Empty("anchors"));
        }
        Ok(Self {
            k_count: ceil_count(fraction, n).clamp(1, n),
        })
    }
}

/// Anchors sorted ascending, with their original positions.
#[derive(Clone, Debug)]
struct SortedAnchors {
    x: Vec<f64>,
    w: Vec<f64>,
    // original index of each sorted anchor
    origin: Vec<usize>,
}

impl SortedAnchors {
    fn new(anchors: &[f64], weights: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..anchors.len()).collect();
        order.sort_by(|&a, &b| anchors[a].total_cmp(&anchors[b]).then(a.cmp(&b)));
        Self {
            x: order.iter().map(|&i| anchors[i]).collect(),
            w: order.iter().map(|&i| weights[i]).collect(),
            origin: order,
        }
    }

    /// Distance to the `k`-th nearest anchor, skipping sorted position `skip`,
    /// plus the smallest strictly positive distance seen.
    fn kth_distance(&self, x: f64, k: usize, skip: Option<usize>) -> f64 {
        let n = self.x.len();
        let mut right = self.x.partition_point(|&a| a < x);
        let mut left = right; // candidates: [.., left) and [right, ..)
        let mut taken = 0usize;
        let mut kth = f64::NAN;
        let mut min_positive = f64::INFINITY;
        loop {
            while left > 0 && Some(left - 1) == skip {
                left -= 1;
            }
            while right < n && Some(right) == skip {
                right += 1;
            }
            let dl = if left > 0 { x - self.x[left - 1] } else { f64::INFINITY };
            let dr = if right < n { self.x[right] - x } else { f64::INFINITY };
            if dl.is_infinite() && dr.is_infinite() {
                break;
            }
            let d = if dl <= dr {
                left -= 1;
                dl
            } else {
                right += 1;
                dr
            };
            taken += 1;
            if taken == k {
                kth = d;
            }
            if d > 0.0 {
                min_positive = min_positive.min(d);
                if taken >= k {
                    break;
                }
            }
        }
        if kth > 0.0 {
            kth
        } else if min_positive.is_finite() {
            min_positive
        } else {
            BANDWIDTH_FLOOR
        }
    }

    fn lambda(&self, x: f64, k: usize, kind: KernelKind, skip: Option<usize>) -> f64 {
        let h = self.kth_distance(x, k, skip);
        let reach = kind.support() * h;
        let lo = self.x.partition_point(|&a| a < x - reach);
        let hi = self.x.partition_point(|&a| a <= x + reach);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in lo..hi {
            if Some(i) == skip {
                continue;
            }
            let kw = kind.weight((x - self.x[i]).abs(), h);
            num += self.w[i] * kw;
            den += kw;
        }
        if den > 0.0 {
            num / den
        } else {
            // only reachable with compact kernels; fall back to the nearest anchor
            let j = self.nearest(x, skip);
            self.w[j]
        }
    }

    fn nearest(&self, x: f64, skip: Option<usize>) -> usize {
        (0..self.x.len())
            .filter(|&i| Some(i) != skip)
            .min_by(|&a, &b| (self.x[a] - x).abs().total_cmp(&(self.x[b] - x).abs()))
            .expect("at least one anchor")
    }
}

/// Distance from `x` to its `k_count`-th nearest anchor, with degenerate-distance fallbacks.
pub fn knn_bandwidth(anchors: &[f64], x: f64, k_count: usize) -> Result<f64> {
    if anchors.is_empty() {
        return Err(Error::Empty("anchors"));
    }
    if k_count == 0 || k_count > anchors.len() {
        return Err(Error::invalid(format!(
            "k_count {k_count} outside [1, {}]",
            anchors.len()
        )));
    }
    let weights = vec![0.0; anchors.len()];
    Ok(SortedAnchors::new(anchors, &weights).kth_distance(x, k_count, None))
}

/// Corrected squared residuals `(y − μ)² + ν`, floored at `floor`.
pub fn residual_weights(y: &[f64], mu: &[f64], nu: &[f64], floor: f64) -> Vec<f64> {
    y.iter()
        .zip(mu)
        .zip(nu)
        .map(|((y, m), v)| ((y - m).powi(2) + v).max(floor))
        .collect()
}

#[derive(Clone, Debug)]
pub struct VarianceModel {
    sorted: SortedAnchors,
    k_fraction: f64,
    k_count: usize,
    kind: KernelKind,
}

impl VarianceModel {
    pub fn new(anchors: &[f64], weights: &[f64], k_fraction: f64, kind: KernelKind) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Empty("anchors"));
        }
        if anchors.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: anchors.len(),
                actual: weights.len(),
            });
        }
        if anchors.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("anchors must be finite"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("variance weights must be finite and non-negative"));
        }
        let rule = BandwidthRule::from_fraction(k_fraction, anchors.len())?;
        Ok(Self {
            sorted: SortedAnchors::new(anchors, weights),
            k_fraction,
            k_count: rule.k_count,
            kind,
        })
    }

    /// Anchors in their original order.
    pub fn anchors(&self) -> Vec<f64> {
        self.unsort(&self.sorted.x)
    }

    /// Weights in their original order.
    pub fn weights(&self) -> Vec<f64> {
        self.unsort(&self.sorted.w)
    }

    fn unsort(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (s, &o) in self.sorted.origin.iter().enumerate() {
            out[o] = v[s];
        }
        out
    }

    pub fn k_fraction(&self) -> f64 {
        self.k_fraction
    }

    pub fn k_count(&self) -> usize {
        self.k_count
    }

    pub fn kernel_kind(&self) -> KernelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.sorted.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.x.is_empty()
    }

    /// Λ(x).
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.lambda(x, self.k_count, self.kind, None)
    }

    pub fn eval_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    /// Λ at anchor `index` (original order) with that anchor left out.
    pub fn eval_leave_one_out(&self, index: usize, k_count: usize) -> f64 {
        let pos = self
            .sorted
            .origin
            .iter()
            .position(|&o| o == index)
            .expect("anchor index in range");
        let k = k_count.clamp(1, (self.len() - 1).max(1));
        self.sorted.lambda(self.sorted.x[pos], k, self.kind, Some(pos))
    }
}

pub fn lambda_eval(model: &VarianceModel, x: f64) -> f64 {
    model.eval(x)
}

/// Leave-one-out predictive log score `Σ log N(yₙ; μₙ, νₙ + Λ⁽⁻ⁿ⁾(xₙ))` for one K fraction.
///
/// `None` when the fraction implies fewer than one neighbour or there are too few anchors.
pub fn loocv_score(
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    nu: &[f64],
    weights: &[f64],
    fraction: f64,
    kind: KernelKind,
) -> Option<f64> {
    let n = x.len();
    if n < 2 || !(fraction > 0.0 && fraction <= 1.0) {
        return None;
    }
    let k = ceil_count(fraction, n);
    if k < 1 {
        return None;
    }
    let k = k.min(n - 1);
    let sorted = SortedAnchors::new(x, weights);
    let mut total = 0.0;
    for (pos, &orig) in sorted.origin.iter().enumerate() {
        let lam = sorted.lambda(sorted.x[pos], k, kind, Some(pos));
        let var = nu[orig] + lam;
        let r = y[orig] - mu[orig];
        total += -0.5 * ((2.0 * PI * var).ln() + r * r / var);
    }
    Some(total)
}

/// Picks the candidate fraction with the highest leave-one-out score; ties go to the smaller fraction.
pub fn select_k_from_moments(
    x: &[f64],
    y: &[f64],
    mu: &[f64],
    nu: &[f64],
    weights: &[f64],
    candidates: &[f64],
    kind: KernelKind,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::Empty("K candidates"));
    }
    let mut sorted: Vec<f64> = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for c in sorted {
        let Some(score) = loocv_score(x, y, mu, nu, weights, c, kind) else {
            continue;
        };
        if score.is_nan() {
            continue;
        }
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((c, score)),
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::invalid("no K candidate produced a valid leave-one-out score"))
}

/// Selects K using moments from a fitted posterior at the inlier inputs.
pub fn select_k_loocv(
    x_in: &[f64],
    y_in: &[f64],
    post: &TrainedPosterior,
    candidates: &[f64],
    floor: f64,
    kind: KernelKind,
) -> Result<f64> {
    if x_in.len() != y_in.len() {
        return Err(Error::DimensionMismatch {
            expected: x_in.len(),
            actual: y_in.len(),
        });
    }
    let (mu, nu): (Vec<f64>, Vec<f64>) = post.predict_many(x_in)?.into_iter().unzip();
    let weights = residual_weights(y_in, &mu, &nu, floor);
    select_k_from_moments(x_in, y_in, &mu, &nu, &weights, candidates, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_kth(anchors: &[f64], x: f64, k: usize) -> f64 {
        let mut d: Vec<f64> = anchors.iter().map(|a| (a - x).abs()).collect();
        d.sort_by(f64::total_cmp);
        if d[k - 1] > 0.0 {
            return d[k - 1];
        }
        d.into_iter().find(|v| *v > 0.0).unwrap_or(BANDWIDTH_FLOOR)
    }

    fn brute_lambda(anchors: &[f64], w: &[f64], x: f64, k: usize) -> f64 {
        let h = brute_kth(anchors, x, k);
        let (mut num, mut den) = (0.0, 0.0);
        for (a, wi) in anchors.iter().zip(w) {
            let kw = (-(x - a).powi(2) / (2.0 * h * h)).exp();
            num += wi * kw;
            den += kw;
        }
        num / den
    }

    #[test]
    fn bandwidth_examples() {
        let a = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(knn_bandwidth(&a, 0.0, 2).unwrap(), 1.0);
        assert_eq!(knn_bandwidth(&a, 1.5, 1).unwrap(), 0.5);
        assert_eq!(knn_bandwidth(&[0.0, 0.0, 0.0], 0.0, 2).unwrap(), BANDWIDTH_FLOOR);
        assert!(knn_bandwidth(&[], 0.0, 1).is_err());
    }

    #[test]
    fn lambda_examples() {
        let m = VarianceModel::new(&[0.0, 1.0, 2.0], &[0.7; 3], 0.5, KernelKind::Gaussian).unwrap();
        for x in [-3.0, 0.2, 1.0, 9.0] {
            assert!((m.eval(x) - 0.7).abs() < 1e-15);
        }
        let m = VarianceModel::new(&[-1.0, 1.0], &[1.0, 3.0], 1.0, KernelKind::Gaussian).unwrap();
        assert!((m.eval(0.0) - 2.0).abs() < 1e-15);

        // k = 1 at an anchor: h falls back to the nearest positive distance, 10
        let m = VarianceModel::new(&[0.0, 10.0], &[1.0, 3.0], 0.5, KernelKind::Gaussian).unwrap();
        let e = (-0.5f64).exp();
        let expect = (1.0 + 3.0 * e) / (1.0 + e);
        assert!((m.eval(0.0) - expect).abs() < 1e-14);
        assert!((m.eval(0.0) - 1.7551).abs() < 1e-4);
    }

    #[test]
    fn candidate_selection_rules() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 7.0).sin() * 0.3).collect();
        let mu = vec![0.0; 50];
        let nu = vec![0.01; 50];
        let w = residual_weights(&y, &mu, &nu, 1e-8);
        let pick = |c: &[f64]| select_k_from_moments(&x, &y, &mu, &nu, &w, c, KernelKind::Gaussian);
        assert_eq!(pick(&[0.05]).unwrap(), 0.05);
        assert!(pick(&[]).is_err());
        assert!(pick(&[0.0, -1.0]).is_err());

        // constant weights make every bandwidth score the same
        let flat = vec![0.5; 50];
        let ys = vec![0.0; 50];
        let tie = select_k_from_moments(&x, &ys, &mu, &nu, &flat, &[0.05, 0.02], KernelKind::Gaussian);
        assert_eq!(tie.unwrap(), 0.02);
    }

    #[test]
    fn leave_one_out_ignores_the_held_out_anchor() {
        let m = VarianceModel::new(&[0.0, 1.0, 2.0], &[1.0, 100.0, 1.0], 1.0, KernelKind::Gaussian)
            .unwrap();
        assert_eq!(m.eval_leave_one_out(1, 2), 1.0);
    }

    #[test]
    fn epanechnikov_is_close_to_gaussian_on_smooth_weights() {
        let x: Vec<f64> = (0..200).map(|i| -2.0 + i as f64 / 50.0).collect();
        let w: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v.sin()).collect();
        let g = VarianceModel::new(&x, &w, 0.05, KernelKind::Gaussian).unwrap();
        let e = VarianceModel::new(&x, &w, 0.05, KernelKind::Epanechnikov).unwrap();
        for q in [-1.5, -0.3, 0.0, 0.8, 1.7] {
            assert!((g.eval(q) - e.eval(q)).abs() < 0.05);
        }
    }

    #[test]
    fn locality_at_small_and_full_k() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let w = [1.0, 2.0, 5.0, 2.0, 1.0];
        // K = 1 at an anchor: h is the gap to the neighbours, so the anchor dominates
        let m = VarianceModel::new(&x, &w, 0.2, KernelKind::Gaussian).unwrap();
        let v = m.eval(2.0);
        assert!(v < 5.0 && v > 3.0, "{v}");
        // K = N: wide bandwidth pulls towards the global average but stays in range
        let m = VarianceModel::new(&x, &w, 1.0, KernelKind::Gaussian).unwrap();
        let v = m.eval(2.0);
        assert!((1.0..=5.0).contains(&v));
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_stays_convex(
            pts in prop::collection::vec((-3.0f64..3.0, 0.0f64..4.0), 1..40),
            q in -4.0f64..4.0,
            frac in 0.01f64..1.0,
        ) {
            let (a, w): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let m = VarianceModel::new(&a, &w, frac, KernelKind::Gaussian).unwrap();
            let lam = m.eval(q);
            let wmin = w.iter().cloned().fold(f64::INFINITY, f64::min);
            let wmax = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lam >= wmin - 1e-12 && lam <= wmax + 1e-12);
            let brute = brute_lambda(&a, &w, q, m.k_count());
            prop_assert!((lam - brute).abs() <= 1e-12 * (1.0 + brute.abs()));
            prop_assert_eq!(knn_bandwidth(&a, q, m.k_count()).unwrap(), brute_kth(&a, q, m.k_count()));
        }
    }
}
