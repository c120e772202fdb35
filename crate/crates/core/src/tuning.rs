//! Kernel hyperparameter search by maximizing the log marginal likelihood.
//!
//! The search runs a Nelder–Mead simplex over `log η`, `log Σ[d,d]` for
//! `d ≥ 1`, and `log ξ`, with `Σ[0,0] = 1` held fixed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::TrainedPosterior;
use crate::kernels::{FeatureMap, KernelParams};

/// Lower bound on ξ inside the search.
pub const XI_FLOOR: f64 = 1e-15;

/// Which hyperparameters the search may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeParams {
    pub eta: bool,
    pub sigma: bool,
    pub xi: bool,
}

impl Default for FreeParams {
    fn default() -> Self {
        Self {
            eta: true,
            sigma: true,
            xi: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub max_evals: usize,
    pub rel_tol: f64,
    pub init: KernelParams,
    /// initial simplex edge length in log-space
    pub initial_step: f64,
    pub free: FreeParams,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            max_evals: 200,
            rel_tol: 1e-5,
            init: KernelParams::default(),
            initial_step: 0.5,
            free: FreeParams::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TuningOutcome {
    pub params: KernelParams,
    pub log_ml: f64,
    pub initial_log_ml: f64,
    pub evaluations: usize,
}

struct Objective<'a> {
    map: FeatureMap,
    x: &'a [f64],
    y: &'a [f64],
    noise: &'a [f64],
    base: &'a KernelParams,
    free: FreeParams,
    evals: usize,
    last_error: Option<Error>,
}

impl Objective<'_> {
    fn encode(&self, p: &KernelParams) -> Vec<f64> {
        let mut v = Vec::new();
        if self.free.eta {
            v.push(p.eta.ln());
        }
        if self.free.sigma {
            v.extend(p.sigma_diag[1..].iter().map(|s| s.ln()));
        }
        if self.free.xi {
            v.push(p.xi.max(XI_FLOOR).ln());
        }
        v
    }

    fn decode(&self, theta: &[f64]) -> KernelParams {
        let mut p = self.base.clone();
        let mut it = theta.iter();
        if self.free.eta {
            p.eta = it.next().unwrap().exp();
        }
        if self.free.sigma {
            for s in p.sigma_diag[1..].iter_mut() {
                *s = it.next().unwrap().exp();
            }
        }
        if self.free.xi {
            p.xi = it.next().unwrap().max(XI_FLOOR.ln()).exp();
        }
        p
    }

    fn value_of(&mut self, p: &KernelParams) -> f64 {
        self.evals += 1;
        match TrainedPosterior::fit(self.map, self.x, self.y, p, self.noise) {
            Ok(post) => {
                let v = post.log_marginal_likelihood();
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(e) => {
                self.last_error = Some(e);
                f64::NEG_INFINITY
            }
        }
    }

    fn value(&mut self, theta: &[f64]) -> f64 {
        let p = self.decode(theta);
        self.value_of(&p)
    }
}

/// Maximizes the log marginal likelihood with the default `(1, x)` feature map.
pub fn optimize_hyperparams(
    x_in: &[f64],
    y_in: &[f64],
    noise_diag: &[f64],
    cfg: &TuningConfig,
) -> Result<KernelParams> {
    Ok(optimize_with_map(FeatureMap::default(), x_in, y_in, noise_diag, cfg)?.params)
}

pub fn optimize_with_map(
    map: FeatureMap,
    x_in: &[f64],
    y_in: &[f64],
    noise_diag: &[f64],
    cfg: &TuningConfig,
) -> Result<TuningOutcome> {
    if x_in.len() < 3 {
        return Err(Error::invalid(format!(
            "hyperparameter tuning needs at least 3 points, got {}",
            x_in.len()
        )));
    }
    if cfg.max_evals == 0 || !(cfg.rel_tol > 0.0) || !(cfg.initial_step > 0.0) {
        return Err(Error::invalid("tuning config fields must be positive"));
    }
    cfg.init.validate()?;
    if cfg.init.dim() != map.dim() {
        return Err(Error::DimensionMismatch {
            expected: map.dim(),
            actual: cfg.init.dim(),
        });
    }

    let mut obj = Objective {
        map,
        x: x_in,
        y: y_in,
        noise: noise_diag,
        base: &cfg.init,
        free: cfg.free,
        evals: 0,
        last_error: None,
    };
    let initial_log_ml = obj.value_of(&cfg.init);
    let start = obj.encode(&cfg.init);

    let (best_theta, best_val) = if start.is_empty() {
        (start, initial_log_ml)
    } else {
        nelder_mead(&mut obj, &start, cfg)
    };

    if initial_log_ml.is_finite() && initial_log_ml >= best_val {
        return Ok(TuningOutcome {
            params: cfg.init.clone(),
            log_ml: initial_log_ml,
            initial_log_ml,
            evaluations: obj.evals,
        });
    }
    if !best_val.is_finite() {
        let last = obj
            .last_error
            .map(|e| e.to_string())
            .unwrap_or_else(|| "non-finite objective".into());
        return Err(Error::TuningFailed(last));
    }
    Ok(TuningOutcome {
        params: obj.decode(&best_theta),
        log_ml: best_val,
        initial_log_ml,
        evaluations: obj.evals,
    })
}

/// Standard simplex search (reflection 1, expansion 2, contraction ½, shrink ½), maximizing.
fn nelder_mead(obj: &mut Objective<'_>, start: &[f64], cfg: &TuningConfig) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let f0 = obj.value(start);
    simplex.push((start.to_vec(), f0));
    for i in 0..dim {
        let mut p = start.to_vec();
        p[i] += cfg.initial_step;
        let f = obj.value(&p);
        simplex.push((p, f));
    }

    let by_value_desc = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| {
        b.1.total_cmp(&a.1)
    };

    loop {
        simplex.sort_by(by_value_desc);
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if obj.evals >= cfg.max_evals {
            break;
        }
        if best.is_finite() && worst.is_finite() {
            let scale = 0.5 * (best.abs() + worst.abs()) + 1e-12;
            if (best - worst).abs() <= cfg.rel_tol * scale {
                break;
            }
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|(p, _)| p[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = obj.value(&xr);
        if fr > simplex[0].1 {
            let xe = along(2.0);
            let fe = obj.value(&xe);
            simplex[dim] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        if fr > simplex[dim].1 {
            let xc = along(0.5);
            let fc = obj.value(&xc);
            if fc >= fr {
                simplex[dim] = (xc, fc);
                continue;
            }
        } else {
            let xc = along(-0.5);
            let fc = obj.value(&xc);
            if fc > simplex[dim].1 {
                simplex[dim] = (xc, fc);
                continue;
            }
        }
        // shrink towards the best vertex
        let best_pt = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let p: Vec<f64> = best_pt
                .iter()
                .zip(&v.0)
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            let f = obj.value(&p);
            *v = (p, f);
        }
    }
    simplex.sort_by(by_value_desc);
    simplex.swap_remove(0)
}
