//! Flat `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Unknown keys and repeated keys are
//! errors. Every key has a default, so an empty file is valid.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hetvar::KernelKind;
use crate::inversion::ChainConfig;
use crate::io::fmt17;
use crate::trainer::TrainLoopConfig;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainLoopConfig,
    pub chain: ChainConfig,
}

pub const KEYS: &[&str] = &[
    "max_iters",
    "var_floor",
    "k_reselect_every",
    "k_candidates",
    "outlier_prior",
    "outlier_shift",
    "convergence_window",
    "convergence_rel_tol",
    "convergence_noise_z",
    "seed",
    "variance_kernel",
    "feature_degree",
    "tuning_max_evals",
    "tuning_rel_tol",
    "tuning_initial_step",
    "warm_start_step",
    "init_eta",
    "init_sigma",
    "init_xi",
    "tune_eta",
    "tune_sigma",
    "tune_xi",
    "chain_samples",
    "chain_burn_in",
    "chain_proposal_sd",
    "chain_thin",
    "chain_seed",
];

fn scalar<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config {
        line,
        message: format!("`{v}` is not a valid value for `{key}`"),
    })
}

fn real(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = scalar(line, key, v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Config {
            line,
            message: format!("`{key}` must be finite"),
        })
    }
}

fn reals(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| real(line, key, p.trim())).collect()
}

fn kernel_kind(line: usize, v: &str) -> Result<KernelKind> {
    match v {
        "gaussian" => Ok(KernelKind::Gaussian),
        "epanechnikov" => Ok(KernelKind::Epanechnikov),
        _ => Err(Error::Config {
            line,
            message: format!("unknown variance_kernel `{v}` (available: gaussian, epanechnikov)"),
        }),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        let c = &mut self.chain;
        match key {
            "max_iters" => t.max_iters = scalar(line, key, v)?,
            "var_floor" => t.var_floor = real(line, key, v)?,
            "k_reselect_every" => t.k_reselect_every = scalar(line, key, v)?,
            "k_candidates" => t.k_candidates = reals(line, key, v)?,
            "outlier_prior" => t.outlier.q = real(line, key, v)?,
            "outlier_shift" => t.outlier.d = real(line, key, v)?,
            "convergence_window" => t.convergence_window = scalar(line, key, v)?,
            "convergence_rel_tol" => t.convergence_rel_tol = real(line, key, v)?,
            "convergence_noise_z" => t.convergence_noise_z = real(line, key, v)?,
            "seed" => t.seed = scalar(line, key, v)?,
            "variance_kernel" => t.kernel_kind = kernel_kind(line, v)?,
            "feature_degree" => t.feature_map.degree = scalar(line, key, v)?,
            "tuning_max_evals" => t.tuning.max_evals = scalar(line, key, v)?,
            "tuning_rel_tol" => t.tuning.rel_tol = real(line, key, v)?,
            "tuning_initial_step" => t.tuning.initial_step = real(line, key, v)?,
            "warm_start_step" => t.warm_start_step = real(line, key, v)?,
            "init_eta" => t.tuning.init.eta = real(line, key, v)?,
            "init_sigma" => {
                let mut s = vec![1.0];
                s.extend(reals(line, key, v)?);
                t.tuning.init.sigma_diag = s;
            }
            "init_xi" => t.tuning.init.xi = real(line, key, v)?,
            "tune_eta" => t.tuning.free.eta = scalar(line, key, v)?,
            "tune_sigma" => t.tuning.free.sigma = scalar(line, key, v)?,
            "tune_xi" => t.tuning.free.xi = scalar(line, key, v)?,
            "chain_samples" => c.n_samples = scalar(line, key, v)?,
            "chain_burn_in" => c.burn_in = scalar(line, key, v)?,
            "chain_proposal_sd" => c.proposal_sd = real(line, key, v)?,
            "chain_thin" => c.thin = scalar(line, key, v)?,
            "chain_seed" => c.seed = scalar(line, key, v)?,
            _ => {
                return Err(Error::Config {
                    line,
                    message: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config {
            line: 0,
            message: e.to_string(),
        };
        self.train.validate().map_err(wrap)?;
        if self.train.tuning.init.dim() != self.train.feature_map.dim() {
            return Err(Error::Config {
                line: 0,
                message: format!(
                    "init_sigma needs {} entries for feature_degree {}",
                    self.train.feature_map.dim() - 1,
                    self.train.feature_map.degree
                ),
            });
        }
        self.chain.validate().map_err(wrap)
    }

    /// Renders every key with its current value; `parse(render())` is the identity.
    pub fn render(&self) -> String {
        let t = &self.train;
        let c = &self.chain;
        let list = |v: &[f64]| v.iter().map(|x| fmt17(*x)).collect::<Vec<_>>().join(",");
        let kind = match t.kernel_kind {
            KernelKind::Gaussian => "gaussian",
            KernelKind::Epanechnikov => "epanechnikov",
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("max_iters", t.max_iters.to_string());
        kv("var_floor", fmt17(t.var_floor));
        kv("k_reselect_every", t.k_reselect_every.to_string());
        kv("k_candidates", list(&t.k_candidates));
        kv("outlier_prior", fmt17(t.outlier.q));
        kv("outlier_shift", fmt17(t.outlier.d));
        kv("convergence_window", t.convergence_window.to_string());
        kv("convergence_rel_tol", fmt17(t.convergence_rel_tol));
        kv("convergence_noise_z", fmt17(t.convergence_noise_z));
        kv("seed", t.seed.to_string());
        kv("variance_kernel", kind.to_string());
        kv("feature_degree", t.feature_map.degree.to_string());
        kv("tuning_max_evals", t.tuning.max_evals.to_string());
        kv("tuning_rel_tol", fmt17(t.tuning.rel_tol));
        kv("tuning_initial_step", fmt17(t.tuning.initial_step));
        kv("warm_start_step", fmt17(t.warm_start_step));
        kv("init_eta", fmt17(t.tuning.init.eta));
        kv("init_sigma", list(&t.tuning.init.sigma_diag[1..]));
        kv("init_xi", fmt17(t.tuning.init.xi));
        kv("tune_eta", t.tuning.free.eta.to_string());
        kv("tune_sigma", t.tuning.free.sigma.to_string());
        kv("tune_xi", t.tuning.free.xi.to_string());
        kv("chain_samples", c.n_samples.to_string());
        kv("chain_burn_in", c.burn_in.to_string());
        kv("chain_proposal_sd", fmt17(c.proposal_sd));
        kv("chain_thin", c.thin.to_string());
        kv("chain_seed", c.seed.to_string());
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(&known) = KEYS.iter().find(|&&key| key == k) {
                if seen.contains(&known) {
                    return Err(Error::Config {
                        line,
                        message: format!("`{k}` is set twice"),
                    });
                }
                seen.push(known);
            }
            cfg.set(line, k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
