use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io::records::ObservationRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanShape {
    Linear,
    Sigmoid,
    Sine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseShape {
    Constant,
    Ramp,
    Sinusoidal,
}

const MEAN_TAGS: &str = "linear, sigmoid, sine";
const NOISE_TAGS: &str = "constant, ramp, sinusoidal";

impl FromStr for MeanShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "sigmoid" => Ok(Self::Sigmoid),
            "sine" => Ok(Self::Sine),
            _ => Err(Error::UnknownTag {
                what: "mean function",
                tag: s.into(),
                available: MEAN_TAGS.into(),
            }),
        }
    }
}

impl FromStr for NoiseShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "ramp" => Ok(Self::Ramp),
            "sinusoidal" => Ok(Self::Sinusoidal),
            _ => Err(Error::UnknownTag {
                what: "noise function",
                tag: s.into(),
                available: NOISE_TAGS.into(),
            }),
        }
    }
}

impl fmt::Display for MeanShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Linear => "linear",
            Self::Sigmoid => "sigmoid",
            Self::Sine => "sine",
        })
    }
}

impl fmt::Display for NoiseShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Constant => "constant",
            Self::Ramp => "ramp",
            Self::Sinusoidal => "sinusoidal",
        })
    }
}

impl MeanShape {
    /// Proxy mean at position `t ∈ [0, 1]` of the covariate range; stays in [0.1, 0.9].
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Self::Linear => 0.1 + 0.8 * t,
            Self::Sigmoid => 0.1 + 0.8 / (1.0 + (-10.0 * (t - 0.5)).exp()),
            Self::Sine => 0.5 + 0.3 * (std::f64::consts::TAU * t).sin(),
        }
    }
}

impl NoiseShape {
    /// Noise sd at `t ∈ [0, 1]`; the non-constant shapes span `scale` to `3·scale`.
    pub fn eval(self, t: f64, scale: f64) -> f64 {
        match self {
            Self::Constant => scale,
            Self::Ramp => scale * (1.0 + 2.0 * t),
            Self::Sinusoidal => scale * (2.0 + (std::f64::consts::TAU * t).sin()),
        }
    }
}

/// Synthetic calibration dataset recipe. Parses from `key=value,...`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub mean: MeanShape,
    pub noise: NoiseShape,
    pub noise_scale: f64,
    pub outlier_frac: f64,
    /// displacement of injected outliers in noise sd
    pub outlier_shift: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            mean: MeanShape::Sigmoid,
            noise: NoiseShape::Ramp,
            noise_scale: 0.02,
            outlier_frac: 0.0,
            outlier_shift: 5.0,
            x_lo: 0.0,
            x_hi: 30.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::invalid("synthetic n must be at least 10"));
        }
        if !(0.0..1.0).contains(&self.outlier_frac) {
            return Err(Error::invalid("outlier_frac must lie in [0, 1)"));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::invalid("noise_scale must be positive"));
        }
        if !(self.outlier_shift >= 0.0 && self.outlier_shift.is_finite()) {
            return Err(Error::invalid("outlier_shift must be non-negative"));
        }
        if !(self.x_lo.is_finite() && self.x_hi.is_finite() && self.x_lo < self.x_hi) {
            return Err(Error::invalid("x range must satisfy x_lo < x_hi"));
        }
        Ok(())
    }

    fn position(&self, x: f64) -> f64 {
        (x - self.x_lo) / (self.x_hi - self.x_lo)
    }

    pub fn true_mean(&self, x: f64) -> f64 {
        self.mean.eval(self.position(x))
    }

    pub fn true_sd(&self, x: f64) -> f64 {
        self.noise.eval(self.position(x), self.noise_scale)
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::invalid(format!("synth spec: bad value `{v}` for `{key}`")))
}

impl FromStr for SynthSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = Self::default();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("synth spec: expected key=value, got `{item}`")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "n" => spec.n = parse_num(k, v)?,
                "mean" | "mean_fn" => spec.mean = v.parse()?,
                "noise" | "noise_fn" => spec.noise = v.parse()?,
                "noise_scale" => spec.noise_scale = parse_num(k, v)?,
                "outlier_frac" => spec.outlier_frac = parse_num(k, v)?,
                "outlier_shift" => spec.outlier_shift = parse_num(k, v)?,
                "x_lo" => spec.x_lo = parse_num(k, v)?,
                "x_hi" => spec.x_hi = parse_num(k, v)?,
                "seed" => spec.seed = parse_num(k, v)?,
                _ => {
                    return Err(Error::UnknownTag {
                        what: "synth spec key",
                        tag: k.into(),
                        available: "n, mean, noise, noise_scale, outlier_frac, outlier_shift, x_lo, x_hi, seed"
                            .into(),
                    })
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Generated records with the ground truth used to create them.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub records: Vec<ObservationRecord>,
    pub is_outlier: Vec<bool>,
    pub true_mean: Vec<f64>,
    pub true_sd: Vec<f64>,
}

impl SynthData {
    pub fn x(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sst).collect()
    }

    pub fn y(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.uk37).collect()
    }
}

/// Draws `n` points with x uniform over the range and Gaussian noise around the
/// mean shape. Exactly `round(outlier_frac·n)` points are replaced by the mean
/// shifted `±outlier_shift` noise sd, flipping direction when the shift would
/// leave [0, 1].
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let mut records = Vec::with_capacity(n);
    let mut true_mean = Vec::with_capacity(n);
    let mut true_sd = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(spec.x_lo..spec.x_hi);
        let m = spec.true_mean(x);
        let sd = spec.true_sd(x);
        let z: f64 = rng.sample(StandardNormal);
        records.push(ObservationRecord {
            sst: x,
            uk37: (m + sd * z).clamp(0.0, 1.0),
            lat: None,
            lon: None,
            site_id: None,
        });
        true_mean.push(m);
        true_sd.push(sd);
    }

    let n_out = (spec.outlier_frac * n as f64).round() as usize;
    let mut is_outlier = vec![false; n];
    let mut picked = index::sample(&mut rng, n, n_out).into_vec();
    picked.sort_unstable();
    for i in picked {
        is_outlier[i] = true;
        let up = rng.random_bool(0.5);
        let shift = spec.outlier_shift * true_sd[i];
        let y = true_mean[i];
        let mut moved = if up { y + shift } else { y - shift };
        if !(0.0..=1.0).contains(&moved) {
            moved = if up { y - shift } else { y + shift };
        }
        records[i].uk37 = moved.clamp(0.0, 1.0);
    }

    Ok(SynthData {
        records,
        is_outlier,
        true_mean,
        true_sd,
    })
}
