use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine maps `x ← x / x_scale − x_shift` and `y ← y / y_scale − y_shift`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_scale: f64,
    pub x_shift: f64,
    pub y_scale: f64,
    pub y_shift: f64,
}

impl Default for Standardization {
    /// Constants for SST in °C and UK'37 in [0, 1].
    fn default() -> Self {
        Self {
            x_scale: 6.5656,
            x_shift: 3.0205,
            y_scale: 0.2104,
            y_shift: 3.3642,
        }
    }
}

// interquartile range of a Student-t with 6 degrees of freedom
const T6_IQR: f64 = 1.435_116_392_981_992_6;

impl Standardization {
    pub fn identity() -> Self {
        Self {
            x_scale: 1.0,
            x_shift: 0.0,
            y_scale: 1.0,
            y_shift: 0.0,
        }
    }

    pub fn new(x_scale: f64, x_shift: f64, y_scale: f64, y_shift: f64) -> Result<Self> {
        let s = Self {
            x_scale,
            x_shift,
            y_scale,
            y_shift,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_scale > 0.0 && self.y_scale > 0.0) {
            return Err(Error::invalid("standardization scales must be positive"));
        }
        if ![self.x_scale, self.x_shift, self.y_scale, self.y_shift]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid("standardization constants must be finite"));
        }
        Ok(())
    }

    /// Re-derives constants so each variable has median 0 and the interquartile
    /// range of a Student-t with 6 degrees of freedom.
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        let (xs, xk) = robust_affine(x)?;
        let (ys, yk) = robust_affine(y)?;
        Self::new(xs, xk, ys, yk)
    }

    #[inline]
    pub fn x_to_std(&self, x: f64) -> f64 {
        x / self.x_scale - self.x_shift
    }

    #[inline]
    pub fn x_from_std(&self, x: f64) -> f64 {
        (x + self.x_shift) * self.x_scale
    }

    #[inline]
    pub fn y_to_std(&self, y: f64) -> f64 {
        y / self.y_scale - self.y_shift
    }

    #[inline]
    pub fn y_from_std(&self, y: f64) -> f64 {
        (y + self.y_shift) * self.y_scale
    }

    /// Converts a standardized y-variance to raw units.
    pub fn y_var_from_std(&self, v: f64) -> f64 {
        v * self.y_scale * self.y_scale
    }
}

fn robust_affine(v: &[f64]) -> Result<(f64, f64)> {
    if v.len() < 2 {
        return Err(Error::invalid("need at least two values to fit a standardization"));
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (s.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    let iqr = q(0.75) - q(0.25);
    if !(iqr > 0.0) {
        return Err(Error::invalid("interquartile range is zero; cannot fit a standardization"));
    }
    let scale = iqr / T6_IQR;
    Ok((scale, q(0.5) / scale))
}
