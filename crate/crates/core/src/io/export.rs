//! Tab-separated diagnostic tables, one file per view of a trained model.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::io::fmt17;
use crate::io::records::ObservationRecord;
use crate::trainer::{mean_curvature_profile, ModelArtifact};

pub const GRID_POINTS: usize = 200;
pub const BAND_Z: f64 = 1.96;
pub const HIST_LO: f64 = -5.0;
pub const HIST_HI: f64 = 5.0;
pub const HIST_BINS: usize = 40;

pub const FILES: [&str; 8] = [
    "history.tsv",
    "regression_band.tsv",
    "labels.tsv",
    "stddev_profile.tsv",
    "curvature.tsv",
    "residuals.tsv",
    "qq.tsv",
    "residual_scatter.tsv",
];

struct Table {
    out: BufWriter<File>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(dir.join(name))?);
        writeln!(out, "{}", header.join("\t"))?;
        Ok(Self { out })
    }

    fn row(&mut self, cells: &[String]) -> Result<()> {
        writeln!(self.out, "{}", cells.join("\t"))?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_else(|| "NA".into())
}

/// Evenly spaced grid spanning `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 || lo == hi {
        return vec![lo; n.max(1)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Per-observation quantities shared by several tables.
struct Scored {
    x: f64,
    y: f64,
    residual: f64,
    prob: f64,
    outlier: bool,
}

fn score(a: &ModelArtifact, data: &[ObservationRecord]) -> Result<Vec<Scored>> {
    let s = &a.standardization;
    let xs: Vec<f64> = data.iter().map(|r| s.x_to_std(r.sst)).collect();
    let preds = a.predict_many_std(&xs)?;
    Ok(data
        .iter()
        .zip(&preds)
        .map(|(r, p)| {
            let resid = (s.y_to_std(r.uk37) - p.mu) / p.total_var().sqrt();
            let prob = crate::outliers::prob_from_residual(resid, &a.config.outlier);
            Scored {
                x: r.sst,
                y: r.uk37,
                residual: resid,
                prob,
                outlier: prob >= 0.5,
            }
        })
        .collect())
}

/// Writes all diagnostic tables into `dir` (created if absent) and returns
/// their paths. Labels are the posterior-mode classification of `data`.
pub fn export_diagnostics(
    a: &ModelArtifact,
    data: &[ObservationRecord],
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    if data.is_empty() {
        return Err(Error::Empty("diagnostic data"));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let s = a.standardization;
    let scored = score(a, data)?;

    let mut t = Table::create(dir, FILES[0], &["iteration", "avg_inlier_loglik", "outlier_fraction", "k_fraction"])?;
    for h in &a.history {
        t.row(&[
            h.iter.to_string(),
            fmt17(h.avg_inlier_loglik),
            fmt17(h.outlier_fraction),
            fmt17(h.k_fraction),
        ])?;
    }
    t.finish()?;

    let lo = data.iter().map(|r| r.sst).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|r| r.sst).fold(f64::NEG_INFINITY, f64::max);
    let g = grid(lo, hi, GRID_POINTS);
    let gs: Vec<f64> = g.iter().map(|&x| s.x_to_std(x)).collect();
    let preds = a.predict_many_std(&gs)?;
    let var_raw = |v: f64| s.y_var_from_std(v);

    // variances in raw units; half-width = 1.96·sqrt(nu + lambda)
    let mut t = Table::create(
        dir,
        FILES[1],
        &["x", "mean", "nu", "lambda", "lower", "upper"],
    )?;
    for (x, p) in g.iter().zip(&preds) {
        let m = s.y_from_std(p.mu);
        let (nu, lam) = (var_raw(p.nu), var_raw(p.lambda));
        let half = BAND_Z * (nu + lam).sqrt();
        t.row(&[fmt17(*x), fmt17(m), fmt17(nu), fmt17(lam), fmt17(m - half), fmt17(m + half)])?;
    }
    t.finish()?;

    let mut t = Table::create(dir, FILES[2], &["x", "y", "lat", "lon", "label", "outlier_prob"])?;
    for (r, sc) in data.iter().zip(&scored) {
        t.row(&[
            fmt17(sc.x),
            fmt17(sc.y),
            opt(r.lat),
            opt(r.lon),
            (sc.outlier as u8).to_string(),
            fmt17(sc.prob),
        ])?;
    }
    t.finish()?;

    let mut t = Table::create(dir, FILES[3], &["x", "sd_total", "sd_mean", "sd_noise"])?;
    for (x, p) in g.iter().zip(&preds) {
        t.row(&[
            fmt17(*x),
            fmt17(var_raw(p.total_var()).sqrt()),
            fmt17(var_raw(p.nu).sqrt()),
            fmt17(var_raw(p.lambda).sqrt()),
        ])?;
    }
    t.finish()?;

    let curv = mean_curvature_profile(a, &g)?;
    let mut t = Table::create(dir, FILES[4], &["x", "curvature"])?;
    for (x, c) in g.iter().zip(&curv) {
        t.row(&[fmt17(*x), fmt17(*c)])?;
    }
    t.finish()?;

    let mut inlier_res: Vec<f64> = scored.iter().filter(|s| !s.outlier).map(|s| s.residual).collect();
    inlier_res.sort_by(f64::total_cmp);
    let normal = std_normal();

    let width = (HIST_HI - HIST_LO) / HIST_BINS as f64;
    let mut counts = vec![0usize; HIST_BINS];
    for &r in &inlier_res {
        if (HIST_LO..HIST_HI).contains(&r) {
            let b = (((r - HIST_LO) / width) as usize).min(HIST_BINS - 1);
            counts[b] += 1;
        }
    }
    let total = inlier_res.len().max(1) as f64;
    let mut t = Table::create(dir, FILES[5], &["bin_lo", "bin_hi", "count", "density", "normal_density"])?;
    for (b, &c) in counts.iter().enumerate() {
        let l = HIST_LO + b as f64 * width;
        let h = l + width;
        t.row(&[
            fmt17(l),
            fmt17(h),
            c.to_string(),
            fmt17(c as f64 / (total * width)),
            fmt17(normal.pdf(0.5 * (l + h))),
        ])?;
    }
    t.finish()?;

    let mut t = Table::create(dir, FILES[6], &["theoretical", "sample"])?;
    let n = inlier_res.len() as f64;
    for (i, &r) in inlier_res.iter().enumerate() {
        let q = normal.inverse_cdf((i as f64 + 0.5) / n);
        t.row(&[fmt17(q), fmt17(r)])?;
    }
    t.finish()?;

    let mut t = Table::create(dir, FILES[7], &["x", "residual", "label"])?;
    for sc in &scored {
        t.row(&[fmt17(sc.x), fmt17(sc.residual), (sc.outlier as u8).to_string()])?;
    }
    t.finish()?;

    Ok(FILES.iter().map(|f| dir.join(f)).collect())
}
