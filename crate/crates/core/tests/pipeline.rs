use std::fs;

use hgpr::io::artifact::{parse_artifact, render_artifact};
use hgpr::io::export::{export_diagnostics, FILES};
use hgpr::io::{generate_synthetic, Standardization, SynthSpec};
use hgpr::trainer::{mean_curvature_profile, train, train_raw, ModelArtifact};
use hgpr::{Error, TrainLoopConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

fn quick_cfg(iters: usize) -> TrainLoopConfig {
    TrainLoopConfig {
        max_iters: iters,
        seed: 4,
        ..TrainLoopConfig::default()
    }
}

fn small_model() -> (hgpr::io::SynthData, ModelArtifact) {
    let spec: SynthSpec = "n=150,outlier_frac=0.04,seed=8".parse().unwrap();
    let d = generate_synthetic(&spec).unwrap();
    let a = train_raw(&d.x(), &d.y(), Standardization::default(), &quick_cfg(4)).unwrap();
    (d, a)
}

fn read_tsv(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::ReaderBuilder::new().delimiter(b'\t').from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn artifact_round_trip_is_exact() {
    let (_, a) = small_model();
    let text = render_artifact(&a).unwrap();
    let back = parse_artifact(&text).unwrap();
    assert_eq!(render_artifact(&back).unwrap(), text);
    for x in [-2.0, -0.3, 0.0, 0.7, 2.5] {
        assert_eq!(a.predict_std(x).unwrap(), back.predict_std(x).unwrap());
    }
}

#[test]
fn newer_major_version_is_rejected() {
    let (_, a) = small_model();
    let text = render_artifact(&a).unwrap().replacen("\"version\": \"1.0\"", "\"version\": \"2.0\"", 1);
    match parse_artifact(&text) {
        Err(Error::UnsupportedVersion { found, supported }) => {
            assert_eq!(found, "2.0");
            assert_eq!(supported, 1);
        }
        other => panic!("unexpected {other:?}"),
    }
    let minor = render_artifact(&a).unwrap().replacen("\"version\": \"1.0\"", "\"version\": \"1.7\"", 1);
    assert!(parse_artifact(&minor).is_ok());
}

#[test]
fn tampered_or_foreign_documents_are_rejected() {
    let (_, a) = small_model();
    let text = render_artifact(&a).unwrap();
    assert!(parse_artifact(&text.replacen("hgpr-model", "other", 1)).is_err());
    assert!(parse_artifact("{}").is_err());
    assert!(parse_artifact(&text[..text.len() / 2]).is_err());
    let at = text.find("\"alpha\": [").unwrap() + "\"alpha\": [".len();
    let end = at + text[at..].find(',').unwrap();
    let bumped = format!("{}12345.0{}", &text[..at], &text[end..]);
    assert!(matches!(parse_artifact(&bumped), Err(Error::Artifact(_))));
}

#[test]
fn input_order_does_not_change_the_artifact() {
    let spec: SynthSpec = "n=120,seed=21".parse().unwrap();
    let d = generate_synthetic(&spec).unwrap();
    let (x, y) = (d.x(), d.y());
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let s = Standardization::default();
    let a = train_raw(&x, &y, s, &quick_cfg(3)).unwrap();
    let b = train_raw(&xs, &ys, s, &quick_cfg(3)).unwrap();
    assert_eq!(render_artifact(&a).unwrap(), render_artifact(&b).unwrap());
}

#[test]
fn diagnostics_have_declared_headers_and_band_identity() {
    let (d, a) = small_model();
    let dir = tempfile::tempdir().unwrap();
    let paths = export_diagnostics(&a, &d.records, dir.path()).unwrap();
    assert_eq!(paths.len(), 8);
    let expected: [&[&str]; 8] = [
        &["iteration", "avg_inlier_loglik", "outlier_fraction", "k_fraction"],
        &["x", "mean", "nu", "lambda", "lower", "upper"],
        &["x", "y", "lat", "lon", "label", "outlier_prob"],
        &["x", "sd_total", "sd_mean", "sd_noise"],
        &["x", "curvature"],
        &["bin_lo", "bin_hi", "count", "density", "normal_density"],
        &["theoretical", "sample"],
        &["x", "residual", "label"],
    ];
    for (name, header) in FILES.iter().zip(expected) {
        let (h, rows) = read_tsv(&dir.path().join(name));
        assert_eq!(h, header, "{name}");
        assert!(!rows.is_empty(), "{name}");
        assert!(rows.iter().all(|r| r.len() == header.len()), "{name}");
    }

    let (_, rows) = read_tsv(&dir.path().join("regression_band.tsv"));
    for r in rows {
        let v: Vec<f64> = r.iter().map(|c| c.parse().unwrap()).collect();
        let half = 1.96 * (v[2] + v[3]).sqrt();
        assert!((v[5] - v[1] - half).abs() <= 1e-9);
        assert!((v[1] - v[4] - half).abs() <= 1e-9);
    }
    let (_, rows) = read_tsv(&dir.path().join("history.tsv"));
    assert_eq!(rows.len(), a.history.len());
}

#[test]
fn export_into_unwritable_location_fails() {
    let (d, a) = small_model();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    assert!(export_diagnostics(&a, &d.records, blocker.join("sub")).is_err());
}

// The gap is taken on the probability scale, |Φ(sample) − Φ(theoretical)|,
// i.e. a Kolmogorov-Smirnov distance. On the quantile scale the extreme order
// statistics of even exactly normal samples miss by ~0.4 at this size.
#[test]
fn qq_gap_is_small_on_well_specified_data() {
    let spec: SynthSpec = "n=1000,seed=31".parse().unwrap();
    let d = generate_synthetic(&spec).unwrap();
    let a = train_raw(&d.x(), &d.y(), Standardization::default(), &TrainLoopConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_diagnostics(&a, &d.records, dir.path()).unwrap();
    let (_, rows) = read_tsv(&dir.path().join("qq.tsv"));
    assert!(rows.len() >= 950, "{} inliers", rows.len());
    let normal = Normal::new(0.0, 1.0).unwrap();
    let gap = rows
        .iter()
        .map(|r| {
            let t: f64 = r[0].parse().unwrap();
            let s: f64 = r[1].parse().unwrap();
            (normal.cdf(t) - normal.cdf(s)).abs()
        })
        .fold(0.0, f64::max);
    assert!(gap <= 0.15, "max probability gap {gap}");
}

#[test]
fn curvature_of_a_parabola() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.5..1.5)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|v| v * v + 0.05 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let a = train(&x, &y, &quick_cfg(6)).unwrap();
    let grid: Vec<f64> = (0..9).map(|i| -0.8 + 0.2 * i as f64).collect();
    for (g, c) in grid.iter().zip(mean_curvature_profile(&a, &grid).unwrap()) {
        assert!((c - 2.0).abs() <= 0.2, "curvature {c} at {g}");
    }
}

#[test]
fn noiseless_data_rarely_flags_outliers() {
    let x: Vec<f64> = (0..200).map(|i| -2.0 + 4.0 * i as f64 / 199.0).collect();
    let y: Vec<f64> = x.iter().map(|v| v.tanh()).collect();
    let a = train(&x, &y, &quick_cfg(8)).unwrap();
    for h in &a.history {
        assert!(h.outlier_fraction <= 0.02, "iteration {}: {}", h.iter, h.outlier_fraction);
    }
}

#[test]
fn too_many_outliers_is_a_numerical_error() {
    // a huge prior outlier rate leaves almost nobody to condition on
    let cfg = TrainLoopConfig {
        outlier: hgpr::OutlierConfig::new(0.999999, 2.48).unwrap(),
        ..quick_cfg(5)
    };
    let x: Vec<f64> = (0..20).map(|i| i as f64 / 10.0).collect();
    let y: Vec<f64> = x.iter().map(|v| v * 0.5).collect();
    let err = train(&x, &y, &cfg).unwrap_err();
    assert!(matches!(err, Error::TooFewInliers { .. }), "{err}");
    assert_eq!(err.kind(), hgpr::ErrorKind::Numerical);
}
