//! Model artifact: a JSON document with a schema name and `major.minor` version.
//!
//! The Cholesky factor is not stored. Loading refactorizes from the stored
//! inputs, which reproduces it exactly on the same platform, and checks the
//! stored weights against the recomputed ones.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::gp::TrainedPosterior;
use crate::hetvar::{KernelKind, VarianceModel};
use crate::io::{fmt17, Standardization};
use crate::kernels::{FeatureMap, KernelParams};
use crate::outliers::OutlierState;
use crate::trainer::{IterationRecord, ModelArtifact, TrainLoopConfig};

pub const SCHEMA: &str = "hgpr-model";
pub const MAJOR: u32 = 1;
pub const MINOR: u32 = 0;

// relative mismatch tolerated between stored and recomputed weights
const ALPHA_TOL: f64 = 1e-8;

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    version: String,
}

#[derive(Serialize, Deserialize)]
struct PosteriorDoc {
    feature_map: FeatureMap,
    x: Vec<f64>,
    y: Vec<f64>,
    noise_diag: Vec<f64>,
    xi_sq_eff: f64,
    alpha: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct VarianceDoc {
    kernel_kind: KernelKind,
    k_fraction: f64,
    anchors: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    schema: String,
    version: String,
    standardization: Standardization,
    config: TrainLoopConfig,
    params: KernelParams,
    history: Vec<IterationRecord>,
    train_x: Vec<f64>,
    train_y: Vec<f64>,
    labels: OutlierState,
    posterior: PosteriorDoc,
    variance: VarianceDoc,
}

/// Pretty JSON with every float printed to 17 significant digits.
struct FloatFormatter(PrettyFormatter<'static>);

impl Formatter for FloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt17(v).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

fn check_finite(what: &str, vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Artifact(format!("{what} contains non-finite values")))
    }
}

/// Serializes an artifact to its document text.
pub fn render_artifact(a: &ModelArtifact) -> Result<String> {
    let post = &a.posterior;
    let doc = Document {
        schema: SCHEMA.into(),
        version: format!("{MAJOR}.{MINOR}"),
        standardization: a.standardization,
        config: a.config.clone(),
        params: a.params.clone(),
        history: a.history.clone(),
        train_x: a.train_x.clone(),
        train_y: a.train_y.clone(),
        labels: a.labels.clone(),
        posterior: PosteriorDoc {
            feature_map: post.feature_map(),
            x: post.train_x().to_vec(),
            y: post.train_y().to_vec(),
            noise_diag: post.noise_diag().to_vec(),
            xi_sq_eff: post.xi_sq_eff(),
            alpha: post.alpha().to_vec(),
        },
        variance: VarianceDoc {
            kernel_kind: a.variance.kernel_kind(),
            k_fraction: a.variance.k_fraction(),
            anchors: a.variance.anchors(),
            weights: a.variance.weights(),
        },
    };
    check_finite("posterior weights", &doc.posterior.alpha)?;
    check_finite("history", &doc.history.iter().map(|h| h.avg_inlier_loglik).collect::<Vec<_>>())?;

    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FloatFormatter(PrettyFormatter::new()));
    doc.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn save_artifact(a: &ModelArtifact, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_artifact(a)?)?;
    Ok(())
}

fn check_version(text: &str) -> Result<()> {
    let header: Header = serde_json::from_str(text)
        .map_err(|e| Error::Artifact(format!("missing schema header: {e}")))?;
    if header.schema != SCHEMA {
        return Err(Error::Artifact(format!(
            "unexpected schema `{}` (expected `{SCHEMA}`)",
            header.schema
        )));
    }
    let major: u32 = header
        .version
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .ok_or_else(|| Error::Artifact(format!("malformed version `{}`", header.version)))?;
    if major != MAJOR {
        return Err(Error::UnsupportedVersion {
            found: header.version,
            supported: MAJOR,
        });
    }
    Ok(())
}

/// Parses an artifact document and rebuilds the fitted models.
pub fn parse_artifact(text: &str) -> Result<ModelArtifact> {
    check_version(text)?;
    let doc: Document = serde_json::from_str(text)?;
    doc.standardization.validate()?;
    doc.config.validate()?;
    doc.params.validate()?;
    let n = doc.train_x.len();
    if doc.train_y.len() != n || doc.labels.labels.len() != n || doc.labels.posterior_probs.len() != n {
        return Err(Error::Artifact("training arrays have inconsistent lengths".into()));
    }
    check_finite("training data", &doc.train_x)?;
    check_finite("training data", &doc.train_y)?;

    let p = &doc.posterior;
    if p.alpha.len() != p.x.len() {
        return Err(Error::Artifact("posterior weights have the wrong length".into()));
    }
    if !(p.xi_sq_eff >= 0.0 && p.xi_sq_eff.is_finite()) {
        return Err(Error::Artifact("effective jitter must be finite and non-negative".into()));
    }
    let posterior =
        TrainedPosterior::from_parts(p.feature_map, &p.x, &p.y, &doc.params, &p.noise_diag, p.xi_sq_eff)?;
    let scale = p.alpha.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let drift = posterior
        .alpha()
        .iter()
        .zip(&p.alpha)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(drift <= ALPHA_TOL * scale) {
        return Err(Error::Artifact(format!(
            "stored posterior weights disagree with the refactorized model (max deviation {drift:e})"
        )));
    }

    let v = &doc.variance;
    let variance = VarianceModel::new(&v.anchors, &v.weights, v.k_fraction, v.kernel_kind)?;

    Ok(ModelArtifact {
        standardization: doc.standardization,
        config: doc.config,
        train_x: doc.train_x,
        train_y: doc.train_y,
        params: doc.params,
        posterior,
        variance,
        labels: doc.labels,
        history: doc.history,
    })
}

pub fn load_artifact(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    parse_artifact(&fs::read_to_string(path)?)
}
