//! File formats: CSV records, synthetic data, model artifacts, config files and
//! diagnostic exports.

pub mod artifact;
pub mod config;
pub mod export;
pub mod records;
pub mod standardize;
pub mod synth;

pub use artifact::{load_artifact, parse_artifact, render_artifact, save_artifact};
pub use config::RunConfig;
pub use records::{load_csv, load_observations, ObservationRecord, ProxyObservation};
pub use standardize::Standardization;
pub use synth::{generate_synthetic, SynthData, SynthSpec};

/// Formats a float with 17 significant digits, which round-trips every `f64`.
///
/// Moderate magnitudes print in positional notation, others in scientific.
pub fn fmt17(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{v:.16e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..17).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, v)
    } else {
        sci
    }
}

/// Parses a comma-separated list of floats such as `--at 10,15.5,20`.
pub fn parse_float_list(s: &str) -> crate::Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let p = part.trim();
        if p.is_empty() {
            continue;
        }
        let v: f64 = p
            .parse()
            .map_err(|_| crate::Error::invalid(format!("`{p}` is not a number")))?;
        if !v.is_finite() {
            return Err(crate::Error::invalid(format!("`{p}` is not finite")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(crate::Error::Empty("value list"));
    }
    Ok(out)
}
