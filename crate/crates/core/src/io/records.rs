use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::fmt17;

/// One calibration observation in raw units.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationRecord {
    /// °C
    pub sst: f64,
    /// in [0, 1]
    pub uk37: f64,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub site_id: Option<String>,
}

/// A proxy value to invert, optionally tied to a site.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxyObservation {
    pub uk37: f64,
    pub site_id: Option<String>,
}

struct Columns {
    names: Vec<String>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Self {
            names: headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect(),
        }
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.find(name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

fn line_of(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(fallback)
}

fn cell_f64(rec: &csv::StringRecord, idx: usize, column: &str, row: usize) -> Result<f64> {
    let raw = rec.get(idx).unwrap_or("").trim();
    let v: f64 = raw.parse().map_err(|_| Error::Cell {
        row,
        column: column.into(),
        message: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Cell {
            row,
            column: column.into(),
            message: format!("`{raw}` is not finite"),
        });
    }
    Ok(v)
}

fn optional_f64(
    rec: &csv::StringRecord,
    idx: Option<usize>,
    column: &str,
    row: usize,
) -> Result<Option<f64>> {
    match idx {
        Some(i) if !rec.get(i).unwrap_or("").trim().is_empty() => {
            cell_f64(rec, i, column, row).map(Some)
        }
        _ => Ok(None),
    }
}

fn check_uk37(v: f64, row: usize) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::Cell {
            row,
            column: "uk37".into(),
            message: format!("{v} lies outside [0, 1]"),
        })
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

/// Parses calibration records. Row numbers in errors are file line numbers.
pub fn read_records<R: Read>(input: R) -> Result<Vec<ObservationRecord>> {
    let mut rdr = reader(input);
    let cols = Columns::new(rdr.headers()?);
    let sst = cols.require("sst")?;
    let uk = cols.require("uk37")?;
    let (lat, lon, site) = (cols.find("lat"), cols.find("lon"), cols.find("site_id"));

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line_of(&rec, i + 2);
        out.push(ObservationRecord {
            sst: cell_f64(&rec, sst, "sst", row)?,
            uk37: check_uk37(cell_f64(&rec, uk, "uk37", row)?, row)?,
            lat: optional_f64(&rec, lat, "lat", row)?,
            lon: optional_f64(&rec, lon, "lon", row)?,
            site_id: site
                .and_then(|s| rec.get(s))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from),
        });
    }
    Ok(out)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<ObservationRecord>> {
    read_records(File::open(path)?)
}

/// Parses proxy-only observations (`uk37` required, `site_id` optional).
pub fn read_observations<R: Read>(input: R) -> Result<Vec<ProxyObservation>> {
    let mut rdr = reader(input);
    let cols = Columns::new(rdr.headers()?);
    let uk = cols.require("uk37")?;
    let site = cols.find("site_id");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line_of(&rec, i + 2);
        out.push(ProxyObservation {
            uk37: check_uk37(cell_f64(&rec, uk, "uk37", row)?, row)?,
            site_id: site
                .and_then(|s| rec.get(s))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from),
        });
    }
    Ok(out)
}

pub fn load_observations(path: impl AsRef<Path>) -> Result<Vec<ProxyObservation>> {
    read_observations(File::open(path)?)
}

/// Writes records with an optional extra 0/1 column (e.g. injected outliers).
pub fn write_records<W: Write>(
    out: W,
    records: &[ObservationRecord],
    flag: Option<(&str, &[bool])>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sst", "uk37", "lat", "lon", "site_id"];
    if let Some((name, _)) = flag {
        header.push(name);
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![
            fmt17(r.sst),
            fmt17(r.uk37),
            opt(r.lat),
            opt(r.lon),
            r.site_id.clone().unwrap_or_default(),
        ];
        if let Some((_, flags)) = flag {
            row.push(if flags[i] { "1".into() } else { "0".into() });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, records: &[ObservationRecord]) -> Result<()> {
    write_records(File::create(path)?, records, None)
}

/// Reads a site exclusion list: one site id per line, `#` comments allowed.
pub fn read_site_list<R: Read>(mut input: R) -> Result<HashSet<String>> {
    let mut s = String::new();
    input.read_to_string(&mut s)?;
    Ok(s.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Drops records whose site id is in `excluded`.
pub fn exclude_sites(records: Vec<ObservationRecord>, excluded: &HashSet<String>) -> Vec<ObservationRecord> {
    records
        .into_iter()
        .filter(|r| r.site_id.as_ref().is_none_or(|s| !excluded.contains(s)))
        .collect()
}
