//! Landscape sample records and their CSV form.
//!
//! Columns are exactly `sigma,alpha,beta,psnr_db,n_eval,seed,source`. A
//! leading `# config_hash: <hex>` comment line is written when a hash is
//! supplied and skipped by readers.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::space::SpecificationSpace;
use crate::error::{Error, Result};
use crate::noise::Specification;

pub const SAMPLE_COLUMNS: [&str; 7] = ["sigma", "alpha", "beta", "psnr_db", "n_eval", "seed", "source"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleSource {
    Ideal,
    CurrentModel,
    External,
}

impl SampleSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleSource::Ideal => "ideal",
            SampleSource::CurrentModel => "current-model",
            SampleSource::External => "external",
        }
    }
}

impl std::str::FromStr for SampleSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ideal" => Ok(SampleSource::Ideal),
            "current-model" => Ok(SampleSource::CurrentModel),
            "external" => Ok(SampleSource::External),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeSample {
    pub theta: Specification,
    pub psnr_db: f64,
    pub n_eval: u64,
    pub seed: u64,
    pub source: SampleSource,
}

impl LandscapeSample {
    pub fn validate(&self) -> Result<()> {
        if !self.psnr_db.is_finite() {
            return Err(Error::NonFinite(format!("sample psnr {}", self.psnr_db)));
        }
        if self.n_eval == 0 {
            return Err(Error::invalid("sample n_eval must be >= 1"));
        }
        Ok(())
    }
}

/// Reads the `# config_hash:` comment from the first line of a file, if any.
pub fn read_config_hash(path: &Path) -> Result<Option<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(first
        .trim()
        .strip_prefix("# config_hash:")
        .map(|h| h.trim().to_string()))
}

pub(crate) fn write_hash_line(out: &mut impl Write, hash: Option<&str>) -> std::io::Result<()> {
    if let Some(h) = hash {
        writeln!(out, "# config_hash: {h}")?;
    }
    Ok(())
}

pub fn write_samples(path: &Path, samples: &[LandscapeSample], config_hash: Option<&str>) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_hash_line(&mut file, config_hash).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let wrap = |e: csv::Error| Error::csv(path, e);
    w.write_record(SAMPLE_COLUMNS).map_err(wrap)?;
    for s in samples {
        w.write_record([
            s.theta.sigma().to_string(),
            s.theta.alpha().to_string(),
            s.theta.beta().to_string(),
            s.psnr_db.to_string(),
            s.n_eval.to_string(),
            s.seed.to_string(),
            s.source.as_str().to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file))
}

pub(crate) fn check_header(path: &Path, reader: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(|e| Error::csv(path, e))?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(Error::csv(
            path,
            format!("expected columns {expected:?}, found {found:?}"),
        ));
    }
    Ok(())
}

pub(crate) fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| Error::csv(path, format!("line {line}: bad {name} {raw:?}: {e}")))
}

/// Reads samples, activating exactly the dimensions of `space`.
pub fn read_samples(path: &Path, space: &SpecificationSpace) -> Result<Vec<LandscapeSample>> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &SAMPLE_COLUMNS)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let f = |i: usize| &record[i];
        let sigma: f64 = parse_field(path, line, "sigma", f(0))?;
        let alpha: f64 = parse_field(path, line, "alpha", f(1))?;
        let beta: f64 = parse_field(path, line, "beta", f(2))?;
        let theta = space
            .spec_from_columns(sigma, alpha, beta)
            .map_err(|e| Error::csv(path, format!("line {line}: {e}")))?;
        let source: SampleSource = parse_field(path, line, "source", f(6))?;
        let sample = LandscapeSample {
            theta,
            psnr_db: parse_field(path, line, "psnr_db", f(3))?,
            n_eval: parse_field(path, line, "n_eval", f(4))?,
            seed: parse_field(path, line, "seed", f(5))?,
            source,
        };
        sample
            .validate()
            .map_err(|e| Error::csv(path, format!("line {line}: {e}")))?;
        out.push(sample);
    }
    Ok(out)
}
