//! File-based exchange with a learner running in another process.
//!
//! Round `t`:
//! 1. the scheduler writes `lambda_<t>.csv` and then `request_<t>.ready`;
//! 2. the learner trains, writes `loss_<t>.csv` and then `response_<t>.ready`.
//!
//! Every data file is written to a temporary name and renamed into place, so
//! a sentinel never points at a half-written file.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use super::Trainer;
use crate::error::{Error, Result};
use crate::landscape::{check_header, csv_reader, parse_field, SpecificationSpace};
use crate::scheduler::SamplingDistribution;

pub const LAMBDA_COLUMNS: [&str; 5] = ["index", "sigma", "alpha", "beta", "weight"];
pub const LOSS_COLUMNS: [&str; 5] = ["index", "sigma", "alpha", "beta", "psnr_db"];

fn lambda_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("lambda_{t}.csv"))
}

fn loss_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("loss_{t}.csv"))
}

fn request_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("request_{t}.ready"))
}

fn response_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("response_{t}.ready"))
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_grid_table(path: &Path, space: &SpecificationSpace, columns: &[&str], values: &[f64]) -> Result<()> {
    if values.len() != space.len() {
        return Err(Error::GridMismatch(format!(
            "{} values for a grid of {}",
            values.len(),
            space.len()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::csv(path, e);
    w.write_record(columns).map_err(wrap)?;
    for (i, v) in values.iter().enumerate() {
        let theta = space.point(i);
        w.write_record([
            i.to_string(),
            theta.sigma().to_string(),
            theta.alpha().to_string(),
            theta.beta().to_string(),
            v.to_string(),
        ])
        .map_err(wrap)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::csv(path, e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Reads a five-column grid table and checks that row `i` is grid point `i`.
fn read_grid_table(path: &Path, space: &SpecificationSpace, columns: &[&str]) -> Result<Vec<f64>> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, columns)?;
    let mut out = Vec::with_capacity(space.len());
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let index: usize = parse_field(path, line, "index", &record[0])?;
        let sigma: f64 = parse_field(path, line, "sigma", &record[1])?;
        let alpha: f64 = parse_field(path, line, "alpha", &record[2])?;
        let beta: f64 = parse_field(path, line, "beta", &record[3])?;
        let value: f64 = parse_field(path, line, columns[4], &record[4])?;
        if index != out.len() {
            return Err(Error::GridMismatch(format!(
                "{}: line {line} has index {index}, expected {}",
                path.display(),
                out.len()
            )));
        }
        let located = space
            .spec_from_columns(sigma, alpha, beta)
            .ok()
            .and_then(|t| space.locate(&t));
        if located != Some(index) {
            return Err(Error::GridMismatch(format!(
                "{}: line {line} ({sigma}, {alpha}, {beta}) is not grid point {index}",
                path.display()
            )));
        }
        out.push(value);
    }
    if out.len() != space.len() {
        return Err(Error::GridMismatch(format!(
            "{}: {} rows for a grid of {}",
            path.display(),
            out.len(),
            space.len()
        )));
    }
    Ok(out)
}

pub fn write_lambda_file(path: &Path, space: &SpecificationSpace, lambda: &SamplingDistribution) -> Result<()> {
    write_grid_table(path, space, &LAMBDA_COLUMNS, lambda.weights())
}

pub fn read_lambda_file(path: &Path, space: &SpecificationSpace) -> Result<SamplingDistribution> {
    let weights = read_grid_table(path, space, &LAMBDA_COLUMNS)?;
    SamplingDistribution::from_weights(weights)
}

pub fn write_loss_file(path: &Path, space: &SpecificationSpace, psnr_db: &[f64]) -> Result<()> {
    write_grid_table(path, space, &LOSS_COLUMNS, psnr_db)
}

pub fn read_loss_file(path: &Path, space: &SpecificationSpace) -> Result<Vec<f64>> {
    read_grid_table(path, space, &LOSS_COLUMNS)
}

fn wait_for(sentinel: &Path, round: usize, timeout: Duration, poll: Duration) -> Result<()> {
    let start = Instant::now();
    while !sentinel.exists() {
        let waited = start.elapsed();
        if waited >= timeout {
            return Err(Error::Timeout {
                round,
                waited_ms: waited.as_millis(),
            });
        }
        thread::sleep(poll.min(timeout - waited));
    }
    Ok(())
}

/// Scheduler side of the protocol.
#[derive(Debug, Clone)]
pub struct ExternalLearner {
    pub workdir: PathBuf,
    pub space: SpecificationSpace,
    pub timeout: Duration,
    pub poll: Duration,
    next_round: usize,
}

impl ExternalLearner {
    pub fn new(workdir: impl Into<PathBuf>, space: SpecificationSpace, timeout: Duration) -> Result<Self> {
        let workdir = workdir.into();
        fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
        Ok(Self {
            workdir,
            space,
            timeout,
            poll: Duration::from_millis(5),
            next_round: 0,
        })
    }

    /// Index of the next round to be requested.
    pub fn next_round(&self) -> usize {
        self.next_round
    }

    /// Runs one request/response round.
    pub fn request(&mut self, lambda: &SamplingDistribution) -> Result<Vec<f64>> {
        let t = self.next_round;
        self.next_round += 1;
        write_lambda_file(&lambda_path(&self.workdir, t), &self.space, lambda)?;
        write_atomic(&request_path(&self.workdir, t), b"")?;
        log::debug!("external round {t}: request written");
        wait_for(&response_path(&self.workdir, t), t, self.timeout, self.poll)?;
        read_loss_file(&loss_path(&self.workdir, t), &self.space)
    }
}

impl Trainer for ExternalLearner {
    fn train(&mut self, lambda: &SamplingDistribution, _budget: usize) -> Result<Vec<f64>> {
        if lambda.len() != self.space.len() {
            return Err(Error::GridMismatch(format!(
                "lambda has {} entries, grid has {}",
                lambda.len(),
                self.space.len()
            )));
        }
        self.request(lambda)
    }
}

/// Learner side of round `t`: waits for the request, answers it with
/// `respond`, and signals completion.
pub fn serve_round<F>(workdir: &Path, t: usize, space: &SpecificationSpace, respond: F, timeout: Duration) -> Result<()>
where
    F: FnOnce(&SamplingDistribution) -> Result<Vec<f64>>,
{
    wait_for(&request_path(workdir, t), t, timeout, Duration::from_millis(2))?;
    let lambda = read_lambda_file(&lambda_path(workdir, t), space)?;
    let table = respond(&lambda)?;
    write_loss_file(&loss_path(workdir, t), space, &table)?;
    write_atomic(&response_path(workdir, t), b"")
}
