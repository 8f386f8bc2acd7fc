//! Trajectory CSV and run-summary JSON.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AscentState;
use crate::error::{Error, Result};
use crate::landscape::{check_header, csv_reader, parse_field, write_hash_line, SpecificationSpace};

pub const TRAJECTORY_COLUMNS: [&str; 8] = [
    "iteration",
    "index",
    "sigma",
    "alpha",
    "beta",
    "weight",
    "model_psnr_db",
    "ideal_psnr_db",
];

/// One row per (iteration, grid point); `weight` is the distribution the
/// iteration's model was fit under.
pub fn write_trajectory(
    path: &Path,
    space: &SpecificationSpace,
    state: &AscentState,
    ideal_psnr: &[f64],
    config_hash: Option<&str>,
) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_hash_line(&mut file, config_hash).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let wrap = |e: csv::Error| Error::csv(path, e);
    w.write_record(TRAJECTORY_COLUMNS).map_err(wrap)?;
    let grid = space.grid();
    for rec in &state.history {
        for (i, theta) in grid.iter().enumerate() {
            w.write_record([
                rec.iteration.to_string(),
                i.to_string(),
                theta.sigma().to_string(),
                theta.alpha().to_string(),
                theta.beta().to_string(),
                rec.lambda.weights()[i].to_string(),
                rec.model_psnr[i].to_string(),
                ideal_psnr[i].to_string(),
            ])
            .map_err(wrap)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub iteration: usize,
    pub index: usize,
    pub weight: f64,
    pub model_psnr_db: f64,
    pub ideal_psnr_db: f64,
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &TRAJECTORY_COLUMNS)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push(TrajectoryRow {
            iteration: parse_field(path, line, "iteration", &record[0])?,
            index: parse_field(path, line, "index", &record[1])?,
            weight: parse_field(path, line, "weight", &record[5])?,
            model_psnr_db: parse_field(path, line, "model_psnr_db", &record[6])?,
            ideal_psnr_db: parse_field(path, line, "ideal_psnr_db", &record[7])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub gamma: f64,
    pub max_gap: f64,
    pub mean_gap: f64,
    pub std_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub iterations: Vec<IterationSummary>,
    pub final_lambda: Vec<f64>,
}

impl RunSummary {
    pub fn from_state(state: &AscentState, config_hash: Option<&str>) -> Self {
        Self {
            config_hash: config_hash.map(str::to_string),
            iterations: state
                .history
                .iter()
                .map(|r| IterationSummary {
                    iteration: r.iteration,
                    gamma: r.gamma,
                    max_gap: r.gaps.max,
                    mean_gap: r.gaps.mean,
                    std_gap: r.gaps.std,
                })
                .collect(),
            final_lambda: state.lambda.weights().to_vec(),
        }
    }

    pub fn last(&self) -> Option<&IterationSummary> {
        self.iterations.last()
    }
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
