use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-grid-point PSNR shortfall `ideal - achieved` and its statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub per_theta: Vec<f64>,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

pub fn gap_report(achieved_psnr: &[f64], ideal_psnr: &[f64]) -> Result<GapSummary> {
    if achieved_psnr.len() != ideal_psnr.len() || ideal_psnr.is_empty() {
        return Err(Error::GridMismatch(format!(
            "{} achieved values against {} ideal values",
            achieved_psnr.len(),
            ideal_psnr.len()
        )));
    }
    let per_theta: Vec<f64> = ideal_psnr.iter().zip(achieved_psnr).map(|(i, a)| i - a).collect();
    let n = per_theta.len() as f64;
    let max = per_theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = per_theta.iter().sum::<f64>() / n;
    let var = per_theta.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / n;
    Ok(GapSummary {
        per_theta,
        max,
        mean,
        std: var.sqrt(),
    })
}
