use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::noise::{corrupt, psnr_from_mse, ImagePatch, Specification, SpeckleConfig};
use crate::par::Exec;
use crate::rng::stream;

/// Pooled Monte Carlo MSE estimate and its PSNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub psnr_db: f64,
    pub mse: f64,
    /// Standard error of `mse` across (patch, draw) trials.
    pub stderr: f64,
    pub trials: usize,
}

/// Corrupts every patch `n_draws` times at `theta`, denoises, and pools the
/// squared error over all pixels.
///
/// Trial `k` draws from `stream(seed, keys ++ [k])`, so results do not depend
/// on `exec`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_psnr<M: Model + ?Sized>(
    model: &M,
    theta: &Specification,
    patches: &[ImagePatch],
    n_draws: usize,
    cfg: &SpeckleConfig,
    keys: &[u64],
    seed: u64,
    exec: Exec,
) -> Result<McEstimate> {
    if n_draws == 0 || patches.is_empty() {
        return Err(Error::invalid(
            "monte carlo evaluation needs at least one patch and one draw",
        ));
    }
    let trials = patches.len() * n_draws;
    let per_trial = exec.try_map(trials, |k| -> Result<(f64, usize)> {
        let clean = &patches[k / n_draws];
        let mut path = keys.to_vec();
        path.push(k as u64);
        let mut rng = stream(seed, &path);
        let noisy = corrupt(clean, theta, cfg, &mut rng)?;
        let est = model.denoise(&noisy)?;
        let sse: f64 = est
            .pixels()
            .iter()
            .zip(clean.pixels())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((sse, clean.len()))
    })?;

    let pixels: usize = per_trial.iter().map(|t| t.1).sum();
    let mse = per_trial.iter().map(|t| t.0).sum::<f64>() / pixels as f64;
    let stderr = if trials > 1 {
        let means: Vec<f64> = per_trial.iter().map(|(s, n)| s / *n as f64).collect();
        let mean = means.iter().sum::<f64>() / trials as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    } else {
        0.0
    };
    if !mse.is_finite() {
        return Err(Error::NonFinite(format!("monte carlo mse {mse}")));
    }
    Ok(McEstimate {
        psnr_db: psnr_from_mse(mse),
        mse,
        stderr,
        trials,
    })
}
