//! Dual ascent on the sampling distribution over a specification grid.
//!
//! Each iteration fits the learner under the current distribution `lambda`,
//! measures the PSNR of the fitted model at every grid point, converts both
//! model and ideal PSNRs to MSE losses and moves `lambda` by
//! `gamma * (loss_model / loss_ideal - 1)`, clamping at zero and
//! renormalizing. Grid points where the model lags its ideal gain weight.

mod gap;
mod io;

use serde::{Deserialize, Serialize};

pub use gap::{gap_report, GapSummary};
pub use io::{
    read_trajectory, write_summary, write_trajectory, IterationSummary, RunSummary, TrajectoryRow, TRAJECTORY_COLUMNS,
};

use crate::error::{Error, Result};
use crate::landscape::SpecificationSpace;
use crate::learners::Trainer;
use crate::noise::loss_from_psnr;

/// Tolerance on `sum(weights) == 1`.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Probability weights over the grid points of a specification space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SamplingDistribution(Vec<f64>);

impl SamplingDistribution {
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "distribution over an empty grid");
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, index: usize) -> Self {
        assert!(index < n, "point mass outside the grid");
        let mut w = vec![0.0; n];
        w[index] = 1.0;
        Self(w)
    }

    /// Validates nonnegativity and unit sum (within [`SUM_TOLERANCE`]).
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("no weights".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("weight {i} is {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `sum_i lambda_i * values_i`.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Step-size policy `gamma_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSchedule {
    Constant {
        gamma: f64,
    },
    /// `gamma / sqrt(t + 1)`.
    InvSqrt {
        gamma: f64,
    },
}

impl Default for GammaSchedule {
    fn default() -> Self {
        GammaSchedule::Constant { gamma: 0.1 }
    }
}

impl GammaSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            GammaSchedule::Constant { gamma } => gamma,
            GammaSchedule::InvSqrt { gamma } => gamma / ((t + 1) as f64).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = match *self {
            GammaSchedule::Constant { gamma } | GammaSchedule::InvSqrt { gamma } => gamma,
        };
        if g.is_finite() && g > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid(format!("step size must be > 0 (found {g})")))
        }
    }
}

/// One multiplier update on MSE-domain losses.
pub fn dual_step(
    lambda: &SamplingDistribution,
    loss_model: &[f64],
    loss_ideal: &[f64],
    gamma: f64,
) -> Result<SamplingDistribution> {
    let n = lambda.len();
    if loss_model.len() != n || loss_ideal.len() != n {
        return Err(Error::GridMismatch(format!(
            "lambda has {n} entries, losses have {} and {}",
            loss_model.len(),
            loss_ideal.len()
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!("step size must be > 0 (found {gamma})")));
    }
    if let Some(l) = loss_ideal.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::invalid(format!(
            "ideal loss must be positive and finite (found {l})"
        )));
    }
    if let Some(l) = loss_model.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::NonFinite(format!("model loss {l}")));
    }

    let steps: Vec<f64> = loss_model
        .iter()
        .zip(loss_ideal)
        .map(|(m, i)| gamma * (m / i - 1.0))
        .collect();
    if steps.iter().all(|&s| s == 0.0) {
        return Ok(lambda.clone());
    }
    let raised: Vec<f64> = lambda.0.iter().zip(&steps).map(|(w, s)| (w + s).max(0.0)).collect();
    let total: f64 = raised.iter().sum();
    if total <= 0.0 {
        return Err(Error::DivergentStep);
    }
    Ok(SamplingDistribution(raised.into_iter().map(|w| w / total).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub iterations: usize,
    pub schedule: GammaSchedule,
    pub inner_budget: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            iterations: 50,
            schedule: GammaSchedule::default(),
            inner_budget: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub gamma: f64,
    /// Distribution the model of this iteration was fit under.
    pub lambda: SamplingDistribution,
    pub model_psnr: Vec<f64>,
    pub gaps: GapSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentState {
    pub t: usize,
    pub lambda: SamplingDistribution,
    pub gamma: f64,
    pub history: Vec<IterationRecord>,
}

impl AscentState {
    pub fn initial(grid_len: usize, schedule: &GammaSchedule) -> Self {
        Self {
            t: 0,
            lambda: SamplingDistribution::uniform(grid_len),
            gamma: schedule.at(0),
            history: Vec::new(),
        }
    }

    /// PSNR table of the most recently fitted model.
    pub fn final_psnr(&self) -> Option<&[f64]> {
        self.history.last().map(|r| r.model_psnr.as_slice())
    }

    pub fn final_gaps(&self) -> Option<&GapSummary> {
        self.history.last().map(|r| &r.gaps)
    }
}

fn check_table(what: &str, table: &[f64], n: usize) -> Result<()> {
    if table.len() != n {
        return Err(Error::GridMismatch(format!(
            "{what} has {} entries, grid has {n}",
            table.len()
        )));
    }
    if let Some((i, v)) = table.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} psnr at grid point {i} is {v}")));
    }
    Ok(())
}

/// Runs `options.iterations` rounds of fit / evaluate / multiplier update,
/// starting from the uniform distribution.
pub fn run_adaptive(
    space: &SpecificationSpace,
    trainer: &mut dyn Trainer,
    ideal_psnr: &[f64],
    options: &AdaptiveOptions,
) -> Result<AscentState> {
    let n = space.len();
    check_table("ideal", ideal_psnr, n)?;
    options.schedule.validate()?;
    let loss_ideal: Vec<f64> = ideal_psnr.iter().map(|&p| loss_from_psnr(p)).collect();

    let mut state = AscentState::initial(n, &options.schedule);
    for t in 0..options.iterations {
        let at = |e| Error::AtIteration {
            iteration: t,
            source: Box::new(e),
        };
        let model_psnr = trainer.train(&state.lambda, options.inner_budget).map_err(at)?;
        check_table("model", &model_psnr, n).map_err(at)?;
        let loss_model: Vec<f64> = model_psnr.iter().map(|&p| loss_from_psnr(p)).collect();
        let gamma = options.schedule.at(t);
        let next = dual_step(&state.lambda, &loss_model, &loss_ideal, gamma).map_err(at)?;
        let gaps = gap_report(&model_psnr, ideal_psnr)?;
        log::debug!("iteration {t}: max gap {:.4} dB, std {:.4} dB", gaps.max, gaps.std);
        state.history.push(IterationRecord {
            iteration: t,
            gamma,
            lambda: std::mem::replace(&mut state.lambda, next),
            model_psnr,
            gaps,
        });
        state.gamma = gamma;
        state.t = t + 1;
    }
    Ok(state)
}

/// PSNR table of a single fit under the uniform distribution.
pub fn uniform_baseline(
    space: &SpecificationSpace,
    trainer: &mut dyn Trainer,
    inner_budget: usize,
) -> Result<Vec<f64>> {
    let table = trainer.train(&SamplingDistribution::uniform(space.len()), inner_budget)?;
    check_table("baseline", &table, space.len())?;
    Ok(table)
}
