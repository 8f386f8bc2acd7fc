//! Learner and model contracts, analytic learners and learner adapters.
//!
//! A [`Learner`] fits a [`Model`] under a sampling distribution. The
//! scheduler only needs PSNR tables, so it talks to a [`Trainer`]: either a
//! learner paired with an evaluation strategy ([`FitAndScore`]), a fixed
//! table ([`IdealOracle`]), or a learner in another process
//! ([`ExternalLearner`]).

mod external;
mod montecarlo;
mod shrinkage;
mod subspace;

use std::sync::Arc;

pub use external::{
    read_lambda_file, read_loss_file, serve_round, write_lambda_file, write_loss_file, ExternalLearner, LAMBDA_COLUMNS,
    LOSS_COLUMNS,
};
pub use montecarlo::{monte_carlo_psnr, McEstimate};
pub use shrinkage::{shrinkage_fit, shrinkage_ideal, ShrinkageLearner, ShrinkageModel, SignalMoments};
pub use subspace::{subspace_loss_closed_form, SubspaceProjector};

use crate::error::{Error, Result};
use crate::landscape::SpecificationSpace;
use crate::noise::{psnr_from_mse, ImagePatch, Specification, SpeckleConfig};
use crate::par::Exec;
use crate::rng::domain;
use crate::scheduler::SamplingDistribution;

/// A fitted denoiser.
pub trait Model: Send + Sync {
    fn denoise(&self, y: &ImagePatch) -> Result<ImagePatch>;

    /// Exact expected MSE at `theta`, when the model admits a closed form.
    fn expected_mse(&self, _theta: &Specification) -> Option<f64> {
        None
    }
}

/// A model family that can be fit under a sampling distribution.
///
/// `fit` must be deterministic given its inputs and the learner's own seed.
pub trait Learner {
    type Model: Model;

    fn fit(
        &self,
        lambda: &SamplingDistribution,
        budget: usize,
        warm_start: Option<&Self::Model>,
    ) -> Result<Self::Model>;
}

/// Anything that turns a sampling distribution into a per-grid-point PSNR table.
pub trait Trainer {
    /// Fits under `lambda` and returns the fitted model's PSNR at every grid point.
    fn train(&mut self, lambda: &SamplingDistribution, budget: usize) -> Result<Vec<f64>>;

    /// Ideal (specialized) PSNR at grid point `index`; by default a fit under
    /// the point mass at `index`.
    fn ideal_psnr(&mut self, index: usize, grid_len: usize, budget: usize) -> Result<f64> {
        let table = self.train(&SamplingDistribution::point_mass(grid_len, index), budget)?;
        table
            .get(index)
            .copied()
            .ok_or_else(|| Error::GridMismatch(format!("table has {} entries, wanted {index}", table.len())))
    }
}

/// Monte Carlo evaluation settings.
#[derive(Debug, Clone)]
pub struct MonteCarloSettings {
    pub patches: Arc<[ImagePatch]>,
    pub n_draws: usize,
    pub seed: u64,
    pub exec: Exec,
}

#[derive(Debug, Clone)]
pub enum Evaluation {
    /// Use [`Model::expected_mse`]; errors for models without a closed form.
    ClosedForm,
    MonteCarlo(MonteCarloSettings),
}

/// PSNR of `model` at grid point `index` of `space`.
pub fn evaluate_psnr<M: Model + ?Sized>(
    model: &M,
    space: &SpecificationSpace,
    index: usize,
    cfg: &SpeckleConfig,
    evaluation: &Evaluation,
) -> Result<f64> {
    let theta = space.point(index);
    match evaluation {
        Evaluation::ClosedForm => model
            .expected_mse(&theta)
            .map(psnr_from_mse)
            .ok_or_else(|| Error::Learner("model has no closed-form loss".into())),
        Evaluation::MonteCarlo(mc) => {
            let est = monte_carlo_psnr(
                model,
                &theta,
                &mc.patches,
                mc.n_draws,
                cfg,
                &[domain::EVALUATION, index as u64],
                mc.seed,
                Exec::Sequential,
            )?;
            Ok(est.psnr_db)
        }
    }
}

/// Pairs a [`Learner`] with an evaluation strategy over a grid.
pub struct FitAndScore<L: Learner> {
    pub learner: L,
    pub space: SpecificationSpace,
    pub speckle: SpeckleConfig,
    pub evaluation: Evaluation,
    /// Reuse the previous model as the starting point of the next fit.
    pub warm_start: bool,
    last: Option<L::Model>,
}

impl<L: Learner> FitAndScore<L> {
    pub fn new(learner: L, space: SpecificationSpace, speckle: SpeckleConfig, evaluation: Evaluation) -> Self {
        Self {
            learner,
            space,
            speckle,
            evaluation,
            warm_start: true,
            last: None,
        }
    }

    pub fn last_model(&self) -> Option<&L::Model> {
        self.last.as_ref()
    }

    fn exec(&self) -> Exec {
        match &self.evaluation {
            Evaluation::ClosedForm => Exec::Sequential,
            Evaluation::MonteCarlo(mc) => mc.exec,
        }
    }
}

impl<L: Learner> Trainer for FitAndScore<L> {
    fn train(&mut self, lambda: &SamplingDistribution, budget: usize) -> Result<Vec<f64>> {
        if lambda.len() != self.space.len() {
            return Err(Error::GridMismatch(format!(
                "lambda has {} entries, grid has {}",
                lambda.len(),
                self.space.len()
            )));
        }
        let warm = if self.warm_start { self.last.as_ref() } else { None };
        let model = self.learner.fit(lambda, budget, warm)?;
        let (space, cfg, eval) = (&self.space, &self.speckle, &self.evaluation);
        let table = self
            .exec()
            .try_map(space.len(), |i| evaluate_psnr(&model, space, i, cfg, eval))?;
        self.last = Some(model);
        Ok(table)
    }

    fn ideal_psnr(&mut self, index: usize, grid_len: usize, budget: usize) -> Result<f64> {
        let model = self
            .learner
            .fit(&SamplingDistribution::point_mass(grid_len, index), budget, None)?;
        evaluate_psnr(&model, &self.space, index, &self.speckle, &self.evaluation)
    }
}

/// Returns a fixed table regardless of the distribution: a learner that
/// reproduces the ideal landscape everywhere.
#[derive(Debug, Clone)]
pub struct IdealOracle {
    pub table: Vec<f64>,
}

impl Trainer for IdealOracle {
    fn train(&mut self, lambda: &SamplingDistribution, _budget: usize) -> Result<Vec<f64>> {
        if lambda.len() != self.table.len() {
            return Err(Error::GridMismatch(format!(
                "lambda has {} entries, table has {}",
                lambda.len(),
                self.table.len()
            )));
        }
        Ok(self.table.clone())
    }

    fn ideal_psnr(&mut self, index: usize, _grid_len: usize, _budget: usize) -> Result<f64> {
        self.table
            .get(index)
            .copied()
            .ok_or_else(|| Error::GridMismatch(format!("no grid point {index}")))
    }
}

/// The identity denoiser.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Model for Identity {
    fn denoise(&self, y: &ImagePatch) -> Result<ImagePatch> {
        Ok(y.clone())
    }
}
