//! Run configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use gapsched::landscape::{min_samples, Dimension, SpecificationSpace, RIDGE_SWEEP};
use gapsched::learners::SignalMoments;
use gapsched::scheduler::GammaSchedule;
use gapsched::{NoiseParam, SpeckleConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationKind {
    #[default]
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerConfig {
    Shrinkage {
        #[serde(default)]
        evaluation: EvaluationKind,
    },
    /// Reproduces the ideal landscape exactly.
    Oracle,
    External {
        workdir: PathBuf,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
    },
}

fn default_timeout() -> f64 {
    600.0
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig::Shrinkage {
            evaluation: EvaluationKind::ClosedForm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dir: PathBuf,
    pub patch_size: usize,
    pub train_patches: usize,
    pub eval_patches: usize,
    pub n_draws: usize,
    pub augment: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            patch_size: gapsched::data::DEFAULT_PATCH_SIZE,
            train_patches: gapsched::data::DEFAULT_TRAIN_PATCHES,
            eval_patches: 64,
            n_draws: 4,
            augment: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub n_random: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { n_random: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub ridge: f64,
    pub degree: usize,
    pub cv_degrees: Vec<usize>,
    pub cv_ridges: Vec<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            ridge: gapsched::landscape::DEFAULT_RIDGE,
            degree: 2,
            cv_degrees: vec![1, 2],
            cv_ridges: RIDGE_SWEEP.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub space: Vec<Dimension>,
    pub speckle_b: f64,
    pub learner: LearnerConfig,
    /// Signal moments for the shrinkage learner; taken from the training
    /// patches when absent and data is configured.
    pub moments: Option<SignalMoments>,
    pub data: Option<DataConfig>,
    pub design: DesignConfig,
    pub seed: u64,
    pub fit: FitConfig,
    pub schedule: GammaSchedule,
    pub iterations: usize,
    pub inner_budget: usize,
    pub warm_start: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let space = SpecificationSpace::default_box(&NoiseParam::ALL).expect("default box");
        Self {
            space: space.dims().to_vec(),
            speckle_b: SpeckleConfig::default().upper,
            learner: LearnerConfig::default(),
            moments: None,
            data: None,
            design: DesignConfig::default(),
            seed: 0,
            fit: FitConfig::default(),
            schedule: GammaSchedule::default(),
            iterations: 50,
            inner_budget: 10,
            warm_start: true,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// Default moments: intensities uniform on `[0, 1]`.
pub const DEFAULT_MOMENTS: SignalMoments = SignalMoments { m1: 0.5, s2: 1.0 / 3.0 };

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(vec![format!("config: {e}")]))
    }

    /// Hex SHA-256 of the canonical JSON form, leaving out `output_dir`.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("object").remove("output_dir");
        let bytes = serde_json::to_vec(&value).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn speckle(&self) -> SpeckleConfig {
        SpeckleConfig { upper: self.speckle_b }
    }

    pub fn build_space(&self) -> Result<SpecificationSpace, CliError> {
        SpecificationSpace::new(self.space.clone()).map_err(|e| CliError::Validation(vec![e.to_string()]))
    }

    /// Checks every field and cross-field constraint, reporting all violations.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();

        for d in &self.space {
            if let Err(e) = d.validate() {
                errs.push(format!("space.{}: {e}", d.name));
            }
        }
        let space = SpecificationSpace::new(self.space.clone());
        if let Err(e) = &space {
            if self.space.iter().all(|d| d.validate().is_ok()) {
                errs.push(format!("space: {e}"));
            }
        }
        match SpeckleConfig::new(self.speckle_b) {
            Err(e) => errs.push(format!("speckle_b: {e}")),
            Ok(cfg) => {
                if let Ok(s) = &space {
                    if let Err(e) = s.check_speckle(&cfg) {
                        errs.push(format!("space.beta: {e}"));
                    }
                }
            }
        }

        if let Ok(s) = &space {
            let corners = 1usize << s.ndim();
            let need = min_samples(s.ndim());
            if corners + self.design.n_random < need {
                errs.push(format!(
                    "design.n_random: {} corners + {} random points < {need} samples needed for a quadratic in {} variables",
                    corners,
                    self.design.n_random,
                    s.ndim()
                ));
            }
            if corners + self.design.n_random > s.len() {
                errs.push(format!(
                    "design.n_random: {} exceeds the {} non-corner grid points",
                    self.design.n_random,
                    s.len().saturating_sub(corners)
                ));
            }
        }

        if let Some(m) = &self.moments {
            if let Err(e) = m.validate() {
                errs.push(format!("moments: {e}"));
            }
        }

        let needs_data = matches!(
            self.learner,
            LearnerConfig::Shrinkage {
                evaluation: EvaluationKind::MonteCarlo
            }
        );
        match &self.data {
            None if needs_data => errs.push("data: required for monte_carlo evaluation".into()),
            None => {}
            Some(d) => {
                if !d.dir.is_dir() {
                    errs.push(format!("data.dir: {} is not a directory", d.dir.display()));
                }
                for (name, v) in [
                    ("patch_size", d.patch_size),
                    ("train_patches", d.train_patches),
                    ("eval_patches", d.eval_patches),
                    ("n_draws", d.n_draws),
                ] {
                    if v == 0 {
                        errs.push(format!("data.{name}: must be >= 1"));
                    }
                }
            }
        }
        if let LearnerConfig::External { timeout_secs, .. } = &self.learner {
            if !(timeout_secs.is_finite() && *timeout_secs > 0.0) {
                errs.push(format!("learner.timeout_secs: must be > 0 (found {timeout_secs})"));
            }
        }

        if !(self.fit.ridge.is_finite() && self.fit.ridge >= 0.0) {
            errs.push(format!("fit.ridge: must be >= 0 (found {})", self.fit.ridge));
        }
        if !(1..=2).contains(&self.fit.degree) {
            errs.push(format!("fit.degree: must be 1 or 2 (found {})", self.fit.degree));
        }
        if self.fit.cv_degrees.is_empty() || self.fit.cv_degrees.iter().any(|d| !(1..=3).contains(d)) {
            errs.push(format!(
                "fit.cv_degrees: must be non-empty with entries in 1..=3 (found {:?})",
                self.fit.cv_degrees
            ));
        }
        if self.fit.cv_ridges.is_empty() || self.fit.cv_ridges.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            errs.push(format!(
                "fit.cv_ridges: must be non-empty and >= 0 (found {:?})",
                self.fit.cv_ridges
            ));
        }

        if let Err(e) = self.schedule.validate() {
            errs.push(format!("schedule: {e}"));
        }
        if self.iterations == 0 {
            errs.push("iterations: must be >= 1".into());
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs))
        }
    }
}
