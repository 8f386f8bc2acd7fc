//! The five subcommands. Each writes its artifacts under the configured
//! output directory and returns what it computed.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use gapsched::data::{extract_patches, load_images, patch_moments, ImageDataset};
use gapsched::landscape::{
    cross_validate_samples, fit_landscape, loo_error_samples, min_samples, read_config_hash, read_samples,
    sparse_design_indices, write_samples, CvResult, LandscapeSample, QuadraticModel, SampleSource, SpecificationSpace,
};
use gapsched::learners::{
    evaluate_psnr, shrinkage_fit, shrinkage_ideal, Evaluation, ExternalLearner, FitAndScore, IdealOracle,
    MonteCarloSettings, ShrinkageLearner, SignalMoments, Trainer,
};
use gapsched::noise::psnr_from_mse;
use gapsched::rng::{domain, stream};
use gapsched::scheduler::{
    gap_report, read_trajectory, run_adaptive, uniform_baseline, write_summary, write_trajectory, AdaptiveOptions,
    AscentState, GapSummary, RunSummary, SamplingDistribution,
};
use gapsched::{Error, Exec, SpeckleConfig};
use serde::{Deserialize, Serialize};

use crate::config::{EvaluationKind, LearnerConfig, RunConfig, DEFAULT_MOMENTS};
use crate::error::CliError;

type CliResult<T> = Result<T, CliError>;

pub const LANDSCAPE_FILE: &str = "landscape.csv";
pub const MODEL_FILE: &str = "model.json";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const REPORT_SUMMARY_FILE: &str = "report.json";

pub const BASELINE_COLUMNS: [&str; 7] = [
    "index",
    "sigma",
    "alpha",
    "beta",
    "model_psnr_db",
    "ideal_psnr_db",
    "gap_db",
];

/// A validated configuration plus everything derived from it.
pub struct Context {
    pub config: RunConfig,
    pub hash: String,
    pub space: SpecificationSpace,
    pub speckle: SpeckleConfig,
    dataset: Option<ImageDataset>,
}

impl Context {
    pub fn new(config: RunConfig) -> CliResult<Self> {
        config.validate()?;
        let space = config.build_space()?;
        Ok(Self {
            hash: config.hash(),
            speckle: config.speckle(),
            space,
            config,
            dataset: None,
        })
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output_dir
    }

    fn out(&self, name: &str) -> CliResult<PathBuf> {
        let dir = self.output_dir();
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        Ok(dir.join(name))
    }

    fn dataset(&mut self) -> CliResult<&ImageDataset> {
        if self.dataset.is_none() {
            let dir = &self.config.data.as_ref().expect("validated").dir;
            let ds = load_images(dir)?;
            if !ds.skipped.is_empty() {
                log::warn!("skipped {} undecodable file(s): {:?}", ds.skipped.len(), ds.skipped);
            }
            self.dataset = Some(ds);
        }
        Ok(self.dataset.as_ref().expect("just loaded"))
    }

    /// Signal moments for the shrinkage family.
    pub fn moments(&mut self) -> CliResult<SignalMoments> {
        if let Some(m) = self.config.moments {
            return Ok(m);
        }
        let Some(data) = self.config.data.clone() else {
            return Ok(DEFAULT_MOMENTS);
        };
        let seed = self.config.seed;
        let ds = self.dataset()?;
        let (m1, s2) = patch_moments(
            ds,
            data.patch_size,
            data.train_patches,
            seed,
            &[domain::PATCHES],
            Exec::Parallel,
        )?;
        Ok(SignalMoments::new(m1, s2)?)
    }

    fn evaluation(&mut self) -> CliResult<Evaluation> {
        match &self.config.learner {
            LearnerConfig::Shrinkage {
                evaluation: EvaluationKind::MonteCarlo,
            } => {
                let data = self.config.data.clone().expect("validated");
                let seed = self.config.seed;
                let ds = self.dataset()?;
                let eval = extract_patches(
                    ds,
                    data.patch_size,
                    data.eval_patches,
                    false,
                    seed,
                    &[domain::EVAL_PATCHES],
                    Exec::Parallel,
                )?;
                Ok(Evaluation::MonteCarlo(MonteCarloSettings {
                    patches: Arc::from(eval.patches),
                    n_draws: data.n_draws,
                    seed,
                    exec: Exec::Parallel,
                }))
            }
            _ => Ok(Evaluation::ClosedForm),
        }
    }

    fn n_eval(&self) -> u64 {
        match (&self.config.learner, &self.config.data) {
            (
                LearnerConfig::Shrinkage {
                    evaluation: EvaluationKind::MonteCarlo,
                },
                Some(d),
            ) => (d.eval_patches * d.n_draws) as u64,
            _ => 1,
        }
    }

    /// Ideal PSNR at the given grid indices.
    pub fn ideal_at(&mut self, indices: &[usize]) -> CliResult<Vec<f64>> {
        let n = self.space.len();
        match self.config.learner.clone() {
            LearnerConfig::External { workdir, timeout_secs } => {
                let mut ext = ExternalLearner::new(workdir, self.space.clone(), Duration::from_secs_f64(timeout_secs))?;
                let mut out = Vec::with_capacity(indices.len());
                for &i in indices {
                    out.push(ext.ideal_psnr(i, n, self.config.inner_budget)?);
                }
                Ok(out)
            }
            LearnerConfig::Shrinkage { .. } | LearnerConfig::Oracle => {
                let moments = self.moments()?;
                let evaluation = self.evaluation()?;
                let (space, cfg) = (&self.space, &self.speckle);
                let table = Exec::Parallel.try_map(indices.len(), |k| -> Result<f64, Error> {
                    let i = indices[k];
                    match &evaluation {
                        Evaluation::ClosedForm => Ok(psnr_from_mse(shrinkage_ideal(&space.point(i), &moments, cfg)?.1)),
                        Evaluation::MonteCarlo(_) => {
                            let model = shrinkage_fit(&SamplingDistribution::point_mass(n, i), &moments, space, cfg)?;
                            evaluate_psnr(&model, space, i, cfg, &evaluation)
                        }
                    }
                })?;
                Ok(table)
            }
        }
    }

    pub fn ideal_table(&mut self) -> CliResult<Vec<f64>> {
        let all: Vec<usize> = (0..self.space.len()).collect();
        self.ideal_at(&all)
    }

    /// Trainer for the configured learner. The oracle replays `ideal`.
    pub fn trainer(&mut self, ideal: &[f64]) -> CliResult<Box<dyn Trainer>> {
        match self.config.learner.clone() {
            LearnerConfig::Shrinkage { .. } => {
                let moments = self.moments()?;
                let learner = ShrinkageLearner::new(&self.space, moments, self.speckle)?;
                let mut fs = FitAndScore::new(learner, self.space.clone(), self.speckle, self.evaluation()?);
                fs.warm_start = self.config.warm_start;
                Ok(Box::new(fs))
            }
            LearnerConfig::Oracle => Ok(Box::new(IdealOracle { table: ideal.to_vec() })),
            LearnerConfig::External { workdir, timeout_secs } => Ok(Box::new(ExternalLearner::new(
                workdir,
                self.space.clone(),
                Duration::from_secs_f64(timeout_secs),
            )?)),
        }
    }

    /// Ideal table from a fitted landscape model, or computed directly.
    pub fn resolve_ideal(&mut self, model: Option<&Path>) -> CliResult<Vec<f64>> {
        match model {
            Some(path) => {
                let file = read_model_file(path)?;
                if file.config_hash.as_deref() != Some(self.hash.as_str()) {
                    log::warn!("{} was fit under a different config", path.display());
                }
                Ok(file.model.predict_grid(&self.space)?)
            }
            None => self.ideal_table(),
        }
    }
}

fn check_hash(path: &Path, found: Option<String>, expected: &str) -> CliResult<()> {
    match found {
        Some(h) if h == expected => Ok(()),
        other => Err(CliError::HashMismatch {
            path: path.to_path_buf(),
            expected: expected.to_string(),
            found: other.unwrap_or_else(|| "<none>".into()),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeOutcome {
    pub path: PathBuf,
    pub samples: Vec<LandscapeSample>,
    /// Design points evaluated by this invocation.
    pub computed: usize,
}

/// Evaluates the ideal PSNR at every sparse-design point not already present
/// in the landscape CSV.
pub fn cmd_landscape(ctx: &mut Context) -> CliResult<LandscapeOutcome> {
    let path = ctx.out(LANDSCAPE_FILE)?;
    let mut rng = stream(ctx.config.seed, &[domain::DESIGN]);
    let design = sparse_design_indices(&ctx.space, ctx.config.design.n_random, &mut rng)?;

    let existing = if path.exists() {
        check_hash(&path, read_config_hash(&path)?, &ctx.hash)?;
        read_samples(&path, &ctx.space)?
    } else {
        Vec::new()
    };
    let done: Vec<Option<usize>> = existing.iter().map(|s| ctx.space.locate(&s.theta)).collect();
    let missing: Vec<usize> = design.iter().copied().filter(|i| !done.contains(&Some(*i))).collect();
    let fresh = if missing.is_empty() {
        Vec::new()
    } else {
        ctx.ideal_at(&missing)?
    };

    let mut samples = Vec::with_capacity(design.len());
    for &i in &design {
        if let Some(k) = done.iter().position(|d| *d == Some(i)) {
            samples.push(existing[k].clone());
        } else {
            let k = missing.iter().position(|&m| m == i).expect("missing point");
            samples.push(LandscapeSample {
                theta: ctx.space.point(i),
                psnr_db: fresh[k],
                n_eval: ctx.n_eval(),
                seed: ctx.config.seed,
                source: SampleSource::Ideal,
            });
        }
    }
    if !missing.is_empty() {
        write_samples(&path, &samples, Some(&ctx.hash))?;
    }
    log::info!("landscape: {} design points, {} computed", samples.len(), missing.len());
    Ok(LandscapeOutcome {
        path,
        samples,
        computed: missing.len(),
    })
}

/// A [`QuadraticModel`] tagged with the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(flatten)]
    pub model: QuadraticModel,
}

pub fn read_model_file(path: &Path) -> CliResult<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub config_hash: String,
    pub samples: usize,
    pub degree: usize,
    pub ridge: f64,
    pub max_abs_residual: f64,
    pub max_rel_residual: f64,
    /// Leave-one-out mean squared error of the chosen fit; absent when some
    /// fold is degenerate.
    pub loo_mse: Option<f64>,
    pub cross_validation: Option<CvResult>,
}

pub struct FitOutcome {
    pub model: QuadraticModel,
    pub report: FitReport,
}

pub fn cmd_fit(ctx: &mut Context, landscape: Option<&Path>) -> CliResult<FitOutcome> {
    let path = match landscape {
        Some(p) => p.to_path_buf(),
        None => ctx.output_dir().join(LANDSCAPE_FILE),
    };
    if read_config_hash(&path)?.as_deref() != Some(ctx.hash.as_str()) {
        log::warn!("{} was sampled under a different config", path.display());
    }
    let samples = read_samples(&path, &ctx.space)?;
    let need = min_samples(ctx.space.ndim());
    if samples.len() < need {
        return Err(Error::InsufficientSamples {
            have: samples.len(),
            need,
        }
        .into());
    }
    let (degree, ridge) = (ctx.config.fit.degree, ctx.config.fit.ridge);
    let model = fit_landscape(&ctx.space, &samples, degree, ridge)?;
    let (mut max_abs, mut max_rel) = (0.0f64, 0.0f64);
    for s in &samples {
        let r = (model.predict(&s.theta)?.psnr_db - s.psnr_db).abs();
        max_abs = max_abs.max(r);
        max_rel = max_rel.max(r / s.psnr_db.abs().max(f64::MIN_POSITIVE));
    }
    let loo_mse = loo_error_samples(&ctx.space, &samples, degree, ridge)
        .ok()
        .filter(|v| v.is_finite());
    let cross_validation = match cross_validate_samples(
        &ctx.space,
        &samples,
        &ctx.config.fit.cv_degrees,
        &ctx.config.fit.cv_ridges,
    ) {
        Ok(cv) => Some(cv),
        Err(e) => {
            log::warn!("cross-validation skipped: {e}");
            None
        }
    };
    let report = FitReport {
        config_hash: ctx.hash.clone(),
        samples: samples.len(),
        degree,
        ridge,
        max_abs_residual: max_abs,
        max_rel_residual: max_rel,
        loo_mse,
        cross_validation,
    };
    let file = ModelFile {
        config_hash: Some(ctx.hash.clone()),
        model: model.clone(),
    };
    write_json(&ctx.out(MODEL_FILE)?, &file)?;
    write_json(&ctx.out(FIT_REPORT_FILE)?, &report)?;
    Ok(FitOutcome { model, report })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

pub struct AdaptOutcome {
    pub state: AscentState,
    pub ideal: Vec<f64>,
    pub summary: RunSummary,
}

pub fn cmd_adapt(ctx: &mut Context, ideal_model: Option<&Path>) -> CliResult<AdaptOutcome> {
    let ideal = ctx.resolve_ideal(ideal_model)?;
    let mut trainer = ctx.trainer(&ideal)?;
    let options = AdaptiveOptions {
        iterations: ctx.config.iterations,
        schedule: ctx.config.schedule,
        inner_budget: ctx.config.inner_budget,
    };
    let state = run_adaptive(&ctx.space, trainer.as_mut(), &ideal, &options)?;
    write_trajectory(&ctx.out(TRAJECTORY_FILE)?, &ctx.space, &state, &ideal, Some(&ctx.hash))?;
    let summary = RunSummary::from_state(&state, Some(&ctx.hash));
    write_summary(&ctx.out(SUMMARY_FILE)?, &summary)?;
    if let Some(last) = summary.last() {
        log::info!(
            "adapt: final max gap {:.4} dB, std {:.4} dB",
            last.max_gap,
            last.std_gap
        );
    }
    Ok(AdaptOutcome { state, ideal, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub model_psnr: Vec<f64>,
    pub ideal: Vec<f64>,
    pub gaps: GapSummary,
}

pub fn cmd_baseline(ctx: &mut Context, ideal_model: Option<&Path>) -> CliResult<BaselineOutcome> {
    let ideal = ctx.resolve_ideal(ideal_model)?;
    let mut trainer = ctx.trainer(&ideal)?;
    let model_psnr = uniform_baseline(&ctx.space, trainer.as_mut(), ctx.config.inner_budget)?;
    let gaps = gap_report(&model_psnr, &ideal)?;
    let path = ctx.out(BASELINE_FILE)?;
    write_baseline(&path, &ctx.space, &model_psnr, &ideal, &ctx.hash)?;
    log::info!("baseline: max gap {:.4} dB, std {:.4} dB", gaps.max, gaps.std);
    Ok(BaselineOutcome {
        model_psnr,
        ideal,
        gaps,
    })
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    Error::MalformedCsv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
    .into()
}

fn write_rows(path: &Path, hash: &str, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
    let mut text = format!("# config_hash: {hash}\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    text.push_str(&String::from_utf8(w.into_inner().map_err(|e| csv_err(path, e))?).expect("utf8"));
    fs::write(path, text).map_err(|e| {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn grid_prefix(space: &SpecificationSpace, i: usize) -> Vec<String> {
    let t = space.point(i);
    vec![
        i.to_string(),
        t.sigma().to_string(),
        t.alpha().to_string(),
        t.beta().to_string(),
    ]
}

fn write_baseline(path: &Path, space: &SpecificationSpace, model: &[f64], ideal: &[f64], hash: &str) -> CliResult<()> {
    let rows = (0..space.len())
        .map(|i| {
            let mut r = grid_prefix(space, i);
            r.extend([
                model[i].to_string(),
                ideal[i].to_string(),
                (ideal[i] - model[i]).to_string(),
            ]);
            r
        })
        .collect();
    write_rows(path, hash, &BASELINE_COLUMNS, rows)
}

/// `(model_psnr_db, ideal_psnr_db)` columns of a baseline CSV.
pub fn read_baseline(path: &Path, grid_len: usize) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != BASELINE_COLUMNS {
        return Err(csv_err(path, format!("unexpected columns {header:?}")));
    }
    let (mut model, mut ideal) = (Vec::new(), Vec::new());
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let parse = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| csv_err(path, format!("row {k}: {e}")))
        };
        if rec[0].parse::<usize>().ok() != Some(k) {
            return Err(csv_err(path, format!("row {k}: index out of order")));
        }
        model.push(parse(4)?);
        ideal.push(parse(5)?);
    }
    if model.len() != grid_len {
        return Err(Error::GridMismatch(format!(
            "{} has {} rows, grid has {grid_len}",
            path.display(),
            model.len()
        ))
        .into());
    }
    Ok((model, ideal))
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "index",
    "sigma",
    "alpha",
    "beta",
    "ideal_psnr_db",
    "baseline_psnr_db",
    "adapt_psnr_db",
    "baseline_gap_db",
    "adapt_gap_db",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub baseline: GapSummary,
    pub adapt: GapSummary,
    /// Adapt gap std over baseline gap std.
    pub std_ratio: f64,
}

/// Joins the baseline and the final adapt iteration into one per-grid-point
/// table. Refuses artifacts written under a different config.
pub fn cmd_report(ctx: &mut Context) -> CliResult<Report> {
    let dir = ctx.output_dir().to_path_buf();
    let traj_path = dir.join(TRAJECTORY_FILE);
    let base_path = dir.join(BASELINE_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    check_hash(&traj_path, read_config_hash(&traj_path)?, &ctx.hash)?;
    check_hash(&base_path, read_config_hash(&base_path)?, &ctx.hash)?;
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(&summary_path).map_err(|e| Error::Io {
        path: summary_path.clone(),
        source: e,
    })?)
    .map_err(Error::from)?;
    check_hash(&summary_path, summary.config_hash.clone(), &ctx.hash)?;
    let landscape_path = dir.join(LANDSCAPE_FILE);
    if landscape_path.exists() {
        check_hash(&landscape_path, read_config_hash(&landscape_path)?, &ctx.hash)?;
    }
    let model_path = dir.join(MODEL_FILE);
    if model_path.exists() {
        check_hash(&model_path, read_model_file(&model_path)?.config_hash, &ctx.hash)?;
    }

    let n = ctx.space.len();
    let (base, ideal) = read_baseline(&base_path, n)?;
    let rows = read_trajectory(&traj_path)?;
    let last = rows
        .iter()
        .map(|r| r.iteration)
        .max()
        .ok_or_else(|| csv_err(&traj_path, "no rows"))?;
    let mut adapt = vec![f64::NAN; n];
    for r in rows.iter().filter(|r| r.iteration == last) {
        if r.index >= n {
            return Err(Error::GridMismatch(format!("trajectory index {} outside grid of {n}", r.index)).into());
        }
        adapt[r.index] = r.model_psnr_db;
    }
    let baseline_gaps = gap_report(&base, &ideal)?;
    let adapt_gaps = gap_report(&adapt, &ideal)?;

    let table = (0..n)
        .map(|i| {
            let mut r = grid_prefix(&ctx.space, i);
            r.extend([
                ideal[i].to_string(),
                base[i].to_string(),
                adapt[i].to_string(),
                baseline_gaps.per_theta[i].to_string(),
                adapt_gaps.per_theta[i].to_string(),
            ]);
            r
        })
        .collect();
    write_rows(&dir.join(REPORT_FILE), &ctx.hash, &REPORT_COLUMNS, table)?;
    let report = Report {
        config_hash: ctx.hash.clone(),
        std_ratio: adapt_gaps.std / baseline_gaps.std,
        baseline: baseline_gaps,
        adapt: adapt_gaps,
    };
    write_json(&dir.join(REPORT_SUMMARY_FILE), &report)?;
    Ok(report)
}
