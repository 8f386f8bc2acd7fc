//! Specification spaces and quadratic approximations of PSNR landscapes.
//!
//! The ideal landscape is sampled at a sparse design (box corners plus a few
//! random grid points) and approximated by a quadratic in normalized
//! coordinates, fit by ridge-regularized least squares. Fits target PSNR;
//! conversion to MSE happens in the scheduler.

mod polyfit;
mod quadratic;
mod samples;
mod space;

use rand::Rng;

pub use polyfit::{
    coefficient_count, cross_validate, fit_polynomial, loo_error, monomials, AffineScaler, CvEntry, CvResult, PolyFit,
    MAX_CONDITION,
};
pub use quadratic::{Normalizer, Prediction, QuadraticModel};
pub use samples::{read_config_hash, read_samples, write_samples, LandscapeSample, SampleSource, SAMPLE_COLUMNS};
pub use space::{Dimension, Spacing, SpecificationSpace};

pub(crate) use samples::{check_header, csv_reader, parse_field, write_hash_line};

use crate::error::{Error, Result};
use crate::noise::Specification;

/// Ridge strength used when none is configured.
pub const DEFAULT_RIDGE: f64 = 1e-5;

/// Ridge values swept during cross-validation.
pub const RIDGE_SWEEP: [f64; 5] = [0.1, 0.01, 0.001, 0.0001, 0.00001];

/// Smallest non-degenerate sample count that pins down a quadratic in `n`
/// variables: `(n + 1)(n + 2) / 2 + 1`.
pub fn min_samples(n: usize) -> usize {
    (n + 1) * (n + 2) / 2 + 1
}

/// Grid indices of the sparse design: all `2^n` corners, then `n_random`
/// distinct non-corner grid points.
pub fn sparse_design_indices<R: Rng + ?Sized>(
    space: &SpecificationSpace,
    n_random: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let corners = space.corner_indices();
    let need = min_samples(space.ndim());
    if corners.len() + n_random < need {
        return Err(Error::InsufficientSamples {
            have: corners.len() + n_random,
            need,
        });
    }
    let pool: Vec<usize> = (0..space.len()).filter(|i| !corners.contains(i)).collect();
    if n_random > pool.len() {
        return Err(Error::invalid(format!(
            "{n_random} random points requested but only {} non-corner grid points exist",
            pool.len()
        )));
    }
    let mut out = corners;
    out.extend(
        rand::seq::index::sample(rng, pool.len(), n_random)
            .iter()
            .map(|k| pool[k]),
    );
    Ok(out)
}

pub fn sparse_design<R: Rng + ?Sized>(
    space: &SpecificationSpace,
    n_random: usize,
    rng: &mut R,
) -> Result<Vec<Specification>> {
    Ok(sparse_design_indices(space, n_random, rng)?
        .into_iter()
        .map(|i| space.point(i))
        .collect())
}

fn normalized_samples(space: &SpecificationSpace, samples: &[LandscapeSample]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut points = Vec::with_capacity(samples.len());
    let mut values = Vec::with_capacity(samples.len());
    for s in samples {
        s.validate()?;
        points.push(space.normalized(&s.theta)?);
        values.push(s.psnr_db);
    }
    Ok((points, values))
}

/// Fits a landscape model of the given degree (1 or 2) to PSNR samples.
pub fn fit_landscape(
    space: &SpecificationSpace,
    samples: &[LandscapeSample],
    degree: usize,
    ridge: f64,
) -> Result<QuadraticModel> {
    let need = min_samples(space.ndim());
    if samples.len() < need {
        return Err(Error::InsufficientSamples {
            have: samples.len(),
            need,
        });
    }
    let (points, values) = normalized_samples(space, samples)?;
    let fit = fit_polynomial(&points, &values, degree, ridge)?;
    QuadraticModel::from_polyfit(space, &fit)
}

/// Full quadratic fit; see [`fit_landscape`].
pub fn fit_quadratic(space: &SpecificationSpace, samples: &[LandscapeSample], ridge: f64) -> Result<QuadraticModel> {
    fit_landscape(space, samples, 2, ridge)
}

/// Leave-one-out mean squared error of one `(degree, ridge)` fit.
pub fn loo_error_samples(
    space: &SpecificationSpace,
    samples: &[LandscapeSample],
    degree: usize,
    ridge: f64,
) -> Result<f64> {
    let (points, values) = normalized_samples(space, samples)?;
    loo_error(&points, &values, degree, ridge)
}

/// Leave-one-out selection of degree and ridge on normalized coordinates.
pub fn cross_validate_samples(
    space: &SpecificationSpace,
    samples: &[LandscapeSample],
    degrees: &[usize],
    ridges: &[f64],
) -> Result<CvResult> {
    let (points, values) = normalized_samples(space, samples)?;
    cross_validate(&points, &values, degrees, ridges)
}
