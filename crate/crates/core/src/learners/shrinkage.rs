//! Scalar shrinkage `x_hat = c * y`: an analytic model family whose fit under
//! any sampling distribution, and whose loss at any noise condition, are
//! available in closed form.
//!
//! With signal moments `m1 = E[x]`, `S2 = E[x^2]` and pixel-averaged noise
//! power `V(theta) = sigma^2 + alpha * m1 + S2 * beta / B`, the expected MSE
//! of `c * y` is `(1 - c)^2 * S2 + c^2 * V(theta)`.

use serde::{Deserialize, Serialize};

use super::{Learner, Model};
use crate::error::{Error, Result};
use crate::landscape::SpecificationSpace;
use crate::noise::{ImagePatch, Specification, SpeckleConfig};
use crate::scheduler::SamplingDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalMoments {
    pub m1: f64,
    pub s2: f64,
}

impl SignalMoments {
    pub fn new(m1: f64, s2: f64) -> Result<Self> {
        let m = Self { m1, s2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s2.is_finite() && self.s2 > 0.0) {
            return Err(Error::invalid(format!("signal power must be > 0 (found {})", self.s2)));
        }
        if !(self.m1.is_finite() && self.m1 >= 0.0) {
            return Err(Error::invalid(format!("signal mean must be >= 0 (found {})", self.m1)));
        }
        Ok(())
    }

    pub fn noise_power(&self, theta: &Specification, cfg: &SpeckleConfig) -> f64 {
        theta.mean_noise_power(self.m1, self.s2, cfg)
    }
}

/// Best shrinkage for one condition: `(c*, loss*)`.
pub fn shrinkage_ideal(theta: &Specification, moments: &SignalMoments, cfg: &SpeckleConfig) -> Result<(f64, f64)> {
    moments.validate()?;
    theta.validate(cfg)?;
    let v = moments.noise_power(theta, cfg);
    let s2 = moments.s2;
    Ok((s2 / (s2 + v), s2 * v / (s2 + v)))
}

/// Shrinkage minimizing the `lambda`-weighted expected MSE over the grid.
pub fn shrinkage_fit(
    lambda: &SamplingDistribution,
    moments: &SignalMoments,
    space: &SpecificationSpace,
    cfg: &SpeckleConfig,
) -> Result<ShrinkageModel> {
    moments.validate()?;
    if lambda.len() != space.len() {
        return Err(Error::GridMismatch(format!(
            "lambda has {} entries, grid has {}",
            lambda.len(),
            space.len()
        )));
    }
    let powers: Vec<f64> = space.grid().iter().map(|t| moments.noise_power(t, cfg)).collect();
    Ok(ShrinkageModel::from_expected_power(
        lambda.expectation(&powers),
        *moments,
        *cfg,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageModel {
    pub c: f64,
    pub moments: SignalMoments,
    pub speckle: SpeckleConfig,
}

impl ShrinkageModel {
    fn from_expected_power(power: f64, moments: SignalMoments, speckle: SpeckleConfig) -> Self {
        Self {
            c: moments.s2 / (moments.s2 + power),
            moments,
            speckle,
        }
    }

    pub fn loss_at(&self, theta: &Specification) -> f64 {
        let c = self.c;
        let v = self.moments.noise_power(theta, &self.speckle);
        (1.0 - c) * (1.0 - c) * self.moments.s2 + c * c * v
    }
}

impl Model for ShrinkageModel {
    fn denoise(&self, y: &ImagePatch) -> Result<ImagePatch> {
        Ok(y.map(|v| self.c * v))
    }

    fn expected_mse(&self, theta: &Specification) -> Option<f64> {
        Some(self.loss_at(theta))
    }
}

/// Fits [`ShrinkageModel`]s over a fixed grid; the fit is exact, so the
/// budget and warm start are ignored.
#[derive(Debug, Clone)]
pub struct ShrinkageLearner {
    moments: SignalMoments,
    speckle: SpeckleConfig,
    powers: Vec<f64>,
}

impl ShrinkageLearner {
    pub fn new(space: &SpecificationSpace, moments: SignalMoments, speckle: SpeckleConfig) -> Result<Self> {
        moments.validate()?;
        let powers = space.grid().iter().map(|t| moments.noise_power(t, &speckle)).collect();
        Ok(Self {
            moments,
            speckle,
            powers,
        })
    }

    pub fn moments(&self) -> &SignalMoments {
        &self.moments
    }

    /// `V(theta)` at every grid point.
    pub fn noise_powers(&self) -> &[f64] {
        &self.powers
    }
}

impl Learner for ShrinkageLearner {
    type Model = ShrinkageModel;

    fn fit(
        &self,
        lambda: &SamplingDistribution,
        _budget: usize,
        _warm: Option<&ShrinkageModel>,
    ) -> Result<ShrinkageModel> {
        if lambda.len() != self.powers.len() {
            return Err(Error::GridMismatch(format!(
                "lambda has {} entries, grid has {}",
                lambda.len(),
                self.powers.len()
            )));
        }
        Ok(ShrinkageModel::from_expected_power(
            lambda.expectation(&self.powers),
            self.moments,
            self.speckle,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{Dimension, Spacing};
    use crate::noise::NoiseParam;

    fn cfg() -> SpeckleConfig {
        SpeckleConfig::default()
    }

    /// Brute-force scan of `(1-c)^2 S2 + c^2 V` over `c` in `[0, 1]`.
    fn scan(s2: f64, v: f64, step: f64) -> (f64, f64) {
        let n = (1.0 / step).round() as usize;
        (0..=n)
            .map(|i| {
                let c = i as f64 * step;
                (c, (1.0 - c).powi(2) * s2 + c * c * v)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }

    #[test]
    fn ideal_examples() {
        let m = SignalMoments::new(0.5, 0.25).unwrap();
        assert_eq!(
            shrinkage_ideal(&Specification::noiseless(), &m, &cfg()).unwrap(),
            (1.0, 0.0)
        );

        // V = S2 through sigma alone
        let t = Specification::noiseless().with(NoiseParam::Sigma, 0.5);
        let (c, l) = shrinkage_ideal(&t, &m, &cfg()).unwrap();
        assert!((c - 0.5).abs() < 1e-15 && (l - 0.125).abs() < 1e-15);

        let t = Specification::noiseless().with(NoiseParam::Sigma, 1.0);
        let (c, l) = shrinkage_ideal(&t, &m, &cfg()).unwrap();
        assert!((c - 0.2).abs() < 1e-15 && (l - 0.2).abs() < 1e-15);
        let (c_scan, l_scan) = scan(0.25, 1.0, 1e-5);
        assert!((c - c_scan).abs() < 1e-4 && l <= l_scan + 1e-15);
    }

    fn space() -> SpecificationSpace {
        SpecificationSpace::default_box(&[NoiseParam::Sigma, NoiseParam::Alpha]).unwrap()
    }

    #[test]
    fn point_mass_fit_is_ideal() {
        let m = SignalMoments::new(0.45, 0.25).unwrap();
        let s = space();
        for i in [0, 17, 99] {
            let fit = shrinkage_fit(&SamplingDistribution::point_mass(s.len(), i), &m, &s, &cfg()).unwrap();
            let (c, l) = shrinkage_ideal(&s.point(i), &m, &cfg()).unwrap();
            assert!((fit.c - c).abs() < 1e-15);
            assert!((fit.loss_at(&s.point(i)) - l).abs() < 1e-15);
        }
    }

    #[test]
    fn two_point_fit() {
        // V = {0, 2 S2} with S2 = 0.25: sigma^2 = 0.5 at the second point
        let s = SpecificationSpace::new(vec![Dimension::new(
            NoiseParam::Sigma,
            0.0,
            0.5f64.sqrt(),
            2,
            Spacing::Linear,
        )])
        .unwrap();
        let m = SignalMoments::new(0.5, 0.25).unwrap();
        let fit = shrinkage_fit(&SamplingDistribution::uniform(2), &m, &s, &cfg()).unwrap();
        assert!((fit.c - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_fit_matches_scan() {
        let m = SignalMoments::new(0.45, 0.25).unwrap();
        let s = space();
        let fit = shrinkage_fit(&SamplingDistribution::uniform(s.len()), &m, &s, &cfg()).unwrap();
        let powers: Vec<f64> = s.grid().iter().map(|t| m.noise_power(t, &cfg())).collect();
        let mean_power = powers.iter().sum::<f64>() / powers.len() as f64;
        let (c_scan, _) = scan(0.25, mean_power, 1e-5);
        assert!((fit.c - c_scan).abs() < 1e-4);
    }

    #[test]
    fn ideal_is_optimal_on_grid() {
        let m = SignalMoments::new(0.45, 0.25).unwrap();
        let s = space();
        for t in s.grid() {
            let (_, l) = shrinkage_ideal(&t, &m, &cfg()).unwrap();
            let v = m.noise_power(&t, &cfg());
            let (_, best) = scan(m.s2, v, 1e-5);
            assert!(l <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn c_decreases_with_expected_noise() {
        let m = SignalMoments::new(0.45, 0.25).unwrap();
        let s = space();
        let l = ShrinkageLearner::new(&s, m, cfg()).unwrap();
        let mut prev = f64::INFINITY;
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| l.noise_powers()[a].total_cmp(&l.noise_powers()[b]));
        for i in order {
            let c = l.fit(&SamplingDistribution::point_mass(s.len(), i), 0, None).unwrap().c;
            assert!(c < prev);
            prev = c;
        }
    }

    #[test]
    fn rejects_bad_moments() {
        assert!(SignalMoments::new(0.5, 0.0).is_err());
        assert!(SignalMoments::new(-0.1, 0.2).is_err());
    }
}
