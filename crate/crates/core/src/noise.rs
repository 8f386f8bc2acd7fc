//! Joint Poisson-Gaussian-speckle forward model and image-quality metrics.
//!
//! A clean signal `x` is corrupted as
//!
//! ```text
//! w ~ Gamma(shape = B/beta, rate = B/beta)      (speckle, mean 1, variance beta/B)
//! z = alpha * Poisson(x * w / alpha)            (shot noise, variance alpha * x * w)
//! y = z + N(0, sigma^2)                          (read noise)
//! ```
//!
//! so that `E[y | x] = x` and the per-pixel variance is
//! `sigma^2 + alpha * x + x^2 * beta / B`. Inactive dimensions skip their
//! stage entirely.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this rate Poisson draws use the normal approximation `N(mu, mu)`.
pub const POISSON_NORMAL_CUTOFF: f64 = 1e3;

/// One axis of the noise-specification space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseParam {
    Sigma,
    Alpha,
    Beta,
}

impl NoiseParam {
    pub const ALL: [NoiseParam; 3] = [NoiseParam::Sigma, NoiseParam::Alpha, NoiseParam::Beta];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseParam::Sigma => "sigma",
            NoiseParam::Alpha => "alpha",
            NoiseParam::Beta => "beta",
        }
    }

    /// Value an inactive dimension holds.
    pub fn off_value(self) -> f64 {
        match self {
            NoiseParam::Sigma | NoiseParam::Alpha => 0.0,
            NoiseParam::Beta => 1.0,
        }
    }
}

impl std::str::FromStr for NoiseParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(NoiseParam::Sigma),
            "alpha" => Ok(NoiseParam::Alpha),
            "beta" => Ok(NoiseParam::Beta),
            other => Err(Error::invalid(format!("unknown noise parameter {other:?}"))),
        }
    }
}

impl std::fmt::Display for NoiseParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A noise condition `(sigma, alpha, beta)` with a per-dimension active mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Specification {
    values: [f64; 3],
    active: [bool; 3],
}

impl Default for Specification {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl Specification {
    /// All three noise sources active.
    pub fn new(sigma: f64, alpha: f64, beta: f64) -> Self {
        Self {
            values: [sigma, alpha, beta],
            active: [true; 3],
        }
    }

    pub fn noiseless() -> Self {
        Self {
            values: NoiseParam::ALL.map(NoiseParam::off_value),
            active: [false; 3],
        }
    }

    /// Activates `param` at `value`.
    pub fn with(mut self, param: NoiseParam, value: f64) -> Self {
        self.values[param.index()] = value;
        self.active[param.index()] = true;
        self
    }

    /// Deactivates `param`, resetting it to its no-noise value.
    pub fn without(mut self, param: NoiseParam) -> Self {
        self.values[param.index()] = param.off_value();
        self.active[param.index()] = false;
        self
    }

    pub fn is_active(&self, param: NoiseParam) -> bool {
        self.active[param.index()]
    }

    /// Raw stored value, including the no-noise value of inactive dimensions.
    pub fn value(&self, param: NoiseParam) -> f64 {
        self.values[param.index()]
    }

    pub fn get(&self, param: NoiseParam) -> Option<f64> {
        self.is_active(param).then(|| self.value(param))
    }

    pub fn sigma(&self) -> f64 {
        self.value(NoiseParam::Sigma)
    }

    pub fn alpha(&self) -> f64 {
        self.value(NoiseParam::Alpha)
    }

    pub fn beta(&self) -> f64 {
        self.value(NoiseParam::Beta)
    }

    pub fn validate(&self, cfg: &SpeckleConfig) -> Result<()> {
        for p in NoiseParam::ALL {
            let v = self.value(p);
            if !v.is_finite() {
                return Err(Error::invalid(format!("{p} is not finite ({v})")));
            }
            if !self.is_active(p) && v != p.off_value() {
                return Err(Error::invalid(format!(
                    "inactive {p} must hold {} (found {v})",
                    p.off_value()
                )));
            }
        }
        if self.sigma() < 0.0 {
            return Err(Error::invalid(format!("sigma must be >= 0 (found {})", self.sigma())));
        }
        if self.is_active(NoiseParam::Alpha) && self.alpha() <= 0.0 {
            return Err(Error::invalid(format!("alpha must be > 0 (found {})", self.alpha())));
        }
        if self.is_active(NoiseParam::Beta) {
            cfg.check_beta(self.beta())?;
        }
        Ok(())
    }

    /// Expected conditional noise variance at a pixel of clean intensity `x`.
    pub fn pixel_variance(&self, x: f64, cfg: &SpeckleConfig) -> f64 {
        self.mean_noise_power(x, x * x, cfg)
    }

    /// Pixel-averaged noise variance given signal moments `m1 = E[x]`, `m2 = E[x^2]`.
    pub fn mean_noise_power(&self, m1: f64, m2: f64, cfg: &SpeckleConfig) -> f64 {
        let mut v = 0.0;
        if let Some(s) = self.get(NoiseParam::Sigma) {
            v += s * s;
        }
        if let Some(a) = self.get(NoiseParam::Alpha) {
            v += a * m1;
        }
        if let Some(b) = self.get(NoiseParam::Beta) {
            v += m2 * b / cfg.upper;
        }
        v
    }
}

/// Speckle parameterization: `beta` ranges over `[1, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleConfig {
    pub upper: f64,
}

impl Default for SpeckleConfig {
    fn default() -> Self {
        Self { upper: 1024.0 }
    }
}

impl SpeckleConfig {
    pub fn new(upper: f64) -> Result<Self> {
        if !(upper.is_finite() && upper >= 1.0) {
            return Err(Error::invalid(format!("speckle bound B must be >= 1 (found {upper})")));
        }
        Ok(Self { upper })
    }

    fn check_beta(&self, beta: f64) -> Result<()> {
        if !beta.is_finite() || beta < 1.0 || beta > self.upper {
            return Err(Error::invalid(format!(
                "beta must lie in [1, {}] (found {beta})",
                self.upper
            )));
        }
        Ok(())
    }

    /// Gamma shape (= rate) for a given `beta`.
    pub fn shape(&self, beta: f64) -> f64 {
        self.upper / beta
    }
}

/// Grayscale image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePatch {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImagePatch {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width * height != pixels.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{width}x{height} = {} pixels", width * height),
                found: format!("{} pixels", pixels.len()),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_same_shape(&self, other: &ImagePatch) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", other.width, other.height),
                found: format!("{}x{}", self.width, self.height),
            });
        }
        Ok(())
    }
}

/// i.i.d. `Gamma(B/beta, B/beta)` multiplicative speckle field with `len` entries.
pub fn sample_speckle_field<R: Rng + ?Sized>(
    len: usize,
    beta: f64,
    cfg: &SpeckleConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.check_beta(beta)?;
    let shape = cfg.shape(beta);
    let gamma = Gamma::new(shape, 1.0 / shape).map_err(|e| Error::invalid(format!("gamma({shape}): {e}")))?;
    Ok((0..len).map(|_| gamma.sample(rng)).collect())
}

/// One Poisson draw of mean `rate`, with the normal approximation above
/// [`POISSON_NORMAL_CUTOFF`].
pub fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(Error::NonFinite(format!("poisson rate {rate}")));
    }
    if rate == 0.0 {
        return Ok(0.0);
    }
    if rate > POISSON_NORMAL_CUTOFF {
        let z: f64 = rng.sample(StandardNormal);
        return Ok((rate + rate.sqrt() * z).round().max(0.0));
    }
    let poisson = Poisson::new(rate).map_err(|e| Error::invalid(format!("poisson({rate}): {e}")))?;
    Ok(poisson.sample(rng))
}

/// Applies the forward model to a clean patch.
pub fn corrupt<R: Rng + ?Sized>(
    x: &ImagePatch,
    theta: &Specification,
    cfg: &SpeckleConfig,
    rng: &mut R,
) -> Result<ImagePatch> {
    theta.validate(cfg)?;
    if let Some(bad) = x.pixels.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("clean pixel {bad}")));
    }
    let mut y = x.pixels.clone();
    if let Some(beta) = theta.get(NoiseParam::Beta) {
        let w = sample_speckle_field(y.len(), beta, cfg, rng)?;
        for (v, w) in y.iter_mut().zip(w) {
            *v *= w;
        }
    }
    let alpha = theta.get(NoiseParam::Alpha);
    let sigma = theta.get(NoiseParam::Sigma);
    for v in y.iter_mut() {
        if let Some(a) = alpha {
            *v = a * sample_poisson(*v / a, rng)?;
        }
        if let Some(s) = sigma {
            let z: f64 = rng.sample(StandardNormal);
            *v += s * z;
        }
    }
    Ok(ImagePatch {
        width: x.width,
        height: x.height,
        pixels: y,
    })
}

pub fn mse(estimate: &ImagePatch, reference: &ImagePatch) -> Result<f64> {
    estimate.check_same_shape(reference)?;
    let n = reference.len().max(1) as f64;
    let sum: f64 = estimate
        .pixels
        .iter()
        .zip(&reference.pixels)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

/// PSNR in dB with peak 1.0; `+inf` when the images are identical.
pub fn psnr(estimate: &ImagePatch, reference: &ImagePatch) -> Result<f64> {
    Ok(psnr_from_mse(mse(estimate, reference)?))
}

/// Same as [`psnr`] after clipping the estimate to `[0, 1]`.
pub fn psnr_clipped(estimate: &ImagePatch, reference: &ImagePatch) -> Result<f64> {
    psnr(&estimate.map(|v| v.clamp(0.0, 1.0)), reference)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// MSE-domain loss for a PSNR value: `10^(-psnr/10)`.
pub fn loss_from_psnr(psnr_db: f64) -> f64 {
    10f64.powf(-psnr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn stats(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    /// Standard error of the sample variance, from the fourth central moment.
    fn var_stderr(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let (mean, var) = stats(v);
        let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        ((m4 - var * var) / n).sqrt()
    }

    #[test]
    fn speckle_mean_is_one() {
        let cfg = SpeckleConfig::default();
        let w = sample_speckle_field(1_000_000, 1.0, &cfg, &mut stream(1, &[])).unwrap();
        let (mean, var) = stats(&w);
        assert!((mean - 1.0).abs() < 3.0 * (var / w.len() as f64).sqrt());
        assert!(w.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn speckle_variance_matches_beta_over_b() {
        let cfg = SpeckleConfig::default();
        for (beta, expected) in [(1024.0, 1.0), (32.0, 0.03125)] {
            let w = sample_speckle_field(1_000_000, beta, &cfg, &mut stream(2, &[])).unwrap();
            let (_, var) = stats(&w);
            let se = var_stderr(&w);
            assert!(
                (var - expected).abs() < 3.0 * se,
                "beta={beta}: var {var} vs {expected} (se {se})"
            );
        }
    }

    #[test]
    fn speckle_rejects_bad_beta() {
        let cfg = SpeckleConfig::default();
        let mut rng = stream(0, &[]);
        assert!(sample_speckle_field(4, 0.5, &cfg, &mut rng).is_err());
        assert!(sample_speckle_field(4, 2048.0, &cfg, &mut rng).is_err());
        assert!(sample_speckle_field(4, f64::NAN, &cfg, &mut rng).is_err());
    }

    #[test]
    fn all_inactive_is_identity() {
        let x = ImagePatch::new(3, 2, vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0]).unwrap();
        let y = corrupt(
            &x,
            &Specification::noiseless(),
            &SpeckleConfig::default(),
            &mut stream(3, &[]),
        )
        .unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn poisson_variance_scales_with_alpha() {
        let cfg = SpeckleConfig::default();
        let x = ImagePatch::filled(1000, 1000, 0.5);
        let alpha = 0.2;
        let theta = Specification::noiseless().with(NoiseParam::Alpha, alpha);
        let y = corrupt(&x, &theta, &cfg, &mut stream(4, &[])).unwrap();
        let (mean, var) = stats(y.pixels());
        let n = y.len() as f64;
        assert!((mean - 0.5).abs() < 3.0 * (var / n).sqrt());
        assert!((var - alpha * 0.5).abs() < 3.0 * var_stderr(y.pixels()));
    }

    #[test]
    fn pure_speckle_variance() {
        let cfg = SpeckleConfig::default();
        let x = ImagePatch::filled(1000, 1000, 0.5);
        let theta = Specification::noiseless().with(NoiseParam::Beta, 1024.0);
        let y = corrupt(&x, &theta, &cfg, &mut stream(5, &[])).unwrap();
        let (_, var) = stats(y.pixels());
        assert!((var - 0.25).abs() < 3.0 * var_stderr(y.pixels()), "var {var}");
    }

    #[test]
    fn corrupt_is_deterministic() {
        let cfg = SpeckleConfig::default();
        let x = ImagePatch::filled(8, 8, 0.3);
        let theta = Specification::new(0.1, 0.5, 32.0);
        let a = corrupt(&x, &theta, &cfg, &mut stream(9, &[1])).unwrap();
        let b = corrupt(&x, &theta, &cfg, &mut stream(9, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_rejects_invalid_spec_and_pixels() {
        let cfg = SpeckleConfig::default();
        let x = ImagePatch::filled(2, 2, 0.5);
        let mut rng = stream(0, &[]);
        assert!(corrupt(&x, &Specification::new(-0.1, 1.0, 1.0), &cfg, &mut rng).is_err());
        assert!(corrupt(&x, &Specification::new(0.1, 0.0, 1.0), &cfg, &mut rng).is_err());
        assert!(corrupt(&x, &Specification::new(0.1, 1.0, 4096.0), &cfg, &mut rng).is_err());
        let bad = ImagePatch::new(1, 1, vec![f64::NAN]).unwrap();
        assert!(matches!(
            corrupt(&bad, &Specification::new(0.1, 1.0, 1.0), &cfg, &mut rng),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn large_rate_uses_normal_approximation() {
        let mut rng = stream(6, &[]);
        let draws: Vec<f64> = (0..200_000).map(|_| sample_poisson(5e4, &mut rng).unwrap()).collect();
        let (mean, var) = stats(&draws);
        assert!((mean - 5e4).abs() < 3.0 * (var / draws.len() as f64).sqrt());
        assert!((var / 5e4 - 1.0).abs() < 0.02);
    }

    #[test]
    fn psnr_examples() {
        let r = ImagePatch::filled(4, 4, 0.5);
        assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);
        let e = ImagePatch::filled(4, 4, 0.6);
        assert!((psnr(&e, &r).unwrap() - 20.0).abs() < 1e-9);
        let other = ImagePatch::filled(4, 3, 0.5);
        assert!(matches!(psnr(&other, &r), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn psnr_clipping_is_opt_in() {
        let r = ImagePatch::filled(2, 2, 1.0);
        let e = ImagePatch::filled(2, 2, 1.5);
        assert!(psnr(&e, &r).unwrap().is_finite());
        assert_eq!(psnr_clipped(&e, &r).unwrap(), f64::INFINITY);
    }

    #[test]
    fn loss_from_psnr_examples() {
        assert!((loss_from_psnr(20.0) - 0.01).abs() < 1e-15);
        assert_eq!(loss_from_psnr(0.0), 1.0);
        assert!((loss_from_psnr(35.3) - 2.951209e-4).abs() < 1e-9);
    }

    #[test]
    fn spec_accessors() {
        let s = Specification::noiseless().with(NoiseParam::Alpha, 2.0);
        assert_eq!(s.get(NoiseParam::Alpha), Some(2.0));
        assert_eq!(s.get(NoiseParam::Sigma), None);
        assert_eq!(s.beta(), 1.0);
        let s = s.without(NoiseParam::Alpha);
        assert_eq!(s, Specification::noiseless());
        assert!("gamma".parse::<NoiseParam>().is_err());
        assert_eq!("beta".parse::<NoiseParam>().unwrap(), NoiseParam::Beta);
    }
}
