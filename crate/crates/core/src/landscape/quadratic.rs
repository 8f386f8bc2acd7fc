use serde::{Deserialize, Serialize};

use super::polyfit::PolyFit;
use super::space::{Dimension, Spacing, SpecificationSpace};
use crate::error::{Error, Result};
use crate::noise::{NoiseParam, Specification};

/// Per-dimension map from raw parameter values to the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub name: NoiseParam,
    pub lower: f64,
    pub upper: f64,
    pub spacing: Spacing,
}

impl From<&Dimension> for Normalizer {
    fn from(d: &Dimension) -> Self {
        Self {
            name: d.name,
            lower: d.lower,
            upper: d.upper,
            spacing: d.spacing,
        }
    }
}

impl Normalizer {
    pub fn apply(&self, v: f64) -> f64 {
        match self.spacing {
            Spacing::Linear => (v - self.lower) / (self.upper - self.lower),
            Spacing::Geometric => (v.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        }
    }
}

/// `P(s) = s^T A s + b^T s + c` on normalized coordinates `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticModel {
    pub dims: Vec<NoiseParam>,
    pub normalizer: Vec<Normalizer>,
    /// Symmetric, row-major `n x n`.
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub ridge: f64,
    pub degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub psnr_db: f64,
    /// Set when some coordinate lies outside the box the model was fit on.
    pub extrapolated: bool,
}

impl QuadraticModel {
    /// Converts a degree-1 or degree-2 monomial fit into matrix form.
    pub fn from_polyfit(space: &SpecificationSpace, fit: &PolyFit) -> Result<Self> {
        let n = space.ndim();
        if fit.degree > 2 {
            return Err(Error::invalid(format!(
                "degree {} landscapes have no (A, b, c) form",
                fit.degree
            )));
        }
        if fit.nvars() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: fit.nvars(),
            });
        }
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n];
        let mut c = 0.0;
        for (exps, &coef) in fit.exponents.iter().zip(&fit.coefficients) {
            let nz: Vec<usize> = (0..n).filter(|&i| exps[i] > 0).collect();
            match (exps.iter().sum::<usize>(), nz.as_slice()) {
                (0, _) => c = coef,
                (1, &[i]) => b[i] = coef,
                (2, &[i]) => a[i * n + i] = coef,
                (2, &[i, j]) => {
                    a[i * n + j] = coef / 2.0;
                    a[j * n + i] = coef / 2.0;
                }
                _ => unreachable!("monomial of degree <= 2"),
            }
        }
        Ok(Self {
            dims: space.params(),
            normalizer: space.dims().iter().map(Normalizer::from).collect(),
            a,
            b,
            c,
            ridge: fit.ridge,
            degree: fit.degree,
        })
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn a_entry(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.ndim() + j]
    }

    pub fn evaluate_normalized(&self, s: &[f64]) -> Result<f64> {
        let n = self.ndim();
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: s.len(),
            });
        }
        let mut v = self.c;
        for i in 0..n {
            v += self.b[i] * s[i];
            for j in 0..n {
                v += s[i] * self.a[i * n + j] * s[j];
            }
        }
        Ok(v)
    }

    pub fn predict(&self, theta: &Specification) -> Result<Prediction> {
        let mut s = Vec::with_capacity(self.ndim());
        for norm in &self.normalizer {
            let v = theta.get(norm.name).ok_or(Error::DimensionMismatch {
                expected: self.ndim(),
                found: NoiseParam::ALL.iter().filter(|&&p| theta.is_active(p)).count(),
            })?;
            s.push(norm.apply(v));
        }
        const EDGE: f64 = 1e-12;
        let extrapolated = s.iter().any(|&x| !(-EDGE..=1.0 + EDGE).contains(&x));
        Ok(Prediction {
            psnr_db: self.evaluate_normalized(&s)?,
            extrapolated,
        })
    }

    /// Predicted PSNR at every grid point of `space`.
    pub fn predict_grid(&self, space: &SpecificationSpace) -> Result<Vec<f64>> {
        self.check_space(space)?;
        space
            .grid()
            .iter()
            .map(|t| {
                let p = self.predict(t)?.psnr_db;
                if p.is_finite() {
                    Ok(p)
                } else {
                    Err(Error::NonFinite(format!("model prediction at {t:?}")))
                }
            })
            .collect()
    }

    /// Errors unless `space` has the same dimensions, bounds and spacing.
    pub fn check_space(&self, space: &SpecificationSpace) -> Result<()> {
        let theirs: Vec<Normalizer> = space.dims().iter().map(Normalizer::from).collect();
        if theirs != self.normalizer {
            return Err(Error::GridMismatch(format!(
                "model was fit on {:?}, space is {:?}",
                self.normalizer, theirs
            )));
        }
        Ok(())
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.ndim();
        (0..n).all(|i| (0..n).all(|j| self.a[i * n + j] == self.a[j * n + i]))
    }
}
