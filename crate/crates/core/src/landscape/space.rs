use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseParam, Specification, SpeckleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    #[default]
    Geometric,
}

/// One bounded, discretized axis of a [`SpecificationSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: NoiseParam,
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Dimension {
    pub fn new(name: NoiseParam, lower: f64, upper: f64, bins: usize, spacing: Spacing) -> Self {
        Self {
            name,
            lower,
            upper,
            bins,
            spacing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.name;
        if !(self.lower.is_finite() && self.upper.is_finite()) {
            return Err(Error::invalid(format!("{name}: bounds must be finite")));
        }
        if self.lower >= self.upper {
            return Err(Error::invalid(format!(
                "{name}: lower bound {} must be below upper bound {}",
                self.lower, self.upper
            )));
        }
        if self.bins < 2 {
            return Err(Error::invalid(format!(
                "{name}: need at least 2 bins (found {})",
                self.bins
            )));
        }
        if self.spacing == Spacing::Geometric && self.lower <= 0.0 {
            return Err(Error::invalid(format!(
                "{name}: geometric spacing needs a positive lower bound (found {})",
                self.lower
            )));
        }
        Ok(())
    }

    /// Grid value at position `i` in `0..bins`; both endpoints are exact.
    pub fn value(&self, i: usize) -> f64 {
        let last = self.bins - 1;
        if i == 0 {
            return self.lower;
        }
        if i == last {
            return self.upper;
        }
        let t = i as f64 / last as f64;
        match self.spacing {
            Spacing::Linear => self.lower + (self.upper - self.lower) * t,
            Spacing::Geometric => (self.lower.ln() + (self.upper.ln() - self.lower.ln()) * t).exp(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.value(i)).collect()
    }

    /// Affine map of the dimension onto `[0, 1]`, in log space for geometric axes.
    pub fn normalize(&self, v: f64) -> f64 {
        match self.spacing {
            Spacing::Linear => (v - self.lower) / (self.upper - self.lower),
            Spacing::Geometric => (v.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        }
    }
}

/// Cartesian product of bounded noise dimensions plus its finite grid.
///
/// Grid indices are row-major over `dims`: the last dimension varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecificationSpace {
    dims: Vec<Dimension>,
}

impl SpecificationSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("specification space needs at least one dimension"));
        }
        for (i, d) in dims.iter().enumerate() {
            d.validate()?;
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::invalid(format!("dimension {} listed twice", d.name)));
            }
            let lower_ok = match d.name {
                NoiseParam::Sigma => d.lower >= 0.0,
                NoiseParam::Alpha => d.lower > 0.0,
                NoiseParam::Beta => d.lower >= 1.0,
            };
            if !lower_ok {
                return Err(Error::invalid(format!(
                    "{}: lower bound {} out of range",
                    d.name, d.lower
                )));
            }
        }
        Ok(Self { dims })
    }

    /// The default box: sigma in [0.02, 0.66], alpha in [0.1, 41], beta in [1, 1024],
    /// ten geometric bins each.
    pub fn default_box(params: &[NoiseParam]) -> Result<Self> {
        let dims = params
            .iter()
            .map(|&p| {
                let (lo, hi) = match p {
                    NoiseParam::Sigma => (0.02, 0.66),
                    NoiseParam::Alpha => (0.1, 41.0),
                    NoiseParam::Beta => (1.0, 1024.0),
                };
                Dimension::new(p, lo, hi, 10, Spacing::Geometric)
            })
            .collect();
        Self::new(dims)
    }

    /// Checks that every active beta bound fits under the speckle limit.
    pub fn check_speckle(&self, cfg: &SpeckleConfig) -> Result<()> {
        match self.dims.iter().find(|d| d.name == NoiseParam::Beta) {
            Some(d) if d.upper > cfg.upper => Err(Error::invalid(format!(
                "beta upper bound {} exceeds speckle bound B = {}",
                d.upper, cfg.upper
            ))),
            _ => Ok(()),
        }
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn params(&self) -> Vec<NoiseParam> {
        self.dims.iter().map(|d| d.name).collect()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().map(|d| d.bins).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-dimension bin positions of grid index `index`.
    pub fn unravel(&self, mut index: usize) -> Vec<usize> {
        let mut pos = vec![0; self.dims.len()];
        for (p, d) in pos.iter_mut().zip(&self.dims).rev() {
            *p = index % d.bins;
            index /= d.bins;
        }
        pos
    }

    pub fn ravel(&self, pos: &[usize]) -> usize {
        pos.iter().zip(&self.dims).fold(0, |acc, (&p, d)| acc * d.bins + p)
    }

    pub fn point(&self, index: usize) -> Specification {
        let pos = self.unravel(index);
        self.dims
            .iter()
            .zip(pos)
            .fold(Specification::noiseless(), |s, (d, p)| s.with(d.name, d.value(p)))
    }

    pub fn grid(&self) -> Vec<Specification> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Grid indices of the `2^n` corners of the box.
    pub fn corner_indices(&self) -> Vec<usize> {
        let n = self.dims.len();
        (0..1usize << n)
            .map(|mask| {
                let pos: Vec<usize> = self
                    .dims
                    .iter()
                    .enumerate()
                    .map(|(i, d)| if mask >> (n - 1 - i) & 1 == 1 { d.bins - 1 } else { 0 })
                    .collect();
                self.ravel(&pos)
            })
            .collect()
    }

    /// Active coordinates of `theta` in this space's dimension order.
    pub fn coords(&self, theta: &Specification) -> Result<Vec<f64>> {
        self.dims
            .iter()
            .map(|d| {
                theta
                    .get(d.name)
                    .ok_or_else(|| Error::GridMismatch(format!("specification has no active {}", d.name)))
            })
            .collect()
    }

    /// Normalized coordinates in `[0, 1]^n` for points inside the box.
    pub fn normalized(&self, theta: &Specification) -> Result<Vec<f64>> {
        let raw = self.coords(theta)?;
        Ok(raw.iter().zip(&self.dims).map(|(&v, d)| d.normalize(v)).collect())
    }

    /// Builds a specification from `(sigma, alpha, beta)` columns, activating
    /// exactly this space's dimensions. Columns outside the space must hold
    /// their no-noise value.
    pub fn spec_from_columns(&self, sigma: f64, alpha: f64, beta: f64) -> Result<Specification> {
        let cols = [sigma, alpha, beta];
        let mut theta = Specification::noiseless();
        for p in NoiseParam::ALL {
            let v = cols[p.index()];
            if self.dims.iter().any(|d| d.name == p) {
                theta = theta.with(p, v);
            } else if v != p.off_value() {
                return Err(Error::GridMismatch(format!(
                    "{p} = {v} but {p} is not a dimension of this space"
                )));
            }
        }
        Ok(theta)
    }

    /// Grid index of `theta` when it coincides with a grid point (to 1e-9 relative).
    pub fn locate(&self, theta: &Specification) -> Option<usize> {
        let coords = self.coords(theta).ok()?;
        let mut pos = Vec::with_capacity(coords.len());
        for (v, d) in coords.iter().zip(&self.dims) {
            let hit = (0..d.bins).find(|&i| {
                let g = d.value(i);
                (g - v).abs() <= 1e-9 * g.abs().max(v.abs()).max(1e-300)
            })?;
            pos.push(hit);
        }
        Some(self.ravel(&pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn box2() -> SpecificationSpace {
        SpecificationSpace::default_box(&[NoiseParam::Sigma, NoiseParam::Alpha]).unwrap()
    }

    #[test]
    fn grid_size_and_bounds() {
        let s = SpecificationSpace::default_box(&NoiseParam::ALL).unwrap();
        assert_eq!(s.len(), 1000);
        for theta in s.grid() {
            for d in s.dims() {
                let v = theta.value(d.name);
                assert!(v >= d.lower && v <= d.upper);
            }
        }
    }

    #[test]
    fn ravel_roundtrip() {
        let s = SpecificationSpace::default_box(&NoiseParam::ALL).unwrap();
        for i in [0, 1, 9, 10, 123, 999] {
            assert_eq!(s.ravel(&s.unravel(i)), i);
        }
        assert_eq!(s.unravel(123), vec![1, 2, 3]);
    }

    #[test]
    fn corners() {
        let s = box2();
        assert_eq!(s.corner_indices(), vec![0, 9, 90, 99]);
        let c = s.point(99);
        assert_eq!((c.sigma(), c.alpha()), (0.66, 41.0));
        assert!(!c.is_active(NoiseParam::Beta));
    }

    #[test]
    fn rejects_bad_dimensions() {
        let d = |lo, hi, bins, sp| Dimension::new(NoiseParam::Sigma, lo, hi, bins, sp);
        assert!(SpecificationSpace::new(vec![d(0.5, 0.5, 10, Spacing::Linear)]).is_err());
        assert!(SpecificationSpace::new(vec![d(0.1, 0.5, 1, Spacing::Linear)]).is_err());
        assert!(SpecificationSpace::new(vec![d(0.0, 0.5, 4, Spacing::Geometric)]).is_err());
        assert!(SpecificationSpace::new(vec![d(0.0, 0.5, 4, Spacing::Linear)]).is_ok());
        assert!(SpecificationSpace::new(vec![d(0.1, 0.5, 4, Spacing::Linear); 2]).is_err());
        assert!(SpecificationSpace::new(vec![]).is_err());
    }

    #[test]
    fn geometric_midpoints_are_geometric_means() {
        let d = Dimension::new(NoiseParam::Beta, 1.0, 1024.0, 11, Spacing::Geometric);
        assert!((d.value(5) - 32.0).abs() < 1e-9);
    }

    #[test]
    fn spec_from_columns_checks_inactive() {
        let s = box2();
        let t = s.spec_from_columns(0.1, 2.0, 1.0).unwrap();
        assert!(t.is_active(NoiseParam::Alpha) && !t.is_active(NoiseParam::Beta));
        assert!(s.spec_from_columns(0.1, 2.0, 5.0).is_err());
        assert_eq!(s.locate(&s.point(37)), Some(37));
    }

    proptest! {
        #[test]
        fn geometric_ratios_constant(lo in 1e-3f64..10.0, span in 1.5f64..1e3, bins in 2usize..30) {
            let d = Dimension::new(NoiseParam::Alpha, lo, lo * span, bins, Spacing::Geometric);
            let v = d.values();
            let r0 = v[1] / v[0];
            for w in v.windows(2) {
                prop_assert!(((w[1] / w[0]) / r0 - 1.0).abs() < 1e-9);
            }
        }
    }
}
