//! Orthogonal projection onto a fixed linear subspace.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::Model;
use crate::error::{Error, Result};
use crate::noise::ImagePatch;

/// Residual `||Px - x||` above which a signal is considered outside the subspace.
pub const SUBSPACE_TOLERANCE: f64 = 1e-8;

/// Projection onto the span of an orthonormal basis, stored as an `n x k` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceProjector {
    basis: DMatrix<f64>,
}

impl SubspaceProjector {
    /// Orthonormalizes `vectors` (each of length `n`) by thin QR. Fails if they
    /// are linearly dependent.
    pub fn from_spanning(vectors: &[Vec<f64>]) -> Result<Self> {
        let k = vectors.len();
        let n = vectors.first().map_or(0, Vec::len);
        if k == 0 || n == 0 || k > n {
            return Err(Error::invalid(format!(
                "cannot span a {k}-dimensional subspace of R^{n}"
            )));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
        let m = DMatrix::from_fn(n, k, |i, j| vectors[j][i]);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spanning vector".into()));
        }
        let qr = m.qr();
        let r = qr.r();
        let scale = r.diagonal().amax();
        if r.diagonal().iter().any(|d| d.abs() <= 1e-10 * scale) {
            return Err(Error::invalid("spanning vectors are linearly dependent"));
        }
        Ok(Self { basis: qr.q() })
    }

    /// Random rank-`k` subspace of `R^n` that contains `anchor`, if given.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, anchor: Option<&[f64]>, rng: &mut R) -> Result<Self> {
        let mut vectors: Vec<Vec<f64>> = anchor.map(|a| vec![a.to_vec()]).unwrap_or_default();
        while vectors.len() < k {
            vectors.push((0..n).map(|_| rng.sample(StandardNormal)).collect());
        }
        Self::from_spanning(&vectors)
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// The `n x n` projection matrix `Q Q^T`.
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: y.len(),
            });
        }
        let y = DVector::from_column_slice(y);
        let coef = self.basis.tr_mul(&y);
        Ok((&self.basis * coef).iter().copied().collect())
    }

    /// `||Px - x||`.
    pub fn residual(&self, x: &[f64]) -> Result<f64> {
        let p = self.apply(x)?;
        Ok(p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }
}

impl Model for SubspaceProjector {
    fn denoise(&self, y: &ImagePatch) -> Result<ImagePatch> {
        ImagePatch::new(y.width(), y.height(), self.apply(y.pixels())?)
    }
}

/// Expected squared error `E||P y - x||^2` for `y = alpha * Poisson(x / alpha) + n`,
/// `n ~ N(0, sigma^2 I)`: `k sigma^2 + alpha * tr(P diag(x) P^T)`.
pub fn subspace_loss_closed_form(proj: &SubspaceProjector, x: &[f64], sigma: f64, alpha: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma >= 0.0 && alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!(
            "need sigma >= 0 and alpha >= 0 (found {sigma}, {alpha})"
        )));
    }
    let residual = proj.residual(x)?;
    if residual > SUBSPACE_TOLERANCE {
        return Err(Error::NotInSubspace { residual });
    }
    let p = proj.matrix();
    let mut trace = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        trace += p.column(j).norm_squared() * xj;
    }
    Ok(proj.rank() as f64 * sigma * sigma + alpha * trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::monte_carlo_psnr;
    use crate::noise::{Specification, SpeckleConfig};
    use crate::par::Exec;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn projector(n: usize, k: usize, seed: u64) -> SubspaceProjector {
        SubspaceProjector::random(n, k, Some(&vec![1.0; n]), &mut stream(seed, &[])).unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.amax()
    }

    #[test]
    fn projection_invariants() {
        for k in 1..=8 {
            let pr = projector(16, k, k as u64);
            let p = pr.matrix();
            assert!(max_abs(&(&p * &p - &p)) < 1e-10);
            assert!(max_abs(&(p.transpose() - &p)) < 1e-10);
            assert!((p.trace() - k as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn identity_projector() {
        let vectors: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        let pr = SubspaceProjector::from_spanning(&vectors).unwrap();
        let x = [0.2, 0.4, 0.1, 0.9];
        let l = subspace_loss_closed_form(&pr, &x, 0.3, 0.5).unwrap();
        assert!((l - (4.0 * 0.09 + 0.5 * 1.6)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_only() {
        let pr = projector(16, 5, 2);
        let x = pr.apply(&[0.5; 16]).unwrap();
        let l = subspace_loss_closed_form(&pr, &x, 0.2, 0.0).unwrap();
        assert!((l - 5.0 * 0.04).abs() < 1e-12);
    }

    #[test]
    fn rejects_signal_outside_subspace() {
        let pr = projector(16, 2, 3);
        let mut x = vec![0.5; 16];
        x[0] = 0.9;
        assert!(matches!(
            subspace_loss_closed_form(&pr, &x, 0.1, 0.1),
            Err(Error::NotInSubspace { .. })
        ));
    }

    #[test]
    fn rejects_dependent_vectors() {
        let v = vec![1.0, 2.0, 3.0];
        assert!(SubspaceProjector::from_spanning(&[v.clone(), v.iter().map(|a| 2.0 * a).collect()]).is_err());
        assert!(SubspaceProjector::from_spanning(&[vec![1.0, 0.0], vec![0.0]]).is_err());
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let pr = projector(16, 3, 7);
        let x: Vec<f64> = pr.apply(&[0.6; 16]).unwrap();
        let patch = ImagePatch::new(4, 4, x.clone()).unwrap();
        let theta = Specification::noiseless()
            .with(crate::noise::NoiseParam::Sigma, 0.1)
            .with(crate::noise::NoiseParam::Alpha, 0.5);
        let est = monte_carlo_psnr(
            &pr,
            &theta,
            &[patch],
            200_000,
            &SpeckleConfig::default(),
            &[],
            4,
            Exec::Parallel,
        )
        .unwrap();
        let exact = subspace_loss_closed_form(&pr, &x, 0.1, 0.5).unwrap() / 16.0;
        assert!(
            (est.mse - exact).abs() < 3.0 * est.stderr,
            "{} vs {exact} ({})",
            est.mse,
            est.stderr
        );
    }

    proptest! {
        #[test]
        fn idempotent(seed in 0u64..500, k in 1usize..8) {
            let pr = projector(16, k, seed);
            let y: Vec<f64> = (0..16).map(|i| ((i as u64 * 31 + seed) % 11) as f64 - 5.0).collect();
            let once = pr.apply(&y).unwrap();
            let twice = pr.apply(&once).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
