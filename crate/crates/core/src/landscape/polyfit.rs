//! Ridge-regularized least-squares polynomial fits in a monomial basis, and
//! leave-one-out model selection over degree and ridge strength.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fits whose design matrix exceeds this condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Exponent vectors of all monomials in `nvars` variables with total degree
/// at most `degree`, ordered by total degree and then lexicographically
/// descending (`1, x0, x1, x0^2, x0 x1, x1^2, ...`).
pub fn monomials(nvars: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 0..=degree {
        let mut current = vec![0; nvars];
        push_with_total(&mut out, &mut current, 0, total);
    }
    out
}

fn push_with_total(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, var: usize, left: usize) {
    if var + 1 == current.len() {
        current[var] = left;
        out.push(current.clone());
        return;
    }
    if current.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=left).rev() {
        current[var] = e;
        push_with_total(out, current, var + 1, left - e);
    }
    current[var] = 0;
}

/// Number of coefficients of a full polynomial: `C(nvars + degree, degree)`.
pub fn coefficient_count(nvars: usize, degree: usize) -> usize {
    (1..=degree).fold(1, |acc, k| acc * (nvars + k) / k)
}

fn eval_monomial(exps: &[usize], x: &[f64]) -> f64 {
    exps.iter().zip(x).map(|(&e, &v)| v.powi(e as i32)).product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    pub degree: usize,
    pub ridge: f64,
    pub exponents: Vec<Vec<usize>>,
    pub coefficients: Vec<f64>,
}

impl PolyFit {
    pub fn nvars(&self) -> usize {
        self.exponents.first().map_or(0, Vec::len)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.nvars() {
            return Err(Error::DimensionMismatch {
                expected: self.nvars(),
                found: x.len(),
            });
        }
        Ok(self
            .exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(e, c)| c * eval_monomial(e, x))
            .sum())
    }

    /// Norm of all coefficients except the constant term.
    pub fn penalized_norm(&self) -> f64 {
        self.coefficients[1..].iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

fn check_inputs(points: &[Vec<f64>], values: &[f64]) -> Result<usize> {
    if points.len() != values.len() {
        return Err(Error::invalid(format!(
            "{} points but {} values",
            points.len(),
            values.len()
        )));
    }
    let nvars = points
        .first()
        .map(Vec::len)
        .ok_or(Error::InsufficientSamples { have: 0, need: 1 })?;
    for p in points {
        if p.len() != nvars {
            return Err(Error::DimensionMismatch {
                expected: nvars,
                found: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample coordinate {p:?}")));
        }
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("sample value {v}")));
    }
    Ok(nvars)
}

/// Sorts samples into a canonical order so fits do not depend on input order.
fn canonical_order(points: &[Vec<f64>], values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(values[a].total_cmp(&values[b]))
    });
    order
}

/// Minimizes `sum (p(x_i) - y_i)^2 + ridge * |coefficients without intercept|^2`.
pub fn fit_polynomial(points: &[Vec<f64>], values: &[f64], degree: usize, ridge: f64) -> Result<PolyFit> {
    let nvars = check_inputs(points, values)?;
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::invalid(format!("ridge must be >= 0 (found {ridge})")));
    }
    let exponents = monomials(nvars, degree);
    let ncoef = exponents.len();
    if ridge == 0.0 && points.len() < ncoef {
        return Err(Error::InsufficientSamples {
            have: points.len(),
            need: ncoef,
        });
    }

    let order = canonical_order(points, values);
    let penalized = if ridge > 0.0 { ncoef - 1 } else { 0 };
    let rows = points.len() + penalized;
    let mut design = DMatrix::<f64>::zeros(rows, ncoef);
    let mut target = DVector::<f64>::zeros(rows);
    for (r, &i) in order.iter().enumerate() {
        for (c, e) in exponents.iter().enumerate() {
            design[(r, c)] = eval_monomial(e, &points[i]);
        }
        target[r] = values[i];
    }
    let root = ridge.sqrt();
    for k in 0..penalized {
        design[(points.len() + k, k + 1)] = root;
    }

    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::Degenerate { condition });
    }
    let solution = svd
        .solve(&target, 0.0)
        .map_err(|e| Error::Learner(format!("least-squares solve failed: {e}")))?;
    Ok(PolyFit {
        degree,
        ridge,
        exponents,
        coefficients: solution.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub degree: usize,
    pub ridge: f64,
    /// Mean held-out squared error; `inf` when some fold was degenerate.
    pub mean_sq_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub degree: usize,
    pub ridge: f64,
    pub table: Vec<CvEntry>,
}

/// Leave-one-out mean squared error of one (degree, ridge) candidate.
pub fn loo_error(points: &[Vec<f64>], values: &[f64], degree: usize, ridge: f64) -> Result<f64> {
    check_inputs(points, values)?;
    let mut total = 0.0;
    for i in 0..points.len() {
        let (train_x, train_y): (Vec<Vec<f64>>, Vec<f64>) = points
            .iter()
            .zip(values)
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, (p, &v))| (p.clone(), v))
            .unzip();
        let fit = fit_polynomial(&train_x, &train_y, degree, ridge)?;
        let r = fit.predict(&points[i])? - values[i];
        total += r * r;
    }
    Ok(total / points.len() as f64)
}

/// Selects the (degree, ridge) pair with the lowest leave-one-out error.
///
/// Errors within `1e-10 * mean(y^2)` of the minimum count as ties, which go
/// to the lower degree and then the larger ridge.
pub fn cross_validate(points: &[Vec<f64>], values: &[f64], degrees: &[usize], ridges: &[f64]) -> Result<CvResult> {
    let nvars = check_inputs(points, values)?;
    if degrees.is_empty() || ridges.is_empty() {
        return Err(Error::invalid(
            "cross-validation needs at least one degree and one ridge",
        ));
    }
    let max_degree = *degrees.iter().max().expect("non-empty");
    let need = coefficient_count(nvars, max_degree) + 1;
    if points.len() < need {
        return Err(Error::InsufficientSamples {
            have: points.len(),
            need,
        });
    }

    let mut degrees = degrees.to_vec();
    degrees.sort_unstable();
    degrees.dedup();
    let mut ridges = ridges.to_vec();
    ridges.sort_by(|a, b| b.total_cmp(a));
    ridges.dedup();

    let mut table = Vec::new();
    for &degree in &degrees {
        for &ridge in &ridges {
            let mean_sq_error = match loo_error(points, values, degree, ridge) {
                Ok(e) => e,
                Err(Error::Degenerate { .. }) | Err(Error::InsufficientSamples { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            table.push(CvEntry {
                degree,
                ridge,
                mean_sq_error,
            });
        }
    }

    let best = table.iter().map(|e| e.mean_sq_error).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::Degenerate {
            condition: f64::INFINITY,
        });
    }
    let scale = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let chosen = table
        .iter()
        .find(|e| e.mean_sq_error <= best + tol)
        .expect("minimum is attained");
    Ok(CvResult {
        degree: chosen.degree,
        ridge: chosen.ridge,
        table,
    })
}

/// Per-coordinate affine map onto `[0, 1]` from the observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineScaler {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AffineScaler {
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        let n = points
            .first()
            .map(Vec::len)
            .ok_or(Error::InsufficientSamples { have: 0, need: 1 })?;
        let mut lower = vec![f64::INFINITY; n];
        let mut upper = vec![f64::NEG_INFINITY; n];
        for p in points {
            for (k, &v) in p.iter().enumerate() {
                lower[k] = lower[k].min(v);
                upper[k] = upper[k].max(v);
            }
        }
        if lower.iter().zip(&upper).any(|(l, u)| u.partial_cmp(l) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::invalid("every coordinate needs a non-empty range"));
        }
        Ok(Self { lower, upper })
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l) / (u - l))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monomial_counts_and_order() {
        assert_eq!(
            monomials(2, 2),
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        for n in 1..=3 {
            for d in 0..=3 {
                assert_eq!(monomials(n, d).len(), coefficient_count(n, d));
            }
        }
        assert_eq!(coefficient_count(3, 2), 10);
        assert_eq!(coefficient_count(3, 3), 20);
    }

    fn grid_points(k: usize) -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for i in 0..k {
            for j in 0..k {
                pts.push(vec![i as f64 / (k - 1) as f64, j as f64 / (k - 1) as f64]);
            }
        }
        pts
    }

    #[test]
    fn recovers_exact_polynomial() {
        let pts = grid_points(4);
        let ys: Vec<f64> = pts
            .iter()
            .map(|p| 2.0 * p[0] * p[0] - p[0] * p[1] + 3.0 * p[1] + 1.0)
            .collect();
        let fit = fit_polynomial(&pts, &ys, 2, 0.0).unwrap();
        let expected = [1.0, 0.0, 3.0, 2.0, -1.0, 0.0];
        for (c, e) in fit.coefficients.iter().zip(expected) {
            assert!((c - e).abs() < 1e-9, "{:?}", fit.coefficients);
        }
    }

    #[test]
    fn rank_deficient_is_rejected() {
        // all points on a line: x1 == x0
        let pts: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0, i as f64 / 7.0]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        assert!(matches!(
            fit_polynomial(&pts, &ys, 2, 0.0),
            Err(Error::Degenerate { .. })
        ));
        assert!(fit_polynomial(&pts, &ys, 2, 1e-3).is_ok());
    }

    #[test]
    fn too_few_samples() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        assert!(matches!(
            fit_polynomial(&pts, &[1.0, 2.0], 2, 0.0),
            Err(Error::InsufficientSamples { have: 2, need: 6 })
        ));
    }

    /// Independent LOO oracle: normal equations solved by Gaussian elimination.
    fn brute_force_loo(pts: &[Vec<f64>], ys: &[f64], degree: usize, ridge: f64) -> f64 {
        let exps = monomials(pts[0].len(), degree);
        let basis = |p: &[f64]| -> Vec<f64> {
            exps.iter()
                .map(|e| e.iter().zip(p).map(|(&k, &v)| v.powi(k as i32)).product())
                .collect()
        };
        let mut total = 0.0;
        for hold in 0..pts.len() {
            let m = exps.len();
            let mut a = vec![vec![0.0; m + 1]; m];
            for (i, p) in pts.iter().enumerate() {
                if i == hold {
                    continue;
                }
                let phi = basis(p);
                for r in 0..m {
                    for c in 0..m {
                        a[r][c] += phi[r] * phi[c];
                    }
                    a[r][m] += phi[r] * ys[i];
                }
            }
            for (r, row) in a.iter_mut().enumerate().skip(1) {
                row[r] += ridge;
            }
            for col in 0..m {
                let piv = (col..m)
                    .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                    .unwrap();
                a.swap(col, piv);
                for r in 0..m {
                    if r != col {
                        let f = a[r][col] / a[col][col];
                        let pivot_row = a[col].clone();
                        for (dst, src) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                            *dst -= f * src;
                        }
                    }
                }
            }
            let coef: Vec<f64> = (0..m).map(|r| a[r][m] / a[r][r]).collect();
            let pred: f64 = basis(&pts[hold]).iter().zip(&coef).map(|(b, c)| b * c).sum();
            total += (pred - ys[hold]).powi(2);
        }
        total / pts.len() as f64
    }

    #[test]
    fn loo_matches_brute_force() {
        let pts = grid_points(5);
        let ys: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                20.0 + 3.0 * p[0] - 2.0 * p[1] * p[1] + p[0] * p[1] + 0.05 * ((i * 7 % 11) as f64 - 5.0) / 5.0
            })
            .collect();
        let ridges = [0.1, 0.01, 0.001, 0.0001, 0.00001];
        let cv = cross_validate(&pts, &ys, &[1, 2, 3], &ridges).unwrap();
        for e in &cv.table {
            let oracle = brute_force_loo(&pts, &ys, e.degree, e.ridge);
            assert!(
                (e.mean_sq_error - oracle).abs() <= 1e-8 * oracle.max(1e-12),
                "{e:?} vs {oracle}"
            );
        }
        let best = cv.table.iter().map(|e| e.mean_sq_error).fold(f64::INFINITY, f64::min);
        let chosen = cv
            .table
            .iter()
            .find(|e| e.degree == cv.degree && e.ridge == cv.ridge)
            .unwrap();
        assert!(chosen.mean_sq_error <= best * (1.0 + 1e-9));
    }

    #[test]
    fn cv_prefers_simpler_on_ties() {
        let pts = grid_points(5);
        let quad: Vec<f64> = pts.iter().map(|p| 1.0 + p[0] * p[0] - 0.5 * p[0] * p[1]).collect();
        let cv = cross_validate(&pts, &quad, &[1, 2, 3], &[0.0]).unwrap();
        assert_eq!(cv.degree, 2);
        let lin: Vec<f64> = pts.iter().map(|p| 1.0 + 2.0 * p[0] - p[1]).collect();
        let cv = cross_validate(&pts, &lin, &[3, 2, 1], &[0.0]).unwrap();
        assert_eq!(cv.degree, 1);
    }

    #[test]
    fn cv_needs_enough_samples() {
        let pts = grid_points(3);
        let ys = vec![1.0; 9];
        assert!(matches!(
            cross_validate(&pts, &ys, &[1, 2, 3], &[0.0]),
            Err(Error::InsufficientSamples { have: 9, need: 11 })
        ));
    }

    proptest! {
        #[test]
        fn ridge_shrinks_coefficients(seed in 0u64..1000, r1 in 1e-6f64..1.0, factor in 1.0f64..100.0) {
            let pts = grid_points(4);
            let ys: Vec<f64> = pts.iter().enumerate()
                .map(|(i, p)| ((i as u64 * 2654435761 + seed) % 97) as f64 / 97.0 + p[0] - p[1] * p[1])
                .collect();
            let a = fit_polynomial(&pts, &ys, 2, r1).unwrap();
            let b = fit_polynomial(&pts, &ys, 2, r1 * factor).unwrap();
            prop_assert!(b.penalized_norm() <= a.penalized_norm() * (1.0 + 1e-9));
        }

        #[test]
        fn fit_is_order_invariant(rot in 0usize..16, ridge in prop_oneof![Just(0.0), 1e-5f64..1e-1]) {
            let pts = grid_points(4);
            let ys: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).sin() + p[1]).collect();
            let mut p2 = pts.clone();
            let mut y2 = ys.clone();
            p2.rotate_left(rot);
            y2.rotate_left(rot);
            p2.reverse();
            y2.reverse();
            let a = fit_polynomial(&pts, &ys, 2, ridge).unwrap();
            let b = fit_polynomial(&p2, &y2, 2, ridge).unwrap();
            prop_assert_eq!(a.coefficients, b.coefficients);
        }
    }
}
