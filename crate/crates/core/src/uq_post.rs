//! Moments and first-order Sobol indices read directly off the coefficients.
//!
//! With orthonormal `Ψ` and `Ψ_0 ≡ 1`, the surrogate at a point is
//! `Σ_α a_α ψ_α(ξ)` with `a = Φ(point) C`, so the mean is `a_0` and the
//! variance is `Σ_{α≠0} a_α²`. First-order Sobol indices follow the standard
//! polynomial-chaos variance decomposition: `S_i` collects the `a_α²` whose
//! multi-index has `ξ_i` as its only active coordinate.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::operator_fit::CoefficientMatrix;

/// Total variance at or below which Sobol indices are reported as zero.
pub const DEGENERATE_VARIANCE: f64 = 1e-14;

fn constant_column(c: &CoefficientMatrix) -> Result<()> {
    let zero = vec![0u32; c.set_a.dim()];
    match c.set_a.position(&zero) {
        Some(0) => Ok(()),
        _ => Err(Error::Parameter("stochastic index set must start with the zero multi-index".into())),
    }
}

/// `a = Φ(points) C`, `n × P`.
fn expansion_coefficients(c: &CoefficientMatrix, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    constant_column(c)?;
    Ok(linalg::matmul(&c.phi(points)?, &c.values))
}

/// `Φ(points) c₀`.
pub fn predictive_mean(c: &CoefficientMatrix, points: &DMatrix<f64>) -> Result<Vec<f64>> {
    constant_column(c)?;
    let phi = c.phi(points)?;
    Ok((&phi * c.values.column(0)).iter().copied().collect())
}

/// `Φ C diag(0, 1, …, 1) Cᵀ Φᵀ`.
pub fn predictive_covariance(c: &CoefficientMatrix, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let a = expansion_coefficients(c, points)?;
    let fluct = a.columns(1, a.ncols() - 1).into_owned();
    let mut cov = linalg::gram_cols(&fluct.transpose());
    linalg::symmetrize(&mut cov);
    Ok(cov)
}

/// Square roots of the covariance diagonal without forming the matrix.
pub fn predictive_std(c: &CoefficientMatrix, points: &DMatrix<f64>) -> Result<Vec<f64>> {
    let a = expansion_coefficients(c, points)?;
    Ok((0..a.nrows())
        .map(|i| a.row(i).columns(1, a.ncols() - 1).norm())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolIndices {
    /// `n × r`, entries in `[0, 1]`.
    pub values: DMatrix<f64>,
    /// Points whose total variance is at most [`DEGENERATE_VARIANCE`].
    pub degenerate: Vec<bool>,
}

/// First-order indices `S_i = Σ_{α: only ξ_i active} a_α² / Σ_{α≠0} a_α²`.
pub fn sobol_first_order(c: &CoefficientMatrix, points: &DMatrix<f64>) -> Result<SobolIndices> {
    let a = expansion_coefficients(c, points)?;
    let r = c.set_a.dim();
    // Owner input of each basis function, or None for mixed / constant terms.
    let owner: Vec<Option<usize>> = c
        .set_a
        .iter()
        .map(|t| {
            let mut active = t.iter().enumerate().filter(|(_, &d)| d > 0).map(|(i, _)| i);
            match (active.next(), active.next()) {
                (Some(i), None) => Some(i),
                _ => None,
            }
        })
        .collect();
    let n = a.nrows();
    let mut values = DMatrix::zeros(n, r);
    let mut degenerate = vec![false; n];
    for i in 0..n {
        let total: f64 = (1..a.ncols()).map(|k| a[(i, k)].powi(2)).sum();
        if total <= DEGENERATE_VARIANCE {
            degenerate[i] = true;
            continue;
        }
        for (k, o) in owner.iter().enumerate() {
            if let Some(inp) = o {
                values[(i, *inp)] += a[(i, k)].powi(2) / total;
            }
        }
    }
    Ok(SobolIndices { values, degenerate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UQSummary {
    pub points: DMatrix<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub covariance: Option<DMatrix<f64>>,
    pub sobol_first: Option<SobolIndices>,
}

impl UQSummary {
    pub fn compute(c: &CoefficientMatrix, points: &DMatrix<f64>, covariance: bool, sobol: bool) -> Result<Self> {
        let covariance = if covariance {
            Some(predictive_covariance(c, points)?)
        } else {
            None
        };
        let std = match &covariance {
            Some(cov) => cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
            None => predictive_std(c, points)?,
        };
        Ok(UQSummary {
            points: points.clone(),
            mean: predictive_mean(c, points)?,
            std,
            covariance,
            sobol_first: if sobol { Some(sobol_first_order(c, points)?) } else { None },
        })
    }

    /// One row per point: coordinates, mean, std, then `sobol_<i>` columns.
    pub fn write_csv(&self, path: &Path, axis_names: &[String]) -> Result<()> {
        if axis_names.len() != self.points.ncols() {
            return Err(Error::Shape(format!(
                "{} axis names for {}-dimensional points",
                axis_names.len(),
                self.points.ncols()
            )));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = axis_names.to_vec();
        header.push("mean".into());
        header.push("std".into());
        if let Some(s) = &self.sobol_first {
            header.extend((0..s.values.ncols()).map(|i| format!("sobol_{}", i + 1)));
        }
        w.write_record(&header)?;
        for i in 0..self.points.nrows() {
            let mut row: Vec<String> = self.points.row(i).iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{:e}", self.mean[i]));
            row.push(format!("{:e}", self.std[i]));
            if let Some(s) = &self.sobol_first {
                row.extend(s.values.row(i).iter().map(|v| format!("{v:e}")));
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        crate::bench::write_atomic(path, &bytes)
    }
}
