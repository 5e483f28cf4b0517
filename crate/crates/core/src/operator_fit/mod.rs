//! Learning the coefficient matrix `C` of `Ŝ = Φ C Ψ`.
//!
//! * [`fit_data_driven`]: closed-form two-sided least squares against labeled
//!   solutions.
//! * [`fit_pc2_linear`]: residual minimization of a linear PDE with shared
//!   constraint blocks, again in closed form.
//! * [`fit_pc2_linear_general`]: the same loss when some block depends on the
//!   realization (a random coefficient inside the operator); matrix-free
//!   preconditioned conjugate gradients on `vec(C)`.
//! * [`fit_pc2_nonlinear`]: damped Gauss–Newton for operators with a
//!   quadratic term.
//!
//! The fits return the raw `Q × P` matrix; [`CoefficientMatrix`] pairs it with
//! the index sets and domain map that give it meaning.

mod nonlinear;
mod solve;
mod system;

use nalgebra::DMatrix;

use crate::design::{assemble_phi, assemble_psi, BlockKind, DiffOpSpec, DomainMap};
use crate::error::{Error, Result};
use crate::index_sets::MultiIndexSet;

pub use nonlinear::{fit_pc2_nonlinear, NonlinearFit, TraceRow};
pub use solve::{fit_data_driven, fit_pc2_linear, fit_pc2_linear_general, LinearSolveInfo};
pub use system::{augment_with_data, pc2_loss, pc2_loss_gradient, Pc2Block, Pc2System, QuadraticPart};

/// Basis values are orthonormal on both sides; coefficients are stored in that
/// convention.
pub const CONVENTION: &str = "orthonormal";

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Tikhonov term added to the Gram matrices.
    pub ridge: f64,
    /// Gauss–Newton iterations.
    pub max_iter: usize,
    /// Stop when `‖∇L‖_F ≤ grad_tol · (1 + L)`.
    pub grad_tol: f64,
    /// Initial Levenberg damping.
    pub damping: f64,
    pub seed: u64,
    /// Relative residual target of the conjugate-gradient solves.
    pub cg_tol: f64,
    /// Iteration cap of each conjugate-gradient solve; `None` means `10·Q·P`.
    pub cg_max_iter: Option<usize>,
    /// Gauss–Newton steps solve to a relative residual of
    /// `min(0.1, sqrt(‖∇L‖ / ‖∇L₀‖))` instead of `cg_tol`.
    pub inexact_steps: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ridge: 0.0,
            max_iter: 50,
            grad_tol: 1e-10,
            damping: 1e-6,
            seed: 0,
            cg_tol: 1e-10,
            cg_max_iter: None,
            inexact_steps: true,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Parameter(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::Parameter(format!("grad_tol must be > 0, got {}", self.grad_tol)));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::Parameter(format!("damping must be >= 0, got {}", self.damping)));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::Parameter(format!("cg_tol must lie in (0, 1), got {}", self.cg_tol)));
        }
        Ok(())
    }

    pub(crate) fn cg_cap(&self, q: usize, p: usize) -> usize {
        self.cg_max_iter.unwrap_or(10 * q * p).max(1)
    }
}

/// The learned operator: `values` is `Q × P`, rows follow `set_b`, columns
/// follow `set_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub values: DMatrix<f64>,
    pub set_a: MultiIndexSet,
    pub set_b: MultiIndexSet,
    pub domain_map: DomainMap,
}

impl CoefficientMatrix {
    pub fn new(values: DMatrix<f64>, set_a: MultiIndexSet, set_b: MultiIndexSet, domain_map: DomainMap) -> Result<Self> {
        if values.nrows() != set_b.len() || values.ncols() != set_a.len() {
            return Err(Error::Shape(format!(
                "coefficients are {}x{}, index sets give {}x{}",
                values.nrows(),
                values.ncols(),
                set_b.len(),
                set_a.len()
            )));
        }
        if domain_map.dim() != set_b.dim() {
            return Err(Error::Shape(format!(
                "domain map has {} axes, spatio-temporal set has dimension {}",
                domain_map.dim(),
                set_b.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("coefficient matrix has non-finite entries".into()));
        }
        Ok(CoefficientMatrix {
            values,
            set_a,
            set_b,
            domain_map,
        })
    }

    pub fn q(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn convention(&self) -> &'static str {
        CONVENTION
    }

    /// Identity-operator `Φ` at `points`.
    pub fn phi(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let op = DiffOpSpec::identity(self.set_b.dim());
        Ok(assemble_phi(&self.set_b, points, &self.domain_map, &op, None, BlockKind::Data)?.matrix)
    }
}

/// `Φ(points) C Ψ(xi)`, `n × N`.
pub fn predict(c: &CoefficientMatrix, points: &DMatrix<f64>, xi_samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let phi = c.phi(points)?;
    let psi = assemble_psi(&c.set_a, xi_samples)?;
    Ok(solve::sandwich(&phi, &c.values, &psi))
}

/// Rejects matrices with NaN or infinite entries.
pub(crate) fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("{name} has non-finite entries")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{sample_virtual_points, Axis, PhysicalBox};
    use crate::index_sets::total_degree_set;
    use crate::orthopoly::PolynomialFamily;

    fn setup() -> (CoefficientMatrix, DMatrix<f64>, DMatrix<f64>) {
        let domain = PhysicalBox::new(vec![Axis::new("x", 0.0, 2.0), Axis::new("t", 0.0, 1.0)], Some(1)).unwrap();
        let set_b = total_degree_set(2, 2).unwrap();
        let set_a = total_degree_set(2, 1).unwrap();
        let values = DMatrix::from_fn(set_b.len(), set_a.len(), |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let c = CoefficientMatrix::new(values, set_a, set_b, domain.domain_map()).unwrap();
        let pts = sample_virtual_points(&domain, 3, 0, 0, 0, 9).unwrap().pde;
        let xi = DMatrix::from_row_slice(3, 2, &[0.1, -0.4, 1.2, 0.3, -0.8, 2.0]);
        (c, pts, xi)
    }

    #[test]
    fn predict_matches_naive_double_sum() {
        let (c, pts, xi) = setup();
        let out = predict(&c, &pts, &xi).unwrap();
        let leg = PolynomialFamily::Legendre;
        let her = PolynomialFamily::HermiteProbabilist;
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for (a, ta) in c.set_a.iter().enumerate() {
                    let psi: f64 = ta.iter().enumerate().map(|(k, &d)| her.eval_orthonormal(d as usize, xi[(j, k)]).unwrap()).product();
                    for (b, tb) in c.set_b.iter().enumerate() {
                        let phi: f64 = tb
                            .iter()
                            .enumerate()
                            .map(|(k, &d)| leg.eval_orthonormal(d as usize, c.domain_map.to_reference(k, pts[(i, k)])).unwrap())
                            .product();
                        s += c.values[(b, a)] * phi * psi;
                    }
                }
                assert!((out[(i, j)] - s).abs() <= 1e-12 * s.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_coefficient_prediction() {
        let (mut c, pts, xi) = setup();
        c.values.fill(0.0);
        c.values[(0, 0)] = 3.0;
        let out = predict(&c, &pts, &xi).unwrap();
        // Orthonormal constants: 1/√2 per Legendre axis.
        assert!(out.iter().all(|&v| (v - 1.5).abs() < 1e-14));
    }

    #[test]
    fn prediction_is_linear_in_coefficients() {
        let (c, pts, xi) = setup();
        let mut c2 = c.clone();
        c2.values = DMatrix::from_fn(c.q(), c.p(), |i, j| (i as f64 - j as f64) * 0.3);
        let mut sum = c.clone();
        sum.values = &c.values * 2.0 - &c2.values;
        let lhs = predict(&sum, &pts, &xi).unwrap();
        let rhs = predict(&c, &pts, &xi).unwrap() * 2.0 - predict(&c2, &pts, &xi).unwrap();
        assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn coefficient_matrix_validation() {
        let (c, pts, xi) = setup();
        let bad = DMatrix::zeros(c.q() + 1, c.p());
        assert!(CoefficientMatrix::new(bad, c.set_a.clone(), c.set_b.clone(), c.domain_map.clone()).is_err());
        let mut nan = c.values.clone();
        nan[(0, 0)] = f64::NAN;
        assert!(CoefficientMatrix::new(nan, c.set_a.clone(), c.set_b.clone(), c.domain_map.clone()).is_err());
        let outside = DMatrix::from_row_slice(1, 2, &[2.5, 0.5]);
        assert!(matches!(predict(&c, &outside, &xi), Err(Error::Domain(_))));
        let _ = pts;
    }

    #[test]
    fn options_validation() {
        assert!(FitOptions::default().validate().is_ok());
        let o = FitOptions { ridge: -1.0, ..Default::default() };
        assert!(o.validate().is_err());
        let o = FitOptions { grad_tol: 0.0, ..Default::default() };
        assert!(o.validate().is_err());
    }

    #[test]
    fn linalg_sandwich_agrees_with_nalgebra() {
        let a = DMatrix::from_fn(5, 3, |i, j| (i + j) as f64 * 0.1);
        let c = DMatrix::from_fn(3, 4, |i, j| (i as f64) - (j as f64));
        let b = DMatrix::from_fn(4, 6, |i, j| ((i * j) % 3) as f64);
        let s = solve::sandwich(&a, &c, &b);
        assert!((s - &a * &c * &b).amax() < 1e-12);
    }
}
