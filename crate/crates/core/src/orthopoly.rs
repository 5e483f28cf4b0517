//! Univariate orthogonal polynomial families of the Wiener–Askey scheme used by
//! the expansions: Legendre polynomials on `[-1, 1]` (unit weight) for the
//! spatio-temporal axes and probabilists' Hermite polynomials (standard normal
//! weight) for the Gaussian stochastic inputs.
//!
//! Everything is driven by the three-term recurrence
//! `p_{n+1}(x) = a_n x p_n(x) - c_n p_{n-1}(x)`; derivatives use the
//! differentiated recurrence
//! `p_{n+1}^{(k)} = a_n (x p_n^{(k)} + k p_n^{(k-1)}) - c_n p_{n-1}^{(k)}`,
//! so no symbolic expansion (and no cancellation from it) is ever formed.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolynomialFamily {
    /// Legendre polynomials, orthogonal w.r.t. `w(x) = 1` on `[-1, 1]`.
    Legendre,
    /// Probabilists' Hermite polynomials `He_n`, orthogonal w.r.t. the standard
    /// normal density on the real line.
    HermiteProbabilist,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Interval(f64, f64),
    RealLine,
}

impl PolynomialFamily {
    pub fn reference_support(self) -> Support {
        match self {
            PolynomialFamily::Legendre => Support::Interval(-1.0, 1.0),
            PolynomialFamily::HermiteProbabilist => Support::RealLine,
        }
    }

    pub fn weight_description(self) -> &'static str {
        match self {
            PolynomialFamily::Legendre => "w(x) = 1 on [-1, 1]",
            PolynomialFamily::HermiteProbabilist => {
                "w(x) = exp(-x^2/2)/sqrt(2 pi) (standard normal density) on R"
            }
        }
    }

    /// Recurrence coefficients `(a_n, c_n)` of `p_{n+1} = a_n x p_n - c_n p_{n-1}`.
    #[inline]
    fn recurrence(self, n: usize) -> (f64, f64) {
        let nf = n as f64;
        match self {
            PolynomialFamily::Legendre => ((2.0 * nf + 1.0) / (nf + 1.0), nf / (nf + 1.0)),
            PolynomialFamily::HermiteProbabilist => (1.0, nf),
        }
    }

    /// `∫ p_n² w dx`: `2/(2n+1)` for Legendre, `n!` for probabilists' Hermite.
    pub fn norm_sq(self, degree: usize) -> f64 {
        match self {
            PolynomialFamily::Legendre => 2.0 / (2.0 * degree as f64 + 1.0),
            PolynomialFamily::HermiteProbabilist => (1..=degree).map(|k| k as f64).product(),
        }
    }

    /// Scale turning `p_n` into its orthonormal counterpart.
    #[inline]
    pub fn orthonormal_scale(self, degree: usize) -> f64 {
        1.0 / self.norm_sq(degree).sqrt()
    }

    pub fn eval(self, degree: usize, x: f64) -> Result<f64> {
        self.eval_deriv(degree, x, 0)
    }

    /// `d^order p_degree / dx^order` at `x`.
    pub fn eval_deriv(self, degree: usize, x: f64, order: usize) -> Result<f64> {
        check_finite(x)?;
        let mut table = vec![0.0; (order + 1) * (degree + 1)];
        self.fill_derivatives(x, degree, order, &mut table);
        Ok(table[order * (degree + 1) + degree])
    }

    pub fn eval_orthonormal(self, degree: usize, x: f64) -> Result<f64> {
        Ok(self.eval(degree, x)? * self.orthonormal_scale(degree))
    }

    /// Fills `out[k * (max_degree + 1) + n] = p_n^{(k)}(x)` for all
    /// `n <= max_degree`, `k <= max_order`. `out` must hold
    /// `(max_order + 1) * (max_degree + 1)` values. `x` is not validated.
    pub fn fill_derivatives(self, x: f64, max_degree: usize, max_order: usize, out: &mut [f64]) {
        let stride = max_degree + 1;
        assert!(out.len() >= (max_order + 1) * stride);
        for k in 0..=max_order {
            let (lower, row) = out.split_at_mut(k * stride);
            let row = &mut row[..stride];
            let prev = if k > 0 {
                Some(&lower[(k - 1) * stride..k * stride])
            } else {
                None
            };
            // p_0 = 1, so its derivatives vanish.
            row[0] = if k == 0 { 1.0 } else { 0.0 };
            if max_degree == 0 {
                continue;
            }
            for n in 0..max_degree {
                let (a, c) = self.recurrence(n);
                let below = if n == 0 { 0.0 } else { row[n - 1] };
                let lift = prev.map_or(0.0, |p| k as f64 * p[n]);
                row[n + 1] = a * (x * row[n] + lift) - c * below;
            }
        }
    }

    /// Like [`fill_derivatives`](Self::fill_derivatives) but orthonormalized.
    pub fn fill_orthonormal_derivatives(
        self,
        x: f64,
        max_degree: usize,
        max_order: usize,
        out: &mut [f64],
    ) {
        self.fill_derivatives(x, max_degree, max_order, out);
        let stride = max_degree + 1;
        for n in 0..=max_degree {
            let s = self.orthonormal_scale(n);
            for k in 0..=max_order {
                out[k * stride + n] *= s;
            }
        }
    }

    /// Gauss quadrature with `n` nodes for this family's weight (normalized so
    /// the weights sum to `∫ w dx`: 2 for Legendre, 1 for Hermite), computed by
    /// the Golub–Welsch eigenvalue method on the monic Jacobi matrix.
    pub fn gauss_quadrature(self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if n == 0 {
            return Err(Error::Parameter("quadrature needs at least one node".into()));
        }
        let (mu0, beta): (f64, fn(usize) -> f64) = match self {
            PolynomialFamily::Legendre => (2.0, |k| {
                let k = k as f64;
                k * k / (4.0 * k * k - 1.0)
            }),
            PolynomialFamily::HermiteProbabilist => (1.0, |k| k as f64),
        };
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = beta(k).sqrt();
            jacobi[(k, k - 1)] = b;
            jacobi[(k - 1, k)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(pairs.into_iter().unzip())
    }
}

#[inline]
fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("polynomial argument must be finite, got {x}")))
    }
}
