//! Dense kernels shared by the fitting code: strided GEMM through
//! `matrixmultiply` (so transposed operands are never materialized) and a
//! Cholesky wrapper that reports rank deficiency instead of pseudo-inverting.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Smallest admissible `min(L_ii)² / max(L_ii)²` of a Cholesky factor, per unit
/// of matrix dimension.
const PIVOT_RATIO_FLOOR: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    N,
    T,
}

/// `c = alpha · op(a) · op(b) + beta · c`.
pub fn gemm(alpha: f64, a: &DMatrix<f64>, ta: Op, b: &DMatrix<f64>, tb: Op, beta: f64, c: &mut DMatrix<f64>) {
    let (m, k) = match ta {
        Op::N => (a.nrows(), a.ncols()),
        Op::T => (a.ncols(), a.nrows()),
    };
    let (kb, n) = match tb {
        Op::N => (b.nrows(), b.ncols()),
        Op::T => (b.ncols(), b.nrows()),
    };
    assert_eq!(k, kb, "inner dimensions differ");
    assert_eq!((c.nrows(), c.ncols()), (m, n), "output shape differs");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.fill(0.0);
        } else {
            *c *= beta;
        }
        return;
    }
    // Column-major storage: element (i, j) lives at i + j * nrows.
    let (rsa, csa) = match ta {
        Op::N => (1, a.nrows() as isize),
        Op::T => (a.nrows() as isize, 1),
    };
    let (rsb, csb) = match tb {
        Op::N => (1, b.nrows() as isize),
        Op::T => (b.nrows() as isize, 1),
    };
    let rsc = 1;
    let csc = c.nrows() as isize;
    // SAFETY: the shapes were checked above, so every index matrixmultiply
    // touches (i * rs + j * cs) lies inside the respective buffers; `c` is
    // exclusively borrowed and does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// `y += alpha · x`, entrywise.
pub fn axpy(alpha: f64, x: &DMatrix<f64>, y: &mut DMatrix<f64>) {
    assert_eq!(x.shape(), y.shape(), "axpy shapes differ");
    for (yv, xv) in y.iter_mut().zip(x.iter()) {
        *yv += alpha * xv;
    }
}

pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(a.nrows(), b.ncols());
    gemm(1.0, a, Op::N, b, Op::N, 0.0, &mut c);
    c
}

/// `aᵀ b`
pub fn matmul_tn(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(a.ncols(), b.ncols());
    gemm(1.0, a, Op::T, b, Op::N, 0.0, &mut c);
    c
}

/// `a bᵀ`
pub fn matmul_nt(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(a.nrows(), b.nrows());
    gemm(1.0, a, Op::N, b, Op::T, 0.0, &mut c);
    c
}

/// `a aᵀ`, symmetrized.
pub fn gram_rows(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = matmul_nt(a, a);
    symmetrize(&mut g);
    g
}

/// `aᵀ a`, symmetrized.
pub fn gram_cols(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = matmul_tn(a, a);
    symmetrize(&mut g);
    g
}

pub fn symmetrize(g: &mut DMatrix<f64>) {
    let n = g.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
}

pub fn add_diagonal(g: &mut DMatrix<f64>, value: f64) {
    if value != 0.0 {
        for i in 0..g.nrows().min(g.ncols()) {
            g[(i, i)] += value;
        }
    }
}

/// Frobenius inner product `Σ a_ij b_ij`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// A symmetric positive-definite matrix in factored form.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    /// Factors `g`; on failure returns a description of why the matrix is
    /// numerically rank deficient.
    pub fn new(g: DMatrix<f64>) -> Result<Self, String> {
        let n = g.nrows();
        if n != g.ncols() {
            return Err(format!("matrix is {}x{}, not square", g.nrows(), g.ncols()));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err("matrix has non-finite entries".into());
        }
        let chol = Cholesky::new(g).ok_or_else(|| {
            format!("{n}x{n} matrix is not numerically positive definite")
        })?;
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let d = l[(i, i)] * l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if n > 0 && lo <= PIVOT_RATIO_FLOOR * n as f64 * hi {
            return Err(format!(
                "{n}x{n} matrix has pivot ratio {:.3e}, below the rank threshold",
                lo / hi
            ));
        }
        Ok(SpdFactor { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// `G⁻¹ b`
    pub fn solve_left(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `b G⁻¹` (G symmetric).
    pub fn solve_right(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(&b.transpose()).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(a.nrows(), b.ncols());
        for i in 0..a.nrows() {
            for j in 0..b.ncols() {
                c[(i, j)] = (0..a.ncols()).map(|k| a[(i, k)] * b[(k, j)]).sum();
            }
        }
        c
    }

    #[test]
    fn strided_products_match_naive() {
        let a = DMatrix::from_fn(7, 5, |i, j| (i as f64 + 1.0).sin() * (j as f64 - 2.0));
        let b = DMatrix::from_fn(5, 4, |i, j| (i * 3 + j) as f64 * 0.1 - 0.7);
        let bt = b.transpose();
        let at = a.transpose();
        assert!((matmul(&a, &b) - naive(&a, &b)).norm() < 1e-13);
        assert!((matmul_tn(&at, &b) - naive(&a, &b)).norm() < 1e-13);
        assert!((matmul_nt(&a, &bt) - naive(&a, &b)).norm() < 1e-13);
        let mut c = DMatrix::from_element(7, 4, 1.0);
        gemm(2.0, &at, Op::T, &bt, Op::T, -1.0, &mut c);
        let expect = naive(&a, &b) * 2.0 - DMatrix::from_element(7, 4, 1.0);
        assert!((c - expect).norm() < 1e-13);
    }

    #[test]
    fn spd_factor_detects_rank_deficiency() {
        let v = DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 + 1.0);
        let singular = matmul_nt(&v, &v);
        assert!(SpdFactor::new(singular).is_err());
        let mut ok = matmul_nt(&v, &v);
        add_diagonal(&mut ok, 1.0);
        let f = SpdFactor::new(ok.clone()).unwrap();
        let b = DMatrix::from_fn(4, 3, |i, j| (i as f64) - (j as f64));
        assert!((&ok * f.solve_left(&b) - &b).norm() < 1e-12);
        let bt = b.transpose();
        assert!((f.solve_right(&bt) * &ok - &bt).norm() < 1e-12);
    }
}
