use nalgebra::{DMatrix, SymmetricEigen};

use super::system::{linear_blocks, NormalOp, Pc2System};
use super::{check_finite, FitOptions};
use crate::error::{Error, GramSide, Result};
use crate::linalg::{self, gemm, Op, SpdFactor};

/// `A C B`, contracting in whichever order is cheaper.
pub(crate) fn sandwich(a: &DMatrix<f64>, c: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, q, p, m) = (a.nrows(), a.ncols(), c.ncols(), b.ncols());
    if n * q * p + n * p * m <= q * p * m + n * q * m {
        linalg::matmul(&linalg::matmul(a, c), b)
    } else {
        linalg::matmul(a, &linalg::matmul(c, b))
    }
}

/// `Aᵀ S Bᵀ`, contracting in whichever order is cheaper.
fn sandwich_tt(a: &DMatrix<f64>, s: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, q, m, p) = (a.nrows(), a.ncols(), s.ncols(), b.nrows());
    if q * n * m + q * m * p <= n * m * p + q * n * p {
        linalg::matmul_nt(&linalg::matmul_tn(a, s), b)
    } else {
        linalg::matmul_tn(a, &linalg::matmul_nt(s, b))
    }
}

fn factor(g: DMatrix<f64>, side: GramSide) -> Result<SpdFactor> {
    SpdFactor::new(g).map_err(|detail| Error::RankDeficient { side, detail })
}

fn stochastic_factor(psi: &DMatrix<f64>, ridge: f64) -> Result<SpdFactor> {
    if ridge == 0.0 && psi.ncols() < psi.nrows() {
        return Err(Error::RankDeficient {
            side: GramSide::Stochastic,
            detail: format!("N = {} samples < P = {} basis functions", psi.ncols(), psi.nrows()),
        });
    }
    let mut h = linalg::gram_rows(psi);
    linalg::add_diagonal(&mut h, ridge);
    factor(h, GramSide::Stochastic)
}

/// Closed-form two-sided least squares
/// `C = (ΦᵀΦ + ridge I)⁻¹ Φᵀ S Ψᵀ (ΨΨᵀ + ridge I)⁻¹`.
pub fn fit_data_driven(phi: &DMatrix<f64>, psi: &DMatrix<f64>, s: &DMatrix<f64>, opts: &FitOptions) -> Result<DMatrix<f64>> {
    opts.validate()?;
    let (n, q) = phi.shape();
    let big_n = psi.ncols();
    if s.shape() != (n, big_n) {
        return Err(Error::Shape(format!(
            "solutions are {}x{}, expected {n}x{big_n} (points x samples)",
            s.nrows(),
            s.ncols()
        )));
    }
    check_finite("Phi", phi)?;
    check_finite("Psi", psi)?;
    check_finite("solutions", s)?;
    if opts.ridge == 0.0 && n < q {
        return Err(Error::RankDeficient {
            side: GramSide::Spatial,
            detail: format!("n = {n} points < Q = {q} basis functions"),
        });
    }
    let mut g = linalg::gram_cols(phi);
    linalg::add_diagonal(&mut g, opts.ridge);
    let g = factor(g, GramSide::Spatial)?;
    let h = stochastic_factor(psi, opts.ridge)?;
    let rhs = sandwich_tt(phi, s, psi);
    Ok(h.solve_right(&g.solve_left(&rhs)))
}

/// Diagnostics of an iterative linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Closed form for shared blocks:
/// `C = [Σ w_b Φ_bᵀΦ_b]⁻¹ [Σ w_b Φ_bᵀ F_b Ψᵀ] [ΨΨᵀ]⁻¹`. Systems with
/// per-realization blocks are routed to [`fit_pc2_linear_general`].
pub fn fit_pc2_linear(system: &Pc2System, opts: &FitOptions) -> Result<DMatrix<f64>> {
    opts.validate()?;
    if !system.is_linear() {
        return Err(Error::Parameter("system has quadratic terms; use the nonlinear fit".into()));
    }
    if system.blocks().is_empty() {
        return Err(Error::Parameter("system has no blocks".into()));
    }
    if system.has_per_realization() {
        return fit_pc2_linear_general(system, opts).map(|(c, _)| c);
    }
    let q = system.q();
    let psi = system.psi();
    let mut g = DMatrix::zeros(q, q);
    let mut proj = DMatrix::zeros(q, psi.ncols());
    for b in system.blocks() {
        gemm(b.weight, &b.design.matrix, Op::T, &b.design.matrix, Op::N, 1.0, &mut g);
        gemm(b.weight, &b.design.matrix, Op::T, &b.target, Op::N, 1.0, &mut proj);
    }
    linalg::symmetrize(&mut g);
    linalg::add_diagonal(&mut g, opts.ridge);
    let rows: usize = system.blocks().iter().map(|b| b.nrows()).sum();
    if opts.ridge == 0.0 && rows < q {
        return Err(Error::RankDeficient {
            side: GramSide::Spatial,
            detail: format!("{rows} constraint rows < Q = {q} basis functions"),
        });
    }
    let g = factor(g, GramSide::Spatial)?;
    let h = stochastic_factor(psi, opts.ridge)?;
    let rhs = linalg::matmul_nt(&proj, psi);
    Ok(h.solve_right(&g.solve_left(&rhs)))
}

/// Exact inverse of `G ⊗ H + shift I` acting as `Z ↦ X` with `G X H + shift X = Z`,
/// through eigendecompositions of both factors.
pub(crate) struct KronPreconditioner {
    g_vecs: DMatrix<f64>,
    h_vecs: DMatrix<f64>,
    /// `g_i h_k`, clamped at zero.
    products: DMatrix<f64>,
    inv: DMatrix<f64>,
}

impl KronPreconditioner {
    pub fn new(g: DMatrix<f64>, h: DMatrix<f64>, shift: f64) -> Self {
        let ge = SymmetricEigen::new(g);
        let he = SymmetricEigen::new(h);
        let products = DMatrix::from_fn(ge.eigenvalues.len(), he.eigenvalues.len(), |i, k| {
            ge.eigenvalues[i].max(0.0) * he.eigenvalues[k].max(0.0)
        });
        let mut pre = KronPreconditioner {
            g_vecs: ge.eigenvectors,
            h_vecs: he.eigenvectors,
            inv: DMatrix::zeros(products.nrows(), products.ncols()),
            products,
        };
        pre.set_shift(shift);
        pre
    }

    pub fn set_shift(&mut self, shift: f64) {
        let top = self.products.max() + shift;
        let floor = (top * f64::EPSILON * self.products.len() as f64).max(f64::MIN_POSITIVE);
        self.inv = self.products.map(|v| 1.0 / (v + shift).max(floor));
    }

    pub fn apply(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let t = linalg::matmul(&linalg::matmul_tn(&self.g_vecs, z), &self.h_vecs);
        let t = t.component_mul(&self.inv);
        linalg::matmul_nt(&linalg::matmul(&self.g_vecs, &t), &self.h_vecs)
    }
}

/// Preconditioned conjugate gradients on `Q × P` matrices with the Frobenius
/// inner product. Stops when `‖b - A x‖ ≤ tol ‖b‖`.
pub(crate) fn pcg(
    apply: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    precond: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    rhs: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> (DMatrix<f64>, LinearSolveInfo) {
    let bnorm = rhs.norm();
    let mut x = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    if bnorm == 0.0 {
        return (
            x,
            LinearSolveInfo {
                iterations: 0,
                relative_residual: 0.0,
            },
        );
    }
    let mut r = rhs.clone();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = linalg::frob_dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        let ap = apply(&p);
        let pap = linalg::frob_dot(&p, &ap);
        if !(pap > 0.0) {
            return (
                x,
                LinearSolveInfo {
                    iterations: it,
                    relative_residual: rel,
                },
            );
        }
        let alpha = rz / pap;
        linalg::axpy(alpha, &p, &mut x);
        linalg::axpy(-alpha, &ap, &mut r);
        rel = r.norm() / bnorm;
        if rel <= tol {
            return (
                x,
                LinearSolveInfo {
                    iterations: it + 1,
                    relative_residual: rel,
                },
            );
        }
        z = precond(&r);
        let rz_new = linalg::frob_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p *= beta;
        p += &z;
    }
    (
        x,
        LinearSolveInfo {
            iterations: max_iter,
            relative_residual: rel,
        },
    )
}

/// Solves the stationarity system of the quadratic loss when blocks depend on
/// the realization, `Σ_b w_b Σ_j Φ_{b,j}ᵀ Φ_{b,j} C ψ_j ψ_jᵀ = Σ_b w_b Σ_j Φ_{b,j}ᵀ f_{b,j} ψ_jᵀ`,
/// by matrix-free conjugate gradients preconditioned with the realization-mean
/// Kronecker approximation `Ḡ ⊗ ΨΨᵀ`. `ridge` adds `ridge · C` to the operator.
pub fn fit_pc2_linear_general(system: &Pc2System, opts: &FitOptions) -> Result<(DMatrix<f64>, LinearSolveInfo)> {
    opts.validate()?;
    if !system.is_linear() {
        return Err(Error::Parameter("system has quadratic terms; use the nonlinear fit".into()));
    }
    if system.blocks().is_empty() {
        return Err(Error::Parameter("system has no blocks".into()));
    }
    let (q, p) = (system.q(), system.p());
    let psi = system.psi();
    if opts.ridge == 0.0 && psi.ncols() < p {
        return Err(Error::RankDeficient {
            side: GramSide::Stochastic,
            detail: format!("N = {} samples < P = {p} basis functions", psi.ncols()),
        });
    }
    let op = NormalOp::new(linear_blocks(system), psi, q, opts.ridge);
    let mut rhs = DMatrix::zeros(q, p);
    for (b, block) in system.blocks().iter().enumerate() {
        op.adjoint_acc(b, &block.target, block.weight, &mut rhs);
    }
    let precond = KronPreconditioner::new(op.mean_spatial_gram(q), linalg::gram_rows(psi), opts.ridge);
    let (c, info) = pcg(|d| op.apply(d), |z| precond.apply(z), &rhs, opts.cg_tol, opts.cg_cap(q, p));
    if !(info.relative_residual <= opts.cg_tol) {
        return Err(Error::Convergence {
            iterations: info.iterations,
            residual: info.relative_residual,
        });
    }
    Ok((c, info))
}
