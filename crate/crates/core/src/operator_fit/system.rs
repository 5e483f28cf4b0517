//! Constraint blocks, residuals, loss and gradient of the physics-constrained
//! fit, plus the matrix-free linear operators the iterative solvers share.

use std::borrow::Cow;

use nalgebra::DMatrix;

use crate::design::{BlockKind, DesignBlock};
use crate::error::{Error, Result};
use crate::linalg::{self, gemm, Op};

/// `coefficient · (left C ψ_j) ⊙ (right C ψ_j)` added to a block residual.
#[derive(Debug, Clone)]
pub struct QuadraticPart {
    pub coefficient: f64,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Pc2Block {
    pub design: DesignBlock,
    /// `n_b × N` right-hand side.
    pub target: DMatrix<f64>,
    /// Multiplies `‖R_b‖²_F` in the loss; `1 / (n_b · N)` by default.
    pub weight: f64,
    pub quadratic: Option<QuadraticPart>,
}

impl Pc2Block {
    pub fn nrows(&self) -> usize {
        self.design.nrows()
    }
}

/// Constraint blocks sharing one stochastic design matrix `Ψ`.
#[derive(Debug, Clone)]
pub struct Pc2System {
    psi: DMatrix<f64>,
    q: usize,
    blocks: Vec<Pc2Block>,
}

impl Pc2System {
    pub fn new(psi: DMatrix<f64>, q: usize) -> Result<Self> {
        if psi.nrows() == 0 || psi.ncols() == 0 || q == 0 {
            return Err(Error::Shape("empty stochastic design or spatio-temporal basis".into()));
        }
        super::check_finite("Psi", &psi)?;
        Ok(Pc2System { psi, q, blocks: Vec::new() })
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn blocks(&self) -> &[Pc2Block] {
        &self.blocks
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.psi.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.psi.ncols()
    }

    pub fn is_linear(&self) -> bool {
        self.blocks.iter().all(|b| b.quadratic.is_none())
    }

    pub fn has_per_realization(&self) -> bool {
        self.blocks.iter().any(|b| b.design.per_realization())
    }

    /// Adds a block with the default weight `1 / (n_b · N)`.
    pub fn add_block(&mut self, design: DesignBlock, target: DMatrix<f64>, quadratic: Option<QuadraticPart>) -> Result<()> {
        self.add_weighted_block(design, target, quadratic, 1.0)
    }

    /// Adds a block whose weight is `relative_weight / (n_b · N)`. A zero
    /// relative weight leaves the system unchanged.
    pub fn add_weighted_block(
        &mut self,
        design: DesignBlock,
        target: DMatrix<f64>,
        quadratic: Option<QuadraticPart>,
        relative_weight: f64,
    ) -> Result<()> {
        if !(relative_weight >= 0.0 && relative_weight.is_finite()) {
            return Err(Error::Parameter(format!("block weight must be finite and >= 0, got {relative_weight}")));
        }
        let n = design.nrows();
        let big_n = self.n_samples();
        if design.ncols() != self.q {
            return Err(Error::Shape(format!("block has {} columns, expected Q = {}", design.ncols(), self.q)));
        }
        if n == 0 {
            return Err(Error::Shape("block has no rows".into()));
        }
        if target.nrows() != n || target.ncols() != big_n {
            return Err(Error::Shape(format!(
                "target is {}x{}, expected {n}x{big_n}",
                target.nrows(),
                target.ncols()
            )));
        }
        if let Some(r) = design.realizations() {
            if r != big_n {
                return Err(Error::Shape(format!("block carries {r} realizations, Psi has {big_n} samples")));
            }
        }
        if let Some(qp) = &quadratic {
            for m in [&qp.left, &qp.right] {
                if m.nrows() != n || m.ncols() != self.q {
                    return Err(Error::Shape(format!(
                        "quadratic factor is {}x{}, expected {n}x{}",
                        m.nrows(),
                        m.ncols(),
                        self.q
                    )));
                }
            }
        }
        super::check_finite("block design", &design.matrix)?;
        super::check_finite("block target", &target)?;
        if relative_weight == 0.0 {
            return Ok(());
        }
        self.blocks.push(Pc2Block {
            weight: relative_weight / (n as f64 * big_n as f64),
            design,
            target,
            quadratic,
        });
        Ok(())
    }
}

/// Appends a labeled-data block `Φ_data C Ψ ≈ S_data` with relative weight
/// `weight` (see [`Pc2System::add_weighted_block`]).
pub fn augment_with_data(mut system: Pc2System, phi_data: DMatrix<f64>, s_data: DMatrix<f64>, weight: f64) -> Result<Pc2System> {
    let points = DMatrix::zeros(phi_data.nrows(), 0);
    let design = DesignBlock::shared(BlockKind::Data, points, phi_data);
    system.add_weighted_block(design, s_data, None, weight)?;
    Ok(system)
}

/// One linear term `coef · W ⊙ (M D Ψ)` of a block operator; `W` is an
/// optional pointwise `n × N` multiplier.
pub(crate) struct Term<'a> {
    pub matrix: &'a DMatrix<f64>,
    pub coef: f64,
    pub pointwise: Option<Cow<'a, DMatrix<f64>>>,
}

pub(crate) struct BlockOp<'a> {
    pub weight: f64,
    pub rows: usize,
    pub terms: Vec<Term<'a>>,
}

/// `D ↦ Σ_b w_b L_bᵀ L_b(D) + shift · D`, with `L_b(D) = Σ_t coef_t W_t ⊙ (M_t D Ψ)`.
pub(crate) struct NormalOp<'a> {
    pub blocks: Vec<BlockOp<'a>>,
    pub psi: &'a DMatrix<f64>,
    pub shift: f64,
    /// Contract with `Ψ` after the spatial product (`(M D) Ψ`) rather than before.
    left_first: bool,
}

/// The linear (in `C`) part of every block.
pub(crate) fn linear_blocks(system: &Pc2System) -> Vec<BlockOp<'_>> {
    system
        .blocks
        .iter()
        .map(|b| {
            let mut terms = vec![Term {
                matrix: &b.design.matrix,
                coef: 1.0,
                pointwise: None,
            }];
            for part in &b.design.field_parts {
                terms.push(Term {
                    matrix: &part.matrix,
                    coef: 1.0,
                    pointwise: Some(Cow::Borrowed(&part.values)),
                });
            }
            BlockOp {
                weight: b.weight,
                rows: b.nrows(),
                terms,
            }
        })
        .collect()
}

pub(crate) enum Prepared<'d> {
    /// Contract each term as `(M D) Ψ`.
    Left(&'d DMatrix<f64>),
    /// `D Ψ` already formed.
    Right(DMatrix<f64>),
}

impl<'a> NormalOp<'a> {
    pub fn new(blocks: Vec<BlockOp<'a>>, psi: &'a DMatrix<f64>, q: usize, shift: f64) -> Self {
        let (p, n_s) = (psi.nrows() as f64, psi.ncols() as f64);
        let q = q as f64;
        let rows: f64 = blocks.iter().map(|b| b.rows as f64 * b.terms.len() as f64).sum();
        let left = rows * (q * p + p * n_s);
        let right = q * p * n_s + rows * q * n_s;
        NormalOp {
            blocks,
            psi,
            shift,
            left_first: left <= right,
        }
    }

    pub fn prepare<'d>(&self, d: &'d DMatrix<f64>) -> Prepared<'d> {
        if self.left_first {
            Prepared::Left(d)
        } else {
            Prepared::Right(linalg::matmul(d, self.psi))
        }
    }

    /// `L_b(D)`, `n_b × N`.
    pub fn forward(&self, b: usize, d: &Prepared) -> DMatrix<f64> {
        let block = &self.blocks[b];
        let mut out = DMatrix::zeros(block.rows, self.psi.ncols());
        for t in &block.terms {
            let x = match d {
                Prepared::Left(d) => {
                    let md = linalg::matmul(t.matrix, d);
                    linalg::matmul(&md, self.psi)
                }
                Prepared::Right(y) => linalg::matmul(t.matrix, y),
            };
            match &t.pointwise {
                None => linalg::axpy(t.coef, &x, &mut out),
                Some(w) => {
                    for ((o, xv), wv) in out.iter_mut().zip(x.iter()).zip(w.iter()) {
                        *o += t.coef * wv * xv;
                    }
                }
            }
        }
        out
    }

    /// `out += scale · L_bᵀ(R)`, `Q × P`.
    pub fn adjoint_acc(&self, b: usize, r: &DMatrix<f64>, scale: f64, out: &mut DMatrix<f64>) {
        let block = &self.blocks[b];
        let mut spatial: Option<DMatrix<f64>> = None;
        for t in &block.terms {
            let wr: Cow<DMatrix<f64>> = match &t.pointwise {
                None => Cow::Borrowed(r),
                Some(w) => Cow::Owned(r.component_mul(w)),
            };
            if self.left_first {
                let rp = linalg::matmul_nt(&wr, self.psi);
                gemm(scale * t.coef, t.matrix, Op::T, &rp, Op::N, 1.0, out);
            } else {
                let acc = spatial.get_or_insert_with(|| DMatrix::zeros(t.matrix.ncols(), r.ncols()));
                gemm(t.coef, t.matrix, Op::T, &wr, Op::N, 1.0, acc);
            }
        }
        if let Some(u) = spatial {
            gemm(scale, &u, Op::N, self.psi, Op::T, 1.0, out);
        }
    }

    pub fn apply(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let prepared = self.prepare(d);
        let mut out = d * self.shift;
        for b in 0..self.blocks.len() {
            let r = self.forward(b, &prepared);
            self.adjoint_acc(b, &r, self.blocks[b].weight, &mut out);
        }
        out
    }

    /// `E_j[L_jᵀ L_j]`-style spatial Gram: each pointwise multiplier replaced
    /// by its per-row mean, plus the per-row covariance correction.
    pub fn mean_spatial_gram(&self, q: usize) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(q, q);
        let n_s = self.psi.ncols() as f64;
        for block in &self.blocks {
            let mut mbar = DMatrix::zeros(block.rows, q);
            let mut fluct: Vec<(&DMatrix<f64>, f64, DMatrix<f64>)> = Vec::new();
            for t in &block.terms {
                match &t.pointwise {
                    None => linalg::axpy(t.coef, t.matrix, &mut mbar),
                    Some(w) => {
                        let mean: Vec<f64> = (0..block.rows).map(|i| w.row(i).sum() / n_s).collect();
                        for i in 0..block.rows {
                            for c in 0..q {
                                mbar[(i, c)] += t.coef * mean[i] * t.matrix[(i, c)];
                            }
                        }
                        let centered = DMatrix::from_fn(block.rows, w.ncols(), |i, j| w[(i, j)] - mean[i]);
                        fluct.push((t.matrix, t.coef, centered));
                    }
                }
            }
            gemm(block.weight, &mbar, Op::T, &mbar, Op::N, 1.0, &mut g);
            for (s, (ms, cs, ws)) in fluct.iter().enumerate() {
                for (mt, ct, wt) in fluct.iter().skip(s) {
                    let cov: Vec<f64> = (0..block.rows)
                        .map(|i| ws.row(i).iter().zip(wt.row(i).iter()).map(|(a, b)| a * b).sum::<f64>() / n_s)
                        .collect();
                    let scaled = DMatrix::from_fn(block.rows, q, |i, c| cov[i] * mt[(i, c)]);
                    let f = block.weight * cs * ct;
                    if std::ptr::eq(*ms, *mt) && std::ptr::eq(ws, wt) {
                        gemm(f, ms, Op::T, &scaled, Op::N, 1.0, &mut g);
                    } else {
                        // Symmetric pair (s, t) and (t, s).
                        gemm(f, ms, Op::T, &scaled, Op::N, 1.0, &mut g);
                        let scaled_s = DMatrix::from_fn(block.rows, q, |i, c| cov[i] * ms[(i, c)]);
                        gemm(f, mt, Op::T, &scaled_s, Op::N, 1.0, &mut g);
                    }
                }
            }
        }
        linalg::symmetrize(&mut g);
        g
    }
}

/// Products `left C Ψ` and `right C Ψ` of a quadratic block.
pub(crate) fn quadratic_factors(q: &QuadraticPart, c: &DMatrix<f64>, psi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (super::solve::sandwich(&q.left, c, psi), super::solve::sandwich(&q.right, c, psi))
}

/// Residual of every block at `C`.
pub(crate) fn residuals(c: &DMatrix<f64>, system: &Pc2System) -> Vec<DMatrix<f64>> {
    let op = NormalOp::new(linear_blocks(system), &system.psi, system.q, 0.0);
    let prepared = op.prepare(c);
    system
        .blocks
        .iter()
        .enumerate()
        .map(|(b, block)| {
            let mut r = op.forward(b, &prepared);
            if let Some(qp) = &block.quadratic {
                let (sl, sr) = quadratic_factors(qp, c, &system.psi);
                for ((o, a), bv) in r.iter_mut().zip(sl.iter()).zip(sr.iter()) {
                    *o += qp.coefficient * a * bv;
                }
            }
            r -= &block.target;
            r
        })
        .collect()
}

pub(crate) fn loss_of(residuals: &[DMatrix<f64>], system: &Pc2System) -> f64 {
    residuals
        .iter()
        .zip(&system.blocks)
        .map(|(r, b)| b.weight * linalg::frob_dot(r, r))
        .sum()
}

/// Blocks linearized at `C`: the linear terms plus, for a quadratic part,
/// `κ S_R ⊙ (left D Ψ)` and `κ S_L ⊙ (right D Ψ)`.
pub(crate) fn linearized_blocks<'a>(c: &DMatrix<f64>, system: &'a Pc2System) -> Vec<BlockOp<'a>> {
    let mut blocks = linear_blocks(system);
    for (op, block) in blocks.iter_mut().zip(&system.blocks) {
        if let Some(qp) = &block.quadratic {
            let (sl, sr) = quadratic_factors(qp, c, &system.psi);
            op.terms.push(Term {
                matrix: &qp.left,
                coef: qp.coefficient,
                pointwise: Some(Cow::Owned(sr)),
            });
            op.terms.push(Term {
                matrix: &qp.right,
                coef: qp.coefficient,
                pointwise: Some(Cow::Owned(sl)),
            });
        }
    }
    blocks
}

fn check_shape(c: &DMatrix<f64>, system: &Pc2System) -> Result<()> {
    if c.nrows() != system.q || c.ncols() != system.p() {
        return Err(Error::Shape(format!(
            "coefficients are {}x{}, system expects {}x{}",
            c.nrows(),
            c.ncols(),
            system.q,
            system.p()
        )));
    }
    Ok(())
}

/// `Σ_b ‖R_b‖²_F / (n_b N)` (with each block's weight).
pub fn pc2_loss(c: &DMatrix<f64>, system: &Pc2System) -> Result<f64> {
    check_shape(c, system)?;
    Ok(loss_of(&residuals(c, system), system))
}

/// Analytic gradient `2 Σ_b w_b J_bᵀ R_b` of [`pc2_loss`].
pub fn pc2_loss_gradient(c: &DMatrix<f64>, system: &Pc2System) -> Result<DMatrix<f64>> {
    check_shape(c, system)?;
    let res = residuals(c, system);
    Ok(gradient_from(c, system, &res))
}

pub(crate) fn gradient_from(c: &DMatrix<f64>, system: &Pc2System, res: &[DMatrix<f64>]) -> DMatrix<f64> {
    let op = NormalOp::new(linearized_blocks(c, system), &system.psi, system.q, 0.0);
    let mut g = DMatrix::zeros(system.q, system.p());
    for (b, r) in res.iter().enumerate() {
        op.adjoint_acc(b, r, 2.0 * system.blocks[b].weight, &mut g);
    }
    g
}
