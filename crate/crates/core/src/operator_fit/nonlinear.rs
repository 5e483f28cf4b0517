use std::path::Path;

use nalgebra::DMatrix;

use super::solve::{pcg, KronPreconditioner};
use super::system::{gradient_from, linearized_blocks, loss_of, residuals, NormalOp, Pc2System};
use super::FitOptions;
use crate::error::{Error, Result};
use crate::linalg;

/// Damping beyond which a step that still fails to decrease the loss is a stagnation.
const MAX_DAMPING: f64 = 1e12;

/// One accepted iterate; row 0 is the starting point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Levenberg damping used for the step that produced this iterate.
    pub damping: f64,
}

#[derive(Debug, Clone)]
pub struct NonlinearFit {
    pub coefficients: DMatrix<f64>,
    pub trace: Vec<TraceRow>,
    /// `‖∇L‖_F ≤ grad_tol (1 + L)` at the returned iterate.
    pub converged: bool,
    /// Conjugate-gradient iterations summed over all linear solves.
    pub cg_iterations: usize,
}

impl NonlinearFit {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.loss)
    }

    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["iter", "loss", "grad_norm", "damping"])?;
        for r in &self.trace {
            w.write_record([
                r.iter.to_string(),
                format!("{:e}", r.loss),
                format!("{:e}", r.grad_norm),
                format!("{:e}", r.damping),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        crate::bench::write_atomic(path, &bytes)
    }
}

/// Damped Gauss–Newton on `vec(C)` for systems with quadratic terms.
///
/// Each step solves `(Σ_b w_b J_bᵀ J_b + λ I) D = -Σ_b w_b J_bᵀ R_b` by
/// preconditioned conjugate gradients, to `cg_tol` or, with
/// `inexact_steps`, to `max(cg_tol, min(0.1, sqrt(‖∇L‖ / ‖∇L₀‖)))`. A step
/// is accepted only if it lowers the loss, after which `λ` shrinks tenfold;
/// a rejected step raises `λ` tenfold (a zero `λ` becomes `1e-6`).
///
/// `init` defaults to zero. When the local model predicts no decrease above
/// rounding level the iteration stops and reports `converged` from the
/// gradient test alone.
pub fn fit_pc2_nonlinear(system: &Pc2System, init: Option<&DMatrix<f64>>, opts: &FitOptions) -> Result<NonlinearFit> {
    opts.validate()?;
    if system.is_linear() {
        return Err(Error::Parameter("system has no quadratic terms; use the linear fit".into()));
    }
    let (q, p) = (system.q(), system.p());
    let mut c = match init {
        Some(c0) => {
            if c0.shape() != (q, p) {
                return Err(Error::Shape(format!(
                    "initial coefficients are {}x{}, expected {q}x{p}",
                    c0.nrows(),
                    c0.ncols()
                )));
            }
            super::check_finite("initial coefficients", c0)?;
            c0.clone()
        }
        None => DMatrix::zeros(q, p),
    };
    let h = linalg::gram_rows(system.psi());
    let mut res = residuals(&c, system);
    let mut loss = loss_of(&res, system);
    let mut grad = gradient_from(&c, system, &res);
    let g0 = grad.norm();
    let mut damping = opts.damping;
    let mut trace = vec![TraceRow {
        iter: 0,
        loss,
        grad_norm: g0,
        damping,
    }];
    let mut cg_total = 0;
    let cap = opts.cg_cap(q, p);

    for iter in 1..=opts.max_iter {
        let gnorm = grad.norm();
        if gnorm <= opts.grad_tol * (1.0 + loss) {
            break;
        }
        let tol = if opts.inexact_steps {
            (gnorm / g0).sqrt().min(0.1).max(opts.cg_tol)
        } else {
            opts.cg_tol
        };
        let mut op = NormalOp::new(linearized_blocks(&c, system), system.psi(), q, damping);
        let mut pre = KronPreconditioner::new(op.mean_spatial_gram(q), h.clone(), damping);
        let rhs = &grad * -0.5;
        loop {
            op.shift = damping;
            pre.set_shift(damping);
            let (d, info) = pcg(|x| op.apply(x), |z| pre.apply(z), &rhs, tol, cap);
            cg_total += info.iterations;
            let trial = &c + &d;
            let trial_res = residuals(&trial, system);
            let trial_loss = loss_of(&trial_res, system);
            if trial_loss < loss {
                c = trial;
                res = trial_res;
                loss = trial_loss;
                grad = gradient_from(&c, system, &res);
                trace.push(TraceRow {
                    iter,
                    loss,
                    grad_norm: grad.norm(),
                    damping,
                });
                damping /= 10.0;
                break;
            }
            // Model decrease -⟨g, d⟩ - dᵀ JᵀWJ d; below rounding the loss cannot move.
            let jtj = linalg::frob_dot(&d, &op.apply(&d)) - damping * d.norm_squared();
            let predicted = -linalg::frob_dot(&grad, &d) - jtj;
            if predicted <= 64.0 * f64::EPSILON * loss.max(f64::MIN_POSITIVE) {
                return Ok(finish(c, trace, loss, opts, cg_total));
            }
            damping = if damping == 0.0 { 1e-6 } else { damping * 10.0 };
            if damping > MAX_DAMPING {
                return Err(Error::Stagnation {
                    damping,
                    loss,
                    best: Box::new(c),
                });
            }
        }
    }
    Ok(finish(c, trace, loss, opts, cg_total))
}

fn finish(c: DMatrix<f64>, trace: Vec<TraceRow>, loss: f64, opts: &FitOptions, cg_iterations: usize) -> NonlinearFit {
    let gnorm = trace.last().map_or(f64::INFINITY, |r| r.grad_norm);
    NonlinearFit {
        converged: gnorm <= opts.grad_tol * (1.0 + loss),
        coefficients: c,
        trace,
        cg_iterations,
    }
}
