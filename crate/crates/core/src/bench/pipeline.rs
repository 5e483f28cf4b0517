//! generate → assemble → fit → evaluate → UQ, and the files each step leaves.

use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{FitMode, ResolvedRun, RunConfig, Seeds};
use super::model_io::SavedModel;
use super::{matrix_csv, write_atomic};
use crate::design::{assemble_phi, assemble_psi, sample_virtual_points, BlockKind, DiffOpSpec};
use crate::error::{Error, Result};
use crate::index_sets::{hyperbolic_set, total_degree_set, MultiIndexSet};
use crate::operator_fit::{
    augment_with_data, fit_data_driven, fit_pc2_linear, fit_pc2_linear_general, fit_pc2_nonlinear, predict,
    CoefficientMatrix, Pc2System, TraceRow,
};
use crate::pde_suite::{draw_xi, generate_dataset, mcs_statistics, Dataset, McsReference, PdeProblem};
use crate::uq_post::UQSummary;

/// Wall-clock seconds per phase. Informational only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub generate: f64,
    pub assemble: f64,
    pub fit: f64,
    pub evaluate: f64,
    pub uq: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Spatio-temporal basis size.
    pub q_basis: usize,
    /// Stochastic basis size.
    pub p_basis: usize,
    /// `"closed_form"`, `"pcg"` or `"gauss_newton"`.
    pub solver: String,
    pub iterations: Option<usize>,
    pub cg_iterations: Option<usize>,
    pub converged: Option<bool>,
    /// Final over initial gradient norm of the Gauss–Newton run.
    pub gradient_reduction: Option<f64>,
    /// Accepted-step losses never increase.
    pub monotone: Option<bool>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UqErrors {
    pub mean_mae: f64,
    pub std_mae: f64,
    pub mcs_samples: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub problem: String,
    pub mode: String,
    pub library_version: String,
    /// Mean over test samples of the per-sample mean squared error.
    pub mse: f64,
    pub n_test: usize,
    /// Mean over test samples of `‖ŝ - s‖² / ‖s‖²`.
    pub relative_l2: f64,
    pub uq: Option<UqErrors>,
    pub fit: FitDiagnostics,
    pub timings: Timings,
    pub seeds: Seeds,
    pub config: RunConfig,
}

/// Everything a fit run produces, before it is written out.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: SavedModel,
    pub report: FitReport,
    pub per_sample_mse: Vec<f64>,
    pub trace: Option<Vec<TraceRow>>,
    pub test: Dataset,
    pub prediction: DMatrix<f64>,
    pub uq: Option<UqOutcome>,
}

#[derive(Debug, Clone)]
pub struct UqOutcome {
    pub summary: UQSummary,
    pub reference: McsReference,
    pub errors: UqErrors,
}

pub fn index_sets(run: &ResolvedRun) -> Result<(MultiIndexSet, MultiIndexSet)> {
    let r = run.problem.r();
    let set_a = match run.hyperbolic_q {
        Some(qn) => hyperbolic_set(r, run.p, qn)?,
        None => total_degree_set(r, run.p)?,
    };
    let set_b = total_degree_set(run.problem.domain.dim(), run.q)?;
    Ok((set_a, set_b))
}

fn identity_phi(problem: &PdeProblem, set_b: &MultiIndexSet, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let op = DiffOpSpec::identity(set_b.dim());
    Ok(assemble_phi(set_b, points, &problem.domain.domain_map(), &op, None, BlockKind::Data)?.matrix)
}

/// Per-sample mean squared error over the rows, one entry per column.
pub fn per_sample_mse(prediction: &DMatrix<f64>, reference: &DMatrix<f64>) -> Vec<f64> {
    let n = reference.nrows() as f64;
    (0..reference.ncols())
        .map(|j| {
            prediction
                .column(j)
                .iter()
                .zip(reference.column(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs the whole pipeline in memory. `reference` replaces the Monte Carlo
/// run when given (it must come from the same problem, points and seed).
pub fn run_fit(run: &ResolvedRun, reference: Option<&McsReference>) -> Result<RunOutcome> {
    let problem = &run.problem;
    let mut timings = Timings::default();
    let (set_a, set_b) = index_sets(run)?;
    let query = problem.query_points();

    let clock = Instant::now();
    let test = generate_dataset(problem, run.n_test, run.seeds.test, &query)?;
    let train = if run.config.mode.needs_labels() {
        Some(generate_dataset(problem, run.n_train, run.seeds.train, &query)?)
    } else {
        None
    };
    timings.generate = clock.elapsed().as_secs_f64();

    let mut diag = FitDiagnostics {
        q_basis: set_b.len(),
        p_basis: set_a.len(),
        ..Default::default()
    };
    let mut trace = None;
    let values = match run.config.mode {
        FitMode::DataDriven => {
            let train = train.as_ref().expect("labeled mode");
            let clock = Instant::now();
            let phi = identity_phi(problem, &set_b, &query)?;
            let psi = assemble_psi(&set_a, &train.xi)?;
            timings.assemble = clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let c = fit_data_driven(&phi, &psi, &train.solutions, &run.fit)?;
            timings.fit = clock.elapsed().as_secs_f64();
            diag.solver = "closed_form".into();
            c
        }
        FitMode::Pc2 | FitMode::Pc2WithData => {
            let clock = Instant::now();
            let xi = match &train {
                Some(t) => t.xi.clone(),
                None => draw_xi(run.n_unlabeled, problem.r(), run.seeds.unlabeled),
            };
            let vp = sample_virtual_points(&problem.domain, run.n_pde, run.n_bc, run.n_ic, set_b.len(), run.seeds.points)?;
            let mut system = problem.build_pc2_system(&set_a, &set_b, &xi, &vp)?;
            if let Some(t) = &train {
                let phi = identity_phi(problem, &set_b, &query)?;
                system = augment_with_data(system, phi, t.solutions.clone(), run.data_weight)?;
            }
            timings.assemble = clock.elapsed().as_secs_f64();
            let clock = Instant::now();
            let c = fit_system(&system, run, &mut diag, &mut trace)?;
            timings.fit = clock.elapsed().as_secs_f64();
            c
        }
    };
    let coefficients = CoefficientMatrix::new(values, set_a, set_b, problem.domain.domain_map())?;

    let clock = Instant::now();
    let prediction = predict(&coefficients, &query, &test.xi)?;
    let per_sample = per_sample_mse(&prediction, &test.solutions);
    let relative_l2 = mean(
        &(0..test.solutions.ncols())
            .map(|j| {
                let e = (prediction.column(j) - test.solutions.column(j)).norm_squared();
                e / test.solutions.column(j).norm_squared().max(f64::MIN_POSITIVE)
            })
            .collect::<Vec<_>>(),
    );
    timings.evaluate = clock.elapsed().as_secs_f64();

    let model = SavedModel {
        problem: problem.id,
        mode: run.config.mode.as_str().to_owned(),
        crate_version: env!("CARGO_PKG_VERSION").to_owned(),
        coefficients,
        kl: problem.stochastic.fields.iter().map(|f| (**f).clone()).collect(),
    };

    let uq = if run.uq_enabled {
        let clock = Instant::now();
        let out = uq_for_model(&model, run, reference)?;
        timings.uq = clock.elapsed().as_secs_f64();
        Some(out)
    } else {
        None
    };

    let report = FitReport {
        problem: problem.name().to_owned(),
        mode: run.config.mode.as_str().to_owned(),
        library_version: env!("CARGO_PKG_VERSION").to_owned(),
        mse: mean(&per_sample),
        n_test: per_sample.len(),
        relative_l2,
        uq: uq.as_ref().map(|u| u.errors.clone()),
        fit: diag,
        timings,
        seeds: run.seeds,
        config: run.config.clone(),
    };
    Ok(RunOutcome {
        model,
        report,
        per_sample_mse: per_sample,
        trace,
        test,
        prediction,
        uq,
    })
}

fn fit_system(
    system: &Pc2System,
    run: &ResolvedRun,
    diag: &mut FitDiagnostics,
    trace: &mut Option<Vec<TraceRow>>,
) -> Result<DMatrix<f64>> {
    if !system.is_linear() {
        let fit = fit_pc2_nonlinear(system, None, &run.fit)?;
        let first = fit.trace.first().map_or(f64::NAN, |r| r.grad_norm);
        let last = fit.trace.last().map_or(f64::NAN, |r| r.grad_norm);
        diag.solver = "gauss_newton".into();
        diag.iterations = Some(fit.trace.len().saturating_sub(1));
        diag.cg_iterations = Some(fit.cg_iterations);
        diag.converged = Some(fit.converged);
        diag.gradient_reduction = Some(if first > 0.0 { last / first } else { 0.0 });
        diag.monotone = Some(fit.trace.windows(2).all(|w| w[1].loss <= w[0].loss));
        diag.final_loss = Some(fit.final_loss());
        *trace = Some(fit.trace);
        return Ok(fit.coefficients);
    }
    if system.has_per_realization() {
        let (c, info) = fit_pc2_linear_general(system, &run.fit)?;
        diag.solver = "pcg".into();
        diag.cg_iterations = Some(info.iterations);
        diag.converged = Some(true);
        return Ok(c);
    }
    diag.solver = "closed_form".into();
    fit_pc2_linear(system, &run.fit)
}

/// Cache key of a Monte Carlo reference: problem, solver grid, points,
/// sample count and seed.
pub fn reference_tag(problem: &PdeProblem, points: &DMatrix<f64>, samples: usize, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(problem.name().as_bytes());
    h.update(serde_json::to_vec(&problem.solver).expect("solver spec serializes"));
    for v in points.iter() {
        h.update(v.to_le_bytes());
    }
    h.update((samples as u64).to_le_bytes());
    h.update(seed.to_le_bytes());
    h.finalize()[..12].iter().map(|b| format!("{b:02x}")).collect()
}

/// Monte Carlo mean/std at the problem's UQ points, read from
/// `uq.reference` when it exists with a matching tag and written there
/// otherwise.
pub fn mcs_reference(run: &ResolvedRun) -> Result<McsReference> {
    let problem = &run.problem;
    let points = problem.uq_points();
    let tag = reference_tag(problem, &points, run.mcs_samples, run.seeds.mcs);
    let cache = run.config.uq.reference.as_deref();
    if let Some(path) = cache.filter(|p| p.exists()) {
        let r = McsReference::read_csv(path)?;
        if r.tag == tag && r.mean.len() == points.nrows() {
            return Ok(r);
        }
    }
    let mut r = mcs_statistics(problem, &points, run.mcs_samples, run.seeds.mcs)?;
    r.tag = tag;
    if let Some(path) = cache {
        r.write_csv(path)?;
    }
    Ok(r)
}

/// Predictive mean/std at the UQ points against the Monte Carlo reference.
pub fn uq_for_model(model: &SavedModel, run: &ResolvedRun, reference: Option<&McsReference>) -> Result<UqOutcome> {
    let points = run.problem.uq_points();
    let summary = UQSummary::compute(&model.coefficients, &points, false, true)?;
    let reference = match reference {
        Some(r) => r.clone(),
        None => mcs_reference(run)?,
    };
    if reference.mean.len() != points.nrows() {
        return Err(Error::Shape(format!(
            "reference has {} points, the problem has {}",
            reference.mean.len(),
            points.nrows()
        )));
    }
    let mae = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    let errors = UqErrors {
        mean_mae: mae(&summary.mean, &reference.mean),
        std_mae: mae(&summary.std, &reference.std),
        mcs_samples: reference.samples,
        points: points.nrows(),
    };
    Ok(UqOutcome {
        summary,
        reference,
        errors,
    })
}

/// `axes..., mean, std, mcs_mean, mcs_std, mean_abs_err, std_abs_err`.
pub fn write_uq_errors(uq: &UqOutcome, axis_names: &[String], path: &Path) -> Result<()> {
    let pts = &uq.summary.points;
    let d = pts.ncols();
    let m = DMatrix::from_fn(pts.nrows(), d + 6, |i, k| {
        let (s, r) = (&uq.summary, &uq.reference);
        match k {
            k if k < d => pts[(i, k)],
            k if k == d => s.mean[i],
            k if k == d + 1 => s.std[i],
            k if k == d + 2 => r.mean[i],
            k if k == d + 3 => r.std[i],
            k if k == d + 4 => (s.mean[i] - r.mean[i]).abs(),
            _ => (s.std[i] - r.std[i]).abs(),
        }
    });
    let mut header = axis_names.to_vec();
    header.extend(["mean", "std", "mcs_mean", "mcs_std", "mean_abs_err", "std_abs_err"].map(String::from));
    write_atomic(path, &matrix_csv(&header, &m)?)
}

pub fn write_report(report: &FitReport, path: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(report).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(path, &json)
}

pub fn read_report(path: &Path) -> Result<FitReport> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// `sample, mse` per test sample.
pub fn write_per_sample(per_sample: &[f64], path: &Path) -> Result<()> {
    let m = DMatrix::from_fn(per_sample.len(), 2, |i, k| if k == 0 { i as f64 } else { per_sample[i] });
    write_atomic(path, &matrix_csv(&["sample".into(), "mse".into()], &m)?)
}

pub fn read_per_sample(path: &Path) -> Result<Vec<f64>> {
    let (_, m) = super::read_matrix_csv(path)?;
    if m.ncols() != 2 {
        return Err(Error::Shape(format!("{} should have 2 columns", path.display())));
    }
    Ok(m.column(1).iter().copied().collect())
}

pub const MODEL_FILE: &str = "model.pceol";
pub const REPORT_FILE: &str = "report.json";
pub const PER_SAMPLE_FILE: &str = "per_sample_errors.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const UQ_SUMMARY_FILE: &str = "uq_summary.csv";
pub const UQ_ERRORS_FILE: &str = "uq_errors.csv";
pub const SAMPLE_FILE: &str = "test_sample_0.csv";

/// Writes the model, report and CSVs of a run into `dir`.
pub fn write_outcome(outcome: &RunOutcome, problem: &PdeProblem, dir: &Path) -> Result<()> {
    let axes = problem.axis_names();
    outcome.model.save(&dir.join(MODEL_FILE))?;
    write_report(&outcome.report, &dir.join(REPORT_FILE))?;
    write_per_sample(&outcome.per_sample_mse, &dir.join(PER_SAMPLE_FILE))?;
    if let Some(trace) = &outcome.trace {
        let m = DMatrix::from_fn(trace.len(), 4, |i, k| match k {
            0 => trace[i].iter as f64,
            1 => trace[i].loss,
            2 => trace[i].grad_norm,
            _ => trace[i].damping,
        });
        let header = ["iter", "loss", "grad_norm", "damping"].map(String::from);
        write_atomic(&dir.join(TRACE_FILE), &matrix_csv(&header, &m)?)?;
    }
    if let Some(uq) = &outcome.uq {
        uq.summary.write_csv(&dir.join(UQ_SUMMARY_FILE), &axes)?;
        write_uq_errors(uq, &axes, &dir.join(UQ_ERRORS_FILE))?;
    }
    let pts = &outcome.test.points;
    let d = pts.ncols();
    let m = DMatrix::from_fn(pts.nrows(), d + 2, |i, k| match k {
        k if k < d => pts[(i, k)],
        k if k == d => outcome.test.solutions[(i, 0)],
        _ => outcome.prediction[(i, 0)],
    });
    let mut header = axes;
    header.extend(["reference", "prediction"].map(String::from));
    write_atomic(&dir.join(SAMPLE_FILE), &matrix_csv(&header, &m)?)
}
