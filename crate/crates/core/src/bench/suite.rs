//! All problems × modes, one report row each.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{FitMode, RunConfig};
use super::pipeline::{mcs_reference, run_fit, write_outcome};
use super::write_atomic;
use crate::error::{Error, Result};
use crate::pde_suite::{McsReference, ProblemId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "all_problems")]
    pub problems: Vec<ProblemId>,
    #[serde(default = "both_modes")]
    pub modes: Vec<FitMode>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub expensive: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Overrides every problem's Monte Carlo sample count.
    #[serde(default)]
    pub mcs_samples: Option<usize>,
    #[serde(default = "yes")]
    pub uq: bool,
}

fn all_problems() -> Vec<ProblemId> {
    ProblemId::ALL.to_vec()
}

fn both_modes() -> Vec<FitMode> {
    vec![FitMode::DataDriven, FitMode::Pc2]
}

fn yes() -> bool {
    true
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            problems: all_problems(),
            modes: both_modes(),
            seed: None,
            expensive: false,
            out: None,
            mcs_samples: None,
            uq: true,
        }
    }
}

impl SuiteConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: SuiteConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1);
            match line {
                Some(l) => Error::Config(format!("line {l}: {}", e.message().trim())),
                None => Error::Config(e.message().trim().to_owned()),
            }
        })?;
        if cfg.problems.is_empty() || cfg.modes.is_empty() {
            return Err(Error::Config("`problems` and `modes` must not be empty".into()));
        }
        for rc in cfg.run_configs() {
            rc.resolve()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&src).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn run_configs(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &problem in &self.problems {
            for &mode in &self.modes {
                let mut rc = RunConfig::new(problem, mode);
                rc.seed = self.seed;
                rc.expensive = self.expensive;
                rc.uq.enabled = Some(self.uq);
                rc.uq.mcs_samples = self.mcs_samples;
                out.push(rc);
            }
        }
        out
    }
}

/// MSE ceiling per problem and mode at desk scale.
pub fn mse_threshold(problem: ProblemId, mode: FitMode) -> f64 {
    match (problem, mode) {
        (ProblemId::Antiderivative, FitMode::DataDriven) => 1e-7,
        (ProblemId::Antiderivative, _) => 1e-6,
        (ProblemId::AdvectionDiffusion | ProblemId::Burgers, _) => 5e-4,
        (ProblemId::Heat2d, _) => 5e-3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub problem: ProblemId,
    pub mode: FitMode,
    pub mse: Option<f64>,
    pub mean_mae: Option<f64>,
    pub std_mae: Option<f64>,
    pub fit_seconds: Option<f64>,
    pub threshold: f64,
    /// `None` when the row passed.
    pub failure: Option<String>,
}

impl BenchmarkRow {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs every row; a failing row is recorded and the suite moves on. The
/// Monte Carlo reference is shared by the rows of a problem.
pub fn run_benchmark(cfg: &SuiteConfig, mut progress: impl FnMut(&BenchmarkRow)) -> Result<Vec<BenchmarkRow>> {
    let mut refs: HashMap<ProblemId, McsReference> = HashMap::new();
    let mut rows = Vec::new();
    for rc in cfg.run_configs() {
        let run = rc.resolve()?;
        let threshold = mse_threshold(rc.problem, rc.mode);
        let started = Instant::now();
        let result = (|| {
            let reference = if run.uq_enabled {
                if !refs.contains_key(&rc.problem) {
                    refs.insert(rc.problem, mcs_reference(&run)?);
                }
                refs.get(&rc.problem)
            } else {
                None
            };
            let outcome = run_fit(&run, reference)?;
            if let Some(dir) = &cfg.out {
                let sub = dir.join(format!("{}_{}", rc.problem, rc.mode));
                write_outcome(&outcome, &run.problem, &sub)?;
            }
            Ok::<_, Error>(outcome)
        })();
        let row = match result {
            Ok(o) => {
                let r = &o.report;
                let failure = (!(r.mse <= threshold)).then(|| format!("MSE {:.3e} above {threshold:.0e}", r.mse));
                BenchmarkRow {
                    problem: rc.problem,
                    mode: rc.mode,
                    mse: Some(r.mse),
                    mean_mae: r.uq.as_ref().map(|u| u.mean_mae),
                    std_mae: r.uq.as_ref().map(|u| u.std_mae),
                    fit_seconds: Some(r.timings.fit),
                    threshold,
                    failure,
                }
            }
            Err(e) => BenchmarkRow {
                problem: rc.problem,
                mode: rc.mode,
                mse: None,
                mean_mae: None,
                std_mae: None,
                fit_seconds: Some(started.elapsed().as_secs_f64()),
                threshold,
                failure: Some(e.to_string()),
            },
        };
        progress(&row);
        rows.push(row);
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.3e}"))
}

/// Markdown table: problem, mode, MSE, mean MAE, std MAE, fit seconds, status.
pub fn render_table(rows: &[BenchmarkRow]) -> String {
    let mut s = String::from("| problem | mode | MSE | mean MAE | std MAE | fit seconds | status |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} |\n",
            r.problem,
            r.mode,
            cell(r.mse),
            cell(r.mean_mae),
            cell(r.std_mae),
            r.fit_seconds.map_or_else(|| "-".into(), |t| format!("{t:.2}")),
            r.failure.as_deref().map_or_else(|| "ok".to_owned(), |f| format!("FAILED: {}", f.replace('|', "/"))),
        ));
    }
    s
}

/// `benchmark.csv` and `benchmark.md` in `dir`.
pub fn write_benchmark(rows: &[BenchmarkRow], dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["problem", "mode", "mse", "mean_mae", "std_mae", "fit_seconds", "threshold", "status"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
    for r in rows {
        w.write_record([
            r.problem.to_string(),
            r.mode.to_string(),
            opt(r.mse),
            opt(r.mean_mae),
            opt(r.std_mae),
            opt(r.fit_seconds),
            format!("{:e}", r.threshold),
            r.failure.clone().unwrap_or_else(|| "ok".into()),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(dir, e.into_error()))?;
    write_atomic(&dir.join("benchmark.csv"), &bytes)?;
    write_atomic(&dir.join("benchmark.md"), render_table(rows).as_bytes())
}
