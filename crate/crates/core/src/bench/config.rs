//! TOML run configuration.
//!
//! Only `problem` and `mode` are required; everything else overrides the
//! problem's defaults. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator_fit::FitOptions;
use crate::pde_suite::{heat2d_full_scale, PdeProblem, ProblemId, SolverSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    DataDriven,
    Pc2,
    Pc2WithData,
}

impl FitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMode::DataDriven => "data_driven",
            FitMode::Pc2 => "pc2",
            FitMode::Pc2WithData => "pc2_with_data",
        }
    }

    pub fn needs_labels(self) -> bool {
        self != FitMode::Pc2
    }
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    /// Total degree of the stochastic basis.
    pub p: Option<usize>,
    /// Total degree of the spatio-temporal basis.
    pub q: Option<usize>,
    /// q-norm of hyperbolic truncation; `1.0` means total degree.
    pub hyperbolic_q: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub n_unlabeled: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSection {
    pub pde: Option<usize>,
    pub bc: Option<usize>,
    pub ic: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub ridge: Option<f64>,
    pub max_iter: Option<usize>,
    pub grad_tol: Option<f64>,
    pub damping: Option<f64>,
    pub cg_tol: Option<f64>,
    pub inexact_steps: Option<bool>,
    /// Relative weight of the labeled block in `pc2_with_data`.
    pub data_weight: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Spatial nodes per axis.
    pub nodes: Option<usize>,
    /// Time steps (Crank–Nicolson) or step size (Burgers, ADI).
    pub nt: Option<usize>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UqSection {
    pub enabled: Option<bool>,
    pub mcs_samples: Option<usize>,
    /// Cache file for the Monte Carlo reference; read if present and
    /// matching, written otherwise.
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub mode: FitMode,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Base seed; the train, test, unlabeled, virtual-point and Monte Carlo
    /// streams derive from it.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Full-resolution reference solver for the 2D heat problem.
    #[serde(default)]
    pub expensive: bool,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub virtual_points: PointsSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub uq: UqSection,
}

/// Independent seed streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub base: u64,
    pub train: u64,
    pub test: u64,
    pub unlabeled: u64,
    pub points: u64,
    pub mcs: u64,
}

impl Seeds {
    pub fn from_base(base: u64) -> Self {
        let derive = |k: u64| base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xD1B5_4A32_D192_ED03));
        Seeds {
            base,
            train: derive(1),
            test: derive(2),
            unlabeled: derive(3),
            points: derive(4),
            mcs: derive(5),
        }
    }
}

/// A configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub problem: PdeProblem,
    pub p: usize,
    pub q: usize,
    pub hyperbolic_q: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_unlabeled: usize,
    pub n_pde: usize,
    pub n_bc: usize,
    pub n_ic: usize,
    pub seeds: Seeds,
    pub fit: FitOptions,
    pub data_weight: f64,
    pub uq_enabled: bool,
    pub mcs_samples: usize,
}

impl RunConfig {
    pub fn new(problem: ProblemId, mode: FitMode) -> Self {
        RunConfig {
            problem,
            mode,
            out: None,
            seed: None,
            expensive: false,
            basis: BasisSection::default(),
            data: DataSection::default(),
            virtual_points: PointsSection::default(),
            fit: FitSection::default(),
            solver: SolverSection::default(),
            uq: UqSection::default(),
        }
    }

    /// Parses and validates; errors carry the line of the offending key.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(src, s.start));
            let msg = e.message().trim().to_owned();
            match line {
                Some(l) => Error::Config(format!("line {l}: {msg}")),
                None => Error::Config(msg),
            }
        })?;
        cfg.resolve().map_err(|e| match e {
            Error::Config(msg) => Error::Config(match key_line(src, &msg) {
                Some(l) => format!("line {l}: {msg}"),
                None => msg,
            }),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&src).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Fills defaults and checks every value. Messages name the offending
    /// key as `section.key`.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let mut problem = self.problem.problem()?;
        if self.expensive {
            problem = heat2d_full_scale(problem);
        }
        apply_solver(&mut problem, &self.solver)?;
        let d = problem.defaults.clone();

        let p = self.basis.p.unwrap_or(d.p);
        let q = self.basis.q.unwrap_or(d.q);
        check(p <= 10, "basis.p", "must be at most 10")?;
        check((1..=40).contains(&q), "basis.q", "must lie in 1..=40")?;
        let hyperbolic_q = match self.basis.hyperbolic_q {
            Some(v) => {
                check(v > 0.0 && v <= 1.0, "basis.hyperbolic_q", "must lie in (0, 1]")?;
                (v < 1.0).then_some(v)
            }
            None => d.hyperbolic_q,
        };

        let n_train = self.data.n_train.unwrap_or(d.n_train);
        let n_test = self.data.n_test.unwrap_or(d.n_test);
        let n_unlabeled = self.data.n_unlabeled.unwrap_or(d.n_unlabeled);
        if self.mode.needs_labels() {
            check(n_train >= 1, "data.n_train", "must be at least 1 for a mode that uses labeled data")?;
        }
        check(n_test >= 1, "data.n_test", "must be at least 1")?;
        if self.mode == FitMode::Pc2 {
            check(n_unlabeled >= 1, "data.n_unlabeled", "must be at least 1")?;
        }

        let n_pde = self.virtual_points.pde.unwrap_or(d.n_pde);
        let n_bc = self.virtual_points.bc.unwrap_or(d.n_bc);
        let n_ic = self.virtual_points.ic.unwrap_or(d.n_ic);
        check(n_pde >= 1, "virtual_points.pde", "must be at least 1")?;

        let mut fit = FitOptions::default();
        if let Some(v) = self.fit.ridge {
            check(v >= 0.0 && v.is_finite(), "fit.ridge", "must be finite and >= 0")?;
            fit.ridge = v;
        }
        if let Some(v) = self.fit.max_iter {
            check(v >= 1, "fit.max_iter", "must be at least 1")?;
            fit.max_iter = v;
        }
        if let Some(v) = self.fit.grad_tol {
            check(v > 0.0 && v.is_finite(), "fit.grad_tol", "must be positive")?;
            fit.grad_tol = v;
        }
        if let Some(v) = self.fit.damping {
            check(v >= 0.0 && v.is_finite(), "fit.damping", "must be finite and >= 0")?;
            fit.damping = v;
        }
        if let Some(v) = self.fit.cg_tol {
            check(v > 0.0 && v < 1.0, "fit.cg_tol", "must lie in (0, 1)")?;
            fit.cg_tol = v;
        }
        if let Some(v) = self.fit.inexact_steps {
            fit.inexact_steps = v;
        }
        let data_weight = self.fit.data_weight.unwrap_or(1.0);
        check(data_weight >= 0.0 && data_weight.is_finite(), "fit.data_weight", "must be finite and >= 0")?;
        let seeds = Seeds::from_base(self.seed.unwrap_or(d.seed));
        fit.seed = seeds.base;

        let mcs_samples = self.uq.mcs_samples.unwrap_or(d.mcs_samples);
        let uq_enabled = self.uq.enabled.unwrap_or(true);
        if uq_enabled {
            check(mcs_samples >= 2, "uq.mcs_samples", "must be at least 2")?;
        }

        Ok(ResolvedRun {
            config: self.clone(),
            problem,
            p,
            q,
            hyperbolic_q,
            n_train,
            n_test,
            n_unlabeled,
            n_pde,
            n_bc,
            n_ic,
            seeds,
            fit,
            data_weight,
            uq_enabled,
            mcs_samples,
        })
    }
}

fn apply_solver(problem: &mut PdeProblem, s: &SolverSection) -> Result<()> {
    if let Some(n) = s.nodes {
        check((3..=8193).contains(&n), "solver.nodes", "must lie in 3..=8193")?;
    }
    if let Some(dt) = s.dt {
        check(dt > 0.0 && dt <= 0.1, "solver.dt", "must lie in (0, 0.1]")?;
    }
    if let Some(nt) = s.nt {
        check((1..=100_000).contains(&nt), "solver.nt", "must lie in 1..=100000")?;
    }
    match &mut problem.solver {
        SolverSpec::CumulativeTrapezoid { nodes } => {
            check(s.nt.is_none() && s.dt.is_none(), "solver.dt", "the antiderivative solver has no time step")?;
            *nodes = s.nodes.unwrap_or(*nodes);
        }
        SolverSpec::CrankNicolson { nx, nt, .. } => {
            check(s.dt.is_none(), "solver.dt", "advection_diffusion takes solver.nt")?;
            *nx = s.nodes.unwrap_or(*nx);
            *nt = s.nt.unwrap_or(*nt);
        }
        SolverSpec::SemiImplicitBurgers { nx, dt, .. } => {
            check(s.nt.is_none(), "solver.nt", "burgers takes solver.dt")?;
            *nx = s.nodes.unwrap_or(*nx);
            *dt = s.dt.unwrap_or(*dt);
        }
        SolverSpec::Adi { m, dt, .. } => {
            check(s.nt.is_none(), "solver.nt", "heat2d takes solver.dt")?;
            *m = s.nodes.unwrap_or(*m);
            *dt = s.dt.unwrap_or(*dt);
        }
    }
    Ok(())
}

fn check(ok: bool, key: &str, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("`{key}` {what}")))
    }
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of the key named in a validation message (`section.key`), if present
/// in the source.
fn key_line(src: &str, msg: &str) -> Option<usize> {
    let key = msg.split('`').nth(1)?;
    let (section, leaf) = match key.split_once('.') {
        Some((s, l)) => (Some(s), l),
        None => (None, key),
    };
    let mut current: Option<&str> = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(h.trim());
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim();
        let hit = match section {
            Some(s) => (current == Some(s) && k == leaf) || (current.is_none() && k == key),
            None => current.is_none() && k == leaf,
        };
        if hit {
            return Some(i + 1);
        }
    }
    None
}
