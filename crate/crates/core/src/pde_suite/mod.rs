//! The four benchmark problems, their finite-difference reference solvers and
//! a Monte Carlo statistics oracle.
//!
//! Every problem draws its uncertainty from standard-normal `ξ` whose columns
//! are the retained modes of each KL field in order, followed by any scalar
//! variables.

mod dataset;
pub mod solvers;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{
    assemble_derivatives, assemble_phi, Axis, BlockKind, Coefficient, DiffOpSpec, PhysicalBox, VirtualPoints,
};
use crate::error::{Error, Result};
use crate::index_sets::MultiIndexSet;
use crate::operator_fit::{Pc2System, QuadraticPart};
use crate::random_field::{kl_decompose_with_modes, KLBasis, KernelSpec, KlGrid};

pub use dataset::{draw_xi, generate_dataset, generate_dataset_from_xi, mcs_statistics, Dataset, McsReference, Provenance};
use solvers::uniform_nodes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemId {
    Antiderivative,
    AdvectionDiffusion,
    Burgers,
    Heat2d,
}

impl ProblemId {
    pub const ALL: [ProblemId; 4] = [
        ProblemId::Antiderivative,
        ProblemId::AdvectionDiffusion,
        ProblemId::Burgers,
        ProblemId::Heat2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::Antiderivative => "antiderivative",
            ProblemId::AdvectionDiffusion => "advection_diffusion",
            ProblemId::Burgers => "burgers",
            ProblemId::Heat2d => "heat2d",
        }
    }

    pub fn problem(self) -> Result<PdeProblem> {
        match self {
            ProblemId::Antiderivative => problem_antiderivative(),
            ProblemId::AdvectionDiffusion => problem_advection_diffusion(),
            ProblemId::Burgers => problem_burgers(),
            ProblemId::Heat2d => problem_heat2d(),
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown problem `{s}` (expected one of antiderivative, advection_diffusion, burgers, heat2d)")))
    }
}

/// KL fields followed by independent standard-normal scalars.
#[derive(Debug, Clone)]
pub struct StochasticSpec {
    pub fields: Vec<Arc<KLBasis>>,
    pub scalars: usize,
}

impl StochasticSpec {
    pub fn r(&self) -> usize {
        self.fields.iter().map(|f| f.modes()).sum::<usize>() + self.scalars
    }

    fn field_offset(&self, handle: usize) -> usize {
        self.fields[..handle].iter().map(|f| f.modes()).sum()
    }

    /// Column of `ξ` holding scalar variable `k`.
    pub fn scalar_column(&self, k: usize) -> usize {
        self.field_offset(self.fields.len()) + k
    }

    fn check_xi(&self, xi: &DMatrix<f64>) -> Result<()> {
        if xi.ncols() != self.r() {
            return Err(Error::Shape(format!("xi has {} columns, the problem has r = {}", xi.ncols(), self.r())));
        }
        Ok(())
    }

    /// Values of field `handle` at `points` (spatial coordinates only), `n × N`.
    pub fn field_values(&self, handle: usize, points: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_xi(xi)?;
        let f = self
            .fields
            .get(handle)
            .ok_or_else(|| Error::Parameter(format!("no random field with handle {handle}")))?;
        let cols = xi.columns(self.field_offset(handle), f.modes()).into_owned();
        f.field_matrix(points, &cols)
    }
}

/// Deterministic part of a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `sin(π x_0)`.
    SinePi,
    /// `sin(2π x_0) sin(2π x_1)`.
    SineTwoPi2d,
}

impl Profile {
    fn eval(self, p: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match self {
            Profile::SinePi => (PI * p[0]).sin(),
            Profile::SineTwoPi2d => (2.0 * PI * p[0]).sin() * (2.0 * PI * p[1]).sin(),
        }
    }
}

/// Right-hand side of a constraint block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Zero,
    /// Value of a KL field at the spatial part of the point.
    Field(usize),
    Profile(Profile),
    /// `ξ_scalar · profile`.
    ScaledProfile { profile: Profile, scalar: usize },
}

#[derive(Debug, Clone)]
pub struct Constraint {
    /// Also decides point placement: interior, boundary faces or initial slice.
    pub kind: BlockKind,
    pub op: DiffOpSpec,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDefaults {
    pub p: usize,
    pub q: usize,
    /// `Some(q_norm)` selects hyperbolic truncation of the stochastic set.
    pub hyperbolic_q: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    /// Unlabeled samples for the physics-constrained fit.
    pub n_unlabeled: usize,
    pub n_pde: usize,
    pub n_bc: usize,
    pub n_ic: usize,
    pub mcs_samples: usize,
    pub seed: u64,
}

/// Reference solver and its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverSpec {
    CumulativeTrapezoid { nodes: usize },
    CrankNicolson { nx: usize, nt: usize, diffusion: f64 },
    SemiImplicitBurgers { nx: usize, dt: f64, viscosity: f64, t_end: f64 },
    Adi { m: usize, dt: f64, alpha: f64 },
}

impl SolverSpec {
    pub fn id(&self) -> &'static str {
        match self {
            SolverSpec::CumulativeTrapezoid { .. } => "cumulative-trapezoid",
            SolverSpec::CrankNicolson { .. } => "crank-nicolson-central",
            SolverSpec::SemiImplicitBurgers { .. } => "cn-diffusion-ab2-advection",
            SolverSpec::Adi { .. } => "peaceman-rachford-adi",
        }
    }

    /// Spatial nodes of the solver grid, `n × d_space`, first axis fastest.
    fn spatial_nodes(&self) -> DMatrix<f64> {
        match *self {
            SolverSpec::CumulativeTrapezoid { nodes: m }
            | SolverSpec::CrankNicolson { nx: m, .. }
            | SolverSpec::SemiImplicitBurgers { nx: m, .. } => DMatrix::from_vec(m, 1, uniform_nodes(0.0, 1.0, m)),
            SolverSpec::Adi { m, .. } => KlGrid::unit_square(m).points(),
        }
    }
}

/// Tensor grid of evaluation points, first axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGrid {
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub id: ProblemId,
    pub domain: PhysicalBox,
    pub stochastic: StochasticSpec,
    pub constraints: Vec<Constraint>,
    pub defaults: ProblemDefaults,
    pub solver: SolverSpec,
    pub query: QueryGrid,
    /// Times at which UQ statistics are reported (`None`: every query time).
    pub uq_times: Option<Vec<f64>>,
}

impl PdeProblem {
    pub fn name(&self) -> &'static str {
        self.id.as_str()
    }

    pub fn r(&self) -> usize {
        self.stochastic.r()
    }

    pub fn axis_names(&self) -> Vec<String> {
        self.domain.axes.iter().map(|a| a.name.clone()).collect()
    }

    /// Axes that are not time for the reference solver.
    fn solver_spatial_axes(&self) -> Vec<usize> {
        match self.id {
            ProblemId::Antiderivative => vec![0],
            _ => self.domain.spatial_axes().collect(),
        }
    }

    fn solver_time_axis(&self) -> Option<usize> {
        match self.id {
            ProblemId::Antiderivative => None,
            _ => self.domain.time_axis,
        }
    }

    /// Tensor grid over the box with `counts[k]` nodes on axis `k`.
    pub fn grid_points(&self, counts: &[usize]) -> Result<DMatrix<f64>> {
        if counts.len() != self.domain.dim() || counts.iter().any(|&c| c < 2) {
            return Err(Error::Parameter(format!("grid counts {counts:?} need one entry >= 2 per axis")));
        }
        let axes: Vec<Vec<f64>> = self
            .domain
            .axes
            .iter()
            .zip(counts)
            .map(|(a, &c)| uniform_nodes(a.lower, a.upper, c))
            .collect();
        let n: usize = counts.iter().product();
        let mut pts = DMatrix::zeros(n, axes.len());
        for i in 0..n {
            let mut rest = i;
            for (k, ax) in axes.iter().enumerate() {
                pts[(i, k)] = ax[rest % ax.len()];
                rest /= ax.len();
            }
        }
        Ok(pts)
    }

    pub fn query_points(&self) -> DMatrix<f64> {
        self.grid_points(&self.query.counts).expect("problem query grids are valid")
    }

    /// Query points restricted to the UQ report times.
    pub fn uq_points(&self) -> DMatrix<f64> {
        let all = self.query_points();
        let (Some(times), Some(t)) = (&self.uq_times, self.domain.time_axis) else {
            return all;
        };
        let rows: Vec<usize> = (0..all.nrows())
            .filter(|&i| times.iter().any(|&s| (all[(i, t)] - s).abs() <= 1e-12))
            .collect();
        all.select_rows(&rows)
    }

    /// Points at which input fields are recorded in a dataset: the spatial
    /// projection of the query grid.
    pub fn input_points(&self) -> DMatrix<f64> {
        let axes = self.solver_spatial_axes();
        let counts: Vec<usize> = axes.iter().map(|&a| self.query.counts[a]).collect();
        let nodes: Vec<Vec<f64>> = axes
            .iter()
            .zip(&counts)
            .map(|(&a, &c)| uniform_nodes(self.domain.axes[a].lower, self.domain.axes[a].upper, c))
            .collect();
        let n: usize = counts.iter().product();
        DMatrix::from_fn(n, axes.len(), |i, k| {
            let stride: usize = counts[..k].iter().product();
            nodes[k][(i / stride) % counts[k]]
        })
    }

    /// Splits a point into solver spatial coordinates and time.
    fn split(&self, points: &DMatrix<f64>, i: usize) -> (Vec<f64>, f64) {
        let x = self.solver_spatial_axes().iter().map(|&a| points[(i, a)]).collect();
        let t = self.solver_time_axis().map_or(0.0, |a| points[(i, a)]);
        (x, t)
    }

    pub(crate) fn check_points(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.domain.dim() {
            return Err(Error::Shape(format!(
                "points have {} coordinates, {} has {} axes",
                points.ncols(),
                self.name(),
                self.domain.dim()
            )));
        }
        let map = self.domain.domain_map();
        for i in 0..points.nrows() {
            let p: Vec<f64> = points.row(i).iter().copied().collect();
            if !map.contains(&p) {
                return Err(Error::Domain(format!("point {p:?} lies outside the {} domain", self.name())));
            }
        }
        Ok(())
    }

    /// Input field on the solver grid for each row of `xi`, `nodes × N`.
    pub fn solver_inputs(&self, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.stochastic.check_xi(xi)?;
        let nodes = self.solver.spatial_nodes();
        if self.stochastic.fields.is_empty() {
            return Ok(DMatrix::zeros(nodes.nrows(), xi.nrows()));
        }
        self.stochastic.field_values(0, &nodes, xi)
    }

    /// Reference solution for each row of `xi` at `points`, `n × N`; field
    /// inputs are synthesized on the solver grid.
    pub fn solve(&self, xi: &DMatrix<f64>, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_points(points)?;
        let inputs = self.solver_inputs(xi)?;
        let mut out = DMatrix::zeros(points.nrows(), xi.nrows());
        for j in 0..xi.nrows() {
            let col = self.solve_sample(inputs.column(j).as_slice(), xi, j, points)?;
            out.column_mut(j).copy_from_slice(&col);
        }
        Ok(out)
    }

    /// Solves row `j` of `xi` given its input field on the solver grid.
    pub(crate) fn solve_sample(&self, input: &[f64], xi: &DMatrix<f64>, j: usize, points: &DMatrix<f64>) -> Result<Vec<f64>> {
        let row: Vec<f64> = xi.row(j).iter().copied().collect();
        self.solve_with_input(input, &row, points).map_err(|reason| Error::Solver {
            sample: j,
            xi: row,
            reason,
        })
    }

    /// Runs the reference solver with the input field given on the solver
    /// grid nodes (bypassing the KL synthesis).
    pub fn solve_with_input(&self, input: &[f64], xi: &[f64], points: &DMatrix<f64>) -> std::result::Result<Vec<f64>, String> {
        let time_axis = self.solver_time_axis();
        let times: Vec<f64> = match time_axis {
            Some(a) => {
                let mut t: Vec<f64> = (0..points.nrows()).map(|i| points[(i, a)]).collect();
                t.sort_by(f64::total_cmp);
                t.dedup();
                t
            }
            None => Vec::new(),
        };
        let values: Vec<f64> = match self.solver {
            SolverSpec::CumulativeTrapezoid { nodes } => {
                let s = solvers::antiderivative(input, 1.0 / (nodes - 1) as f64);
                let sol = solvers::GridSolution {
                    lower: vec![0.0],
                    upper: vec![1.0],
                    nodes: vec![nodes],
                    dt: 0.0,
                    steps: 0,
                    levels: [(0, s)].into_iter().collect(),
                };
                return Ok((0..points.nrows()).map(|i| sol.eval(&[points[(i, 0)]], 0.0)).collect());
            }
            SolverSpec::CrankNicolson { nx, nt, diffusion } => {
                let sol = solvers::advection_diffusion(input, diffusion, nx, nt, &times)?;
                (0..points.nrows())
                    .map(|i| {
                        let (x, t) = self.split(points, i);
                        sol.eval(&x, t)
                    })
                    .collect()
            }
            SolverSpec::SemiImplicitBurgers { nx, dt, viscosity, t_end } => {
                let sol = solvers::burgers(input, viscosity, t_end, nx, dt, &times)?;
                (0..points.nrows())
                    .map(|i| {
                        let (x, t) = self.split(points, i);
                        sol.eval(&x, t)
                    })
                    .collect()
            }
            SolverSpec::Adi { m, dt, alpha } => {
                let amplitude = xi[self.stochastic.scalar_column(0)];
                let sol = solvers::heat2d(input, amplitude, alpha, m, dt, &times)?;
                (0..points.nrows())
                    .map(|i| {
                        let (x, t) = self.split(points, i);
                        sol.eval(&x, t)
                    })
                    .collect()
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err("non-finite interpolated solution".into());
        }
        Ok(values)
    }

    /// Target values of constraint `c` at `points`, `n × N`.
    pub fn target_values(&self, c: &Constraint, points: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = points.nrows();
        let big_n = xi.nrows();
        Ok(match c.target {
            Target::Zero => DMatrix::zeros(n, big_n),
            Target::Field(h) => {
                let spatial = points.select_columns(&self.field_axes());
                self.stochastic.field_values(h, &spatial, xi)?
            }
            Target::Profile(p) => {
                let v: Vec<f64> = (0..n).map(|i| p.eval(points.row(i).iter().copied().collect::<Vec<_>>().as_slice())).collect();
                DMatrix::from_fn(n, big_n, |i, _| v[i])
            }
            Target::ScaledProfile { profile, scalar } => {
                let col = self.stochastic.scalar_column(scalar);
                let v: Vec<f64> = (0..n)
                    .map(|i| profile.eval(points.row(i).iter().copied().collect::<Vec<_>>().as_slice()))
                    .collect();
                DMatrix::from_fn(n, big_n, |i, j| v[i] * xi[(j, col)])
            }
        })
    }

    fn field_axes(&self) -> Vec<usize> {
        self.solver_spatial_axes()
    }

    /// Assembles the physics-constrained system at `points` for the unlabeled
    /// samples `xi` (`N × r`).
    pub fn build_pc2_system(
        &self,
        set_a: &MultiIndexSet,
        set_b: &MultiIndexSet,
        xi: &DMatrix<f64>,
        points: &VirtualPoints,
    ) -> Result<Pc2System> {
        self.stochastic.check_xi(xi)?;
        if set_a.dim() != self.r() || set_b.dim() != self.domain.dim() {
            return Err(Error::Shape(format!(
                "index sets have dimensions ({}, {}), problem needs ({}, {})",
                set_a.dim(),
                set_b.dim(),
                self.r(),
                self.domain.dim()
            )));
        }
        let psi = crate::design::assemble_psi(set_a, xi)?;
        let map = self.domain.domain_map();
        let mut system = Pc2System::new(psi, set_b.len())?;
        for c in &self.constraints {
            let pts = match c.kind {
                BlockKind::Pde => &points.pde,
                BlockKind::Bc => &points.bc,
                BlockKind::Ic => &points.ic,
                BlockKind::Data => return Err(Error::Parameter("data blocks are added with augment_with_data".into())),
            };
            if pts.nrows() == 0 {
                continue;
            }
            let field_values = if c.op.has_field_terms() {
                let spatial = pts.select_columns(&self.field_axes());
                Some(
                    (0..self.stochastic.fields.len())
                        .map(|h| self.stochastic.field_values(h, &spatial, xi))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            let design = assemble_phi(set_b, pts, &map, &c.op, field_values.as_deref(), c.kind)?;
            let quadratic = match &c.op.quadratic {
                Some(qt) => {
                    let mut mats = assemble_derivatives(set_b, pts, &map, &[qt.left.clone(), qt.right.clone()])?;
                    let right = mats.pop().expect("two blocks");
                    let left = mats.pop().expect("two blocks");
                    Some(QuadraticPart {
                        coefficient: qt.coefficient,
                        left,
                        right,
                    })
                }
                None => None,
            };
            let target = self.target_values(c, pts, xi)?;
            system.add_block(design, target, quadratic)?;
        }
        Ok(system)
    }
}

fn kl_field(sigma: f64, ell: f64, mean: f64, grid: KlGrid, modes: usize) -> Result<Arc<KLBasis>> {
    Ok(Arc::new(kl_decompose_with_modes(&KernelSpec::new(sigma, ell, mean)?, &grid, modes)?))
}

/// Nyström grid of the 1D input fields.
const KL_GRID_1D: usize = 200;
/// Nyström grid (per axis) of the 2D source field.
const KL_GRID_2D: usize = 64;

/// `ds/dx = u(x)`, `s(0) = 0`, `u` a zero-mean RBF field (σ = 1, ℓ = 0.2).
/// The x axis doubles as the evolution axis so that `s(0) = 0` is an
/// initial condition.
pub fn problem_antiderivative() -> Result<PdeProblem> {
    let domain = PhysicalBox::new(vec![Axis::new("x", 0.0, 1.0)], Some(0))?;
    let u = kl_field(1.0, 0.2, 0.0, KlGrid::unit_interval(KL_GRID_1D), 6)?;
    Ok(PdeProblem {
        id: ProblemId::Antiderivative,
        domain,
        stochastic: StochasticSpec {
            fields: vec![u],
            scalars: 0,
        },
        constraints: vec![
            Constraint {
                kind: BlockKind::Pde,
                op: DiffOpSpec::derivative(vec![1]),
                target: Target::Field(0),
            },
            Constraint {
                kind: BlockKind::Ic,
                op: DiffOpSpec::identity(1),
                target: Target::Zero,
            },
        ],
        defaults: ProblemDefaults {
            p: 3,
            q: 10,
            hyperbolic_q: None,
            n_train: 100,
            n_test: 1000,
            n_unlabeled: 1000,
            n_pde: 60,
            n_bc: 0,
            n_ic: 1,
            mcs_samples: 10_000,
            seed: 11,
        },
        solver: SolverSpec::CumulativeTrapezoid { nodes: 1001 },
        query: QueryGrid { counts: vec![101] },
        uq_times: None,
    })
}

/// `s_t = D s_xx - v(x) s_x`, `D = 0.1`, `v` an RBF field with mean 1
/// (σ = 0.05, ℓ = 0.2), `s(x, 0) = sin(πx)`, zero Dirichlet ends.
pub fn problem_advection_diffusion() -> Result<PdeProblem> {
    let diffusion = 0.1;
    let domain = PhysicalBox::new(vec![Axis::new("x", 0.0, 1.0), Axis::new("t", 0.0, 1.0)], Some(1))?;
    let v = kl_field(0.05, 0.2, 1.0, KlGrid::unit_interval(KL_GRID_1D), 6)?;
    let op = DiffOpSpec::derivative(vec![0, 1])
        .with_term(Coefficient::Constant(-diffusion), vec![2, 0])
        .with_term(Coefficient::Field { handle: 0, scale: 1.0 }, vec![1, 0]);
    Ok(PdeProblem {
        id: ProblemId::AdvectionDiffusion,
        domain,
        stochastic: StochasticSpec {
            fields: vec![v],
            scalars: 0,
        },
        constraints: dirichlet_constraints(op, Target::Zero, Target::Profile(Profile::SinePi), 2),
        defaults: ProblemDefaults {
            p: 3,
            q: 14,
            hyperbolic_q: None,
            n_train: 100,
            n_test: 1000,
            n_unlabeled: 1000,
            n_pde: 400,
            n_bc: 60,
            n_ic: 60,
            mcs_samples: 10_000,
            seed: 21,
        },
        solver: SolverSpec::CrankNicolson {
            nx: 401,
            nt: 401,
            diffusion,
        },
        query: QueryGrid { counts: vec![51, 51] },
        uq_times: None,
    })
}

/// `s_t + s s_x = ν s_xx + f(x)`, `ν = 0.001`, `f` a zero-mean RBF field
/// (σ = 0.1, ℓ = 0.2), `t ∈ [0, 0.3]`, `s(x, 0) = sin(πx)`, zero Dirichlet ends.
pub fn problem_burgers() -> Result<PdeProblem> {
    let viscosity = 0.001;
    let t_end = 0.3;
    let domain = PhysicalBox::new(vec![Axis::new("x", 0.0, 1.0), Axis::new("t", 0.0, t_end)], Some(1))?;
    let f = kl_field(0.1, 0.2, 0.0, KlGrid::unit_interval(KL_GRID_1D), 6)?;
    let op = DiffOpSpec::derivative(vec![0, 1])
        .with_term(Coefficient::Constant(-viscosity), vec![2, 0])
        .with_quadratic(1.0, vec![0, 0], vec![1, 0]);
    Ok(PdeProblem {
        id: ProblemId::Burgers,
        domain,
        stochastic: StochasticSpec {
            fields: vec![f],
            scalars: 0,
        },
        constraints: dirichlet_constraints(op, Target::Field(0), Target::Profile(Profile::SinePi), 2),
        defaults: ProblemDefaults {
            p: 3,
            q: 23,
            hyperbolic_q: None,
            n_train: 100,
            n_test: 1000,
            n_unlabeled: 1000,
            n_pde: 800,
            n_bc: 80,
            n_ic: 80,
            mcs_samples: 10_000,
            seed: 31,
        },
        solver: SolverSpec::SemiImplicitBurgers {
            nx: 513,
            dt: 2e-4,
            viscosity,
            t_end,
        },
        query: QueryGrid { counts: vec![33, 51] },
        uq_times: None,
    })
}

/// `s_t = α (s_xx + s_yy) + f(x, y)`, `α = 0.01`, `f` a zero-mean 2D RBF field
/// (σ = 1, ℓ = 0.2, 20 modes), `s(x, y, 0) = A sin(2πx) sin(2πy)` with
/// `A ~ N(0, 1)`, zero Dirichlet boundary. The defaults are the desk-scale
/// variant (33 × 33 grid, `dt = 0.01`); see [`heat2d_full_scale`].
pub fn problem_heat2d() -> Result<PdeProblem> {
    let alpha = 0.01;
    let domain = PhysicalBox::new(
        vec![Axis::new("x", 0.0, 1.0), Axis::new("y", 0.0, 1.0), Axis::new("t", 0.0, 1.0)],
        Some(2),
    )?;
    let f = kl_field(1.0, 0.2, 0.0, KlGrid::unit_square(KL_GRID_2D), 20)?;
    let op = DiffOpSpec::derivative(vec![0, 0, 1])
        .with_term(Coefficient::Constant(-alpha), vec![2, 0, 0])
        .with_term(Coefficient::Constant(-alpha), vec![0, 2, 0]);
    Ok(PdeProblem {
        id: ProblemId::Heat2d,
        domain,
        stochastic: StochasticSpec {
            fields: vec![f],
            scalars: 1,
        },
        constraints: dirichlet_constraints(
            op,
            Target::Field(0),
            Target::ScaledProfile {
                profile: Profile::SineTwoPi2d,
                scalar: 0,
            },
            3,
        ),
        defaults: ProblemDefaults {
            p: 4,
            q: 16,
            hyperbolic_q: Some(0.9),
            n_train: 2500,
            n_test: 100,
            n_unlabeled: 5000,
            n_pde: 3000,
            n_bc: 400,
            n_ic: 400,
            mcs_samples: 1000,
            seed: 41,
        },
        solver: SolverSpec::Adi { m: 33, dt: 0.01, alpha },
        query: QueryGrid { counts: vec![17, 17, 17] },
        uq_times: Some(vec![1.0]),
    })
}

/// Full-resolution reference solver (65 × 65 nodes, `dt = 5e-3`) and the
/// 10,000-sample Monte Carlo reference.
pub fn heat2d_full_scale(mut problem: PdeProblem) -> PdeProblem {
    if let SolverSpec::Adi { alpha, .. } = problem.solver {
        problem.solver = SolverSpec::Adi { m: 65, dt: 5e-3, alpha };
        problem.defaults.mcs_samples = 10_000;
    }
    problem
}

fn dirichlet_constraints(pde: DiffOpSpec, pde_target: Target, ic_target: Target, dim: usize) -> Vec<Constraint> {
    vec![
        Constraint {
            kind: BlockKind::Pde,
            op: pde,
            target: pde_target,
        },
        Constraint {
            kind: BlockKind::Bc,
            op: DiffOpSpec::identity(dim),
            target: Target::Zero,
        },
        Constraint {
            kind: BlockKind::Ic,
            op: DiffOpSpec::identity(dim),
            target: ic_target,
        },
    ]
}
