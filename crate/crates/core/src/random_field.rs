//! Gaussian random fields with the squared-exponential (RBF) covariance
//! `k(x, x') = σ² exp(-|x - x'|² / (2ℓ²))`, discretized by a truncated
//! Karhunen–Loève expansion.
//!
//! The covariance integral operator is discretized by the Nyström method on a
//! uniform grid with trapezoid weights: the symmetric matrix `W^½ K W^½` is
//! diagonalized and `φ = W^{-½} v`, which makes the eigenfunctions orthonormal
//! under the quadrature weight. The RBF kernel factorizes over coordinates, so
//! on a tensor grid the 2D eigenpairs are products of 1D eigenpairs and only the
//! 1D problems are ever solved.
//!
//! Off-grid values come from the Nyström extension
//! `φ(x) = (1/μ) Σ_k w_k k(x, x_k) φ(x_k)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::codec::{Reader, Truncated, Writer};
use crate::error::{Error, Result};

/// Eigenvalues below `-NEGATIVE_TOLERANCE · λ_max` are reported as clipped.
const NEGATIVE_TOLERANCE: f64 = 1e-10;
/// Relative distance under which an evaluation point is snapped to a node.
const SNAP_TOLERANCE: f64 = 1e-12;

pub type MeanFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Mean {
    Constant(f64),
    Function(MeanFn),
    /// Multilinear interpolation of the mean stored on the grid (what a
    /// function mean becomes after a save/load round trip).
    Tabulated,
}

impl fmt::Debug for Mean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mean::Constant(c) => write!(f, "Constant({c})"),
            Mean::Function(_) => f.write_str("Function(..)"),
            Mean::Tabulated => f.write_str("Tabulated"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub sigma: f64,
    pub ell: f64,
    pub mean: Mean,
}

impl KernelSpec {
    pub fn new(sigma: f64, ell: f64, mean: f64) -> Result<Self> {
        let k = KernelSpec {
            sigma,
            ell,
            mean: Mean::Constant(mean),
        };
        k.validate()?;
        Ok(k)
    }

    pub fn with_mean_fn(sigma: f64, ell: f64, mean: MeanFn) -> Result<Self> {
        let k = KernelSpec {
            sigma,
            ell,
            mean: Mean::Function(mean),
        };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Parameter(format!("kernel sigma must be positive, got {}", self.sigma)));
        }
        if !(self.ell.is_finite() && self.ell > 0.0) {
            return Err(Error::Parameter(format!("kernel length scale must be positive, got {}", self.ell)));
        }
        if let Mean::Constant(c) = self.mean {
            if !c.is_finite() {
                return Err(Error::Parameter("kernel mean must be finite".into()));
            }
        }
        Ok(())
    }

    /// Unit-variance one-coordinate factor of the kernel.
    fn factor(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        (-d * d / (2.0 * self.ell * self.ell)).exp()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.sigma * self.sigma * x.iter().zip(y).map(|(&a, &b)| self.factor(a, b)).product::<f64>()
    }
}

/// Uniform tensor grid on an interval or a rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KlGrid {
    Line { lower: f64, upper: f64, m: usize },
    Rectangle { lower: [f64; 2], upper: [f64; 2], m: usize },
}

impl KlGrid {
    pub fn unit_interval(m: usize) -> Self {
        KlGrid::Line {
            lower: 0.0,
            upper: 1.0,
            m,
        }
    }

    pub fn unit_square(m: usize) -> Self {
        KlGrid::Rectangle {
            lower: [0.0, 0.0],
            upper: [1.0, 1.0],
            m,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            KlGrid::Line { .. } => 1,
            KlGrid::Rectangle { .. } => 2,
        }
    }

    fn axis_bounds(&self) -> Vec<(f64, f64, usize)> {
        match *self {
            KlGrid::Line { lower, upper, m } => vec![(lower, upper, m)],
            KlGrid::Rectangle { lower, upper, m } => vec![(lower[0], upper[0], m), (lower[1], upper[1], m)],
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            KlGrid::Line { m, .. } => m,
            KlGrid::Rectangle { m, .. } => m * m,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points, `len × dim`, first axis fastest.
    pub fn points(&self) -> DMatrix<f64> {
        let axes: Vec<Vec<f64>> = self.axis_bounds().iter().map(|&(a, b, m)| uniform_nodes(a, b, m)).collect();
        match axes.len() {
            1 => DMatrix::from_column_slice(axes[0].len(), 1, &axes[0]),
            _ => {
                let m0 = axes[0].len();
                DMatrix::from_fn(self.len(), 2, |i, k| if k == 0 { axes[0][i % m0] } else { axes[1][i / m0] })
            }
        }
    }

    fn validate(&self) -> Result<()> {
        for (a, b, m) in self.axis_bounds() {
            if m < 2 {
                return Err(Error::Parameter(format!("KL grid needs at least 2 points per axis, got {m}")));
            }
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::Parameter(format!("KL grid has invalid bounds [{a}, {b}]")));
            }
        }
        Ok(())
    }
}

fn uniform_nodes(a: f64, b: f64, m: usize) -> Vec<f64> {
    let h = (b - a) / (m - 1) as f64;
    (0..m).map(|i| if i + 1 == m { b } else { a + i as f64 * h }).collect()
}

fn trapezoid_weights(a: f64, b: f64, m: usize) -> Vec<f64> {
    let h = (b - a) / (m - 1) as f64;
    let mut w = vec![h; m];
    w[0] = 0.5 * h;
    w[m - 1] = 0.5 * h;
    w
}

/// Full Nyström eigendecomposition of the unit-variance kernel along one axis.
#[derive(Debug, Clone, PartialEq)]
struct AxisFactor {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Descending; non-positive values are clipped to zero.
    mu: Vec<f64>,
    /// `m × m`, column `a` is the eigenfunction of `mu[a]` on the nodes.
    phi: DMatrix<f64>,
    clipped: bool,
}

impl AxisFactor {
    fn new(kernel: &KernelSpec, a: f64, b: f64, m: usize) -> Self {
        let nodes = uniform_nodes(a, b, m);
        let weights = trapezoid_weights(a, b, m);
        let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let sym = DMatrix::from_fn(m, m, |i, j| sw[i] * kernel.factor(nodes[i], nodes[j]) * sw[j]);
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let mut clipped = false;
        let mut mu = Vec::with_capacity(m);
        let mut phi = DMatrix::zeros(m, m);
        for (col, &e) in order.iter().enumerate() {
            let v = eig.eigenvalues[e];
            if v < -NEGATIVE_TOLERANCE * top {
                clipped = true;
            }
            mu.push(v.max(0.0));
            // Sign convention: the largest-magnitude entry is positive.
            let vec = eig.eigenvectors.column(e);
            let pivot = (0..m).fold(0, |best, i| if vec[i].abs() > vec[best].abs() + 1e-14 { i } else { best });
            let sign = if vec[pivot] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..m {
                phi[(i, col)] = sign * vec[i] / sw[i];
            }
        }
        AxisFactor {
            nodes,
            weights,
            mu,
            phi,
            clipped,
        }
    }

    fn lower(&self) -> f64 {
        self.nodes[0]
    }

    fn upper(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Index of the node `x` coincides with, if any.
    fn snap(&self, x: f64) -> Option<usize> {
        let (a, b) = (self.lower(), self.upper());
        let m = self.nodes.len();
        let pos = (x - a) / (b - a) * (m - 1) as f64;
        let k = pos.round();
        if k < 0.0 || k > (m - 1) as f64 {
            return None;
        }
        let k = k as usize;
        ((x - self.nodes[k]).abs() <= SNAP_TOLERANCE * (b - a)).then_some(k)
    }

    /// Values of eigenfunctions `modes` at `x` by Nyström extension.
    fn eval(&self, kernel: &KernelSpec, x: f64, modes: &[usize], out: &mut [f64]) {
        if let Some(k) = self.snap(x) {
            for (o, &a) in out.iter_mut().zip(modes) {
                *o = self.phi[(k, a)];
            }
            return;
        }
        let kw: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&xk, &w)| w * kernel.factor(x, xk))
            .collect();
        for (o, &a) in out.iter_mut().zip(modes) {
            let s: f64 = kw.iter().enumerate().map(|(k, &v)| v * self.phi[(k, a)]).sum();
            *o = s / self.mu[a];
        }
    }

    fn write(&self, w: &mut Writer) {
        w.f64s(&self.nodes);
        w.f64s(&self.weights);
        w.f64s(&self.mu);
        w.matrix(&self.phi);
        w.u8(self.clipped as u8);
    }

    fn read(r: &mut Reader) -> Result<Self, Truncated> {
        Ok(AxisFactor {
            nodes: r.f64s()?,
            weights: r.f64s()?,
            mu: r.f64s()?,
            phi: r.matrix()?,
            clipped: r.u8()? != 0,
        })
    }
}

/// Retained eigenpairs and mean of a discretized Gaussian random field.
#[derive(Debug, Clone)]
pub struct KLBasis {
    kernel: KernelSpec,
    grid: KlGrid,
    factors: Vec<AxisFactor>,
    /// For each retained mode, the 1D factor mode index per axis.
    modes: Vec<Vec<usize>>,
    eigenvalues: Vec<f64>,
    /// `grid.len() × r`.
    eigenfunctions: DMatrix<f64>,
    mean_on_grid: Vec<f64>,
    captured_fraction: f64,
    clipped: bool,
}

enum Retain {
    Fraction(f64),
    Modes(usize),
}

/// Retains the smallest number of modes whose eigenvalues capture at least
/// `target_fraction` of the total variance. A target of exactly 1 keeps every
/// mode with a positive eigenvalue.
pub fn kl_decompose(kernel: &KernelSpec, grid: &KlGrid, target_fraction: f64) -> Result<KLBasis> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "target fraction must lie in (0, 1], got {target_fraction}"
        )));
    }
    decompose(kernel, grid, Retain::Fraction(target_fraction))
}

/// Retains exactly `modes` modes and reports the variance fraction they capture.
pub fn kl_decompose_with_modes(kernel: &KernelSpec, grid: &KlGrid, modes: usize) -> Result<KLBasis> {
    if modes == 0 {
        return Err(Error::Parameter("at least one KL mode must be retained".into()));
    }
    decompose(kernel, grid, Retain::Modes(modes))
}

fn decompose(kernel: &KernelSpec, grid: &KlGrid, retain: Retain) -> Result<KLBasis> {
    kernel.validate()?;
    grid.validate()?;
    let factors: Vec<AxisFactor> = grid
        .axis_bounds()
        .iter()
        .map(|&(a, b, m)| AxisFactor::new(kernel, a, b, m))
        .collect();
    let var = kernel.sigma * kernel.sigma;
    // Candidate eigenvalues: products over axes, sorted descending with ties
    // broken by the (axis-major) mode tuple.
    let mut candidates: Vec<(f64, Vec<usize>)> = match factors.len() {
        1 => (0..factors[0].mu.len()).map(|a| (var * factors[0].mu[a], vec![a])).collect(),
        _ => {
            let (m0, m1) = (factors[0].mu.len(), factors[1].mu.len());
            let mut c = Vec::with_capacity(m0 * m1);
            for a in 0..m0 {
                for b in 0..m1 {
                    c.push((var * factors[0].mu[a] * factors[1].mu[b], vec![a, b]));
                }
            }
            c
        }
    };
    candidates.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(&y.1)));
    let positive = candidates.iter().take_while(|c| c.0 > 0.0).count();
    let total: f64 = candidates.iter().rev().map(|c| c.0).sum();
    if positive == 0 || total <= 0.0 {
        return Err(Error::Parameter("kernel matrix has no positive eigenvalue".into()));
    }
    let r = match retain {
        Retain::Modes(r) => {
            if r > positive {
                return Err(Error::Parameter(format!(
                    "requested {r} KL modes but only {positive} eigenvalues are positive"
                )));
            }
            r
        }
        Retain::Fraction(target) => {
            // tail[r] = Σ_{i >= r} λ_i, accumulated from the small end.
            let mut tail = vec![0.0; candidates.len() + 1];
            for i in (0..candidates.len()).rev() {
                tail[i] = tail[i + 1] + candidates[i].0;
            }
            let allowed = (1.0 - target) * total;
            (1..=positive).find(|&r| tail[r] <= allowed).unwrap_or(positive)
        }
    };
    let retained = &candidates[..r];
    let captured: f64 = retained.iter().map(|c| c.0).sum::<f64>() / total;
    let grid_pts = grid.points();
    let n = grid.len();
    let mut eigenfunctions = DMatrix::zeros(n, r);
    let m0 = factors[0].nodes.len();
    for (col, (_, idx)) in retained.iter().enumerate() {
        for i in 0..n {
            eigenfunctions[(i, col)] = match idx.len() {
                1 => factors[0].phi[(i, idx[0])],
                _ => factors[0].phi[(i % m0, idx[0])] * factors[1].phi[(i / m0, idx[1])],
            };
        }
    }
    let mean_on_grid = (0..n)
        .map(|i| {
            let p: Vec<f64> = grid_pts.row(i).iter().copied().collect();
            match &kernel.mean {
                Mean::Constant(c) => *c,
                Mean::Function(f) => f(&p),
                Mean::Tabulated => 0.0,
            }
        })
        .collect();
    let clipped = factors.iter().any(|f| f.clipped);
    Ok(KLBasis {
        kernel: kernel.clone(),
        grid: grid.clone(),
        factors,
        modes: retained.iter().map(|c| c.1.clone()).collect(),
        eigenvalues: retained.iter().map(|c| c.0).collect(),
        eigenfunctions,
        mean_on_grid,
        captured_fraction: captured,
        clipped,
    })
}

impl KLBasis {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn grid(&self) -> &KlGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Number of retained modes `r`.
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn mean_on_grid(&self) -> &[f64] {
        &self.mean_on_grid
    }

    pub fn captured_fraction(&self) -> f64 {
        self.captured_fraction
    }

    /// Whether significantly negative eigenvalues of the discrete kernel were
    /// clipped to zero.
    pub fn clipped(&self) -> bool {
        self.clipped
    }

    /// Quadrature weights of the grid (tensor trapezoid).
    pub fn weights(&self) -> Vec<f64> {
        match self.factors.len() {
            1 => self.factors[0].weights.clone(),
            _ => {
                let m0 = self.factors[0].weights.len();
                (0..self.grid.len())
                    .map(|i| self.factors[0].weights[i % m0] * self.factors[1].weights[i / m0])
                    .collect()
            }
        }
    }

    /// Sum of every (clipped) eigenvalue of the discrete operator.
    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.captured_fraction
    }

    fn check_xi(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.modes() {
            return Err(Error::Shape(format!(
                "xi has {} entries, the KL basis retains {} modes",
                xi.len(),
                self.modes()
            )));
        }
        Ok(())
    }

    /// `mean + Σ_i √λ_i φ_i ξ_i` on the grid.
    pub fn sample_field(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check_xi(xi)?;
        let mut out = self.mean_on_grid.clone();
        for (i, (&lam, &x)) in self.eigenvalues.iter().zip(xi).enumerate() {
            let s = lam.sqrt() * x;
            for (o, &p) in out.iter_mut().zip(self.eigenfunctions.column(i).iter()) {
                *o += s * p;
            }
        }
        Ok(out)
    }

    fn check_points(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "points have {} coordinates, the field is {}-dimensional",
                points.ncols(),
                self.dim()
            )));
        }
        for i in 0..points.nrows() {
            for (k, f) in self.factors.iter().enumerate() {
                let x = points[(i, k)];
                let slack = SNAP_TOLERANCE * (f.upper() - f.lower());
                if !(x.is_finite() && x >= f.lower() - slack && x <= f.upper() + slack) {
                    return Err(Error::Domain(format!(
                        "point {i} coordinate {k} = {x} lies outside the field domain [{}, {}]",
                        f.lower(),
                        f.upper()
                    )));
                }
            }
        }
        Ok(())
    }

    /// `√λ_i φ_i(x)` at each point, `n × r`.
    pub fn scaled_modes_at(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_points(points)?;
        let r = self.modes();
        let n = points.nrows();
        let mut out = DMatrix::zeros(n, r);
        // Distinct 1D modes needed per axis.
        let per_axis: Vec<Vec<usize>> = (0..self.factors.len())
            .map(|k| {
                let mut v: Vec<usize> = self.modes.iter().map(|m| m[k]).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let mut vals: Vec<Vec<f64>> = per_axis.iter().map(|v| vec![0.0; v.len()]).collect();
        let slots: Vec<Vec<usize>> = self
            .modes
            .iter()
            .map(|m| {
                m.iter()
                    .enumerate()
                    .map(|(k, a)| per_axis[k].binary_search(a).unwrap())
                    .collect()
            })
            .collect();
        for i in 0..n {
            for (k, f) in self.factors.iter().enumerate() {
                f.eval(&self.kernel, points[(i, k)], &per_axis[k], &mut vals[k]);
            }
            for (c, slot) in slots.iter().enumerate() {
                let v: f64 = slot.iter().enumerate().map(|(k, &s)| vals[k][s]).product();
                out[(i, c)] = self.eigenvalues[c].sqrt() * v;
            }
        }
        Ok(out)
    }

    /// Mean function at each point.
    pub fn mean_at(&self, points: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_points(points)?;
        Ok((0..points.nrows())
            .map(|i| {
                let p: Vec<f64> = points.row(i).iter().copied().collect();
                match &self.kernel.mean {
                    Mean::Constant(c) => *c,
                    Mean::Function(f) => f(&p),
                    Mean::Tabulated => self.interpolate_mean(&p),
                }
            })
            .collect())
    }

    fn interpolate_mean(&self, p: &[f64]) -> f64 {
        let locate = |f: &AxisFactor, x: f64| -> (usize, f64) {
            let m = f.nodes.len();
            let pos = ((x - f.lower()) / (f.upper() - f.lower()) * (m - 1) as f64).clamp(0.0, (m - 1) as f64);
            let k = (pos.floor() as usize).min(m - 2);
            (k, pos - k as f64)
        };
        match self.factors.len() {
            1 => {
                let (k, t) = locate(&self.factors[0], p[0]);
                (1.0 - t) * self.mean_on_grid[k] + t * self.mean_on_grid[k + 1]
            }
            _ => {
                let m0 = self.factors[0].nodes.len();
                let (i, s) = locate(&self.factors[0], p[0]);
                let (j, t) = locate(&self.factors[1], p[1]);
                let g = |a: usize, b: usize| self.mean_on_grid[a + b * m0];
                (1.0 - s) * (1.0 - t) * g(i, j) + s * (1.0 - t) * g(i + 1, j) + (1.0 - s) * t * g(i, j + 1) + s * t * g(i + 1, j + 1)
            }
        }
    }

    /// KL synthesis at arbitrary points inside the grid's box.
    pub fn field_at(&self, xi: &[f64], points: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.check_xi(xi)?;
        let modes = self.scaled_modes_at(points)?;
        let mean = self.mean_at(points)?;
        Ok((0..points.nrows())
            .map(|i| mean[i] + modes.row(i).iter().zip(xi).map(|(a, b)| a * b).sum::<f64>())
            .collect())
    }

    /// Field values for many realizations: `n × N`, with `xi` given as `N × r`.
    pub fn field_matrix(&self, points: &DMatrix<f64>, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if xi.ncols() != self.modes() {
            return Err(Error::Shape(format!(
                "xi has {} columns, the KL basis retains {} modes",
                xi.ncols(),
                self.modes()
            )));
        }
        let modes = self.scaled_modes_at(points)?;
        let mean = self.mean_at(points)?;
        let mut out = crate::linalg::matmul_nt(&modes, xi);
        for (i, m) in mean.iter().enumerate() {
            for j in 0..out.ncols() {
                out[(i, j)] += m;
            }
        }
        Ok(out)
    }

    /// Writes `(grid coordinates..., value)` rows for one realization.
    pub fn write_csv<W: std::io::Write>(&self, xi: &[f64], out: W) -> Result<()> {
        let values = self.sample_field(xi)?;
        let pts = self.grid.points();
        let mut w = csv::Writer::from_writer(out);
        let header: &[&str] = if self.dim() == 1 { &["x", "value"] } else { &["x", "y", "value"] };
        w.write_record(header)?;
        for (i, v) in values.iter().enumerate() {
            let mut rec: Vec<String> = pts.row(i).iter().map(|c| format!("{c:e}")).collect();
            rec.push(format!("{v:e}"));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub(crate) fn write(&self, w: &mut Writer) {
        w.f64(self.kernel.sigma);
        w.f64(self.kernel.ell);
        match self.kernel.mean {
            Mean::Constant(c) => {
                w.u8(0);
                w.f64(c);
            }
            _ => w.u8(1),
        }
        match self.grid {
            KlGrid::Line { lower, upper, m } => {
                w.u8(1);
                w.f64s(&[lower, upper]);
                w.u64(m as u64);
            }
            KlGrid::Rectangle { lower, upper, m } => {
                w.u8(2);
                w.f64s(&[lower[0], lower[1], upper[0], upper[1]]);
                w.u64(m as u64);
            }
        }
        for f in &self.factors {
            f.write(w);
        }
        w.u64(self.modes.len() as u64);
        for m in &self.modes {
            for &a in m {
                w.u64(a as u64);
            }
        }
        w.f64s(&self.eigenvalues);
        w.matrix(&self.eigenfunctions);
        w.f64s(&self.mean_on_grid);
        w.f64(self.captured_fraction);
        w.u8(self.clipped as u8);
    }

    pub(crate) fn read(r: &mut Reader) -> Result<Self, Truncated> {
        let sigma = r.f64()?;
        let ell = r.f64()?;
        let mean = match r.u8()? {
            0 => Mean::Constant(r.f64()?),
            _ => Mean::Tabulated,
        };
        let grid = match r.u8()? {
            1 => {
                let b = r.f64s()?;
                let m = r.u64()? as usize;
                if b.len() != 2 {
                    return Err(Truncated);
                }
                KlGrid::Line {
                    lower: b[0],
                    upper: b[1],
                    m,
                }
            }
            2 => {
                let b = r.f64s()?;
                let m = r.u64()? as usize;
                if b.len() != 4 {
                    return Err(Truncated);
                }
                KlGrid::Rectangle {
                    lower: [b[0], b[1]],
                    upper: [b[2], b[3]],
                    m,
                }
            }
            _ => return Err(Truncated),
        };
        let dim = grid.dim();
        let factors = (0..dim).map(|_| AxisFactor::read(r)).collect::<Result<Vec<_>, _>>()?;
        let count = r.u64()? as usize;
        if count > r.remaining() {
            return Err(Truncated);
        }
        let modes = (0..count)
            .map(|_| (0..dim).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let basis = KLBasis {
            kernel: KernelSpec { sigma, ell, mean },
            grid,
            factors,
            modes,
            eigenvalues: r.f64s()?,
            eigenfunctions: r.matrix()?,
            mean_on_grid: r.f64s()?,
            captured_fraction: r.f64()?,
            clipped: r.u8()? != 0,
        };
        let consistent = basis.eigenvalues.len() == basis.modes.len()
            && basis.eigenfunctions.ncols() == basis.modes.len()
            && basis.eigenfunctions.nrows() == basis.grid.len()
            && basis.mean_on_grid.len() == basis.grid.len()
            && basis.modes.iter().flatten().zip(std::iter::repeat(&basis.factors)).all(|(&a, f)| a < f[0].mu.len());
        if !consistent {
            return Err(Truncated);
        }
        Ok(basis)
    }

    /// Bitwise comparison of every stored array (the mean closure excluded).
    pub fn same_data(&self, other: &KLBasis) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.grid == other.grid
            && self.kernel.sigma.to_bits() == other.kernel.sigma.to_bits()
            && self.kernel.ell.to_bits() == other.kernel.ell.to_bits()
            && self.modes == other.modes
            && bits(&self.eigenvalues) == bits(&other.eigenvalues)
            && bits(self.eigenfunctions.as_slice()) == bits(other.eigenfunctions.as_slice())
            && bits(&self.mean_on_grid) == bits(&other.mean_on_grid)
            && self.factors == other.factors
    }
}
