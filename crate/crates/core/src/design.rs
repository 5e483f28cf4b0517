//! Design matrices of the separated expansion `Ŝ = Φ C Ψ`.
//!
//! * `Ψ` (`P × N`) evaluates the orthonormal Hermite chaos basis at the `N`
//!   standard-normal samples.
//! * `Φ` (`n × Q`) evaluates the orthonormal Legendre basis of the
//!   spatio-temporal axes at `n` points, after an affine map of the physical box
//!   onto `[-1, 1]^{d+1}`. Differential operators act on `Φ` only, with the
//!   chain-rule factor `(2 / (b - a))^m` for an order-`m` derivative.
//!
//! Operators whose coefficients depend on the random input (an advection
//! velocity drawn from a random field, say) yield one `Φ` per realization. A
//! [`DesignBlock`] stores those in factored form, `Φ_j = Φ_const +
//! Σ_h diag(v_h[:, j]) D_h`, and materializes a realization on request.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index_sets::MultiIndexSet;
use crate::orthopoly::PolynomialFamily;

/// Highest derivative order per axis that operators may request.
pub const MAX_DERIVATIVE_ORDER: u8 = 2;

/// Relative slack when testing whether a point lies in the box.
const BOX_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl Axis {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Axis {
            name: name.into(),
            lower,
            upper,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Axis-aligned physical domain. `time_axis` marks the evolution axis along
/// which initial conditions are imposed (for an ODE in `x` this is `x` itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalBox {
    pub axes: Vec<Axis>,
    pub time_axis: Option<usize>,
}

impl PhysicalBox {
    pub fn new(axes: Vec<Axis>, time_axis: Option<usize>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Parameter("physical box has no axes".into()));
        }
        for a in &axes {
            if !(a.lower.is_finite() && a.upper.is_finite() && a.upper > a.lower) {
                return Err(Error::Parameter(format!(
                    "axis {} has empty or invalid range [{}, {}]",
                    a.name, a.lower, a.upper
                )));
            }
        }
        if let Some(t) = time_axis {
            if t >= axes.len() {
                return Err(Error::Parameter(format!("time axis {t} out of range")));
            }
        }
        Ok(PhysicalBox { axes, time_axis })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn spatial_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.axes.len()).filter(move |&k| Some(k) != self.time_axis)
    }

    pub fn domain_map(&self) -> DomainMap {
        DomainMap {
            lower: self.axes.iter().map(|a| a.lower).collect(),
            upper: self.axes.iter().map(|a| a.upper).collect(),
        }
    }
}

/// Per-axis affine maps `[a_k, b_k] → [-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMap {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainMap {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Shape("domain map bounds must be non-empty and equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a.is_finite() && b.is_finite() && b > a)) {
            return Err(Error::Parameter("domain map needs finite bounds with upper > lower".into()));
        }
        Ok(DomainMap { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Chain-rule factor `2 / (b_k - a_k)`.
    pub fn scale(&self, axis: usize) -> f64 {
        2.0 / (self.upper[axis] - self.lower[axis])
    }

    pub fn to_reference(&self, axis: usize, x: f64) -> f64 {
        (x - self.lower[axis]) * self.scale(axis) - 1.0
    }

    pub fn from_reference(&self, axis: usize, z: f64) -> f64 {
        self.lower[axis] + (z + 1.0) / self.scale(axis)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point.iter().enumerate().all(|(k, &x)| {
                let slack = BOX_SLACK * (self.upper[k] - self.lower[k]);
                x.is_finite() && x >= self.lower[k] - slack && x <= self.upper[k] + slack
            })
    }

    fn check_points(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "points have {} coordinates, domain has {} axes",
                points.ncols(),
                self.dim()
            )));
        }
        let mut p = vec![0.0; self.dim()];
        for i in 0..points.nrows() {
            for (k, v) in p.iter_mut().enumerate() {
                *v = points[(i, k)];
            }
            if !self.contains(&p) {
                return Err(Error::Domain(format!("point {i} = {p:?} lies outside the physical box")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coefficient {
    Constant(f64),
    /// `scale · v_handle(point, ξ)` where `v_handle` is supplied per realization.
    Field { handle: usize, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffTerm {
    pub coefficient: Coefficient,
    /// Derivative order along each axis.
    pub orders: Vec<u8>,
}

/// `coefficient · (D_left s) · (D_right s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTerm {
    pub coefficient: f64,
    pub left: Vec<u8>,
    pub right: Vec<u8>,
}

/// A (possibly quadratic) differential operator applied to the surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffOpSpec {
    pub terms: Vec<DiffTerm>,
    pub quadratic: Option<QuadraticTerm>,
}

impl DiffOpSpec {
    pub fn identity(dim: usize) -> Self {
        DiffOpSpec {
            terms: vec![DiffTerm {
                coefficient: Coefficient::Constant(1.0),
                orders: vec![0; dim],
            }],
            quadratic: None,
        }
    }

    pub fn derivative(orders: Vec<u8>) -> Self {
        DiffOpSpec {
            terms: vec![DiffTerm {
                coefficient: Coefficient::Constant(1.0),
                orders,
            }],
            quadratic: None,
        }
    }

    pub fn empty() -> Self {
        DiffOpSpec {
            terms: Vec::new(),
            quadratic: None,
        }
    }

    pub fn with_term(mut self, coefficient: Coefficient, orders: Vec<u8>) -> Self {
        self.terms.push(DiffTerm { coefficient, orders });
        self
    }

    pub fn with_quadratic(mut self, coefficient: f64, left: Vec<u8>, right: Vec<u8>) -> Self {
        self.quadratic = Some(QuadraticTerm {
            coefficient,
            left,
            right,
        });
        self
    }

    pub fn has_field_terms(&self) -> bool {
        self.terms
            .iter()
            .any(|t| matches!(t.coefficient, Coefficient::Field { .. }))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Parameter("differential operator has no terms".into()));
        }
        let all_orders = self.terms.iter().map(|t| &t.orders).chain(
            self.quadratic
                .iter()
                .flat_map(|q| [&q.left, &q.right].into_iter()),
        );
        for orders in all_orders {
            if orders.len() != dim {
                return Err(Error::Shape(format!(
                    "derivative orders {orders:?} do not match {dim} axes"
                )));
            }
            if let Some(&o) = orders.iter().find(|&&o| o > MAX_DERIVATIVE_ORDER) {
                return Err(Error::Parameter(format!(
                    "derivative order {o} exceeds the supported maximum {MAX_DERIVATIVE_ORDER}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Pde,
    Bc,
    Ic,
    Data,
}

/// `diag(values[:, j]) · matrix` contribution of a random-coefficient term.
#[derive(Debug, Clone)]
pub struct FieldPart {
    /// `n × N` coefficient values (scale already applied).
    pub values: DMatrix<f64>,
    /// `n × Q` derivative block the coefficient multiplies.
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct DesignBlock {
    pub kind: BlockKind,
    pub points: DMatrix<f64>,
    /// Constant-coefficient part, `n × Q`.
    pub matrix: DMatrix<f64>,
    /// Realization-dependent parts; empty for shared blocks.
    pub field_parts: Vec<FieldPart>,
}

impl DesignBlock {
    pub fn shared(kind: BlockKind, points: DMatrix<f64>, matrix: DMatrix<f64>) -> Self {
        DesignBlock {
            kind,
            points,
            matrix,
            field_parts: Vec::new(),
        }
    }

    pub fn per_realization(&self) -> bool {
        !self.field_parts.is_empty()
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Number of realizations carried by the field parts, if any.
    pub fn realizations(&self) -> Option<usize> {
        self.field_parts.first().map(|f| f.values.ncols())
    }

    /// `Φ_j` for realization `j` (the shared matrix when not per-realization).
    pub fn realization(&self, j: usize) -> DMatrix<f64> {
        let mut out = self.matrix.clone();
        for part in &self.field_parts {
            for i in 0..out.nrows() {
                let v = part.values[(i, j)];
                for c in 0..out.ncols() {
                    out[(i, c)] += v * part.matrix[(i, c)];
                }
            }
        }
        out
    }

    /// `Φ` with each field coefficient replaced by its mean over realizations.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        let mut out = self.matrix.clone();
        for part in &self.field_parts {
            let n = part.values.ncols().max(1) as f64;
            for i in 0..out.nrows() {
                let v = part.values.row(i).sum() / n;
                for c in 0..out.ncols() {
                    out[(i, c)] += v * part.matrix[(i, c)];
                }
            }
        }
        out
    }
}

/// `Ψ[α, j] = Π_i ψ̃_{α_i}(ξ_i^{(j)})` with orthonormal probabilists' Hermite
/// `ψ̃`. `xi_samples` is `N × r`.
pub fn assemble_psi(set_a: &MultiIndexSet, xi_samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = set_a.dim();
    if xi_samples.ncols() != r {
        return Err(Error::Shape(format!(
            "xi samples have {} columns, stochastic index set has dimension {r}",
            xi_samples.ncols()
        )));
    }
    if let Some(v) = xi_samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite xi sample {v}")));
    }
    let family = PolynomialFamily::HermiteProbabilist;
    let max_deg = set_a.max_degree_per_axis();
    let stride = max_deg.iter().copied().max().unwrap_or(0) + 1;
    // Sparse view of each multi-index: (axis, degree) for nonzero degrees.
    let sparse: Vec<Vec<(usize, usize)>> = set_a
        .iter()
        .map(|t| {
            t.iter()
                .enumerate()
                .filter(|(_, &d)| d > 0)
                .map(|(k, &d)| (k, d as usize))
                .collect()
        })
        .collect();
    let n_samples = xi_samples.nrows();
    let mut psi = DMatrix::zeros(set_a.len(), n_samples);
    let mut table = vec![0.0; r * stride];
    for j in 0..n_samples {
        for k in 0..r {
            family.fill_orthonormal_derivatives(
                xi_samples[(j, k)],
                max_deg[k],
                0,
                &mut table[k * stride..k * stride + max_deg[k] + 1],
            );
        }
        let mut col = psi.column_mut(j);
        for (a, nz) in sparse.iter().enumerate() {
            col[a] = nz.iter().map(|&(k, d)| table[k * stride + d]).product();
        }
    }
    Ok(psi)
}

/// Orthonormal Legendre basis (or its mixed derivative) at each point, one
/// `n × Q` matrix per requested order tuple, with chain-rule scaling applied.
pub fn assemble_derivatives(
    set_b: &MultiIndexSet,
    points: &DMatrix<f64>,
    map: &DomainMap,
    orders: &[Vec<u8>],
) -> Result<Vec<DMatrix<f64>>> {
    let dim = set_b.dim();
    if map.dim() != dim {
        return Err(Error::Shape(format!(
            "domain map has {} axes, spatio-temporal index set has {dim}",
            map.dim()
        )));
    }
    map.check_points(points)?;
    for o in orders {
        if o.len() != dim {
            return Err(Error::Shape(format!("derivative orders {o:?} do not match {dim} axes")));
        }
        if o.iter().any(|&v| v > MAX_DERIVATIVE_ORDER) {
            return Err(Error::Parameter(format!(
                "derivative orders {o:?} exceed the supported maximum {MAX_DERIVATIVE_ORDER}"
            )));
        }
    }
    let family = PolynomialFamily::Legendre;
    let max_deg = set_b.max_degree_per_axis();
    let max_order: Vec<usize> = (0..dim)
        .map(|k| orders.iter().map(|o| o[k] as usize).max().unwrap_or(0))
        .collect();
    let strides: Vec<usize> = max_deg.iter().map(|d| d + 1).collect();
    let offsets: Vec<usize> = (0..dim)
        .scan(0, |acc, k| {
            let off = *acc;
            *acc += strides[k] * (max_order[k] + 1);
            Some(off)
        })
        .collect();
    let table_len: usize = (0..dim).map(|k| strides[k] * (max_order[k] + 1)).sum();
    let mut table = vec![0.0; table_len];
    let n = points.nrows();
    let mut out: Vec<DMatrix<f64>> = orders.iter().map(|_| DMatrix::zeros(n, set_b.len())).collect();
    for i in 0..n {
        for k in 0..dim {
            let z = map.to_reference(k, points[(i, k)]).clamp(-1.0, 1.0);
            let seg = &mut table[offsets[k]..offsets[k] + strides[k] * (max_order[k] + 1)];
            family.fill_orthonormal_derivatives(z, max_deg[k], max_order[k], seg);
            let s = map.scale(k);
            for m in 1..=max_order[k] {
                let f = s.powi(m as i32);
                for v in &mut seg[m * strides[k]..(m + 1) * strides[k]] {
                    *v *= f;
                }
            }
        }
        for (o, mat) in orders.iter().zip(out.iter_mut()) {
            for (b, t) in set_b.iter().enumerate() {
                let mut v = 1.0;
                for k in 0..dim {
                    v *= table[offsets[k] + o[k] as usize * strides[k] + t[k] as usize];
                }
                mat[(i, b)] = v;
            }
        }
    }
    Ok(out)
}

/// Applies `op` to the spatio-temporal basis at `points`. Quadratic terms of
/// `op` are not folded in; the fitting code handles them separately.
///
/// `field_values[h]` is the `n × N` matrix of field `h` at the points for each
/// realization; it is required iff `op` has field coefficients.
pub fn assemble_phi(
    set_b: &MultiIndexSet,
    points: &DMatrix<f64>,
    map: &DomainMap,
    op: &DiffOpSpec,
    field_values: Option<&[DMatrix<f64>]>,
    kind: BlockKind,
) -> Result<DesignBlock> {
    op.validate(set_b.dim())?;
    if op.has_field_terms() && field_values.is_none() {
        return Err(Error::Parameter(
            "operator has random-field coefficients but no field values were supplied".into(),
        ));
    }
    let orders: Vec<Vec<u8>> = op.terms.iter().map(|t| t.orders.clone()).collect();
    let blocks = assemble_derivatives(set_b, points, map, &orders)?;
    let n = points.nrows();
    let mut matrix = DMatrix::zeros(n, set_b.len());
    let mut field_parts = Vec::new();
    let mut realizations: Option<usize> = None;
    for (term, block) in op.terms.iter().zip(blocks) {
        match term.coefficient {
            Coefficient::Constant(c) => crate::linalg::axpy(c, &block, &mut matrix),
            Coefficient::Field { handle, scale } => {
                let fv = field_values.expect("checked above");
                let values = fv.get(handle).ok_or_else(|| {
                    Error::Parameter(format!("no field values supplied for handle {handle}"))
                })?;
                if values.nrows() != n {
                    return Err(Error::Shape(format!(
                        "field {handle} has {} rows for {n} points",
                        values.nrows()
                    )));
                }
                if let Some(r) = realizations {
                    if values.ncols() != r {
                        return Err(Error::Shape("field values disagree on the number of realizations".into()));
                    }
                }
                realizations = Some(values.ncols());
                field_parts.push(FieldPart {
                    values: values * scale,
                    matrix: block,
                });
            }
        }
    }
    Ok(DesignBlock {
        kind,
        points: points.clone(),
        matrix,
        field_parts,
    })
}

/// Collocation points for the PDE, boundary and initial constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualPoints {
    pub pde: DMatrix<f64>,
    pub bc: DMatrix<f64>,
    pub ic: DMatrix<f64>,
}

impl VirtualPoints {
    pub fn total(&self) -> usize {
        self.pde.nrows() + self.bc.nrows() + self.ic.nrows()
    }
}

/// Uniform pseudo-random collocation points: PDE points in the open interior,
/// boundary points on the spatial faces (face chosen with probability
/// proportional to its measure) at uniform times, initial points at the lower
/// end of the time axis. Each group draws from its own ChaCha stream, so the
/// result is a pure function of the arguments.
pub fn sample_virtual_points(
    domain: &PhysicalBox,
    n_pde: usize,
    n_bc: usize,
    n_ic: usize,
    min_total: usize,
    seed: u64,
) -> Result<VirtualPoints> {
    let total = n_pde + n_bc + n_ic;
    if total == 0 {
        return Err(Error::Parameter("no virtual points requested".into()));
    }
    if total < min_total {
        return Err(Error::Parameter(format!(
            "{total} virtual points cannot determine {min_total} spatio-temporal coefficients"
        )));
    }
    let dim = domain.dim();
    let spatial: Vec<usize> = domain.spatial_axes().collect();
    if n_bc > 0 && spatial.is_empty() {
        return Err(Error::Parameter("boundary points requested but the box has no spatial axis".into()));
    }
    if n_ic > 0 && domain.time_axis.is_none() {
        return Err(Error::Parameter("initial points requested but the box has no time axis".into()));
    }
    let axis_at = |k: usize, u: f64| domain.axes[k].lower + u * domain.axes[k].width();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut pde = DMatrix::zeros(n_pde, dim);
    for i in 0..n_pde {
        for k in 0..dim {
            let u: f64 = rng.sample(Open01);
            pde[(i, k)] = axis_at(k, u);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let face_measure: Vec<f64> = spatial
        .iter()
        .map(|&a| {
            spatial
                .iter()
                .filter(|&&b| b != a)
                .map(|&b| domain.axes[b].width())
                .product()
        })
        .collect();
    let measure_total: f64 = face_measure.iter().sum();
    let mut bc = DMatrix::zeros(n_bc, dim);
    for i in 0..n_bc {
        let mut pick: f64 = rng.random::<f64>() * measure_total;
        let mut face = spatial.len() - 1;
        for (f, &m) in face_measure.iter().enumerate() {
            if pick < m {
                face = f;
                break;
            }
            pick -= m;
        }
        let upper_side: bool = rng.random();
        for k in 0..dim {
            let u: f64 = rng.random();
            bc[(i, k)] = axis_at(k, u);
        }
        let a = spatial[face];
        bc[(i, a)] = if upper_side {
            domain.axes[a].upper
        } else {
            domain.axes[a].lower
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut ic = DMatrix::zeros(n_ic, dim);
    if let Some(t) = domain.time_axis {
        for i in 0..n_ic {
            for k in 0..dim {
                let u: f64 = rng.random();
                ic[(i, k)] = axis_at(k, u);
            }
            ic[(i, t)] = domain.axes[t].lower;
        }
    }
    Ok(VirtualPoints { pde, bc, ic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index_sets::{hyperbolic_set, total_degree_set};

    fn unit_box(dim: usize) -> PhysicalBox {
        let names = ["x", "y", "t"];
        let axes = (0..dim).map(|k| Axis::new(names[k], 0.0, 1.0)).collect();
        PhysicalBox::new(axes, Some(dim - 1)).unwrap()
    }

    #[test]
    fn psi_examples() {
        let set = total_degree_set(1, 0).unwrap();
        let xi = DMatrix::from_row_slice(3, 1, &[0.2, -1.0, 3.0]);
        assert_eq!(assemble_psi(&set, &xi).unwrap(), DMatrix::from_element(1, 3, 1.0));

        let set = total_degree_set(2, 1).unwrap();
        let xi = DMatrix::from_row_slice(1, 2, &[0.3, -0.5]);
        let psi = assemble_psi(&set, &xi).unwrap();
        assert_eq!(psi.as_slice(), &[1.0, 0.3, -0.5]);
    }

    #[test]
    fn psi_is_tensor_product_of_orthonormal_values() {
        let set = hyperbolic_set(4, 4, 0.7).unwrap();
        let xi = DMatrix::from_row_slice(1, 4, &[0.4, -1.3, 2.2, 0.05]);
        let psi = assemble_psi(&set, &xi).unwrap();
        let h = PolynomialFamily::HermiteProbabilist;
        for (a, t) in set.iter().enumerate() {
            let direct: f64 = t
                .iter()
                .enumerate()
                .map(|(k, &d)| h.eval_orthonormal(d as usize, xi[(0, k)]).unwrap())
                .product();
            assert!((psi[(a, 0)] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn psi_shape_errors() {
        let set = total_degree_set(3, 2).unwrap();
        let xi = DMatrix::zeros(5, 2);
        assert!(matches!(assemble_psi(&set, &xi), Err(Error::Shape(_))));
    }

    #[test]
    fn phi_constant_and_derivative_examples() {
        let map = unit_box(2).domain_map();
        let set = total_degree_set(2, 0).unwrap();
        let pts = DMatrix::from_row_slice(1, 2, &[0.3, 0.8]);
        let b = assemble_phi(&set, &pts, &map, &DiffOpSpec::identity(2), None, BlockKind::Data).unwrap();
        assert!((b.matrix[(0, 0)] - 0.5).abs() < 1e-15);

        let set = total_degree_set(2, 1).unwrap();
        let beta = set.position(&[1, 0]).unwrap();
        let d = assemble_phi(&set, &pts, &map, &DiffOpSpec::derivative(vec![1, 0]), None, BlockKind::Pde).unwrap();
        let expect = 2.0 * (1.5f64).sqrt() / 2.0f64.sqrt();
        assert!((d.matrix[(0, beta)] - expect).abs() < 1e-14);
    }

    #[test]
    fn derivative_blocks_match_finite_differences_including_chain_rule() {
        let domain = PhysicalBox::new(vec![Axis::new("x", -0.5, 2.0), Axis::new("t", 0.0, 0.3)], Some(1)).unwrap();
        let map = domain.domain_map();
        let set = total_degree_set(2, 6).unwrap();
        let pts = sample_virtual_points(&domain, 50, 0, 0, 0, 7).unwrap().pde;
        let orders = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![0, 2]];
        let mats = assemble_derivatives(&set, &pts, &map, &orders).unwrap();
        for (axis, first, second) in [(0usize, 1usize, 3usize), (1, 2, 4)] {
            let h = 1e-4 * domain.axes[axis].width();
            let mut plus = pts.clone();
            let mut minus = pts.clone();
            for i in 0..pts.nrows() {
                plus[(i, axis)] += h;
                minus[(i, axis)] -= h;
            }
            // stay inside the box
            let keep: Vec<usize> = (0..pts.nrows())
                .filter(|&i| map.contains(&[plus[(i, 0)], plus[(i, 1)]]) && map.contains(&[minus[(i, 0)], minus[(i, 1)]]))
                .collect();
            let sub = |m: &DMatrix<f64>| DMatrix::from_fn(keep.len(), m.ncols(), |r, c| m[(keep[r], c)]);
            let (p, mi) = (sub(&plus), sub(&minus));
            let fp = &assemble_derivatives(&set, &p, &map, &orders[..1]).unwrap()[0];
            let fm = &assemble_derivatives(&set, &mi, &map, &orders[..1]).unwrap()[0];
            let f0 = sub(&mats[0]);
            let d1 = sub(&mats[first]);
            let d2 = sub(&mats[second]);
            for r in 0..keep.len() {
                for c in 0..set.len() {
                    let fd1 = (fp[(r, c)] - fm[(r, c)]) / (2.0 * h);
                    let fd2 = (fp[(r, c)] - 2.0 * f0[(r, c)] + fm[(r, c)]) / (h * h);
                    let s1 = d1[(r, c)].abs().max(1.0);
                    let s2 = d2[(r, c)].abs().max(1.0) * domain.axes[axis].width().powi(-2).max(1.0);
                    assert!((fd1 - d1[(r, c)]).abs() <= 1e-5 * s1, "first derivative axis {axis}");
                    assert!((fd2 - d2[(r, c)]).abs() <= 1e-4 * s2, "second derivative axis {axis}");
                }
            }
        }
    }

    #[test]
    fn constant_coefficient_operator_is_linear_combination() {
        let map = unit_box(2).domain_map();
        let set = total_degree_set(2, 5).unwrap();
        let pts = sample_virtual_points(&unit_box(2), 20, 0, 0, 0, 3).unwrap().pde;
        let op = DiffOpSpec::derivative(vec![0, 1])
            .with_term(Coefficient::Constant(0.7), vec![1, 0])
            .with_term(Coefficient::Constant(-0.1), vec![2, 0]);
        let block = assemble_phi(&set, &pts, &map, &op, None, BlockKind::Pde).unwrap();
        let parts = assemble_derivatives(&set, &pts, &map, &[vec![0, 1], vec![1, 0], vec![2, 0]]).unwrap();
        let combo = &parts[0] + &parts[1] * 0.7 - &parts[2] * 0.1;
        assert!((block.matrix - combo).amax() <= 1e-13);
        assert!(!assemble_phi(&set, &pts, &map, &op, None, BlockKind::Pde).unwrap().per_realization());
    }

    #[test]
    fn field_coefficients_make_per_realization_blocks() {
        let map = unit_box(2).domain_map();
        let set = total_degree_set(2, 3).unwrap();
        let pts = sample_virtual_points(&unit_box(2), 6, 0, 0, 0, 3).unwrap().pde;
        let op = DiffOpSpec::derivative(vec![0, 1]).with_term(Coefficient::Field { handle: 0, scale: 2.0 }, vec![1, 0]);
        assert!(matches!(
            assemble_phi(&set, &pts, &map, &op, None, BlockKind::Pde),
            Err(Error::Parameter(_))
        ));
        let v = DMatrix::from_fn(6, 3, |i, j| 1.0 + 0.1 * i as f64 - 0.2 * j as f64);
        let block = assemble_phi(&set, &pts, &map, &op, Some(&[v.clone()]), BlockKind::Pde).unwrap();
        assert!(block.per_realization());
        assert_eq!(block.realizations(), Some(3));
        let parts = assemble_derivatives(&set, &pts, &map, &[vec![0, 1], vec![1, 0]]).unwrap();
        for j in 0..3 {
            let phi_j = block.realization(j);
            for i in 0..6 {
                for c in 0..set.len() {
                    let expect = parts[0][(i, c)] + 2.0 * v[(i, j)] * parts[1][(i, c)];
                    assert!((phi_j[(i, c)] - expect).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn unsupported_order_and_outside_points() {
        let map = unit_box(2).domain_map();
        let set = total_degree_set(2, 3).unwrap();
        let pts = DMatrix::from_row_slice(1, 2, &[0.5, 0.5]);
        let op = DiffOpSpec::derivative(vec![3, 0]);
        assert!(matches!(
            assemble_phi(&set, &pts, &map, &op, None, BlockKind::Pde),
            Err(Error::Parameter(_))
        ));
        let outside = DMatrix::from_row_slice(1, 2, &[1.5, 0.5]);
        assert!(matches!(
            assemble_phi(&set, &outside, &map, &DiffOpSpec::identity(2), None, BlockKind::Data),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn domain_map_round_trip() {
        let map = DomainMap::new(vec![-2.0, 0.0], vec![3.0, 0.3]).unwrap();
        for &x in &[-2.0, -1.3, 0.0, 2.9, 3.0] {
            assert!((map.from_reference(0, map.to_reference(0, x)) - x).abs() <= 1e-14);
        }
        assert_eq!(map.scale(0), 0.4);
        assert!(DomainMap::new(vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn virtual_point_contracts() {
        let domain = unit_box(3);
        let v = sample_virtual_points(&domain, 0, 0, 5, 0, 11).unwrap();
        assert_eq!(v.ic.nrows(), 5);
        assert!((0..5).all(|i| v.ic[(i, 2)] == 0.0));

        let v = sample_virtual_points(&domain, 200, 40, 10, 0, 42).unwrap();
        for i in 0..200 {
            for k in 0..3 {
                assert!(v.pde[(i, k)] > 0.0 && v.pde[(i, k)] < 1.0);
            }
        }
        for i in 0..40 {
            let on_face = [0, 1].iter().any(|&k| v.bc[(i, k)] == 0.0 || v.bc[(i, k)] == 1.0);
            assert!(on_face);
        }
        let again = sample_virtual_points(&domain, 200, 40, 10, 0, 42).unwrap();
        assert_eq!(v, again);
        let other = sample_virtual_points(&domain, 200, 40, 10, 0, 43).unwrap();
        assert_ne!(v.pde, other.pde);
    }

    #[test]
    fn virtual_point_errors() {
        let domain = unit_box(2);
        assert!(sample_virtual_points(&domain, 0, 0, 0, 0, 1).is_err());
        assert!(sample_virtual_points(&domain, 5, 0, 0, 10, 1).is_err());
        let ode = PhysicalBox::new(vec![Axis::new("x", 0.0, 1.0)], Some(0)).unwrap();
        assert!(sample_virtual_points(&ode, 5, 1, 0, 0, 1).is_err());
        assert!(PhysicalBox::new(vec![Axis::new("x", 1.0, 1.0)], None).is_err());
    }
}
