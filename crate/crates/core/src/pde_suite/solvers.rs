//! Finite-difference reference solvers on uniform grids.
//!
//! Time-dependent solvers keep only the time levels that bracket the requested
//! output times and return a [`GridSolution`] that interpolates multilinearly
//! in space and linearly in time.

use std::collections::{BTreeMap, BTreeSet};

/// Uniform nodes `lower + k (upper - lower) / (m - 1)`.
pub fn uniform_nodes(lower: f64, upper: f64, m: usize) -> Vec<f64> {
    let h = (upper - lower) / (m - 1) as f64;
    (0..m).map(|k| if k + 1 == m { upper } else { lower + k as f64 * h }).collect()
}

/// Stored levels of a solution on a uniform spatial grid (first axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSolution {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes: Vec<usize>,
    pub dt: f64,
    /// Number of steps spanning the time interval.
    pub steps: usize,
    /// Time-step index → nodal values.
    pub levels: BTreeMap<usize, Vec<f64>>,
}

impl GridSolution {
    /// Level indices needed to interpolate at `times`.
    pub fn needed_levels(times: &[f64], dt: f64, steps: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &t in times {
            let (k, w) = Self::bracket(t, dt, steps);
            out.insert(k);
            if w > 0.0 {
                out.insert(k + 1);
            }
        }
        out
    }

    fn bracket(t: f64, dt: f64, steps: usize) -> (usize, f64) {
        if steps == 0 {
            return (0, 0.0);
        }
        let pos = (t / dt).clamp(0.0, steps as f64);
        let near = pos.round();
        if (pos - near).abs() <= 1e-9 * pos.max(1.0) {
            return (near as usize, 0.0);
        }
        let k = (pos.floor() as usize).min(steps - 1);
        (k, pos - k as f64)
    }

    pub fn level(&self, k: usize) -> Option<&[f64]> {
        self.levels.get(&k).map(|v| v.as_slice())
    }

    fn spatial(&self, values: &[f64], x: &[f64]) -> f64 {
        let locate = |a: usize| -> (usize, f64) {
            let m = self.nodes[a];
            let pos = ((x[a] - self.lower[a]) / (self.upper[a] - self.lower[a]) * (m - 1) as f64).clamp(0.0, (m - 1) as f64);
            let k = (pos.floor() as usize).min(m - 2);
            (k, pos - k as f64)
        };
        match self.nodes.len() {
            1 => {
                let (i, s) = locate(0);
                (1.0 - s) * values[i] + s * values[i + 1]
            }
            2 => {
                let m0 = self.nodes[0];
                let (i, s) = locate(0);
                let (j, t) = locate(1);
                let g = |a: usize, b: usize| values[a + b * m0];
                (1.0 - s) * (1.0 - t) * g(i, j) + s * (1.0 - t) * g(i + 1, j) + (1.0 - s) * t * g(i, j + 1) + s * t * g(i + 1, j + 1)
            }
            d => unreachable!("{d}-dimensional grids are not produced by the solvers"),
        }
    }

    /// Value at spatial coordinates `x` and time `t`.
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let (k, w) = Self::bracket(t, self.dt, self.steps);
        let a = self.spatial(&self.levels[&k], x);
        if w == 0.0 {
            a
        } else {
            (1.0 - w) * a + w * self.spatial(&self.levels[&(k + 1)], x)
        }
    }
}

/// Solves the tridiagonal system `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`
/// in place (Thomas algorithm; the matrices here are diagonally dominant).
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = rhs.len();
    scratch[0] = upper[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = upper[i] / m;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

/// `s(x) = ∫_0^x u`, cumulative trapezoid on uniform nodes with spacing `h`.
pub fn antiderivative(u: &[f64], h: f64) -> Vec<f64> {
    let mut s = vec![0.0; u.len()];
    for i in 1..u.len() {
        s[i] = s[i - 1] + 0.5 * h * (u[i - 1] + u[i]);
    }
    s
}

fn check_finite(values: &[f64], t: f64) -> Result<(), String> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format!("non-finite solution at t = {t}"));
    }
    Ok(())
}

/// `s_t = D s_xx - v(x) s_x` on `[0, 1] × [0, 1]`, `s(x, 0) = sin(πx)`,
/// homogeneous Dirichlet ends. Crank–Nicolson in time with central
/// differences in space, `nx` nodes and `nt` time levels.
pub fn advection_diffusion(v: &[f64], diffusion: f64, nx: usize, nt: usize, times: &[f64]) -> Result<GridSolution, String> {
    if v.len() != nx || nx < 3 || nt < 2 {
        return Err(format!("bad grid: {} velocities, nx = {nx}, nt = {nt}", v.len()));
    }
    let dx = 1.0 / (nx - 1) as f64;
    let steps = nt - 1;
    let dt = 1.0 / steps as f64;
    let x = uniform_nodes(0.0, 1.0, nx);
    let mut s: Vec<f64> = x.iter().map(|&x| (std::f64::consts::PI * x).sin()).collect();
    s[0] = 0.0;
    s[nx - 1] = 0.0;
    // L s_i = lo_i s_{i-1} + di s_i + up_i s_{i+1}
    let lo: Vec<f64> = v.iter().map(|&vi| diffusion / (dx * dx) + vi / (2.0 * dx)).collect();
    let di = -2.0 * diffusion / (dx * dx);
    let up: Vec<f64> = v.iter().map(|&vi| diffusion / (dx * dx) - vi / (2.0 * dx)).collect();
    let n = nx - 2;
    let a: Vec<f64> = (1..=n).map(|i| -0.5 * dt * lo[i]).collect();
    let b = vec![1.0 - 0.5 * dt * di; n];
    let c: Vec<f64> = (1..=n).map(|i| -0.5 * dt * up[i]).collect();
    let keep = GridSolution::needed_levels(times, dt, steps);
    let mut levels = BTreeMap::new();
    if keep.contains(&0) {
        levels.insert(0, s.clone());
    }
    let mut rhs = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let last = keep.iter().next_back().copied().unwrap_or(0);
    for k in 1..=last {
        for i in 1..=n {
            rhs[i - 1] = s[i] + 0.5 * dt * (lo[i] * s[i - 1] + di * s[i] + up[i] * s[i + 1]);
        }
        thomas(&a, &b, &c, &mut rhs, &mut scratch);
        s[1..=n].copy_from_slice(&rhs);
        if keep.contains(&k) {
            check_finite(&s, k as f64 * dt)?;
            levels.insert(k, s.clone());
        }
    }
    Ok(GridSolution {
        lower: vec![0.0],
        upper: vec![1.0],
        nodes: vec![nx],
        dt,
        steps,
        levels,
    })
}

/// `s_t + s s_x = ν s_xx + f(x)` on `[0, 1] × [0, t_end]`, `s(x, 0) = sin(πx)`,
/// homogeneous Dirichlet ends. Crank–Nicolson diffusion, second-order
/// Adams–Bashforth for the conservative flux `(s²/2)_x` (forward Euler on the
/// first step), central differences in space.
pub fn burgers(f: &[f64], viscosity: f64, t_end: f64, nx: usize, dt: f64, times: &[f64]) -> Result<GridSolution, String> {
    if f.len() != nx || nx < 3 || !(dt > 0.0) {
        return Err(format!("bad grid: {} source values, nx = {nx}, dt = {dt}", f.len()));
    }
    let dx = 1.0 / (nx - 1) as f64;
    let steps = (t_end / dt).round() as usize;
    let dt = t_end / steps as f64;
    let x = uniform_nodes(0.0, 1.0, nx);
    let mut s: Vec<f64> = x.iter().map(|&x| (std::f64::consts::PI * x).sin()).collect();
    s[0] = 0.0;
    s[nx - 1] = 0.0;
    let d = viscosity * dt / (dx * dx);
    let n = nx - 2;
    let a = vec![-0.5 * d; n];
    let b = vec![1.0 + d; n];
    let c = vec![-0.5 * d; n];
    let keep = GridSolution::needed_levels(times, dt, steps);
    let mut levels = BTreeMap::new();
    if keep.contains(&0) {
        levels.insert(0, s.clone());
    }
    let flux = |s: &[f64], out: &mut [f64]| {
        for i in 1..nx - 1 {
            out[i] = (s[i + 1] * s[i + 1] - s[i - 1] * s[i - 1]) / (4.0 * dx);
        }
    };
    let mut adv = vec![0.0; nx];
    let mut adv_prev = vec![0.0; nx];
    let mut rhs = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let last = keep.iter().next_back().copied().unwrap_or(0);
    for k in 1..=last {
        flux(&s, &mut adv);
        for i in 1..=n {
            let ex = if k == 1 { adv[i] } else { 1.5 * adv[i] - 0.5 * adv_prev[i] };
            rhs[i - 1] = s[i] + dt * (f[i] - ex) + 0.5 * d * (s[i + 1] - 2.0 * s[i] + s[i - 1]);
        }
        thomas(&a, &b, &c, &mut rhs, &mut scratch);
        s[1..=n].copy_from_slice(&rhs);
        std::mem::swap(&mut adv, &mut adv_prev);
        if keep.contains(&k) {
            check_finite(&s, k as f64 * dt)?;
            levels.insert(k, s.clone());
        }
    }
    Ok(GridSolution {
        lower: vec![0.0],
        upper: vec![1.0],
        nodes: vec![nx],
        dt,
        steps,
        levels,
    })
}

/// `s_t = α (s_xx + s_yy) + f(x, y)` on `[0, 1]² × [0, 1]`,
/// `s(x, y, 0) = A sin(2πx) sin(2πy)`, homogeneous Dirichlet boundary.
/// Peaceman–Rachford ADI on an `m × m` node grid (`f` given at the nodes,
/// x fastest).
pub fn heat2d(f: &[f64], amplitude: f64, alpha: f64, m: usize, dt: f64, times: &[f64]) -> Result<GridSolution, String> {
    if f.len() != m * m || m < 3 || !(dt > 0.0) {
        return Err(format!("bad grid: {} source values, m = {m}, dt = {dt}", f.len()));
    }
    let h = 1.0 / (m - 1) as f64;
    let steps = (1.0 / dt).round() as usize;
    let dt = 1.0 / steps as f64;
    let nodes = uniform_nodes(0.0, 1.0, m);
    let two_pi = 2.0 * std::f64::consts::PI;
    let idx = |i: usize, j: usize| i + j * m;
    let mut s = vec![0.0; m * m];
    for j in 1..m - 1 {
        for i in 1..m - 1 {
            s[idx(i, j)] = amplitude * (two_pi * nodes[i]).sin() * (two_pi * nodes[j]).sin();
        }
    }
    let r = alpha * dt / (2.0 * h * h);
    let n = m - 2;
    let a = vec![-r; n];
    let b = vec![1.0 + 2.0 * r; n];
    let c = vec![-r; n];
    let keep = GridSolution::needed_levels(times, dt, steps);
    let mut levels = BTreeMap::new();
    if keep.contains(&0) {
        levels.insert(0, s.clone());
    }
    let mut half = vec![0.0; m * m];
    let mut line = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let last = keep.iter().next_back().copied().unwrap_or(0);
    for k in 1..=last {
        // Implicit in x, explicit in y.
        for j in 1..m - 1 {
            for i in 1..m - 1 {
                let dyy = s[idx(i, j + 1)] - 2.0 * s[idx(i, j)] + s[idx(i, j - 1)];
                line[i - 1] = s[idx(i, j)] + r * dyy + 0.5 * dt * f[idx(i, j)];
            }
            thomas(&a, &b, &c, &mut line, &mut scratch);
            for i in 1..m - 1 {
                half[idx(i, j)] = line[i - 1];
            }
        }
        // Implicit in y, explicit in x.
        for i in 1..m - 1 {
            for j in 1..m - 1 {
                let dxx = half[idx(i + 1, j)] - 2.0 * half[idx(i, j)] + half[idx(i - 1, j)];
                line[j - 1] = half[idx(i, j)] + r * dxx + 0.5 * dt * f[idx(i, j)];
            }
            thomas(&a, &b, &c, &mut line, &mut scratch);
            for j in 1..m - 1 {
                s[idx(i, j)] = line[j - 1];
            }
        }
        if keep.contains(&k) {
            check_finite(&s, k as f64 * dt)?;
            levels.insert(k, s.clone());
        }
    }
    Ok(GridSolution {
        lower: vec![0.0, 0.0],
        upper: vec![1.0, 1.0],
        nodes: vec![m, m],
        dt,
        steps,
        levels,
    })
}
