//! Labeled datasets and the Monte Carlo reference statistics.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PdeProblem, ProblemId};
use crate::bench::{matrix_csv, numbered, read_matrix_csv, write_atomic};
use crate::error::{Error, Result};

/// Samples solved per parallel batch in [`mcs_statistics`].
const MCS_BATCH: usize = 256;

/// `n × r` standard-normal draws from a ChaCha8 stream, filled sample by
/// sample so that a larger `n` extends a smaller one.
pub fn draw_xi(n: usize, r: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi = DMatrix::zeros(n, r);
    for i in 0..n {
        for k in 0..r {
            xi[(i, k)] = rng.sample(StandardNormal);
        }
    }
    xi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub problem: ProblemId,
    pub solver: String,
    pub solver_grid: super::SolverSpec,
    pub seed: Option<u64>,
    pub samples: usize,
    pub r: usize,
    pub crate_version: String,
}

/// Samples of `ξ`, the input field at `input_points` and the reference
/// solution at `points`. Matrices are stored one sample per column except
/// `xi` (`N × r`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub xi: DMatrix<f64>,
    pub input_points: DMatrix<f64>,
    pub inputs: DMatrix<f64>,
    pub points: DMatrix<f64>,
    pub solutions: DMatrix<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.xi.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `xi.csv`, `input_points.csv`, `inputs.csv`, `points.csv`,
    /// `solutions.csv` and `provenance.json` into `dir`.
    pub fn write(&self, dir: &Path, axis_names: &[String]) -> Result<()> {
        let spatial_names: Vec<String> = (0..self.input_points.ncols()).map(|k| axis_names[k].clone()).collect();
        write_atomic(&dir.join("xi.csv"), &matrix_csv(&numbered("xi", self.xi.ncols()), &self.xi)?)?;
        write_atomic(&dir.join("input_points.csv"), &matrix_csv(&spatial_names, &self.input_points)?)?;
        write_atomic(
            &dir.join("inputs.csv"),
            &matrix_csv(&numbered("u", self.inputs.nrows()), &self.inputs.transpose())?,
        )?;
        write_atomic(&dir.join("points.csv"), &matrix_csv(axis_names, &self.points)?)?;
        write_atomic(
            &dir.join("solutions.csv"),
            &matrix_csv(&numbered("s", self.solutions.nrows()), &self.solutions.transpose())?,
        )?;
        let json = serde_json::to_vec_pretty(&self.provenance).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(&dir.join("provenance.json"), &json)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let (_, xi) = read_matrix_csv(&dir.join("xi.csv"))?;
        let (_, input_points) = read_matrix_csv(&dir.join("input_points.csv"))?;
        let (_, inputs) = read_matrix_csv(&dir.join("inputs.csv"))?;
        let (_, points) = read_matrix_csv(&dir.join("points.csv"))?;
        let (_, solutions) = read_matrix_csv(&dir.join("solutions.csv"))?;
        let path = dir.join("provenance.json");
        let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let provenance: Provenance =
            serde_json::from_slice(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let d = Dataset {
            xi,
            input_points,
            inputs: inputs.transpose(),
            points,
            solutions: solutions.transpose(),
            provenance,
        };
        let n = d.xi.nrows();
        if d.inputs.ncols() != n || d.solutions.ncols() != n || d.solutions.nrows() != d.points.nrows() {
            return Err(Error::Shape(format!("dataset in {} has inconsistent sample counts", dir.display())));
        }
        Ok(d)
    }
}

/// Solves each row of `xi` independently; the first failing sample (in
/// index order) is reported.
fn solve_samples(problem: &PdeProblem, xi: &DMatrix<f64>, points: &DMatrix<f64>, offset: usize) -> Result<DMatrix<f64>> {
    problem.check_points(points)?;
    let inputs = problem.solver_inputs(xi)?;
    let cols: Vec<Result<Vec<f64>>> = (0..xi.nrows())
        .into_par_iter()
        .map(|j| {
            problem.solve_sample(inputs.column(j).as_slice(), xi, j, points).map_err(|e| match e {
                Error::Solver { xi, reason, .. } => Error::Solver {
                    sample: offset + j,
                    xi,
                    reason,
                },
                other => other,
            })
        })
        .collect();
    let mut out = DMatrix::zeros(points.nrows(), xi.nrows());
    for (j, c) in cols.into_iter().enumerate() {
        out.column_mut(j).copy_from_slice(&c?);
    }
    Ok(out)
}

/// Draws `n` samples with `seed` and solves them at `points`.
pub fn generate_dataset(problem: &PdeProblem, n: usize, seed: u64, points: &DMatrix<f64>) -> Result<Dataset> {
    let xi = draw_xi(n, problem.r(), seed);
    let mut d = generate_dataset_from_xi(problem, xi, points)?;
    d.provenance.seed = Some(seed);
    Ok(d)
}

pub fn generate_dataset_from_xi(problem: &PdeProblem, xi: DMatrix<f64>, points: &DMatrix<f64>) -> Result<Dataset> {
    let solutions = solve_samples(problem, &xi, points, 0)?;
    let input_points = problem.input_points();
    let inputs = if problem.stochastic.fields.is_empty() {
        DMatrix::zeros(input_points.nrows(), xi.nrows())
    } else {
        problem.stochastic.field_values(0, &input_points, &xi)?
    };
    Ok(Dataset {
        provenance: Provenance {
            problem: problem.id,
            solver: problem.solver.id().to_owned(),
            solver_grid: problem.solver.clone(),
            seed: None,
            samples: xi.nrows(),
            r: xi.ncols(),
            crate_version: env!("CARGO_PKG_VERSION").to_owned(),
        },
        xi,
        input_points,
        inputs,
        points: points.clone(),
        solutions,
    })
}

/// Pointwise sample mean and standard deviation (`M - 1` normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct McsReference {
    pub samples: usize,
    /// Free-form identity of the run that produced it (cache key).
    pub tag: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl McsReference {
    /// Welford accumulation over the rows of `xi`, batch-parallel solves,
    /// sequential in-order updates.
    pub fn from_xi(problem: &PdeProblem, xi: &DMatrix<f64>, points: &DMatrix<f64>) -> Result<Self> {
        let m = xi.nrows();
        if m < 2 {
            return Err(Error::Parameter("Monte Carlo statistics need at least 2 samples".into()));
        }
        let n = points.nrows();
        let mut mean = vec![0.0; n];
        let mut m2 = vec![0.0; n];
        let mut seen = 0usize;
        let mut start = 0;
        while start < m {
            let len = MCS_BATCH.min(m - start);
            let batch = solve_samples(problem, &xi.rows(start, len).into_owned(), points, start)?;
            for j in 0..len {
                seen += 1;
                for i in 0..n {
                    let x = batch[(i, j)];
                    let d = x - mean[i];
                    mean[i] += d / seen as f64;
                    m2[i] += d * (x - mean[i]);
                }
            }
            start += len;
        }
        let std = m2.iter().map(|v| (v / (m - 1) as f64).max(0.0).sqrt()).collect();
        Ok(McsReference {
            samples: m,
            tag: String::new(),
            mean,
            std,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let m = DMatrix::from_fn(self.mean.len(), 2, |i, k| if k == 0 { self.mean[i] } else { self.std[i] });
        if self.tag.contains(char::is_whitespace) {
            return Err(Error::Parameter("reference tag must not contain whitespace".into()));
        }
        let mut bytes = format!("# samples={} tag={}\n", self.samples, self.tag).into_bytes();
        bytes.extend(matrix_csv(&["mean".into(), "std".into()], &m)?);
        write_atomic(path, &bytes)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (first, rest) = raw.split_once('\n').unwrap_or((&raw, ""));
        let bad = || Error::Config(format!("{}: missing `# samples=N tag=T` line", path.display()));
        let (count, tag) = first
            .strip_prefix("# samples=")
            .and_then(|s| s.trim().split_once(" tag="))
            .ok_or_else(bad)?;
        let samples = count.parse().map_err(|_| bad())?;
        let tag = tag.to_owned();
        let mut r = csv::Reader::from_reader(rest.as_bytes());
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Config(format!("{}: malformed record {rec:?}", path.display())))
            };
            mean.push(parse(0)?);
            std.push(parse(1)?);
        }
        Ok(McsReference { samples, tag, mean, std })
    }
}

/// Monte Carlo mean and standard deviation of the reference solution at
/// `points` from `m` samples drawn with `seed`.
pub fn mcs_statistics(problem: &PdeProblem, points: &DMatrix<f64>, m: usize, seed: u64) -> Result<McsReference> {
    McsReference::from_xi(problem, &draw_xi(m, problem.r(), seed), points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde_suite::problem_antiderivative;

    #[test]
    fn draws_extend_as_prefixes() {
        let a = draw_xi(5, 3, 9);
        let b = draw_xi(8, 3, 9);
        assert_eq!(a, b.rows(0, 5).into_owned());
        assert_ne!(draw_xi(5, 3, 10), a);
    }

    #[test]
    fn zero_input_gives_zero_solution() {
        let p = problem_antiderivative().unwrap();
        let xi = DMatrix::zeros(1, p.r());
        let d = generate_dataset_from_xi(&p, xi, &p.query_points()).unwrap();
        assert!(d.solutions.iter().all(|v| v.abs() < 1e-14));
        assert!(d.inputs.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn dataset_is_deterministic_and_round_trips() {
        let p = problem_antiderivative().unwrap();
        let pts = p.query_points();
        let a = generate_dataset(&p, 6, 3, &pts).unwrap();
        let b = generate_dataset(&p, 6, 3, &pts).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path(), &p.axis_names()).unwrap();
        let back = Dataset::read(dir.path()).unwrap();
        assert_eq!(back.provenance, a.provenance);
        assert!((back.solutions - &a.solutions).amax() <= 1e-15 * a.solutions.amax().max(1.0));
    }

    #[test]
    fn identical_samples_have_zero_spread() {
        let p = problem_antiderivative().unwrap();
        let pts = p.query_points();
        let row = draw_xi(1, p.r(), 4);
        let xi = DMatrix::from_fn(2, p.r(), |_, k| row[(0, k)]);
        let s = McsReference::from_xi(&p, &xi, &pts).unwrap();
        assert!(s.std.iter().all(|&v| v == 0.0));
        let single = generate_dataset_from_xi(&p, row, &pts).unwrap();
        for (m, v) in s.mean.iter().zip(single.solutions.iter()) {
            assert!((m - v).abs() <= 1e-15 * v.abs().max(1.0));
        }
        assert!(McsReference::from_xi(&p, &xi.rows(0, 1).into_owned(), &pts).is_err());
    }

    #[test]
    fn mean_is_stable_under_doubling() {
        let p = problem_antiderivative().unwrap();
        let pts = p.query_points();
        let small = mcs_statistics(&p, &pts, 2000, 5).unwrap();
        let large = mcs_statistics(&p, &pts, 4000, 5).unwrap();
        for i in 0..pts.nrows() {
            let tol = 5.0 * large.std[i] / (2000f64).sqrt() + 1e-12;
            assert!((small.mean[i] - large.mean[i]).abs() <= tol, "point {i}");
        }
    }

    #[test]
    fn mcs_csv_round_trip() {
        let r = McsReference {
            samples: 7,
            tag: "abc123".into(),
            mean: vec![0.5, -1.25e-3],
            std: vec![0.1, 2.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mcs.csv");
        r.write_csv(&path).unwrap();
        assert_eq!(McsReference::read_csv(&path).unwrap(), r);
    }
}
