//! Truncated multi-index sets for the stochastic and spatio-temporal expansions.
//!
//! Indices are stored in graded order: all tuples of total degree 0, then 1,
//! and so on; within a grade they are sorted in descending lexicographic order,
//! so `(1, 0)` precedes `(0, 1)`. The all-zeros tuple is always first, which is
//! what the moment formulas rely on.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Relative slack applied when comparing a hyperbolic q-norm against `p`.
const QNORM_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub total_degree: usize,
    /// `None` for plain total-degree truncation.
    pub hyperbolic_q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiIndexSet {
    dim: usize,
    /// Row-major `len × dim` exponents.
    exponents: Vec<u32>,
    truncation: Truncation,
}

/// `(dim + p)! / (dim! p!)`, computed incrementally so intermediate values stay
/// within `u128` whenever the result fits a `usize`.
pub fn cardinality(dim: usize, p: usize) -> Result<usize> {
    if dim == 0 {
        return Err(Error::Parameter("dimension must be positive".into()));
    }
    let k = dim.min(p) as u128;
    let n = (dim + p) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (n - k + i) is divisible by i since acc = C(n - k + i - 1, i - 1).
        acc = acc
            .checked_mul(n - k + i)
            .ok_or_else(|| overflow(dim, p))?
            / i;
    }
    usize::try_from(acc).map_err(|_| overflow(dim, p))
}

fn overflow(dim: usize, p: usize) -> Error {
    Error::Overflow(format!(
        "cardinality of the total-degree set (dim={dim}, p={p}) exceeds the platform integer range"
    ))
}

/// All tuples `α ∈ ℕ^dim` with `‖α‖₁ ≤ p`.
pub fn total_degree_set(dim: usize, p: usize) -> Result<MultiIndexSet> {
    let expected = cardinality(dim, p)?;
    let capacity = expected
        .checked_mul(dim)
        .ok_or_else(|| overflow(dim, p))?;
    let mut exponents = Vec::with_capacity(capacity);
    let mut scratch = vec![0u32; dim];
    for grade in 0..=p {
        push_compositions(grade as u32, 0, &mut scratch, &mut |t| {
            exponents.extend_from_slice(t);
            true
        });
    }
    debug_assert_eq!(exponents.len(), capacity);
    Ok(MultiIndexSet {
        dim,
        exponents,
        truncation: Truncation {
            total_degree: p,
            hyperbolic_q: None,
        },
    })
}

/// Tuples with `(Σ α_i^q)^{1/q} ≤ p`. `q = 1` reproduces [`total_degree_set`].
pub fn hyperbolic_set(dim: usize, p: usize, q_norm: f64) -> Result<MultiIndexSet> {
    if !(q_norm > 0.0 && q_norm <= 1.0) {
        return Err(Error::Parameter(format!(
            "hyperbolic q-norm must lie in (0, 1], got {q_norm}"
        )));
    }
    if q_norm == 1.0 {
        let mut set = total_degree_set(dim, p)?;
        set.truncation.hyperbolic_q = Some(1.0);
        return Ok(set);
    }
    cardinality(dim, p)?;
    let bound = p as f64 * (1.0 + QNORM_SLACK);
    let mut exponents = Vec::new();
    let mut scratch = vec![0u32; dim];
    for grade in 0..=p {
        push_compositions(grade as u32, 0, &mut scratch, &mut |t| {
            if q_norm_of(t, q_norm) <= bound {
                exponents.extend_from_slice(t);
            }
            true
        });
    }
    Ok(MultiIndexSet {
        dim,
        exponents,
        truncation: Truncation {
            total_degree: p,
            hyperbolic_q: Some(q_norm),
        },
    })
}

fn q_norm_of(t: &[u32], q: f64) -> f64 {
    t.iter()
        .filter(|&&a| a > 0)
        .map(|&a| (a as f64).powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

/// Enumerates the tuples of `scratch[pos..]` summing to `remaining`, first
/// coordinate descending, calling `visit` on each complete tuple.
fn push_compositions(
    remaining: u32,
    pos: usize,
    scratch: &mut [u32],
    visit: &mut dyn FnMut(&[u32]) -> bool,
) {
    let dim = scratch.len();
    if pos == dim - 1 {
        scratch[pos] = remaining;
        visit(scratch);
        return;
    }
    for a in (0..=remaining).rev() {
        scratch[pos] = a;
        push_compositions(remaining - a, pos + 1, scratch, visit);
    }
    scratch[pos] = 0;
}

impl MultiIndexSet {
    /// Builds a set from explicit tuples. Used when loading persisted models;
    /// the tuples must already be in canonical order and duplicate-free.
    pub fn from_parts(dim: usize, exponents: Vec<u32>, truncation: Truncation) -> Result<Self> {
        if dim == 0 || exponents.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} exponents do not form tuples of dimension {dim}",
                exponents.len()
            )));
        }
        let set = MultiIndexSet {
            dim,
            exponents,
            truncation,
        };
        if set.len() == 0 || set.get(0).iter().any(|&a| a != 0) {
            return Err(Error::Parameter("a multi-index set must start with the zero tuple".into()));
        }
        for i in 1..set.len() {
            if canonical_cmp(set.get(i - 1), set.get(i)) != std::cmp::Ordering::Less {
                return Err(Error::Parameter(format!(
                    "multi-indices {} and {} are out of canonical order or duplicated",
                    i - 1,
                    i
                )));
            }
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.exponents.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.exponents[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.exponents.chunks_exact(self.dim)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn contains(&self, tuple: &[u32]) -> bool {
        self.position(tuple).is_some()
    }

    pub fn position(&self, tuple: &[u32]) -> Option<usize> {
        if tuple.len() != self.dim {
            return None;
        }
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match canonical_cmp(self.get(mid), tuple) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Largest exponent appearing on each axis.
    pub fn max_degree_per_axis(&self) -> Vec<usize> {
        let mut out = vec![0usize; self.dim];
        for t in self.iter() {
            for (m, &a) in out.iter_mut().zip(t) {
                *m = (*m).max(a as usize);
            }
        }
        out
    }

    /// SHA-256 over the dimension and exponent list.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.len() as u64).to_le_bytes());
        for &a in &self.exponents {
            h.update(a.to_le_bytes());
        }
        let digest = h.finalize();
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        out
    }
}

/// Graded, then descending-lexicographic within a grade.
pub fn canonical_cmp(a: &[u32], b: &[u32]) -> std::cmp::Ordering {
    let ga: u64 = a.iter().map(|&x| x as u64).sum();
    let gb: u64 = b.iter().map(|&x| x as u64).sum();
    ga.cmp(&gb).then_with(|| b.cmp(a))
}
