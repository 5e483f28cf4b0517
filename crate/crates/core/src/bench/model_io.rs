//! Binary model container.
//!
//! Layout (little-endian): the magic `PCEOLMDL`, a `u32` format version, a
//! `u32` section count, then sections. A section is a 4-byte tag, a `u64`
//! payload length, the payload and the first 8 bytes of the payload's
//! SHA-256. Sections appear in the order `META SETA SETB DMAP COEF KLBS`.
//! `META` carries the SHA-256 of both index sets, which are re-derived and
//! compared on load.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::codec::{Reader, Truncated, Writer};
use crate::design::DomainMap;
use crate::error::{Error, Result};
use crate::index_sets::{MultiIndexSet, Truncation};
use crate::operator_fit::CoefficientMatrix;
use crate::pde_suite::ProblemId;
use crate::random_field::KLBasis;

pub const MAGIC: &[u8; 8] = b"PCEOLMDL";
pub const FORMAT_VERSION: u32 = 1;
const TAGS: [&[u8; 4]; 6] = [b"META", b"SETA", b"SETB", b"DMAP", b"COEF", b"KLBS"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported format version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checksum mismatch in section {section}")]
    Checksum { section: String },
    #[error("stored hash of {set} does not match its contents")]
    HashMismatch { set: &'static str },
    #[error("file is truncated")]
    Truncated,
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("model is incompatible: {0}")]
    Incompatible(String),
}

impl From<Truncated> for ModelError {
    fn from(_: Truncated) -> Self {
        ModelError::Truncated
    }
}

/// A fitted surrogate together with what is needed to evaluate and audit it.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub problem: ProblemId,
    /// `data_driven`, `pc2` or `pc2_with_data`.
    pub mode: String,
    pub crate_version: String,
    pub coefficients: CoefficientMatrix,
    /// Input-field KL bases in `ξ` column order.
    pub kl: Vec<KLBasis>,
}

impl SavedModel {
    pub fn set_a_hash(&self) -> [u8; 32] {
        self.coefficients.set_a.content_hash()
    }

    pub fn set_b_hash(&self) -> [u8; 32] {
        self.coefficients.set_b.content_hash()
    }

    /// Errors unless the model was built with exactly these index sets.
    pub fn check_compatible(&self, problem: ProblemId, set_a: &MultiIndexSet, set_b: &MultiIndexSet) -> Result<()> {
        let fail = |m: String| Err(Error::Model(ModelError::Incompatible(m)));
        if problem != self.problem {
            return fail(format!("model is for {}, configuration asks for {problem}", self.problem));
        }
        if set_a.content_hash() != self.set_a_hash() {
            return fail(format!(
                "stochastic index set differs (model P = {}, configuration P = {})",
                self.coefficients.p(),
                set_a.len()
            ));
        }
        if set_b.content_hash() != self.set_b_hash() {
            return fail(format!(
                "spatio-temporal index set differs (model Q = {}, configuration Q = {})",
                self.coefficients.q(),
                set_b.len()
            ));
        }
        Ok(())
    }

    /// Bitwise equality of every stored array.
    pub fn same_data(&self, other: &SavedModel) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let (a, b) = (&self.coefficients, &other.coefficients);
        self.problem == other.problem
            && self.mode == other.mode
            && a.set_a == b.set_a
            && a.set_b == b.set_b
            && bits(a.domain_map.lower()) == bits(b.domain_map.lower())
            && bits(a.domain_map.upper()) == bits(b.domain_map.upper())
            && a.values.shape() == b.values.shape()
            && bits(a.values.as_slice()) == bits(b.values.as_slice())
            && self.kl.len() == other.kl.len()
            && self.kl.iter().zip(&other.kl).all(|(x, y)| x.same_data(y))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.coefficients;
        let mut sections: Vec<Vec<u8>> = Vec::with_capacity(TAGS.len());

        let mut w = Writer::default();
        w.str(self.problem.as_str());
        w.str(&self.mode);
        w.str(&self.crate_version);
        w.str(c.convention());
        w.buf.extend_from_slice(&self.set_a_hash());
        w.buf.extend_from_slice(&self.set_b_hash());
        sections.push(w.buf);

        for set in [&c.set_a, &c.set_b] {
            let mut w = Writer::default();
            write_set(&mut w, set);
            sections.push(w.buf);
        }

        let mut w = Writer::default();
        w.f64s(c.domain_map.lower());
        w.f64s(c.domain_map.upper());
        sections.push(w.buf);

        let mut w = Writer::default();
        w.matrix(&c.values);
        sections.push(w.buf);

        let mut w = Writer::default();
        w.u64(self.kl.len() as u64);
        for k in &self.kl {
            k.write(&mut w);
        }
        sections.push(w.buf);

        let mut out = Writer::default();
        out.buf.extend_from_slice(MAGIC);
        out.u32(FORMAT_VERSION);
        out.u32(TAGS.len() as u32);
        for (tag, payload) in TAGS.iter().zip(&sections) {
            out.buf.extend_from_slice(*tag);
            out.u64(payload.len() as u64);
            out.buf.extend_from_slice(payload);
            out.buf.extend_from_slice(&checksum(payload));
        }
        out.buf
    }

    pub fn from_bytes(data: &[u8]) -> std::result::Result<Self, ModelError> {
        let mut r = Reader::new(data);
        if r.bytes(8).map_err(|_| ModelError::BadMagic)? != MAGIC {
            return Err(ModelError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(ModelError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = r.u32()? as usize;
        if count != TAGS.len() {
            return Err(ModelError::Malformed(format!("{count} sections, expected {}", TAGS.len())));
        }
        let mut payloads = Vec::with_capacity(count);
        for tag in TAGS {
            let found = r.bytes(4)?;
            if found != tag {
                return Err(ModelError::Malformed(format!(
                    "expected section {}, found {:?}",
                    String::from_utf8_lossy(tag),
                    String::from_utf8_lossy(found)
                )));
            }
            let len = r.len()?;
            let payload = r.bytes(len)?;
            let sum = r.bytes(8)?;
            if sum != checksum(payload) {
                return Err(ModelError::Checksum {
                    section: String::from_utf8_lossy(tag).into_owned(),
                });
            }
            payloads.push(payload);
        }
        if r.remaining() != 0 {
            return Err(ModelError::Malformed(format!("{} trailing bytes", r.remaining())));
        }

        let mut meta = Reader::new(payloads[0]);
        let problem: ProblemId = meta
            .str()?
            .parse()
            .map_err(|e: Error| ModelError::Malformed(e.to_string()))?;
        let mode = meta.str()?;
        let crate_version = meta.str()?;
        let convention = meta.str()?;
        if convention != crate::operator_fit::CONVENTION {
            return Err(ModelError::Incompatible(format!("coefficient convention `{convention}`")));
        }
        let hash_a = meta.bytes(32)?.to_vec();
        let hash_b = meta.bytes(32)?.to_vec();

        let set_a = read_set(&mut Reader::new(payloads[1]))?;
        let set_b = read_set(&mut Reader::new(payloads[2]))?;
        if set_a.content_hash()[..] != hash_a[..] {
            return Err(ModelError::HashMismatch { set: "set_A" });
        }
        if set_b.content_hash()[..] != hash_b[..] {
            return Err(ModelError::HashMismatch { set: "set_B" });
        }

        let mut dm = Reader::new(payloads[3]);
        let lower = dm.f64s()?;
        let upper = dm.f64s()?;
        let domain_map = DomainMap::new(lower, upper).map_err(|e| ModelError::Malformed(e.to_string()))?;

        let values = Reader::new(payloads[4]).matrix()?;
        let coefficients =
            CoefficientMatrix::new(values, set_a, set_b, domain_map).map_err(|e| ModelError::Malformed(e.to_string()))?;

        let mut kr = Reader::new(payloads[5]);
        let n = kr.u64()? as usize;
        if n > kr.remaining() {
            return Err(ModelError::Truncated);
        }
        let kl = (0..n).map(|_| KLBasis::read(&mut kr)).collect::<std::result::Result<Vec<_>, _>>()?;

        Ok(SavedModel {
            problem,
            mode,
            crate_version,
            coefficients,
            kl,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&data)?)
    }
}

fn checksum(payload: &[u8]) -> [u8; 8] {
    let d = Sha256::digest(payload);
    let mut out = [0u8; 8];
    out.copy_from_slice(&d[..8]);
    out
}

fn write_set(w: &mut Writer, set: &MultiIndexSet) {
    let t = set.truncation();
    w.u64(set.dim() as u64);
    w.u64(t.total_degree as u64);
    match t.hyperbolic_q {
        Some(q) => {
            w.u8(1);
            w.f64(q);
        }
        None => w.u8(0),
    }
    w.u64(set.exponents().len() as u64);
    for &a in set.exponents() {
        w.u32(a);
    }
}

fn read_set(r: &mut Reader) -> std::result::Result<MultiIndexSet, ModelError> {
    let dim = r.u64()? as usize;
    let total_degree = r.u64()? as usize;
    let hyperbolic_q = match r.u8()? {
        0 => None,
        1 => Some(r.f64()?),
        b => return Err(ModelError::Malformed(format!("truncation flag {b}"))),
    };
    let n = r.u64()? as usize;
    if n.checked_mul(4).is_none_or(|b| b > r.remaining()) {
        return Err(ModelError::Truncated);
    }
    let exps = (0..n).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
    MultiIndexSet::from_parts(
        dim,
        exps,
        Truncation {
            total_degree,
            hyperbolic_q,
        },
    )
    .map_err(|e| ModelError::Malformed(e.to_string()))
}
