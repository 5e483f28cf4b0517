//! Little-endian primitives for the binary model container.

use nalgebra::DMatrix;

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }

    /// Dimensions header followed by column-major values.
    pub fn matrix(&mut self, m: &DMatrix<f64>) {
        self.u64(m.nrows() as u64);
        self.u64(m.ncols() as u64);
        for &x in m.as_slice() {
            self.f64(x);
        }
    }
}

/// Reports running out of bytes; the caller maps it onto its own error type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Truncated;

pub(crate) struct Reader<'a> {
    data: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Reader { data }
    }

    pub fn remaining(&self) -> usize {
        self.data.len()
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], Truncated> {
        if self.data.len() < n {
            return Err(Truncated);
        }
        let (head, tail) = self.data.split_at(n);
        self.data = tail;
        Ok(head)
    }

    pub fn u8(&mut self) -> Result<u8, Truncated> {
        Ok(self.bytes(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, Truncated> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, Truncated> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub fn len(&mut self) -> Result<usize, Truncated> {
        let n = self.u64()?;
        // A length larger than what is left cannot be honest.
        if n > self.data.len() as u64 {
            return Err(Truncated);
        }
        Ok(n as usize)
    }

    pub fn f64(&mut self) -> Result<f64, Truncated> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>, Truncated> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn str(&mut self) -> Result<String, Truncated> {
        let n = self.len()?;
        Ok(String::from_utf8_lossy(self.bytes(n)?).into_owned())
    }

    pub fn matrix(&mut self) -> Result<DMatrix<f64>, Truncated> {
        let r = self.u64()? as usize;
        let c = self.u64()? as usize;
        let count = r.checked_mul(c).ok_or(Truncated)?;
        if count.checked_mul(8).map_or(true, |b| b > self.data.len()) {
            return Err(Truncated);
        }
        let v: Vec<f64> = (0..count).map(|_| self.f64()).collect::<Result<_, _>>()?;
        Ok(DMatrix::from_vec(r, c, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let mut w = Writer::default();
        w.u32(7);
        w.str("abc");
        w.f64s(&[1.5, -0.0, f64::MIN_POSITIVE]);
        w.matrix(&DMatrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64));
        let mut r = Reader::new(&w.buf);
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.str().unwrap(), "abc");
        let v = r.f64s().unwrap();
        assert_eq!(v[1].to_bits(), (-0.0f64).to_bits());
        assert_eq!(r.matrix().unwrap()[(1, 2)], 5.0);
        assert_eq!(r.remaining(), 0);
        let mut short = Reader::new(&w.buf[..w.buf.len() - 1]);
        short.u32().unwrap();
        short.str().unwrap();
        short.f64s().unwrap();
        assert_eq!(short.matrix(), Err(Truncated));
    }
}
