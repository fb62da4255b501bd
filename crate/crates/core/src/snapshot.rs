//! Binary field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `FINS` |
//! | 4 | format version (`u32`) |
//! | 4 | `n` (`u32`) |
//! | 8 | box length (`f64`) |
//! | 8 | time (`f64`) |
//! | 8 | alpha (`f64`) |
//! | 4 | field count (`u32`) |
//!
//! then per field a 16-byte zero-padded ASCII name followed by `n * n` `f64`
//! values in row-major order (first index is `x1`).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;
use crate::solver::SimState;

pub const MAGIC: &[u8; 4] = b"FINS";
pub const VERSION: u32 = 1;
pub const NAME_LEN: usize = 16;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 8 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub n: u32,
    pub box_length: f64,
    pub t: f64,
    pub alpha: f64,
    pub fields: Vec<(String, Vec<f64>)>,
}

impl Snapshot {
    pub fn new(grid: &Grid2D, t: f64, alpha: f64) -> Self {
        Self {
            n: grid.n() as u32,
            box_length: grid.box_length(),
            t,
            alpha,
            fields: vec![],
        }
    }

    pub fn push(&mut self, name: &str, f: &ScalarField) -> Result<()> {
        if name.is_empty() || name.len() > NAME_LEN || !name.is_ascii() || name.contains('\0') {
            return Err(Error::Format(format!("field name `{name}` must be 1..=16 ASCII bytes")));
        }
        if f.grid.n() as u32 != self.n || f.grid.box_length() != self.box_length {
            return Err(Error::GridMismatch);
        }
        self.fields.push((name.to_string(), f.data.clone()));
        Ok(())
    }

    /// `rho`, `u1`, `u2`, `pi` of a solver state.
    pub fn from_state(s: &SimState) -> Result<Self> {
        let mut snap = Self::new(s.grid(), s.t, s.params.alpha);
        snap.push("rho", &s.rho)?;
        snap.push("u1", &s.u.comp[0])?;
        snap.push("u2", &s.u.comp[1])?;
        snap.push("pi", &s.pi)?;
        Ok(snap)
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.n as usize, self.box_length)
    }

    pub fn field(&self, name: &str) -> Result<ScalarField> {
        let (_, data) = self
            .fields
            .iter()
            .find(|(k, _)| k == name)
            .ok_or_else(|| Error::Format(format!("snapshot has no field `{name}`")))?;
        ScalarField::from_vec(&self.grid()?, data.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let len = (self.n as usize).pow(2);
        let mut out = Vec::with_capacity(HEADER_LEN + self.fields.len() * (NAME_LEN + 8 * len));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.box_length.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        out.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for (name, data) in &self.fields {
            let mut label = [0u8; NAME_LEN];
            label[..name.len()].copy_from_slice(name.as_bytes());
            out.extend_from_slice(&label);
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |k: usize| -> Result<&[u8]> {
            if pos + k > b.len() {
                return Err(Error::Format(format!("truncated snapshot at byte {pos}")));
            }
            let s = &b[pos..pos + k];
            pos += k;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(Error::Format("bad magic at byte 0".into()));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version} at byte 4")));
        }
        let n = u32_at(take(4)?);
        let box_length = f64_at(take(8)?);
        let t = f64_at(take(8)?);
        let alpha = f64_at(take(8)?);
        let count = u32_at(take(4)?);
        Grid2D::new(n as usize, box_length).map_err(|e| Error::Format(format!("bad grid in header: {e}")))?;
        let len = (n as usize).pow(2);
        let mut fields = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let at = HEADER_LEN + fields.len() * (NAME_LEN + 8 * len);
            let label = take(NAME_LEN)?;
            let end = label.iter().position(|&c| c == 0).unwrap_or(NAME_LEN);
            if end == 0 || label[end..].iter().any(|&c| c != 0) || !label[..end].is_ascii() {
                return Err(Error::Format(format!("bad field name at byte {at}")));
            }
            let name = String::from_utf8(label[..end].to_vec()).unwrap();
            let raw = take(8 * len)?;
            let data = raw.chunks_exact(8).map(f64_at).collect();
            fields.push((name, data));
        }
        if pos != b.len() {
            return Err(Error::Format(format!("{} trailing bytes at byte {pos}", b.len() - pos)));
        }
        Ok(Self {
            n,
            box_length,
            t,
            alpha,
            fields,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = vec![];
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        let g = Grid2D::new(8, 3.0).unwrap();
        let mut s = Snapshot::new(&g, 0.25, 0.75);
        s.push("rho", &ScalarField::from_fn(&g, |x, y| 1.0 + 0.1 * (x - y).sin())).unwrap();
        s.push("u1", &ScalarField::from_fn(&g, |x, _| x.cos())).unwrap();
        s
    }

    #[test]
    fn layout_is_as_documented() {
        let b = sample().to_bytes();
        assert_eq!(&b[..4], b"FINS");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 8);
        assert_eq!(f64::from_le_bytes(b[12..20].try_into().unwrap()), 3.0);
        assert_eq!(f64::from_le_bytes(b[20..28].try_into().unwrap()), 0.25);
        assert_eq!(f64::from_le_bytes(b[28..36].try_into().unwrap()), 0.75);
        assert_eq!(u32::from_le_bytes(b[36..40].try_into().unwrap()), 2);
        assert_eq!(&b[40..43], b"rho");
        assert!(b[43..56].iter().all(|&c| c == 0));
        assert_eq!(b.len(), 40 + 2 * (16 + 8 * 64));
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let s = sample();
        let b = s.to_bytes();
        let back = Snapshot::from_bytes(&b).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), b);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let mut b = sample().to_bytes();
        assert!(Snapshot::from_bytes(&b[..b.len() - 1]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(Snapshot::from_bytes(&extra).is_err());
        b[0] = b'X';
        assert!(matches!(Snapshot::from_bytes(&b), Err(Error::Format(m)) if m.contains("magic")));
        let g = Grid2D::new(8, 3.0).unwrap();
        let mut s = Snapshot::new(&g, 0.0, 0.75);
        assert!(s.push("a_name_longer_than_16", &ScalarField::zeros(&g)).is_err());
        assert!(s.push("x", &ScalarField::zeros(&Grid2D::new(16, 3.0).unwrap())).is_err());
    }
}
