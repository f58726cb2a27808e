//! MPE1 snapshot files.
//!
//! Layout: `b"MPE1"`, three `u32` LE dims `(nθ, nφ, nξ)`, a `u32` LE field
//! count, then per field a 16-byte space-padded ASCII name followed by
//! `nθ·nφ·nξ` little-endian `f64` values, θ-major then φ then ξ.

use std::io::{self, Read, Write};

use moistpe_core::mesh::{Grid, State};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"MPE1";
pub const NAME_LEN: usize = 16;

/// Field names used for a model state.
pub const STATE_FIELDS: [&str; 4] = ["v_theta", "v_phi", "T", "q"];

#[derive(Debug, Error)]
pub enum Mpe1Error {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not an MPE1 file (magic {0:?})")]
    Magic([u8; 4]),
    #[error("field name {0:?} is not ASCII or longer than 16 bytes")]
    Name(String),
    #[error("field {name} has {found} values, dims give {expected}")]
    Length { name: String, expected: usize, found: usize },
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("snapshot dims {found:?} do not match the grid {expected:?}")]
    Dims { expected: [u32; 3], found: [u32; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dims: [u32; 3],
    pub fields: Vec<(String, Vec<f64>)>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn from_state(grid: &Grid, u: &State) -> Self {
        let values = [&u.v.theta, &u.v.phi, &u.t.values, &u.q.values];
        Self {
            dims: [grid.n_theta() as u32, grid.n_phi() as u32, grid.n_xi() as u32],
            fields: STATE_FIELDS
                .iter()
                .zip(values)
                .map(|(n, v)| (n.to_string(), v.clone()))
                .collect(),
        }
    }

    /// Rebuilds a state; `T` and `q` take the Robin conditions given and
    /// `Φ_s` is zero.
    pub fn to_state(&self, grid: &Grid, alpha: f64, beta: f64) -> Result<State, Mpe1Error> {
        let expected = [grid.n_theta() as u32, grid.n_phi() as u32, grid.n_xi() as u32];
        if self.dims != expected {
            return Err(Mpe1Error::Dims {
                expected,
                found: self.dims,
            });
        }
        let get = |name: &'static str| self.field(name).map(<[f64]>::to_vec).ok_or(Mpe1Error::MissingField(name));
        let mut u = State::zeros(grid, alpha, beta);
        u.v.theta = get("v_theta")?;
        u.v.phi = get("v_phi")?;
        u.t.values = get("T")?;
        u.q.values = get("q")?;
        Ok(u)
    }

    pub fn write(&self, mut w: impl Write) -> Result<(), Mpe1Error> {
        let n = self.len();
        w.write_all(MAGIC)?;
        for d in self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&(self.fields.len() as u32).to_le_bytes())?;
        for (name, values) in &self.fields {
            if !name.is_ascii() || name.len() > NAME_LEN {
                return Err(Mpe1Error::Name(name.clone()));
            }
            if values.len() != n {
                return Err(Mpe1Error::Length {
                    name: name.clone(),
                    expected: n,
                    found: values.len(),
                });
            }
            let mut padded = [b' '; NAME_LEN];
            padded[..name.len()].copy_from_slice(name.as_bytes());
            w.write_all(&padded)?;
            let mut buf = Vec::with_capacity(8 * n);
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read(mut r: impl Read) -> Result<Self, Mpe1Error> {
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        if &word != MAGIC {
            return Err(Mpe1Error::Magic(word));
        }
        let next_u32 = |r: &mut dyn Read| -> io::Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let dims = [next_u32(&mut r)?, next_u32(&mut r)?, next_u32(&mut r)?];
        let count = next_u32(&mut r)?;
        let n: usize = dims.iter().map(|&d| d as usize).product();
        let mut fields = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let mut name = [0u8; NAME_LEN];
            r.read_exact(&mut name)?;
            let name = String::from_utf8_lossy(&name).trim_end_matches(' ').to_string();
            let mut buf = vec![0u8; 8 * n];
            r.read_exact(&mut buf)?;
            let values = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            fields.push((name, values));
        }
        Ok(Self { dims, fields })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let s = Snapshot {
            dims: [1, 2, 1],
            fields: vec![("T".into(), vec![1.0, -2.5])],
        };
        let mut bytes = Vec::new();
        s.write(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"MPE1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &1u32.to_le_bytes());
        assert_eq!(&bytes[20..36], b"T               ");
        assert_eq!(&bytes[36..44], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 16 + 16);
        assert_eq!(Snapshot::read(bytes.as_slice()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Snapshot::read(&b"MPE2\0\0\0\0"[..]), Err(Mpe1Error::Magic(_))));
        let long = Snapshot {
            dims: [1, 1, 1],
            fields: vec![("a_very_long_field_name".into(), vec![0.0])],
        };
        assert!(matches!(long.write(Vec::new()), Err(Mpe1Error::Name(_))));
        let short = Snapshot {
            dims: [1, 1, 2],
            fields: vec![("T".into(), vec![0.0])],
        };
        assert!(matches!(short.write(Vec::new()), Err(Mpe1Error::Length { .. })));
    }
}
