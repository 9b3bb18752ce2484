//! Binary field cache: the magic `KGL1`, then `n`, `m`, the field kind and the
//! component count as little-endian `u32`, an optional `u64` source index for
//! Green fields, then the payload as little-endian `f64`, point-major with the
//! components of one node adjacent.
//!
//! Metric components are `g_{11̄}` for `n = 1` and
//! `(g_{11̄}, g_{22̄}, Re g_{12̄}, Im g_{12̄})` for `n = 2`.

use num_complex::Complex64;

use crate::error::{KglError, Result};
use crate::field::{MetricField, ScalarField};
use crate::grid::GridSpec;
use crate::herm::Herm;

pub const MAGIC: &[u8; 4] = b"KGL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Scalar = 0,
    Metric = 1,
    Green = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CachedField {
    Scalar(ScalarField),
    Metric(MetricField),
    Green { source: u64, values: ScalarField },
}

fn header(out: &mut Vec<u8>, grid: &GridSpec, kind: FieldKind, components: u32) {
    out.extend_from_slice(MAGIC);
    for v in [grid.n() as u32, grid.m() as u32, kind as u32, components] {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(field: &CachedField) -> Vec<u8> {
    let mut out = Vec::new();
    match field {
        CachedField::Scalar(s) => {
            header(&mut out, s.grid(), FieldKind::Scalar, 1);
            s.values().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        CachedField::Green { source, values } => {
            header(&mut out, values.grid(), FieldKind::Green, 1);
            out.extend_from_slice(&source.to_le_bytes());
            values.values().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        CachedField::Metric(g) => {
            let n = g.n();
            header(&mut out, g.grid(), FieldKind::Metric, if n == 1 { 1 } else { 4 });
            for h in g.matrices() {
                let comps: &[f64] = if n == 1 {
                    &[h.diag[0]]
                } else {
                    &[h.diag[0], h.diag[1], h.off.re, h.off.im]
                };
                comps.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize) -> Result<&[u8]> {
        let end = self.pos + k;
        if end > self.bytes.len() {
            return Err(KglError::Format(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<CachedField> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(KglError::Format("bad magic".into()));
    }
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let kind = r.u32()?;
    let comps = r.u32()? as usize;
    let grid = GridSpec::new(n, m)?;
    let field = match (kind, comps) {
        (0, 1) => CachedField::Scalar(ScalarField::new(grid, r.f64s(grid.len())?)?),
        (2, 1) => {
            let source = r.u64()?;
            if source as usize >= grid.len() {
                return Err(KglError::Format(format!("source {source} outside grid")));
            }
            CachedField::Green {
                source,
                values: ScalarField::new(grid, r.f64s(grid.len())?)?,
            }
        }
        (1, c) if c == if n == 1 { 1 } else { 4 } => {
            let raw = r.f64s(grid.len() * c)?;
            let g = raw
                .chunks_exact(c)
                .map(|v| {
                    if n == 1 {
                        Herm::scalar(1, v[0])
                    } else {
                        Herm {
                            diag: [v[0], v[1]],
                            off: Complex64::new(v[2], v[3]),
                        }
                    }
                })
                .collect();
            CachedField::Metric(MetricField::new(grid, g)?)
        }
        _ => return Err(KglError::Format(format!("unknown kind {kind} with {comps} components"))),
    };
    if r.pos != bytes.len() {
        return Err(KglError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(field)
}
