//! Binary checkpoint layout, all little-endian:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic `KFPS`                              |
//! | 4     | format version (u32)                      |
//! | 4     | dimension n (u32)                         |
//! | 8     | box half-width L (f64)                    |
//! | 4     | nx (u32)                                  |
//! | 4     | nv (u32)                                  |
//! | 16·N  | coefficients as (re, im) f64 pairs        |
//!
//! The payload is row-major over `(alpha, k)`: the Fourier index varies
//! fastest, exactly as in [`StateVector::coeffs`].

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{PhaseGrid, StateVector};
use crate::error::{Error, Result};
use crate::fiber::CVector;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KFPS";
pub const CHECKPOINT_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 4 + 4;

pub fn encode(state: &StateVector) -> Vec<u8> {
    let g = &state.grid;
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * state.coeffs.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.dim as u32).to_le_bytes());
    buf.extend_from_slice(&g.box_half_width.to_le_bytes());
    buf.extend_from_slice(&(g.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(g.nv as u32).to_le_bytes());
    for c in state.coeffs.iter() {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    buf
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Config(format!("checkpoint: {}", msg.into()))
}

pub fn decode(bytes: &[u8]) -> Result<StateVector> {
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let dim = u32_at(8) as usize;
    let l = f64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let nx = u32_at(20) as usize;
    let nv = u32_at(24) as usize;
    let grid = PhaseGrid::new(dim, l, nx, nv).map_err(|e| corrupt(e.to_string()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 16 * grid.len() {
        return Err(corrupt(format!("payload has {} bytes, grid needs {}", payload.len(), 16 * grid.len())));
    }
    let coeffs = CVector::from_iterator(
        grid.len(),
        payload.chunks_exact(16).map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..16].try_into().expect("8 bytes")),
            )
        }),
    );
    StateVector::from_coeffs(&grid, coeffs)
}

/// Write atomically through a sibling temporary file.
pub fn write_checkpoint(path: &Path, state: &StateVector) -> Result<()> {
    let tmp = path.with_extension("kfps.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(state))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<StateVector> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}
