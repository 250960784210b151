//! Binary coefficient snapshots.
//!
//! Layout (all little-endian):
//! - magic `b"KLAD"`;
//! - format version, `u32`;
//! - grid edge length `n`, `u32`;
//! - box length `L`, `f64`;
//! - for each mode in flat index order `(ix * n + iy) * n + iz`, the three
//!   components in order, each as an `(re, im)` pair of `f64`.
//!
//! Values are stored bit-exactly, so a write/read round trip reproduces the
//! field down to the last ulp — which the resume path relies on.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex;

use super::{SpectralError, SpectralField, WavenumberGrid};

pub const MAGIC: &[u8; 4] = b"KLAD";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(field: &SpectralField, mut w: W) -> Result<(), SpectralError> {
    let grid = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.n() as u32).to_le_bytes())?;
    w.write_all(&grid.box_length().to_le_bytes())?;
    let comps = field.components();
    for idx in 0..grid.modes() {
        for comp in comps.iter() {
            let c = comp[idx];
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<SpectralField, SpectralError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(SpectralError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(SpectralError::UnsupportedVersion(version));
    }
    let n = read_u32(&mut r)? as usize;
    let l = read_f64(&mut r)?;
    let grid = WavenumberGrid::new(n, l)?;
    let mut field = SpectralField::zero(grid);
    {
        let comps = field.components_mut();
        for idx in 0..grid.modes() {
            for comp in comps.iter_mut() {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                comp[idx] = Complex::new(re, im);
            }
        }
    }
    Ok(field)
}

pub fn write_checkpoint_file(field: &SpectralField, path: &Path) -> Result<(), SpectralError> {
    let file = File::create(path)?;
    write_checkpoint(field, BufWriter::new(file))
}

pub fn read_checkpoint_file(path: &Path) -> Result<SpectralField, SpectralError> {
    let file = File::open(path)?;
    read_checkpoint(BufReader::new(file))
}

fn truncated(e: std::io::Error) -> SpectralError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        SpectralError::Truncated
    } else {
        SpectralError::Io(e)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, SpectralError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, SpectralError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(f64::from_le_bytes(buf))
}
