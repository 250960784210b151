//! Wavenumber grid, coefficient fields, transforms, norms, and snapshots.

mod checkpoint;
mod fft;
mod field;
mod grid;

pub use checkpoint::{
    read_checkpoint, read_checkpoint_file, write_checkpoint, write_checkpoint_file, MAGIC, VERSION,
};
pub use fft::Fft3;
pub use field::{SpectralField, Spectrum, SupNorms};
pub use grid::WavenumberGrid;

#[derive(Debug, thiserror::Error)]
pub enum SpectralError {
    #[error("grid edge length must be even and at least 8, got {0}")]
    InvalidGridSize(usize),
    #[error("box length must be positive and finite, got {0}")]
    InvalidBoxLength(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("snapshot io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a coefficient snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("snapshot payload truncated")]
    Truncated,
}
