//! Uniform periodic grid and its integer wavenumber bookkeeping.

use serde::{Deserialize, Serialize};

use super::SpectralError;

/// Cubic periodic box `[0, L]^3` sampled on `n` points per axis.
///
/// Wavevectors are integer triples `m` scaled by the fundamental `2 pi / L`;
/// along each axis the FFT bin `i` holds `m = i` for `i <= n/2` and
/// `m = i - n` otherwise, so `|m| <= n/2` always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavenumberGrid {
    n: usize,
    l: f64,
}

impl WavenumberGrid {
    /// Requires an even edge length of at least 8 points and a positive box.
    pub fn new(n: usize, l: f64) -> Result<Self, SpectralError> {
        if n < 8 || n % 2 != 0 {
            return Err(SpectralError::InvalidGridSize(n));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(SpectralError::InvalidBoxLength(l));
        }
        Ok(WavenumberGrid { n, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.l
    }

    pub fn volume(&self) -> f64 {
        self.l * self.l * self.l
    }

    /// Number of modes (and collocation points): `n^3`.
    pub fn modes(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Smallest nonzero wavenumber magnitude `2 pi / L`.
    pub fn fundamental(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.l
    }

    /// Integer wavenumber for a 1D bin index.
    #[inline]
    pub fn bin_to_int(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// 1D bin index for an integer wavenumber (wraps negative values).
    #[inline]
    pub fn int_to_bin(&self, m: i64) -> usize {
        m.rem_euclid(self.n as i64) as usize
    }

    /// Flat index of the mode with integer wavevector `m`.
    #[inline]
    pub fn index_of(&self, m: [i64; 3]) -> usize {
        let ix = self.int_to_bin(m[0]);
        let iy = self.int_to_bin(m[1]);
        let iz = self.int_to_bin(m[2]);
        (ix * self.n + iy) * self.n + iz
    }

    /// Integer wavevector of a flat index.
    #[inline]
    pub fn int_wavevector(&self, idx: usize) -> [i64; 3] {
        let n = self.n;
        let iz = idx % n;
        let iy = (idx / n) % n;
        let ix = idx / (n * n);
        [self.bin_to_int(ix), self.bin_to_int(iy), self.bin_to_int(iz)]
    }

    /// Physical wavevector (integer triple times the fundamental).
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let m = self.int_wavevector(idx);
        let k0 = self.fundamental();
        [m[0] as f64 * k0, m[1] as f64 * k0, m[2] as f64 * k0]
    }

    /// Visits every mode in flat index order with its integer wavevector.
    /// Hot loops use this instead of [`Self::int_wavevector`] to avoid a
    /// division per mode.
    #[inline]
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, [i64; 3])) {
        let n = self.n;
        let mut idx = 0;
        for ix in 0..n {
            let mx = self.bin_to_int(ix);
            for iy in 0..n {
                let my = self.bin_to_int(iy);
                for iz in 0..n {
                    f(idx, [mx, my, self.bin_to_int(iz)]);
                    idx += 1;
                }
            }
        }
    }

    /// Squared integer wavevector magnitude `|m|^2`.
    #[inline]
    pub fn int_norm_sq(&self, idx: usize) -> i64 {
        let m = self.int_wavevector(idx);
        m[0] * m[0] + m[1] * m[1] + m[2] * m[2]
    }

    /// `|k|^2` in physical units.
    #[inline]
    pub fn k_squared(&self, idx: usize) -> f64 {
        let k0 = self.fundamental();
        self.int_norm_sq(idx) as f64 * k0 * k0
    }

    /// Two-thirds-rule retention test: keep only `|m_i| <= n/3` on every axis.
    #[inline]
    pub fn dealias_keeps(&self, m: [i64; 3]) -> bool {
        let cutoff = self.n as f64 / 3.0;
        m.iter().all(|&c| (c.abs() as f64) <= cutoff)
    }

    /// Largest integer wavenumber kept by the two-thirds rule.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n as f64 / 3.0).floor() as i64
    }

    /// Mirror of `m` under complex conjugation of the field (`-m`, except
    /// that a Nyquist component maps to itself).
    #[inline]
    pub fn conjugate_partner(&self, m: [i64; 3]) -> [i64; 3] {
        let half = (self.n / 2) as i64;
        let flip = |c: i64| if c == half { half } else { -c };
        [flip(m[0]), flip(m[1]), flip(m[2])]
    }

    /// True when `m` is its own conjugate partner.
    #[inline]
    pub fn is_self_conjugate(&self, m: [i64; 3]) -> bool {
        self.conjugate_partner(m) == m
    }
}
