//! Three-dimensional FFT built from 1D passes along each axis.
//!
//! Layout convention: a field component is a flat `Vec<Complex<f64>>` of
//! length `n^3` indexed by `(ix * n + iy) * n + iz`, so the z axis is
//! contiguous. The y and x passes stage each plane/sheet into a contiguous
//! scratch buffer so every 1D transform runs on unit-stride data.
//!
//! Normalisation: `forward` divides by `n^3`, `inverse` applies no factor,
//! so `inverse(forward(u)) == u` and coefficients are plain Fourier
//! amplitudes (`u(x) = sum_k c_k exp(i k.x)`).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Cached forward/inverse plans for one grid edge length.
#[derive(Clone)]
pub struct Fft3 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut cache = cache.lock().expect("fft plan cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut planner = planner().lock().expect("fft planner poisoned");
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let (fwd, inv) = plans(n);
        Fft3 { n, fwd, inv }
    }

    /// Physical samples -> Fourier coefficients (includes the 1/n^3 factor).
    pub fn forward(&self, data: &mut [Complex<f64>]) {
        self.transform(data, true);
        let scale = 1.0 / (self.n * self.n * self.n) as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }

    /// Fourier coefficients -> physical samples (no normalisation factor).
    pub fn inverse(&self, data: &mut [Complex<f64>]) {
        self.transform(data, false);
    }

    fn transform(&self, data: &mut [Complex<f64>], forward: bool) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "field length does not match grid");
        let plan = if forward { &self.fwd } else { &self.inv };

        // z axis: lines are already contiguous; one batched call.
        plan.process(data);

        // y axis: per x-plane, transpose (iy,iz) -> (iz,iy), batch, undo.
        let mut scratch = vec![Complex::new(0.0, 0.0); n * n];
        for plane in data.chunks_exact_mut(n * n) {
            for iy in 0..n {
                for iz in 0..n {
                    scratch[iz * n + iy] = plane[iy * n + iz];
                }
            }
            plan.process(&mut scratch);
            for iy in 0..n {
                for iz in 0..n {
                    plane[iy * n + iz] = scratch[iz * n + iy];
                }
            }
        }

        // x axis: per y-value, stage the xz sheet so x becomes contiguous.
        for iy in 0..n {
            for ix in 0..n {
                let base = (ix * n + iy) * n;
                for iz in 0..n {
                    scratch[iz * n + ix] = data[base + iz];
                }
            }
            plan.process(&mut scratch);
            for ix in 0..n {
                let base = (ix * n + iy) * n;
                for iz in 0..n {
                    data[base + iz] = scratch[iz * n + ix];
                }
            }
        }
    }
}
