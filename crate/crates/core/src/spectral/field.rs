//! Three-component coefficient fields and the operations the diagnostics
//! are built from: Leray projection, dealiasing, Sobolev-type norms,
//! collocation-grid sup norms, and shell spectra.

use num_complex::Complex;
use rand::Rng;
use serde::Serialize;

use super::fft::Fft3;
use super::grid::WavenumberGrid;
use super::SpectralError;

/// Velocity-like field stored as Fourier coefficients, one `Vec` per
/// Cartesian component, flat-indexed as `(ix * n + iy) * n + iz`.
///
/// Fields constructed by this crate are mean-zero, conjugate-symmetric
/// (they represent real vector fields) and, once projected, divergence-free.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: WavenumberGrid,
    coeffs: [Vec<Complex<f64>>; 3],
}

/// Collocation-grid maxima of `|u|` and of the Frobenius norm of the
/// velocity gradient tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupNorms {
    pub velocity: f64,
    pub gradient: f64,
}

/// Energy binned into unit-width wavenumber shells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    /// Shell centres `s * 2 pi / L` for `s = 0, 1, 2, ...`.
    pub shell_centers: Vec<f64>,
    /// Energy per shell; the sum equals the squared L2 norm of the field.
    pub shell_energy: Vec<f64>,
}

impl SpectralField {
    pub fn zero(grid: WavenumberGrid) -> Self {
        let z = vec![Complex::new(0.0, 0.0); grid.modes()];
        SpectralField { grid, coeffs: [z.clone(), z.clone(), z] }
    }

    pub fn grid(&self) -> WavenumberGrid {
        self.grid
    }

    pub fn components(&self) -> &[Vec<Complex<f64>>; 3] {
        &self.coeffs
    }

    pub fn components_mut(&mut self) -> &mut [Vec<Complex<f64>>; 3] {
        &mut self.coeffs
    }

    pub fn coeff(&self, m: [i64; 3]) -> [Complex<f64>; 3] {
        let idx = self.grid.index_of(m);
        [self.coeffs[0][idx], self.coeffs[1][idx], self.coeffs[2][idx]]
    }

    pub fn set_coeff(&mut self, m: [i64; 3], value: [Complex<f64>; 3]) {
        let idx = self.grid.index_of(m);
        for c in 0..3 {
            self.coeffs[c][idx] = value[c];
        }
    }

    /// Sets `m` and its conjugate partner together so the represented field
    /// stays real; self-conjugate modes keep only their real part.
    pub fn set_hermitian_pair(&mut self, m: [i64; 3], value: [Complex<f64>; 3]) {
        if self.grid.is_self_conjugate(m) {
            let real = [
                Complex::new(value[0].re, 0.0),
                Complex::new(value[1].re, 0.0),
                Complex::new(value[2].re, 0.0),
            ];
            self.set_coeff(m, real);
        } else {
            let partner = self.grid.conjugate_partner(m);
            self.set_coeff(m, value);
            self.set_coeff(partner, [value[0].conj(), value[1].conj(), value[2].conj()]);
        }
    }

    /// Random unit-amplitude phases on the modes accepted by `select`,
    /// conjugate-paired so the field is real. Draw order is the flat index
    /// order, so a seeded generator reproduces the field bit for bit.
    pub fn random_phases_on<R: Rng>(
        grid: WavenumberGrid,
        rng: &mut R,
        mut select: impl FnMut([i64; 3]) -> bool,
    ) -> Self {
        let mut field = SpectralField::zero(grid);
        for idx in 0..grid.modes() {
            let m = grid.int_wavevector(idx);
            if m == [0, 0, 0] || !select(m) {
                continue;
            }
            let partner = grid.conjugate_partner(m);
            if grid.is_self_conjugate(m) {
                let v = [
                    Complex::new(rng.gen_range(-1.0..1.0), 0.0),
                    Complex::new(rng.gen_range(-1.0..1.0), 0.0),
                    Complex::new(rng.gen_range(-1.0..1.0), 0.0),
                ];
                field.set_coeff(m, v);
            } else if m > partner {
                // One draw per conjugate pair, at the lexicographically
                // larger representative.
                let mut v = [Complex::new(0.0, 0.0); 3];
                for c in &mut v {
                    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                    *c = Complex::new(theta.cos(), theta.sin());
                }
                field.set_hermitian_pair(m, v);
            }
        }
        field
    }

    /// Builds coefficients from collocation samples of a real field.
    pub fn from_physical(
        grid: WavenumberGrid,
        samples: &[Vec<f64>; 3],
    ) -> Result<Self, SpectralError> {
        let fft = Fft3::new(grid.n());
        let mut coeffs: [Vec<Complex<f64>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for c in 0..3 {
            if samples[c].len() != grid.modes() {
                return Err(SpectralError::GridMismatch);
            }
            let mut buf: Vec<Complex<f64>> =
                samples[c].iter().map(|&v| Complex::new(v, 0.0)).collect();
            fft.forward(&mut buf);
            coeffs[c] = buf;
        }
        Ok(SpectralField { grid, coeffs })
    }

    /// Collocation samples of the represented real field.
    pub fn to_physical(&self) -> [Vec<f64>; 3] {
        let fft = Fft3::new(self.grid.n());
        let mut out: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for c in 0..3 {
            let mut buf = self.coeffs[c].clone();
            fft.inverse(&mut buf);
            out[c] = buf.iter().map(|z| z.re).collect();
        }
        out
    }

    /// Leray projection: removes the component of each coefficient along its
    /// wavevector, leaving every nonzero mode divergence-free. The zero mode
    /// is untouched.
    pub fn project_div_free(&mut self) {
        let [c0, c1, c2] = &mut self.coeffs;
        self.grid.for_each_mode(|idx, m| {
            let m2 = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64;
            if m2 == 0.0 {
                return;
            }
            let dot =
                c0[idx] * m[0] as f64 + c1[idx] * m[1] as f64 + c2[idx] * m[2] as f64;
            let scale = dot / m2;
            c0[idx] -= scale * m[0] as f64;
            c1[idx] -= scale * m[1] as f64;
            c2[idx] -= scale * m[2] as f64;
        });
    }

    /// Two-thirds-rule truncation: zeroes every coefficient with any axis
    /// wavenumber above `n/3`.
    pub fn dealias(&mut self) {
        let cutoff = self.grid.dealias_cutoff();
        let [c0, c1, c2] = &mut self.coeffs;
        self.grid.for_each_mode(|idx, m| {
            if m[0].abs() > cutoff || m[1].abs() > cutoff || m[2].abs() > cutoff {
                c0[idx] = Complex::new(0.0, 0.0);
                c1[idx] = Complex::new(0.0, 0.0);
                c2[idx] = Complex::new(0.0, 0.0);
            }
        });
    }

    /// Squared-gradient moment of order `order`:
    /// `L^3 * sum_k |k|^(2 order) |c(k)|^2`, so order 0 is the squared L2
    /// norm of the field over the box. Summation runs in flat index order
    /// for reproducibility.
    pub fn h_norm(&self, order: usize) -> f64 {
        let volume = self.grid.volume();
        let k0_sq = self.grid.fundamental() * self.grid.fundamental();
        let [c0, c1, c2] = &self.coeffs;
        let mut total = 0.0;
        self.grid.for_each_mode(|idx, m| {
            let k2 = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64 * k0_sq;
            let weight = k2.powi(order as i32);
            let mag = c0[idx].norm_sqr() + c1[idx].norm_sqr() + c2[idx].norm_sqr();
            total += weight * mag;
        });
        volume * total
    }

    /// L2 inner product `integral u . v dV` of two real fields.
    pub fn inner_l2(&self, other: &SpectralField) -> Result<f64, SpectralError> {
        if self.grid != other.grid {
            return Err(SpectralError::GridMismatch);
        }
        let mut total = 0.0;
        for idx in 0..self.grid.modes() {
            for c in 0..3 {
                total += (self.coeffs[c][idx] * other.coeffs[c][idx].conj()).re;
            }
        }
        Ok(self.grid.volume() * total)
    }

    /// Collocation-grid maxima of `|u|` and `|grad u|` (Frobenius).
    pub fn sup_norms(&self) -> SupNorms {
        let fft = Fft3::new(self.grid.n());
        let modes = self.grid.modes();

        let physical = self.to_physical();
        let mut velocity: f64 = 0.0;
        for p in 0..modes {
            let sq = physical[0][p] * physical[0][p]
                + physical[1][p] * physical[1][p]
                + physical[2][p] * physical[2][p];
            velocity = velocity.max(sq);
        }

        let mut grad_sq = vec![0.0f64; modes];
        let mut buf = vec![Complex::new(0.0, 0.0); modes];
        for comp in 0..3 {
            for axis in 0..3 {
                for idx in 0..modes {
                    let m = self.grid.int_wavevector(idx);
                    let k = m[axis] as f64 * self.grid.fundamental();
                    // d/dx_axis multiplies by i k_axis.
                    buf[idx] = Complex::new(0.0, k) * self.coeffs[comp][idx];
                }
                fft.inverse(&mut buf);
                for p in 0..modes {
                    grad_sq[p] += buf[p].re * buf[p].re;
                }
            }
        }
        let gradient = grad_sq.iter().fold(0.0f64, |a, &b| a.max(b));

        SupNorms { velocity: velocity.sqrt(), gradient: gradient.sqrt() }
    }

    /// Bins `L^3 |c(k)|^2` into unit-width shells centred at integer
    /// multiples of the fundamental wavenumber.
    pub fn shell_spectrum(&self) -> Spectrum {
        let half = self.grid.n() as f64 / 2.0;
        let max_shell = (half * 3.0f64.sqrt()).round() as usize + 1;
        let mut shell_energy = vec![0.0f64; max_shell + 1];
        let volume = self.grid.volume();
        for idx in 0..self.grid.modes() {
            let s = (self.grid.int_norm_sq(idx) as f64).sqrt().round() as usize;
            let mag = self.coeffs[0][idx].norm_sqr()
                + self.coeffs[1][idx].norm_sqr()
                + self.coeffs[2][idx].norm_sqr();
            shell_energy[s] += volume * mag;
        }
        let k0 = self.grid.fundamental();
        let shell_centers = (0..=max_shell).map(|s| s as f64 * k0).collect();
        Spectrum { shell_centers, shell_energy }
    }

    /// Worst relative divergence `|k . c(k)|` over modes, scaled by the
    /// largest `|k||c(k)|`; zero for an empty field.
    pub fn divergence_rel(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for idx in 0..self.grid.modes() {
            let m = self.grid.int_wavevector(idx);
            let dot = self.coeffs[0][idx] * m[0] as f64
                + self.coeffs[1][idx] * m[1] as f64
                + self.coeffs[2][idx] * m[2] as f64;
            let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64;
            let mag = (self.coeffs[0][idx].norm_sqr()
                + self.coeffs[1][idx].norm_sqr()
                + self.coeffs[2][idx].norm_sqr())
            .sqrt();
            worst = worst.max(dot.norm());
            scale = scale.max(norm.sqrt() * mag);
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Worst deviation from conjugate symmetry, relative to the largest
    /// coefficient magnitude; zero for an empty field.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for idx in 0..self.grid.modes() {
            let m = self.grid.int_wavevector(idx);
            let partner = self.coeff(self.grid.conjugate_partner(m));
            for c in 0..3 {
                worst = worst.max((self.coeffs[c][idx] - partner[c].conj()).norm());
                scale = scale.max(self.coeffs[c][idx].norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Largest single-axis integer wavenumber carrying a nonzero coefficient.
    pub fn max_active_wavenumber(&self) -> i64 {
        let mut max_m = 0i64;
        for idx in 0..self.grid.modes() {
            let mag = self.coeffs[0][idx].norm_sqr()
                + self.coeffs[1][idx].norm_sqr()
                + self.coeffs[2][idx].norm_sqr();
            if mag > 0.0 {
                let m = self.grid.int_wavevector(idx);
                max_m = max_m.max(m[0].abs().max(m[1].abs()).max(m[2].abs()));
            }
        }
        max_m
    }

    pub fn mean_mode(&self) -> [Complex<f64>; 3] {
        self.coeff([0, 0, 0])
    }

    pub fn zero_mean(&mut self) {
        self.set_coeff([0, 0, 0], [Complex::new(0.0, 0.0); 3]);
    }

    pub fn scale(&mut self, factor: f64) {
        for comp in self.coeffs.iter_mut() {
            for c in comp.iter_mut() {
                *c *= factor;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TAU: f64 = std::f64::consts::TAU;

    /// u = sin(m z) x_hat built directly from its two nonzero coefficients.
    fn axial_sine(grid: WavenumberGrid, m: i64) -> SpectralField {
        let mut f = SpectralField::zero(grid);
        // sin(mz) = (exp(imz) - exp(-imz)) / 2i, so c(+m) = -i/2.
        f.set_hermitian_pair(
            [0, 0, m],
            [Complex::new(0.0, -0.5), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)],
        );
        f
    }

    fn random_field(seed: u64, n: usize, l: f64) -> SpectralField {
        let grid = WavenumberGrid::new(n, l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = SpectralField::random_phases_on(grid, &mut rng, |m| {
            m.iter().all(|&c| c.abs() <= grid.dealias_cutoff())
        });
        f.scale(0.1);
        f
    }

    #[test]
    fn h_norm_of_single_mode_matches_closed_form() {
        // With L = 2 pi the coefficients at |m| = 1 each carry 1/4 of the unit
        // amplitude squared, so the squared L2 norm is (2 pi)^3 / 2.
        let grid = WavenumberGrid::new(16, TAU).unwrap();
        let f = axial_sine(grid, 1);
        let expected = TAU.powi(3) / 2.0;
        assert!((f.h_norm(0) - expected).abs() < 1e-12 * expected);
        // Every derivative order reproduces the same value at |k| = 1 ...
        for order in 1..=5 {
            assert!((f.h_norm(order) - expected).abs() < 1e-12 * expected);
        }
        // ... and scales as |k|^(2 order) at |k| = 2.
        let g = axial_sine(grid, 2);
        for order in 0..=5 {
            let want = expected * 4.0f64.powi(order as i32);
            assert!((g.h_norm(order as usize) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn physical_round_trip_of_sine_field() {
        let grid = WavenumberGrid::new(16, TAU).unwrap();
        let f = axial_sine(grid, 1);
        let phys = f.to_physical();
        let n = grid.n();
        for iz in 0..n {
            let z = TAU * iz as f64 / n as f64;
            let idx = iz; // ix = iy = 0
            assert!((phys[0][idx] - z.sin()).abs() < 1e-12);
            assert!(phys[1][idx].abs() < 1e-14);
        }
        let back = SpectralField::from_physical(grid, &phys).unwrap();
        for idx in 0..grid.modes() {
            for c in 0..3 {
                assert!((back.coeffs[c][idx] - f.coeffs[c][idx]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn sup_norms_of_sine_field() {
        let grid = WavenumberGrid::new(16, TAU).unwrap();
        let f = axial_sine(grid, 1);
        let s = f.sup_norms();
        // max |sin| = 1 is attained on the grid (n divisible by 4), and the
        // only gradient entry is cos(z) with max 1.
        assert!((s.velocity - 1.0).abs() < 1e-12);
        assert!((s.gradient - 1.0).abs() < 1e-12);

        let g = axial_sine(grid, 2);
        let s2 = g.sup_norms();
        assert!((s2.velocity - 1.0).abs() < 1e-12);
        assert!((s2.gradient - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_by_hand_on_one_mode() {
        let grid = WavenumberGrid::new(8, 1.0).unwrap();
        let mut f = SpectralField::zero(grid);
        let m = [1, 2, 2];
        let v = [
            Complex::new(1.0, -0.5),
            Complex::new(0.25, 0.75),
            Complex::new(-2.0, 0.125),
        ];
        f.set_hermitian_pair(m, v);
        f.project_div_free();

        // Hand-applied (I - m m^T / |m|^2) on v with m = (1,2,2), |m|^2 = 9.
        let dot = v[0] * 1.0 + v[1] * 2.0 + v[2] * 2.0;
        let expect = [
            v[0] - dot * (1.0 / 9.0),
            v[1] - dot * (2.0 / 9.0),
            v[2] - dot * (2.0 / 9.0),
        ];
        let got = f.coeff(m);
        for c in 0..3 {
            assert!((got[c] - expect[c]).norm() < 1e-14);
        }
        assert!(f.divergence_rel() < 1e-14);
    }

    #[test]
    fn dealias_zeroes_high_modes_only() {
        let grid = WavenumberGrid::new(32, 1.0).unwrap();
        let mut f = SpectralField::zero(grid);
        f.set_hermitian_pair([15, 0, 0], [Complex::new(0.3, 0.1); 3]);
        f.set_hermitian_pair([10, -10, 10], [Complex::new(0.2, -0.4); 3]);
        f.dealias();
        assert_eq!(f.coeff([15, 0, 0])[0], Complex::new(0.0, 0.0));
        assert!((f.coeff([10, -10, 10])[0] - Complex::new(0.2, -0.4)).norm() < 1e-15);
        assert_eq!(f.max_active_wavenumber(), 10);
    }

    #[test]
    fn shell_spectrum_conserves_energy_and_bins_by_radius() {
        let grid = WavenumberGrid::new(16, TAU).unwrap();
        let mut f = SpectralField::zero(grid);
        f.set_hermitian_pair([0, 0, 1], [Complex::new(0.0, -0.5), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)]);
        f.set_hermitian_pair([2, 1, 0], [Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), Complex::new(0.1, 0.2)]);
        let spec = f.shell_spectrum();
        let total: f64 = spec.shell_energy.iter().sum();
        let h0 = f.h_norm(0);
        assert!((total - h0).abs() < 1e-12 * h0);
        // |(2,1,0)| = sqrt(5) = 2.24 bins into shell 2.
        assert!(spec.shell_energy[2] > 0.0);
        assert_eq!(spec.shell_centers[2], 2.0 * grid.fundamental());
        assert_eq!(spec.shell_energy[3], 0.0);
    }

    #[test]
    fn random_fields_are_real_and_reproducible() {
        let a = random_field(42, 8, TAU);
        let b = random_field(42, 8, TAU);
        assert_eq!(a, b);
        assert!(a.hermitian_asymmetry() < 1e-15);
        let phys = a.to_physical();
        // Realness: rebuilding from the physical samples must reproduce the
        // coefficients (any imaginary residue would be lost).
        let back = SpectralField::from_physical(a.grid(), &phys).unwrap();
        for c in 0..3 {
            for idx in 0..a.grid().modes() {
                assert!((back.coeffs[c][idx] - a.coeffs[c][idx]).norm() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parseval_round_trip(seed in 0u64..1000) {
            let f = random_field(seed, 8, 2.0);
            let phys = f.to_physical();
            let grid = f.grid();
            // Grid quadrature of |u|^2 equals the coefficient-space value.
            let mut quad = 0.0;
            for p in 0..grid.modes() {
                quad += phys[0][p] * phys[0][p] + phys[1][p] * phys[1][p] + phys[2][p] * phys[2][p];
            }
            quad *= grid.volume() / grid.modes() as f64;
            let h0 = f.h_norm(0);
            prop_assert!((quad - h0).abs() <= 1e-12 * h0.max(1e-30));
        }

        #[test]
        fn projection_is_idempotent_and_contracts_energy(seed in 0u64..1000) {
            let mut f = random_field(seed, 8, 1.5);
            let before = f.h_norm(0);
            f.project_div_free();
            let after = f.h_norm(0);
            prop_assert!(after <= before * (1.0 + 1e-12));
            prop_assert!(f.divergence_rel() < 1e-13);
            let once = f.clone();
            f.project_div_free();
            for c in 0..3 {
                for idx in 0..f.grid().modes() {
                    prop_assert!((f.coeffs[c][idx] - once.coeffs[c][idx]).norm() <= 1e-14);
                }
            }
        }

        #[test]
        fn dealias_is_idempotent(seed in 0u64..1000) {
            let grid = WavenumberGrid::new(8, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut f = SpectralField::random_phases_on(grid, &mut rng, |_| true);
            f.dealias();
            let once = f.clone();
            f.dealias();
            prop_assert_eq!(f, once);
        }

        #[test]
        fn h_norm_interpolation_is_log_convex(seed in 0u64..1000) {
            // H_n^2 <= H_(n-1) H_(n+1): moment sequences of nonnegative
            // weights are log-convex.
            let f = random_field(seed, 8, TAU);
            for n in 1..=4usize {
                let lo = f.h_norm(n - 1);
                let mid = f.h_norm(n);
                let hi = f.h_norm(n + 1);
                prop_assert!(mid * mid <= lo * hi * (1.0 + 1e-9));
            }
        }

        #[test]
        fn shell_sum_matches_h0(seed in 0u64..1000) {
            let f = random_field(seed, 8, 0.7);
            let spec = f.shell_spectrum();
            let total: f64 = spec.shell_energy.iter().sum();
            let h0 = f.h_norm(0);
            prop_assert!((total - h0).abs() <= 1e-12 * h0.max(1e-30));
        }
    }
}
