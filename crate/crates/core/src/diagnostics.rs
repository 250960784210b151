//! Per-sample spectral-moment diagnostics and long-time running averages.
//!
//! A [`DiagSample`] captures everything the analysis stage needs from one
//! solver state: the Sobolev moments `H_n`, their forcing-augmented
//! counterparts `F_n`, the moment-ratio inverse lengths `kappa_{n,r}`, sup
//! norms, the `Y_n` companions, and the instantaneous energy input.
//! [`RunningAverages`] then accumulates trapezoidal time averages of the
//! derived series that the interval classifier and the scaling checks
//! consume.

use crate::dynamics::{energy_input, ForcingField};
use crate::spectral::SpectralField;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("delta must lie strictly inside (0, 1/6), got {0}")]
    DeltaOutOfRange(f64),
    #[error("Grashof number must be positive, got {0}")]
    GrashofNotPositive(f64),
    #[error("kappa_(n,r) needs 0 <= r < n, got n = {n}, r = {r}")]
    BadMomentOrders { n: u32, r: u32 },
    #[error("mu must lie strictly inside (0, 1), got {0}")]
    MuOutOfUnitRange(f64),
    #[error("no samples fall inside the averaging horizon")]
    EmptyHorizon,
    #[error("sample times must increase strictly: {prev} then {next}")]
    TimeRegression { prev: f64, next: f64 },
    #[error("series must be positive; entry {index} is {value}")]
    NonPositiveEntry { index: usize, value: f64 },
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("ratio series needs kappa_(n+1) >= kappa_n; entry {index} has {upper} < {lower}")]
    OrderingViolated { index: usize, upper: f64, lower: f64 },
    #[error("unknown average channel {0}")]
    UnknownChannel(String),
}

/// Characteristic forcing time `tau = ell^2 nu^-1 Gr^-(delta + 1/2)`.
pub fn tau(nu: f64, ell: f64, grashof: f64, delta: f64) -> Result<f64, DiagnosticsError> {
    if !(delta > 0.0 && delta < 1.0 / 6.0) {
        return Err(DiagnosticsError::DeltaOutOfRange(delta));
    }
    if !(grashof > 0.0) {
        return Err(DiagnosticsError::GrashofNotPositive(grashof));
    }
    Ok(ell * ell / nu * grashof.powf(-(delta + 0.5)))
}

/// Forcing contribution to the order-n augmented moment:
/// `tau^2 k_f^2n ||f||_2^2`. Exact because the forcing lives on a single
/// wavenumber shell.
pub fn forcing_moment(forcing: &ForcingField, tau: f64, n: u32) -> f64 {
    tau * tau * forcing.wavenumber().powi(2 * n as i32) * forcing.l2_norm_sq()
}

/// Forcing-augmented moment `F_n = H_n + tau^2 k_f^2n ||f||_2^2`.
pub fn f_n(u: &SpectralField, forcing: &ForcingField, tau: f64, n: u32) -> f64 {
    u.h_norm(n as usize) + forcing_moment(forcing, tau, n)
}

/// Moment-ratio inverse length `kappa_(n,r) = (F_n/F_r)^(1/(2(n-r)))`;
/// `kappa_n` means `r = 0`.
pub fn kappa(
    u: &SpectralField,
    forcing: &ForcingField,
    tau: f64,
    n: u32,
    r: u32,
) -> Result<f64, DiagnosticsError> {
    if r >= n {
        return Err(DiagnosticsError::BadMomentOrders { n, r });
    }
    let fn_ = f_n(u, forcing, tau, n);
    let fr = f_n(u, forcing, tau, r);
    Ok((fn_ / fr).powf(1.0 / (2.0 * (n - r) as f64)))
}

/// Everything the analysis stage needs from one solver state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagSample {
    pub t: f64,
    /// `H_0 ..= H_(n_max+1)`.
    pub h: Vec<f64>,
    /// `F_0 ..= F_(n_max+1)`.
    pub f: Vec<f64>,
    /// `kappa[n-1][r] = kappa_(n,r)` for `1 <= n <= n_max`, `0 <= r < n`.
    pub kappa: Vec<Vec<f64>>,
    pub max_velocity: f64,
    pub max_gradient: f64,
    /// `Y_n = F_n^(-1/(2n-1))` for `n = 2 ..= n_max+1`.
    pub y: Vec<f64>,
    /// Instantaneous input rate `(u, f)_L2`.
    pub energy_input: f64,
}

impl DiagSample {
    /// Index of `kappa_(n,0)` rows: `kappa_n(n)` is the main sequence.
    pub fn kappa_n(&self, n: u32) -> f64 {
        self.kappa[n as usize - 1][0]
    }

    pub fn n_max(&self) -> u32 {
        self.kappa.len() as u32
    }

    /// Computes the full diagnostic record for state `u` at time `t`.
    pub fn compute(
        t: f64,
        u: &SpectralField,
        forcing: &ForcingField,
        tau: f64,
        n_max: u32,
    ) -> Self {
        let orders = n_max as usize + 2;
        let h: Vec<f64> = (0..orders).map(|n| u.h_norm(n)).collect();
        let f: Vec<f64> = (0..orders)
            .map(|n| h[n] + forcing_moment(forcing, tau, n as u32))
            .collect();
        let kappa = (1..=n_max as usize)
            .map(|n| {
                (0..n)
                    .map(|r| (f[n] / f[r]).powf(1.0 / (2.0 * (n - r) as f64)))
                    .collect()
            })
            .collect();
        let y = (2..orders)
            .map(|n| f[n].powf(-1.0 / (2.0 * n as f64 - 1.0)))
            .collect();
        let norms = u.sup_norms();
        DiagSample {
            t,
            h,
            f,
            kappa,
            max_velocity: norms.velocity,
            max_gradient: norms.gradient,
            y,
            energy_input: energy_input(u, forcing),
        }
    }
}

/// Trapezoidal time average of `values` over the span of `times`.
/// A single sample averages to itself.
pub fn trapezoid_average(times: &[f64], values: &[f64]) -> Result<f64, DiagnosticsError> {
    if times.len() != values.len() {
        return Err(DiagnosticsError::LengthMismatch { left: times.len(), right: values.len() });
    }
    if times.is_empty() {
        return Err(DiagnosticsError::EmptyHorizon);
    }
    if times.len() == 1 {
        return Ok(values[0]);
    }
    let mut integral = 0.0;
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        if dt <= 0.0 {
            return Err(DiagnosticsError::TimeRegression { prev: times[i - 1], next: times[i] });
        }
        integral += 0.5 * dt * (values[i] + values[i - 1]);
    }
    Ok(integral / (times[times.len() - 1] - times[0]))
}

/// Named series accumulated sample-by-sample for later horizon averaging.
#[derive(Debug, Clone, Serialize)]
pub struct RunningAverages {
    n_max: u32,
    l: f64,
    mu: f64,
    times: Vec<f64>,
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl RunningAverages {
    /// Channels derived per sample: `l_kappa_n`, `kappa_n`, `kappa_1_sq`,
    /// `f_1`, `f_n_root` (= `F_n^(1/(2n-1))`), sup norms, `u_l2_sq`, and the
    /// ratio-average integrands `holder_ratio_n` (= `(kappa_(n+1)/kappa_n)^(alpha/mu)`),
    /// `kappa_n_alpha`, `l_kappa_n_alpha` with `alpha = 1 - mu`.
    pub fn new(n_max: u32, l: f64, mu: f64) -> Result<Self, DiagnosticsError> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(DiagnosticsError::MuOutOfUnitRange(mu));
        }
        let mut names = Vec::new();
        for n in 1..=n_max {
            names.push(format!("l_kappa_{n}"));
            names.push(format!("kappa_{n}"));
        }
        names.push("kappa_1_sq".to_string());
        names.push("f_1".to_string());
        for n in 2..=n_max + 1 {
            names.push(format!("f_{n}_root"));
        }
        names.push("u_inf".to_string());
        names.push("grad_u_inf_sqrt".to_string());
        names.push("u_l2_sq".to_string());
        for n in 1..n_max {
            names.push(format!("holder_ratio_{n}"));
            names.push(format!("kappa_{n}_alpha"));
            names.push(format!("l_kappa_{n}_alpha"));
        }
        let values = vec![Vec::new(); names.len()];
        Ok(RunningAverages { n_max, l, mu, times: Vec::new(), names, values })
    }

    /// Appends one sample; times must increase strictly.
    pub fn update(&mut self, sample: &DiagSample) -> Result<(), DiagnosticsError> {
        if let Some(&prev) = self.times.last() {
            if sample.t <= prev {
                return Err(DiagnosticsError::TimeRegression { prev, next: sample.t });
            }
        }
        let alpha = 1.0 - self.mu;
        let mut row = Vec::with_capacity(self.names.len());
        for n in 1..=self.n_max {
            let k = sample.kappa_n(n);
            row.push(self.l * k);
            row.push(k);
        }
        row.push(sample.kappa_n(1).powi(2));
        row.push(sample.f[1]);
        for n in 2..=self.n_max as usize + 1 {
            row.push(sample.f[n].powf(1.0 / (2.0 * n as f64 - 1.0)));
        }
        row.push(sample.max_velocity);
        row.push(sample.max_gradient.sqrt());
        row.push(sample.h[0]);
        for n in 1..self.n_max {
            let k = sample.kappa_n(n);
            let ratio = sample.kappa_n(n + 1) / k;
            row.push(ratio.powf(alpha / self.mu));
            row.push(k.powf(alpha));
            row.push((self.l * k).powf(alpha));
        }
        self.times.push(sample.t);
        for (channel, v) in self.values.iter_mut().zip(row) {
            channel.push(v);
        }
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Result<&[f64], DiagnosticsError> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DiagnosticsError::UnknownChannel(name.to_string()))?;
        Ok(&self.values[i])
    }

    /// Trapezoidal average of one channel over samples with `t0 <= t <= t1`.
    pub fn average_between(&self, name: &str, t0: f64, t1: f64) -> Result<f64, DiagnosticsError> {
        let series = self.channel(name)?;
        let lo = self.times.partition_point(|&t| t < t0);
        let hi = self.times.partition_point(|&t| t <= t1);
        if lo >= hi {
            return Err(DiagnosticsError::EmptyHorizon);
        }
        trapezoid_average(&self.times[lo..hi], &series[lo..hi])
    }

    /// Average over the whole accumulated horizon.
    pub fn average(&self, name: &str) -> Result<f64, DiagnosticsError> {
        let series = self.channel(name)?;
        trapezoid_average(&self.times, series)
    }
}

/// Run-level physical parameters, with Gr prescribed and Re measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BulkParameters {
    pub grashof: f64,
    pub reynolds: f64,
    /// `U = (L^-3 <H_0>)^(1/2)`.
    pub velocity_scale: f64,
    /// `eps = nu L^-3 <H_1>`.
    pub dissipation_rate: f64,
    /// Inverse Kolmogorov length `(eps/nu^3)^(1/4)`.
    pub kolmogorov_inv: f64,
    /// `<kappa_1>`, an inverse Taylor-type length.
    pub taylor_inv: f64,
    /// Averaging window actually used, after the burn-in skip.
    pub horizon: (f64, f64),
}

/// Measures the bulk parameters over the post-burn-in window.
pub fn bulk_parameters(
    samples: &[DiagSample],
    l: f64,
    ell: f64,
    nu: f64,
    f_amplitude: f64,
    burn_in_fraction: f64,
) -> Result<BulkParameters, DiagnosticsError> {
    if samples.is_empty() {
        return Err(DiagnosticsError::EmptyHorizon);
    }
    let t0 = samples[0].t;
    let t1 = samples[samples.len() - 1].t;
    let t_start = t0 + burn_in_fraction * (t1 - t0);
    let kept: Vec<&DiagSample> = samples.iter().filter(|s| s.t >= t_start).collect();
    if kept.is_empty() {
        return Err(DiagnosticsError::EmptyHorizon);
    }
    let times: Vec<f64> = kept.iter().map(|s| s.t).collect();
    let h0: Vec<f64> = kept.iter().map(|s| s.h[0]).collect();
    let h1: Vec<f64> = kept.iter().map(|s| s.h[1]).collect();
    let k1: Vec<f64> = kept.iter().map(|s| s.kappa_n(1)).collect();
    let vol = l.powi(3);
    let u_sq = trapezoid_average(&times, &h0)? / vol;
    let velocity_scale = u_sq.sqrt();
    let dissipation_rate = nu * trapezoid_average(&times, &h1)? / vol;
    Ok(BulkParameters {
        grashof: f_amplitude * ell.powi(3) / (nu * nu),
        reynolds: velocity_scale * ell / nu,
        velocity_scale,
        dissipation_rate,
        kolmogorov_inv: (dissipation_rate / nu.powi(3)).powf(0.25),
        taylor_inv: trapezoid_average(&times, &k1)?,
        horizon: (times[0], t1),
    })
}

/// Both sides of the ratio-average bound
/// `<(kappa_(n+1)/kappa_n)^(alpha/mu)> >= (<kappa_n^alpha>/<kappa_n>^alpha)^(1/mu)`,
/// `alpha = 1 - mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderBound {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Evaluates the ratio-average bound on sampled series. The bound is a pure
/// averaging theorem provided the series are positive and pointwise ordered
/// (`kappa_(n+1) >= kappa_n`, as moment ratios always are), so both are
/// checked.
pub fn holder_average_bound(
    times: &[f64],
    kappa_n: &[f64],
    kappa_np1: &[f64],
    mu: f64,
) -> Result<HolderBound, DiagnosticsError> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(DiagnosticsError::MuOutOfUnitRange(mu));
    }
    if kappa_n.len() != kappa_np1.len() {
        return Err(DiagnosticsError::LengthMismatch {
            left: kappa_n.len(),
            right: kappa_np1.len(),
        });
    }
    for (i, (&lo, &hi)) in kappa_n.iter().zip(kappa_np1).enumerate() {
        if !(lo > 0.0) {
            return Err(DiagnosticsError::NonPositiveEntry { index: i, value: lo });
        }
        if hi < lo * (1.0 - 1e-10) {
            return Err(DiagnosticsError::OrderingViolated { index: i, upper: hi, lower: lo });
        }
    }
    let alpha = 1.0 - mu;
    let ratio_pow: Vec<f64> = kappa_n
        .iter()
        .zip(kappa_np1)
        .map(|(&lo, &hi)| (hi / lo).powf(alpha / mu))
        .collect();
    let kn_alpha: Vec<f64> = kappa_n.iter().map(|&k| k.powf(alpha)).collect();
    let lhs = trapezoid_average(times, &ratio_pow)?;
    let mean_alpha = trapezoid_average(times, &kn_alpha)?;
    let mean = trapezoid_average(times, kappa_n)?;
    let rhs = (mean_alpha / mean.powf(alpha)).powf(1.0 / mu);
    Ok(HolderBound { lhs, rhs, margin: lhs - rhs })
}

/// Empirical estimates of the dimensionless constants in the sup-norm
/// interpolation inequalities; reported, never asserted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevEstimates {
    /// Per order `n = 2 ..= n_max`: max and median of
    /// `||u||_inf / (kappa_(n,1)^(1/2) F_1^(1/2))`.
    pub velocity: Vec<ConstantStat>,
    /// Per order `n = 2 ..= n_max`: max and median of
    /// `||grad u||_inf / (kappa_(n,1)^(3/2) F_1^(1/2))`.
    pub gradient: Vec<ConstantStat>,
    /// Max and median of `||u||_inf^2 / (kappa_(2,1) F_1)`.
    pub velocity_sq: ConstantStat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantStat {
    pub n: u32,
    pub max: f64,
    pub median: f64,
}

fn stat_of(n: u32, mut ratios: Vec<f64>) -> ConstantStat {
    ratios.sort_by(|a, b| a.total_cmp(b));
    let max = *ratios.last().unwrap();
    let m = ratios.len();
    let median = if m % 2 == 1 {
        ratios[m / 2]
    } else {
        0.5 * (ratios[m / 2 - 1] + ratios[m / 2])
    };
    ConstantStat { n, max, median }
}

/// Measures the sup-norm interpolation ratios over a run.
pub fn sobolev_constant_estimates(
    samples: &[DiagSample],
) -> Result<SobolevEstimates, DiagnosticsError> {
    if samples.is_empty() {
        return Err(DiagnosticsError::EmptyHorizon);
    }
    let n_max = samples[0].n_max();
    if n_max < 2 {
        return Err(DiagnosticsError::BadMomentOrders { n: n_max, r: 1 });
    }
    let mut velocity = Vec::new();
    let mut gradient = Vec::new();
    for n in 2..=n_max {
        let mut v = Vec::with_capacity(samples.len());
        let mut g = Vec::with_capacity(samples.len());
        for s in samples {
            let k_n1 = s.kappa[n as usize - 1][1];
            let f1_sqrt = s.f[1].sqrt();
            v.push(s.max_velocity / (k_n1.sqrt() * f1_sqrt));
            g.push(s.max_gradient / (k_n1.powf(1.5) * f1_sqrt));
        }
        velocity.push(stat_of(n, v));
        gradient.push(stat_of(n, g));
    }
    let vsq = samples
        .iter()
        .map(|s| s.max_velocity.powi(2) / (s.kappa[1][1] * s.f[1]))
        .collect();
    Ok(SobolevEstimates { velocity, gradient, velocity_sq: stat_of(2, vsq) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_forcing;
    use crate::spectral::WavenumberGrid;
    use num_complex::Complex;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    fn grid() -> WavenumberGrid {
        WavenumberGrid::new(16, 2.0 * std::f64::consts::PI).unwrap()
    }

    fn shell1_forcing(amplitude: f64) -> ForcingField {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        make_forcing(grid(), 1.0, amplitude, &mut rng).unwrap()
    }

    /// u = sin(k z) x_hat plus optionally sin(2k z) x_hat with equal amplitude.
    fn mode_field(two_modes: bool) -> SpectralField {
        let mut u = SpectralField::zero(grid());
        let half = Complex::new(0.0, -0.5);
        u.set_hermitian_pair([0, 0, 1], [half, Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)]);
        if two_modes {
            u.set_hermitian_pair([0, 0, 2], [half, Complex::new(0.0, 0.0), Complex::new(0.0, 0.0)]);
        }
        u
    }

    #[test]
    fn tau_frozen_value_and_edges() {
        let t = tau(0.01, 1.0, 1e6, 0.125).unwrap();
        assert!(close(t, 1.7782794100389226e-2, 1e-12));
        assert_eq!(tau(1.0, 1.0, 1.0, 0.1).unwrap(), 1.0);
        // Monotone decay in Gr.
        assert!(tau(0.01, 1.0, 1e8, 0.125).unwrap() < t);
        assert!(tau(0.01, 1.0, 1e6, 0.0).is_err());
        assert!(tau(0.01, 1.0, 1e6, 1.0 / 6.0).is_err());
        assert!(tau(0.01, 1.0, 0.0, 0.125).is_err());
    }

    #[test]
    fn f_n_reduces_to_h_n_at_zero_tau() {
        let u = mode_field(false);
        let fc = shell1_forcing(0.5);
        for n in 0..4 {
            assert_eq!(f_n(&u, &fc, 0.0, n), u.h_norm(n as usize));
        }
    }

    #[test]
    fn f_n_of_rest_state_is_the_forcing_floor() {
        let u = SpectralField::zero(grid());
        let fc = shell1_forcing(0.5);
        let t = 0.3;
        for n in 0..4 {
            let want = t * t * fc.wavenumber().powi(2 * n) * fc.l2_norm_sq();
            assert!(close(f_n(&u, &fc, t, n as u32), want, 1e-15));
            assert!(want > 0.0);
        }
    }

    #[test]
    fn f_n_sums_two_analytic_terms() {
        // Single-mode u at |k| = 1 plus shell-1 forcing: both terms known
        // in closed form.
        let u = mode_field(false);
        let fc = shell1_forcing(0.25);
        let t = 0.1;
        let l3 = (2.0 * std::f64::consts::PI).powi(3);
        let h0 = l3 / 2.0;
        for n in 0..4u32 {
            // |k| = 1 and k_f = 1, so both moments repeat the order-0 values.
            let want = h0 + t * t * fc.l2_norm_sq();
            assert!(close(f_n(&u, &fc, t, n), want, 1e-12), "n = {n}");
        }
    }

    #[test]
    fn kappa_single_mode_is_its_wavenumber() {
        let u = mode_field(false);
        let fc = shell1_forcing(0.5);
        for n in 1..5u32 {
            for r in 0..n {
                assert!(close(kappa(&u, &fc, 0.0, n, r).unwrap(), 1.0, 1e-12));
            }
        }
        assert!(kappa(&u, &fc, 0.0, 2, 2).is_err());
    }

    #[test]
    fn kappa_two_mode_frozen_values() {
        let u = mode_field(true);
        let fc = shell1_forcing(0.5);
        assert!(close(kappa(&u, &fc, 0.0, 1, 0).unwrap(), 1.5811388300841898, 1e-12));
        assert!(close(kappa(&u, &fc, 0.0, 2, 0).unwrap(), 1.7074764851741444, 1e-12));
    }

    #[test]
    fn kappa_invariant_under_field_rescaling_at_zero_tau() {
        let mut u = mode_field(true);
        let fc = shell1_forcing(0.5);
        let before = kappa(&u, &fc, 0.0, 3, 1).unwrap();
        u.scale(7.25);
        let after = kappa(&u, &fc, 0.0, 3, 1).unwrap();
        assert!(close(after, before, 1e-13));
    }

    #[test]
    fn sample_orders_kappa_and_floors_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fc = shell1_forcing(0.4);
        let u = crate::dynamics::make_initial_condition(grid(), 3, 0.8, &mut rng);
        let s = DiagSample::compute(0.0, &u, &fc, 0.05, 4);
        assert_eq!(s.h.len(), 6);
        assert_eq!(s.f.len(), 6);
        assert_eq!(s.y.len(), 4);
        // Main sequence ordered and above 1/L.
        let l = grid().box_length();
        let mut prev = 1.0 / l;
        for n in 1..=4 {
            let k = s.kappa_n(n);
            assert!(k >= prev * (1.0 - 1e-10), "kappa_{n} = {k} < {prev}");
            prev = k;
        }
        // Second-index ordering within each row.
        for row in &s.kappa {
            for w in row.windows(2) {
                assert!(w[1] >= w[0] * (1.0 - 1e-10));
            }
        }
        // F floors at the forcing term.
        for n in 0..6 {
            assert!(s.f[n] >= forcing_moment(&fc, 0.05, n as u32));
        }
        // Y matches its definition.
        for (i, n) in (2..=5).enumerate() {
            assert!(close(s.y[i], s.f[n].powf(-1.0 / (2.0 * n as f64 - 1.0)), 1e-14));
        }
    }

    #[test]
    fn trapezoid_average_exact_cases() {
        let times = [0.0, 0.5, 1.0, 2.0];
        assert_eq!(trapezoid_average(&times, &[3.0; 4]).unwrap(), 3.0);
        let linear: Vec<f64> = times.iter().map(|t| 4.0 * t).collect();
        assert!(close(trapezoid_average(&times, &linear).unwrap(), 4.0, 1e-14));
        assert!(trapezoid_average(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(trapezoid_average(&[], &[]).is_err());
        assert_eq!(trapezoid_average(&[2.0], &[5.0]).unwrap(), 5.0);
    }

    #[test]
    fn trapezoid_average_sine_nearly_cancels() {
        let n = 200;
        let period = 2.0 * std::f64::consts::PI;
        let times: Vec<f64> = (0..=n).map(|i| period * i as f64 / n as f64).collect();
        let vals: Vec<f64> = times.iter().map(|t| t.sin()).collect();
        let avg = trapezoid_average(&times, &vals).unwrap();
        assert!(avg.abs() < 2.0 * (period / n as f64) / period);
    }

    #[test]
    fn running_averages_accumulate_and_window() {
        let fc = shell1_forcing(0.4);
        let u = mode_field(true);
        let mut avg = RunningAverages::new(3, grid().box_length(), 0.55).unwrap();
        for i in 0..5 {
            let s = DiagSample::compute(i as f64, &u, &fc, 0.0, 3);
            avg.update(&s).unwrap();
        }
        // Static field: every channel averages to its pointwise value.
        let k1 = 1.5811388300841898;
        assert!(close(avg.average("kappa_1").unwrap(), k1, 1e-12));
        assert!(close(avg.average("l_kappa_1").unwrap(), grid().box_length() * k1, 1e-12));
        assert!(close(avg.average("kappa_1_sq").unwrap(), k1 * k1, 1e-12));
        assert!(close(avg.average_between("kappa_1", 2.0, 4.0).unwrap(), k1, 1e-12));
        assert!(avg.average_between("kappa_1", 10.0, 11.0).is_err());
        assert!(avg.average("no_such").is_err());
        // Regression rejected.
        let s = DiagSample::compute(3.0, &u, &fc, 0.0, 3);
        assert!(matches!(avg.update(&s), Err(DiagnosticsError::TimeRegression { .. })));
    }

    #[test]
    fn bulk_parameters_from_static_field() {
        let fc = shell1_forcing(0.4);
        let u = mode_field(false);
        let samples: Vec<DiagSample> =
            (0..11).map(|i| DiagSample::compute(i as f64, &u, &fc, 0.0, 2)).collect();
        let nu = 0.02;
        let p = bulk_parameters(&samples, grid().box_length(), 1.0, nu, 0.1, 0.2).unwrap();
        assert!(close(p.grashof, 0.1 / (nu * nu), 1e-14));
        // U^2 = L^-3 H_0 = 1/2 for the unit shear mode.
        assert!(close(p.velocity_scale, 0.5f64.sqrt(), 1e-12));
        assert!(close(p.reynolds, 0.5f64.sqrt() / nu, 1e-12));
        // H_1 = H_0 at |k| = 1, so eps = nu / 2 here.
        assert!(close(p.dissipation_rate, nu * 0.5, 1e-12));
        assert!(close(p.kolmogorov_inv, (0.5 / (nu * nu)).powf(0.25), 1e-12));
        assert!(close(p.taylor_inv, 1.0, 1e-12));
        // Burn-in trimmed the first 20%.
        assert_eq!(p.horizon, (2.0, 10.0));
        assert!(bulk_parameters(&[], 1.0, 1.0, 1.0, 1.0, 0.2).is_err());
    }

    #[test]
    fn holder_bound_equality_and_ratio_cases() {
        let times: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let ones = vec![1.0; 6];
        let b = holder_average_bound(&times, &ones, &ones, 0.55).unwrap();
        assert!(close(b.lhs, 1.0, 1e-14));
        assert!(close(b.rhs, 1.0, 1e-14));
        assert!(b.margin.abs() < 1e-12);

        // kappa constant, ratio constant 2: lhs = 2^(alpha/mu), rhs = 1.
        let twos: Vec<f64> = ones.iter().map(|v| 2.0 * v).collect();
        let b = holder_average_bound(&times, &ones, &twos, 0.55).unwrap();
        assert!(close(b.lhs, 2f64.powf(0.45 / 0.55), 1e-13));
        assert!(close(b.rhs, 1.0, 1e-14));
        assert!(b.margin > 0.0);

        // Errors: bad mu, length mismatch, nonpositive, disordered.
        assert!(holder_average_bound(&times, &ones, &twos, 1.0).is_err());
        assert!(holder_average_bound(&times, &ones[1..], &twos, 0.5).is_err());
        let mut neg = ones.clone();
        neg[3] = 0.0;
        assert!(holder_average_bound(&times, &neg, &twos, 0.5).is_err());
        let mut low = twos.clone();
        low[2] = 0.5;
        assert!(matches!(
            holder_average_bound(&times, &ones, &low, 0.5),
            Err(DiagnosticsError::OrderingViolated { index: 2, .. })
        ));
    }

    #[test]
    fn sobolev_ratios_scale_invariant_and_finite() {
        let fc = shell1_forcing(0.4);
        let mut u = mode_field(true);
        let s1 = DiagSample::compute(0.0, &u, &fc, 0.0, 3);
        u.scale(3.5);
        let s2 = DiagSample::compute(1.0, &u, &fc, 0.0, 3);
        let e1 = sobolev_constant_estimates(&[s1.clone()]).unwrap();
        let e2 = sobolev_constant_estimates(&[s2.clone()]).unwrap();
        for (a, b) in e1.velocity.iter().zip(&e2.velocity) {
            assert!(a.max > 0.0 && a.max.is_finite());
            assert!(close(a.max, b.max, 1e-12));
        }
        for (a, b) in e1.gradient.iter().zip(&e2.gradient) {
            assert!(close(a.max, b.max, 1e-12));
        }
        assert!(close(e1.velocity_sq.max, e2.velocity_sq.max, 1e-12));
        // Median of a two-sample run is the mean of both ratios.
        let both = sobolev_constant_estimates(&[s1, s2]).unwrap();
        assert!(close(both.velocity[0].median, e1.velocity[0].max, 1e-12));
        assert!(sobolev_constant_estimates(&[]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        /// Ratio-average bound on ordered positive series: brute-force check
        /// that the margin is never meaningfully negative.
        #[test]
        fn holder_margin_nonnegative_on_ordered_series(
            base in proptest::collection::vec(1e-3f64..1e3, 2..40),
            bumps in proptest::collection::vec(1.0f64..50.0, 40),
            mu in 0.05f64..0.95,
        ) {
            let times: Vec<f64> = (0..base.len()).map(|i| i as f64).collect();
            let upper: Vec<f64> = base.iter().zip(&bumps).map(|(&k, &b)| k * b).collect();
            let b = holder_average_bound(&times, &base, &upper, mu).unwrap();
            prop_assert!(b.margin >= -1e-10 * b.rhs, "margin {} rhs {}", b.margin, b.rhs);
        }

        /// F-moment log-convexity carried through a full sample:
        /// F_1^2 <= F_2 F_0 and the general cross inequality.
        #[test]
        fn sample_moment_convexity(seed in 0u64..500, tau_v in 0.0f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fc = shell1_forcing(0.4);
            let u = crate::dynamics::make_initial_condition(grid(), 4, 0.8, &mut rng);
            let s = DiagSample::compute(0.0, &u, &fc, tau_v, 3);
            prop_assert!(s.f[1].powi(2) <= s.f[2] * s.f[0] * (1.0 + 1e-9));
            // F_N^(p+q) <= F_(N-p)^q F_(N+q)^p for (N, p, q) = (2, 1, 2) and (3, 2, 1).
            prop_assert!(s.f[2].powi(3) <= s.f[1].powi(2) * s.f[4] * (1.0 + 1e-9));
            prop_assert!(s.f[3].powi(3) <= s.f[1] * s.f[4].powi(2) * (1.0 + 1e-9));
        }
    }
}
