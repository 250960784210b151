//! Splits the time axis into good and bad intervals from the moment-ratio
//! depletion test, extracts the dangerous cores where `F_n` still grows,
//! intersects bad sets across orders, and monitors the conditional energy
//! lower bound inside dangerous cores.

use crate::diagnostics::{trapezoid_average, DiagSample, DiagnosticsError};
use crate::scaling::{b_n, lambda_n, ScalingError};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IntervalsError {
    #[error("mu = {0} is outside the admissible window (1/2, 3/5); pass the override to proceed")]
    MuOutsideWindow(f64),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("classification of order {n} needs kappa up to {needed}, samples carry {available}")]
    MissingOrders { n: u32, needed: u32, available: u32 },
    #[error("at least two samples are needed")]
    NotEnoughSamples,
    #[error("interval sets cover different horizons: [{0}, {1}] vs [{2}, {3}]")]
    HorizonMismatch(f64, f64, f64, f64),
    #[error("no interval sets given")]
    NoSets,
    #[error("moment order {n} exceeds the stored F range {max}")]
    OrderOutOfRange { n: usize, max: usize },
    #[error("interval set invalid: {0}")]
    InvalidSet(String),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Good,
    Bad,
    Dangerous,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Good => write!(f, "good"),
            Label::Bad => write!(f, "bad"),
            Label::Dangerous => write!(f, "dangerous"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntervalEntry {
    pub start: f64,
    pub end: f64,
    pub label: Label,
}

/// Disjoint, sorted intervals covering one analyzed horizon for one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntervalSet {
    pub n: u32,
    pub min_duration: f64,
    pub entries: Vec<IntervalEntry>,
}

impl IntervalSet {
    /// Horizon covered: (first start, last end).
    pub fn horizon(&self) -> Option<(f64, f64)> {
        match (self.entries.first(), self.entries.last()) {
            (Some(a), Some(b)) => Some((a.start, b.end)),
            _ => None,
        }
    }

    pub fn entries_with(&self, label: Label) -> impl Iterator<Item = &IntervalEntry> {
        self.entries.iter().filter(move |e| e.label == label)
    }

    /// Checks ordering, disjointness, positive width, and (for good/bad
    /// sets) gap-free coverage of the horizon.
    pub fn validate(&self, contiguous: bool) -> Result<(), IntervalsError> {
        for (i, e) in self.entries.iter().enumerate() {
            if !(e.end > e.start) {
                return Err(IntervalsError::InvalidSet(format!(
                    "entry {i} has end {} <= start {}",
                    e.end, e.start
                )));
            }
            if i > 0 {
                let prev = &self.entries[i - 1];
                let ok = if contiguous { e.start == prev.end } else { e.start >= prev.end };
                if !ok {
                    return Err(IntervalsError::InvalidSet(format!(
                        "entry {i} starts at {} but the previous ends at {}",
                        e.start, prev.end
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierMode {
    /// Good iff `c_n (kappa_(n+1)/kappa_n) >= (L kappa_n)^mu Re^-lambda_n`.
    Theoretical,
    /// Good iff `kappa_(n+1)/kappa_n >= kappa_n^mu <kappa_n^alpha>/<kappa_n>`
    /// with `alpha = 1 - mu`: the measured level whose `(alpha/mu)`-power
    /// average the ratio-average bound guarantees, so at least one sample is
    /// always good. Replaces the unknowable constant of the theoretical rule.
    /// The comparison carries a 1e-12 relative slack so that exact equality
    /// at the threshold survives roundoff in the measured level.
    Empirical,
}

/// Settings for the good/bad classifier at one order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifierConfig {
    pub mu: f64,
    pub mode: ClassifierMode,
    /// Order constant of the theoretical rule; unknowable, defaults to 1.
    pub c_n: f64,
    /// Whole-run measured Reynolds number.
    pub reynolds: f64,
    /// Box length.
    pub l: f64,
    pub delta: f64,
}

/// Admissible window for `mu`: bad widths stay finite for n >= 2 and good
/// intervals stay regular for n >= 1 only inside (1/2, 3/5).
pub const MU_WINDOW: (f64, f64) = (0.5, 0.6);

impl ClassifierConfig {
    /// Rejects `mu` outside the admissible window.
    pub fn new(
        mu: f64,
        mode: ClassifierMode,
        c_n: f64,
        reynolds: f64,
        l: f64,
        delta: f64,
    ) -> Result<Self, IntervalsError> {
        let (cfg, warning) = Self::with_mu_override(mu, mode, c_n, reynolds, l, delta)?;
        match warning {
            None => Ok(cfg),
            Some(_) => Err(IntervalsError::MuOutsideWindow(mu)),
        }
    }

    /// Accepts any `mu` in (0, 1), returning a warning when it leaves the
    /// admissible window.
    pub fn with_mu_override(
        mu: f64,
        mode: ClassifierMode,
        c_n: f64,
        reynolds: f64,
        l: f64,
        delta: f64,
    ) -> Result<(Self, Option<String>), IntervalsError> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(IntervalsError::NonPositive { name: "mu in (0, 1)", value: mu });
        }
        if !(c_n > 0.0) {
            return Err(IntervalsError::NonPositive { name: "c_n", value: c_n });
        }
        if !(reynolds > 0.0) {
            return Err(IntervalsError::NonPositive { name: "reynolds", value: reynolds });
        }
        if !(l > 0.0) {
            return Err(IntervalsError::NonPositive { name: "l", value: l });
        }
        let warning = if mu <= MU_WINDOW.0 || mu >= MU_WINDOW.1 {
            Some(format!(
                "mu = {mu} is outside ({}, {}); width and regularity guarantees lapse",
                MU_WINDOW.0, MU_WINDOW.1
            ))
        } else {
            None
        };
        Ok((ClassifierConfig { mu, mode, c_n, reynolds, l, delta }, warning))
    }
}

/// Labels every sample good or bad for order `n`.
pub fn classify(
    samples: &[DiagSample],
    n: u32,
    cfg: &ClassifierConfig,
) -> Result<Vec<Label>, IntervalsError> {
    if samples.is_empty() {
        return Err(IntervalsError::NotEnoughSamples);
    }
    let available = samples[0].n_max();
    if n < 1 || n + 1 > available {
        return Err(IntervalsError::MissingOrders { n, needed: n + 1, available });
    }
    match cfg.mode {
        ClassifierMode::Theoretical => {
            let lambda = lambda_n(n, cfg.delta)?;
            let re_pow = cfg.reynolds.powf(-lambda);
            Ok(samples
                .iter()
                .map(|s| {
                    let kn = s.kappa_n(n);
                    let lhs = cfg.c_n * s.kappa_n(n + 1) / kn;
                    let rhs = (cfg.l * kn).powf(cfg.mu) * re_pow;
                    if lhs >= rhs {
                        Label::Good
                    } else {
                        Label::Bad
                    }
                })
                .collect())
        }
        ClassifierMode::Empirical => {
            let alpha = 1.0 - cfg.mu;
            let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
            let kn: Vec<f64> = samples.iter().map(|s| s.kappa_n(n)).collect();
            let kn_alpha: Vec<f64> = kn.iter().map(|k| k.powf(alpha)).collect();
            let level_scale =
                trapezoid_average(&times, &kn_alpha)? / trapezoid_average(&times, &kn)?;
            Ok(samples
                .iter()
                .map(|s| {
                    let k = s.kappa_n(n);
                    let lhs = s.kappa_n(n + 1) / k;
                    if lhs >= k.powf(cfg.mu) * level_scale * (1.0 - 1e-12) {
                        Label::Good
                    } else {
                        Label::Bad
                    }
                })
                .collect())
        }
    }
}

/// Maximal constant-label runs as sample index ranges.
fn runs_of(labels: &[Label]) -> Vec<(usize, usize, Label)> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            runs.push((start, i - 1, labels[start]));
            start = i;
        }
    }
    runs
}

fn run_bounds(runs: &[(usize, usize, Label)], k: usize, times: &[f64]) -> (f64, f64) {
    let start = if k == 0 {
        times[0]
    } else {
        0.5 * (times[runs[k - 1].1] + times[runs[k].0])
    };
    let end = if k == runs.len() - 1 {
        times[times.len() - 1]
    } else {
        0.5 * (times[runs[k].1] + times[runs[k + 1].0])
    };
    (start, end)
}

/// Converts per-sample labels into intervals. Boundaries sit midway between
/// the samples flanking a label change; the first start and last end are the
/// first and last sample times. Runs narrower than `min_duration` are folded
/// into their surroundings by repeatedly flipping the narrowest run (ties:
/// earliest) until every run is wide enough or one remains.
pub fn extract_intervals(
    n: u32,
    labels: &[Label],
    times: &[f64],
    min_duration: f64,
) -> Result<IntervalSet, IntervalsError> {
    if labels.len() != times.len() {
        return Err(IntervalsError::LengthMismatch { left: labels.len(), right: times.len() });
    }
    if times.len() < 2 {
        return Err(IntervalsError::NotEnoughSamples);
    }
    let mut labels = labels.to_vec();
    loop {
        let runs = runs_of(&labels);
        if runs.len() <= 1 {
            break;
        }
        let mut narrowest: Option<(f64, usize)> = None;
        for k in 0..runs.len() {
            let (a, b) = run_bounds(&runs, k, times);
            let width = b - a;
            if width < min_duration && narrowest.map_or(true, |(w, _)| width < w) {
                narrowest = Some((width, k));
            }
        }
        match narrowest {
            None => break,
            Some((_, k)) => {
                let flipped = match runs[k].2 {
                    Label::Good => Label::Bad,
                    Label::Bad => Label::Good,
                    Label::Dangerous => Label::Good,
                };
                for item in labels.iter_mut().take(runs[k].1 + 1).skip(runs[k].0) {
                    *item = flipped;
                }
            }
        }
    }
    let runs = runs_of(&labels);
    let entries = runs
        .iter()
        .enumerate()
        .map(|(k, &(_, _, label))| {
            let (start, end) = run_bounds(&runs, k, times);
            IntervalEntry { start, end, label }
        })
        .collect();
    Ok(IntervalSet { n, min_duration, entries })
}

/// Mean widths by label plus the predicted residence ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WidthStats {
    pub mean_good: Option<f64>,
    pub mean_bad: Option<f64>,
    /// `mean_good / mean_bad`; `None` when flagged infinite (no bad time).
    pub ratio: Option<f64>,
    pub infinite: bool,
    /// `c_n Re^(lambda_n (1/mu - 1))`.
    pub predicted_ratio: f64,
    pub measured_over_predicted: Option<f64>,
}

pub fn width_stats(set: &IntervalSet, cfg: &ClassifierConfig) -> Result<WidthStats, IntervalsError> {
    let mean = |label: Label| -> Option<f64> {
        let widths: Vec<f64> = set.entries_with(label).map(|e| e.end - e.start).collect();
        if widths.is_empty() {
            None
        } else {
            Some(widths.iter().sum::<f64>() / widths.len() as f64)
        }
    };
    let mean_good = mean(Label::Good);
    let mean_bad = mean(Label::Bad);
    let predicted_ratio =
        cfg.c_n * cfg.reynolds.powf(lambda_n(set.n, cfg.delta)? * (1.0 / cfg.mu - 1.0));
    let (ratio, infinite) = match (mean_good, mean_bad) {
        (Some(g), Some(b)) => (Some(g / b), false),
        (Some(_), None) => (None, true),
        _ => (None, false),
    };
    Ok(WidthStats {
        mean_good,
        mean_bad,
        ratio,
        infinite,
        predicted_ratio,
        measured_over_predicted: ratio.map(|r| r / predicted_ratio),
    })
}

/// Dangerous cores of the bad intervals, plus any skipped-interval warnings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DangerousReport {
    pub set: IntervalSet,
    pub warnings: Vec<String>,
}

/// Finds the sub-intervals of each bad interval on which the finite-difference
/// time derivative of `F_n` is nonnegative (centered inside, one-sided at the
/// interval ends). Bad intervals holding fewer than three samples are skipped
/// with a warning.
pub fn dangerous_subintervals(
    samples: &[DiagSample],
    n: usize,
    bad_set: &IntervalSet,
) -> Result<DangerousReport, IntervalsError> {
    if samples.is_empty() {
        return Err(IntervalsError::NotEnoughSamples);
    }
    if n >= samples[0].f.len() {
        return Err(IntervalsError::OrderOutOfRange { n, max: samples[0].f.len() - 1 });
    }
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for bad in bad_set.entries_with(Label::Bad) {
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].t >= bad.start && samples[i].t <= bad.end)
            .collect();
        if idx.len() < 3 {
            warnings.push(format!(
                "bad interval [{}, {}] holds {} samples, need 3; skipped",
                bad.start,
                bad.end,
                idx.len()
            ));
            continue;
        }
        let t = |j: usize| samples[idx[j]].t;
        let f = |j: usize| samples[idx[j]].f[n];
        let m = idx.len();
        let rising: Vec<bool> = (0..m)
            .map(|j| {
                let slope = if j == 0 {
                    (f(1) - f(0)) / (t(1) - t(0))
                } else if j == m - 1 {
                    (f(m - 1) - f(m - 2)) / (t(m - 1) - t(m - 2))
                } else {
                    (f(j + 1) - f(j - 1)) / (t(j + 1) - t(j - 1))
                };
                slope >= 0.0
            })
            .collect();
        let mut j = 0;
        while j < m {
            if rising[j] {
                let first = j;
                while j + 1 < m && rising[j + 1] {
                    j += 1;
                }
                let start = if first == 0 { bad.start } else { 0.5 * (t(first - 1) + t(first)) };
                let end = if j == m - 1 { bad.end } else { 0.5 * (t(j) + t(j + 1)) };
                entries.push(IntervalEntry { start, end, label: Label::Dangerous });
            }
            j += 1;
        }
    }
    Ok(DangerousReport {
        set: IntervalSet { n: bad_set.n, min_duration: 0.0, entries },
        warnings,
    })
}

/// Intersection of the bad entries across orders: the candidate singular
/// set after `sets.len()` stages. The result keeps the largest input `n`.
pub fn intersect_bad(sets: &[IntervalSet]) -> Result<IntervalSet, IntervalsError> {
    let first = sets.first().ok_or(IntervalsError::NoSets)?;
    let horizon = first.horizon();
    for s in &sets[1..] {
        if s.horizon() != horizon {
            let (a, b) = horizon.unwrap_or((f64::NAN, f64::NAN));
            let (c, d) = s.horizon().unwrap_or((f64::NAN, f64::NAN));
            return Err(IntervalsError::HorizonMismatch(a, b, c, d));
        }
    }
    let mut current: Vec<(f64, f64)> =
        first.entries_with(Label::Bad).map(|e| (e.start, e.end)).collect();
    for s in &sets[1..] {
        let other: Vec<(f64, f64)> = s.entries_with(Label::Bad).map(|e| (e.start, e.end)).collect();
        let mut next = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < current.len() && j < other.len() {
            let lo = current[i].0.max(other[j].0);
            let hi = current[i].1.min(other[j].1);
            if hi > lo {
                next.push((lo, hi));
            }
            if current[i].1 <= other[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        current = next;
    }
    Ok(IntervalSet {
        n: sets.iter().map(|s| s.n).max().unwrap(),
        min_duration: 0.0,
        entries: current
            .into_iter()
            .map(|(start, end)| IntervalEntry { start, end, label: Label::Bad })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EnergyMonitorEntry {
    pub start: f64,
    pub end: f64,
    pub samples: usize,
    pub violations: usize,
}

/// Violations of the conditional energy floor inside dangerous cores.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EnergyMonitorReport {
    pub entries: Vec<EnergyMonitorEntry>,
    pub total_samples: usize,
    pub total_violations: usize,
    pub flagged_fraction: f64,
}

/// Flags samples inside each dangerous core where the energy drops below
/// `H_0(t0) exp(-omega0 Re (t - t0))`, `t0` being the core's first sample.
/// Purely diagnostic: violations refute the conditional-regularity
/// hypothesis on that core, they do not indicate a numerical fault.
pub fn energy_lower_bound_monitor(
    samples: &[DiagSample],
    dangerous: &IntervalSet,
    omega0: f64,
    reynolds: f64,
) -> EnergyMonitorReport {
    let mut entries = Vec::new();
    let mut total_samples = 0;
    let mut total_violations = 0;
    for core in dangerous.entries_with(Label::Dangerous) {
        let inside: Vec<&DiagSample> =
            samples.iter().filter(|s| s.t >= core.start && s.t <= core.end).collect();
        if inside.is_empty() {
            continue;
        }
        let t0 = inside[0].t;
        let h00 = inside[0].h[0];
        let violations = inside
            .iter()
            .filter(|s| s.h[0] < h00 * (-omega0 * reynolds * (s.t - t0)).exp())
            .count();
        total_samples += inside.len();
        total_violations += violations;
        entries.push(EnergyMonitorEntry {
            start: core.start,
            end: core.end,
            samples: inside.len(),
            violations,
        });
    }
    EnergyMonitorReport {
        entries,
        total_samples,
        total_violations,
        flagged_fraction: if total_samples == 0 {
            0.0
        } else {
            total_violations as f64 / total_samples as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LowerBoundRow {
    pub quantity: &'static str,
    pub measured_min: f64,
    pub predicted: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LowerBoundInterval {
    pub start: f64,
    pub end: f64,
    pub rows: Vec<LowerBoundRow>,
}

/// Measured minima inside dangerous cores against the predicted lower-bound
/// magnitudes (report only; the predictions are asymptotic in Re).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LowerBoundReport {
    pub n: u32,
    pub intervals: Vec<LowerBoundInterval>,
}

/// Compares, per dangerous core, the minima of `L kappa_n`,
/// `L^-3 F_1/omega0^2`, `||u||_inf/(L omega0)`, and `||grad u||_inf/omega0`
/// against their predicted floors `c_n^(1/mu) Re^(lambda_n/mu)` (first row)
/// and `Re^(4 + b_n)` (the rest).
pub fn lower_bound_check(
    samples: &[DiagSample],
    n: u32,
    dangerous: &IntervalSet,
    cfg: &ClassifierConfig,
    omega0: f64,
) -> Result<LowerBoundReport, IntervalsError> {
    if !(omega0 > 0.0) {
        return Err(IntervalsError::NonPositive { name: "omega0", value: omega0 });
    }
    let lambda = lambda_n(n, cfg.delta)?;
    let b = b_n(lambda_n(n + 1, cfg.delta)?, cfg.mu)?;
    let kappa_floor = cfg.c_n.powf(1.0 / cfg.mu) * cfg.reynolds.powf(lambda / cfg.mu);
    let deep_floor = cfg.reynolds.powf(4.0 + b);
    let mut intervals = Vec::new();
    for core in dangerous.entries_with(Label::Dangerous) {
        let inside: Vec<&DiagSample> =
            samples.iter().filter(|s| s.t >= core.start && s.t <= core.end).collect();
        if inside.is_empty() {
            continue;
        }
        let min_of = |f: &dyn Fn(&DiagSample) -> f64| {
            inside.iter().map(|s| f(s)).fold(f64::INFINITY, f64::min)
        };
        let l3 = cfg.l.powi(3);
        let rows = vec![
            row("l_kappa_n", min_of(&|s| cfg.l * s.kappa_n(n)), kappa_floor),
            row("enstrophy", min_of(&|s| s.f[1] / (l3 * omega0 * omega0)), deep_floor),
            row("velocity", min_of(&|s| s.max_velocity / (cfg.l * omega0)), deep_floor),
            row("gradient", min_of(&|s| s.max_gradient / omega0), deep_floor),
        ];
        intervals.push(LowerBoundInterval { start: core.start, end: core.end, rows });
    }
    Ok(LowerBoundReport { n, intervals })
}

fn row(quantity: &'static str, measured_min: f64, predicted: f64) -> LowerBoundRow {
    LowerBoundRow { quantity, measured_min, predicted, ratio: measured_min / predicted }
}
