//! Closed-form exponents, interval-width predictions, and bound evaluations
//! used to compare measured runs against the theory's scaling laws.
//!
//! Everything here is pure arithmetic on the run parameters; nothing touches
//! fields or samples. Each report entry carries a `formula` string spelling
//! out the defining expression and the constant convention, so downstream
//! artifacts are self-describing.

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ScalingError {
    #[error("moment order must be at least {min}, got {n}")]
    OrderTooSmall { n: u32, min: u32 },
    #[error("delta must lie in [0, 1/6), got {0}")]
    DeltaOutOfRange(f64),
    #[error("mu must be positive and finite, got {0}")]
    MuNotPositive(f64),
    #[error("gamma_n needs 2 mu (n+1) > 1; mu = {mu} is too small at n = {n}")]
    GammaUndefined { n: u32, mu: f64 },
    #[error("bad-interval width needs a_n > 0, i.e. mu < {upper}; got mu = {mu} (a_n = {a_n})")]
    WidthExponentNotPositive { mu: f64, upper: f64, a_n: f64 },
    #[error("exponent ladder is evaluated for finite depth p <= {max}, got {p}")]
    LadderTooDeep { p: u32, max: u32 },
    #[error("Reynolds number must exceed 1 for width solving, got {0}")]
    ReynoldsTooSmall(f64),
    #[error("width exponent beta must be positive, got {0}")]
    BetaNotPositive(f64),
    #[error("frequency omega0 must be positive, got {0}")]
    OmegaNotPositive(f64),
}

/// Deepest exponent ladder evaluated; beyond this the recursion is quoted
/// only as a limit statement, not a number.
pub const MAX_LADDER_DEPTH: u32 = 30;

fn check_delta(delta: f64) -> Result<(), ScalingError> {
    if !(delta >= 0.0 && delta < 1.0 / 6.0) {
        return Err(ScalingError::DeltaOutOfRange(delta));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<(), ScalingError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ScalingError::MuNotPositive(mu));
    }
    Ok(())
}

/// Baseline regularity exponent `lambda_n = 3 - 5/(2n) + delta/n`.
pub fn lambda_n(n: u32, delta: f64) -> Result<f64, ScalingError> {
    if n < 1 {
        return Err(ScalingError::OrderTooSmall { n, min: 1 });
    }
    check_delta(delta)?;
    let nf = n as f64;
    Ok(3.0 - 5.0 / (2.0 * nf) + delta / nf)
}

/// Bad-interval width exponent, written as it falls out of the dissipation
/// bound: `(lambda_(n+1)/mu) (2n-2)/(2n-1) - 4/(2n-1) - 5`.
pub fn a_n(n: u32, mu: f64, delta: f64) -> Result<f64, ScalingError> {
    if n < 2 {
        return Err(ScalingError::OrderTooSmall { n, min: 2 });
    }
    check_mu(mu)?;
    let lam = lambda_n(n + 1, delta)?;
    let nf = n as f64;
    Ok((lam / mu) * (2.0 * nf - 2.0) / (2.0 * nf - 1.0) - 4.0 / (2.0 * nf - 1.0) - 5.0)
}

/// The same exponent with the constants collected over one denominator:
/// `(lambda_(n+1)/mu) (2n-2)/(2n-1) - (10n-1)/(2n-1)`. Kept as a separate
/// code path so tests can assert the two algebraic forms agree.
pub fn a_n_collected(n: u32, mu: f64, delta: f64) -> Result<f64, ScalingError> {
    if n < 2 {
        return Err(ScalingError::OrderTooSmall { n, min: 2 });
    }
    check_mu(mu)?;
    let lam = lambda_n(n + 1, delta)?;
    let nf = n as f64;
    Ok((lam / mu) * (2.0 * nf - 2.0) / (2.0 * nf - 1.0) - (10.0 * nf - 1.0) / (2.0 * nf - 1.0))
}

/// Dangerous-subinterval width exponent `b_n = Lambda/mu - 4`, where
/// `Lambda` is whichever ladder exponent the caller wants to feed in
/// (`lambda_(n+1)` for the one-step bound).
pub fn b_n(lambda_input: f64, mu: f64) -> Result<f64, ScalingError> {
    check_mu(mu)?;
    Ok(lambda_input / mu - 4.0)
}

/// Good-interval ceiling exponent
/// `gamma_n = 4n [lambda_n (n+1) + 2] / (2 mu (n+1) - 1)`.
pub fn gamma_n(n: u32, mu: f64, delta: f64) -> Result<f64, ScalingError> {
    if n < 1 {
        return Err(ScalingError::OrderTooSmall { n, min: 1 });
    }
    check_mu(mu)?;
    let nf = n as f64;
    if 2.0 * mu * (nf + 1.0) <= 1.0 {
        return Err(ScalingError::GammaUndefined { n, mu });
    }
    let lam = lambda_n(n, delta)?;
    Ok(4.0 * nf * (lam * (nf + 1.0) + 2.0) / (2.0 * mu * (nf + 1.0) - 1.0))
}

/// Admissible range of `mu` at finite order, plus its large-n limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuWindow {
    pub lower: f64,
    pub upper: f64,
    /// Large-n limit of (lower, upper): (1/2, 3/5).
    pub asymptotic: (f64, f64),
}

/// Window of `mu` for which the bad-interval width bound is a genuine power
/// law while the good-interval ceiling stays finite:
/// `max(1/(2(n+1)), lambda_(n+1)(n-1)/(6n-1)) < mu < lambda_(n+1)(2n-2)/(10n-1)`.
pub fn mu_window(n: u32, delta: f64) -> Result<MuWindow, ScalingError> {
    if n < 2 {
        return Err(ScalingError::OrderTooSmall { n, min: 2 });
    }
    let lam = lambda_n(n + 1, delta)?;
    let nf = n as f64;
    let from_gamma = 1.0 / (2.0 * (nf + 1.0));
    let from_width = lam * (nf - 1.0) / (6.0 * nf - 1.0);
    Ok(MuWindow {
        lower: from_gamma.max(from_width),
        upper: lam * (2.0 * nf - 2.0) / (10.0 * nf - 1.0),
        asymptotic: (0.5, 0.6),
    })
}

/// Geometric ladder weights `xi_(p,i) = (1+mu)^(p-i)` and their sum, both
/// term-by-term and in closed form `((1+mu)^(p+1) - 1)/mu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiWeights {
    pub terms: Vec<f64>,
    pub sum: f64,
    pub closed_form: f64,
}

pub fn xi(p: u32, mu: f64) -> Result<XiWeights, ScalingError> {
    check_mu(mu)?;
    if p > MAX_LADDER_DEPTH {
        return Err(ScalingError::LadderTooDeep { p, max: MAX_LADDER_DEPTH });
    }
    let terms: Vec<f64> = (0..=p).map(|i| (1.0 + mu).powi((p - i) as i32)).collect();
    let sum = terms.iter().sum();
    let closed_form = ((1.0 + mu).powi(p as i32 + 1) - 1.0) / mu;
    Ok(XiWeights { terms, sum, closed_form })
}

/// Depth-p ladder exponent and its constant prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderExponent {
    pub p: u32,
    /// `(lambda_(n+p+1) + mu * sum_i lambda_(n+i) xi_(p,i)) / (1+mu)^(p+1)`.
    pub exponent: f64,
    /// Combined constant `(c_(n+p+1) prod_i c_(n+i)^(mu xi_(p,i)))^(1/(1+mu)^(p+1))`;
    /// equals 1 under the all-ones convention.
    pub prefactor: f64,
}

/// Evaluates the depth-p improvement of `lambda_n`. `c_constants[j]` is the
/// order-(j+1) constant; missing entries default to 1.
pub fn capital_lambda(
    n: u32,
    p: u32,
    mu: f64,
    delta: f64,
    c_constants: &[f64],
) -> Result<LadderExponent, ScalingError> {
    if n < 1 {
        return Err(ScalingError::OrderTooSmall { n, min: 1 });
    }
    check_mu(mu)?;
    if p > MAX_LADDER_DEPTH {
        return Err(ScalingError::LadderTooDeep { p, max: MAX_LADDER_DEPTH });
    }
    let c_of = |order: u32| -> f64 {
        c_constants.get((order - 1) as usize).copied().unwrap_or(1.0)
    };
    let weights = xi(p, mu)?;
    let denom = (1.0 + mu).powi(p as i32 + 1);

    let mut weighted = 0.0;
    let mut log_c = c_of(n + p + 1).ln();
    for i in 0..=p {
        weighted += lambda_n(n + i, delta)? * weights.terms[i as usize];
        log_c += mu * weights.terms[i as usize] * c_of(n + i).ln();
    }
    let exponent = (lambda_n(n + p + 1, delta)? + mu * weighted) / denom;
    let prefactor = (log_c / denom).exp();
    Ok(LadderExponent { p, exponent, prefactor })
}

/// Time-weight kernel `E(dt) = (exp(omega0 Re dt) - 1) / (omega0 Re)`,
/// with a series fallback keeping full relative precision for tiny
/// arguments.
pub fn e_weight(dt: f64, omega0: f64, re: f64) -> f64 {
    let x = omega0 * re * dt;
    if x.abs() < 1e-8 {
        // exp(x) - 1 = x (1 + x/2 + x^2/6 + ...): first dropped term is
        // below 1e-25 relative here.
        dt * (1.0 + x / 2.0 + x * x / 6.0)
    } else {
        x.exp_m1() / (omega0 * re)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthRegime {
    /// Width behaves as a clean negative power of Re.
    Power,
    /// Width carries the `ln(Re)/Re` factor.
    Log,
}

/// Exact and leading-order solutions of `E(dt) = Re^-beta / omega0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthSolution {
    /// `ln(1 + Re^(1-beta)) / (omega0 Re)`, exact at any Re.
    pub exact: f64,
    /// `Re^-beta / omega0` for beta >= 1, `(1-beta) ln(Re) / (omega0 Re)`
    /// for beta < 1. Always an upper bound for beta >= 1 since
    /// `ln(1+x) <= x`.
    pub leading_order: f64,
    pub regime: WidthRegime,
}

pub fn solve_width(beta: f64, omega0: f64, re: f64) -> Result<WidthSolution, ScalingError> {
    if !(beta > 0.0) {
        return Err(ScalingError::BetaNotPositive(beta));
    }
    if !(omega0 > 0.0) {
        return Err(ScalingError::OmegaNotPositive(omega0));
    }
    if !(re > 1.0) {
        return Err(ScalingError::ReynoldsTooSmall(re));
    }
    let exact = re.powf(1.0 - beta).ln_1p() / (omega0 * re);
    let (leading_order, regime) = if beta >= 1.0 {
        (re.powf(-beta) / omega0, WidthRegime::Power)
    } else {
        ((1.0 - beta) * re.ln() / (omega0 * re), WidthRegime::Log)
    };
    Ok(WidthSolution { exact, leading_order, regime })
}

/// Predicted widths of bad intervals and of their dangerous cores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictedWidths {
    pub a_n: f64,
    pub regime: WidthRegime,
    /// `Re^-a_n / omega0` in the power regime, `ln(Re) Re^-1 / omega0` in
    /// the log regime.
    pub bad_width: f64,
    pub b_n: f64,
    /// `Re^-b_n / omega0`.
    pub sub_width: f64,
}

/// Evaluates the width table for order `n`. `lambda_override` substitutes a
/// ladder exponent for `lambda_(n+1)` in `b_n`.
pub fn predicted_widths(
    n: u32,
    mu: f64,
    delta: f64,
    re: f64,
    omega0: f64,
    lambda_override: Option<f64>,
) -> Result<PredictedWidths, ScalingError> {
    if !(re > 1.0) {
        return Err(ScalingError::ReynoldsTooSmall(re));
    }
    if !(omega0 > 0.0) {
        return Err(ScalingError::OmegaNotPositive(omega0));
    }
    let a = a_n(n, mu, delta)?;
    if a <= 0.0 {
        let lam = lambda_n(n + 1, delta)?;
        let nf = n as f64;
        return Err(ScalingError::WidthExponentNotPositive {
            mu,
            upper: lam * (2.0 * nf - 2.0) / (10.0 * nf - 1.0),
            a_n: a,
        });
    }
    let (regime, bad_width) = if a >= 1.0 {
        (WidthRegime::Power, re.powf(-a) / omega0)
    } else {
        (WidthRegime::Log, re.ln() / (omega0 * re))
    };
    let lam_input = match lambda_override {
        Some(l) => l,
        None => lambda_n(n + 1, delta)?,
    };
    let b = b_n(lam_input, mu)?;
    Ok(PredictedWidths { a_n: a, regime, bad_width, b_n: b, sub_width: re.powf(-b) / omega0 })
}

/// Ceiling on the order-n moment over good intervals:
/// `L^-2n Re^gamma_n F0_max`.
pub fn fnmax_bound(
    n: u32,
    mu: f64,
    delta: f64,
    re: f64,
    l: f64,
    f0_max: f64,
) -> Result<f64, ScalingError> {
    let gamma = gamma_n(n, mu, delta)?;
    Ok(l.powi(-2 * n as i32) * re.powf(gamma) * f0_max)
}

/// Ratio of the good-interval ceiling to the bad-interval floor:
/// `(F0_max/F0_min) Re^(2n (lambda_n + 4 mu) / (mu (2 mu (n+1) - 1)))`.
/// Exceeding 1 is what makes the two bounds mutually consistent.
pub fn ceiling_floor_ratio(
    n: u32,
    mu: f64,
    delta: f64,
    re: f64,
    f0_max_over_min: f64,
) -> Result<f64, ScalingError> {
    if n < 1 {
        return Err(ScalingError::OrderTooSmall { n, min: 1 });
    }
    check_mu(mu)?;
    let nf = n as f64;
    if 2.0 * mu * (nf + 1.0) <= 1.0 {
        return Err(ScalingError::GammaUndefined { n, mu });
    }
    let lam = lambda_n(n, delta)?;
    let exponent = 2.0 * nf * (lam + 4.0 * mu) / (mu * (2.0 * mu * (nf + 1.0) - 1.0));
    Ok(f0_max_over_min * re.powf(exponent))
}

/// Predicted lower bound on the good-to-bad residence ratio:
/// `c_n Re^(lambda_n (1/mu - 1))`.
pub fn good_bad_ratio_bound(
    n: u32,
    mu: f64,
    delta: f64,
    re: f64,
    c_n: f64,
) -> Result<f64, ScalingError> {
    check_mu(mu)?;
    let lam = lambda_n(n, delta)?;
    Ok(c_n * re.powf(lam * (1.0 / mu - 1.0)))
}

/// One evaluated prediction with its defining expression.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub value: f64,
    pub formula: String,
}

impl Prediction {
    fn new(value: f64, formula: impl Into<String>) -> Self {
        Prediction { value, formula: formula.into() }
    }
}

/// All scaling-law evaluations for one order at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub n: u32,
    pub mu: f64,
    pub delta: f64,
    pub re: f64,
    pub omega0: f64,
    pub c_n: f64,
    pub lambda_n: Prediction,
    pub lambda_np1: Prediction,
    pub mu_window: Option<MuWindow>,
    /// None when n = 1 (the width table starts at n = 2) or when `mu` sits
    /// outside the admissible range; the message records why.
    pub widths: Option<PredictedWidths>,
    pub widths_note: Option<String>,
    pub gamma_n: Option<Prediction>,
    pub good_bad_ratio: Prediction,
    pub ladder: Vec<LadderExponent>,
    pub fn_ceiling: Option<Prediction>,
    pub ceiling_floor_ratio: Option<Prediction>,
}

/// Inputs for [`ScalingReport::evaluate`] beyond the basic operating point.
#[derive(Debug, Clone, Copy)]
pub struct ReportInputs {
    /// Ladder depth to tabulate (clamped to [`MAX_LADDER_DEPTH`]).
    pub ladder_depth: u32,
    /// Measured extremes of the order-0 moment, when a run is available.
    pub f0_max: Option<f64>,
    pub f0_min: Option<f64>,
    /// Box length, needed for the moment ceiling.
    pub l: f64,
}

impl ScalingReport {
    pub fn evaluate(
        n: u32,
        mu: f64,
        delta: f64,
        re: f64,
        omega0: f64,
        c_n: f64,
        inputs: ReportInputs,
    ) -> Result<Self, ScalingError> {
        let lam = lambda_n(n, delta)?;
        let lam_next = lambda_n(n + 1, delta)?;
        let (widths, widths_note) = if n < 2 {
            (None, Some("width table starts at n = 2".to_string()))
        } else {
            match predicted_widths(n, mu, delta, re, omega0, None) {
                Ok(w) => (Some(w), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        let gamma = match gamma_n(n, mu, delta) {
            Ok(g) => Some(Prediction::new(
                g,
                "gamma_n = 4n (lambda_n (n+1) + 2) / (2 mu (n+1) - 1)",
            )),
            Err(_) => None,
        };
        let depth = inputs.ladder_depth.min(MAX_LADDER_DEPTH);
        let mut ladder = Vec::new();
        for p in 0..=depth {
            ladder.push(capital_lambda(n, p, mu, delta, &[])?);
        }
        let fn_ceiling = match (gamma.as_ref(), inputs.f0_max) {
            (Some(_), Some(f0_max)) => Some(Prediction::new(
                fnmax_bound(n, mu, delta, re, inputs.l, f0_max)?,
                "F_n ceiling on good intervals: L^-2n Re^gamma_n F0_max; c = 1",
            )),
            _ => None,
        };
        let ratio = match (inputs.f0_max, inputs.f0_min) {
            (Some(f0_max), Some(f0_min)) if f0_min > 0.0 => {
                match ceiling_floor_ratio(n, mu, delta, re, f0_max / f0_min) {
                    Ok(r) => Some(Prediction::new(
                        r,
                        "(F0_max/F0_min) Re^(2n (lambda_n + 4 mu) / (mu (2 mu (n+1) - 1)))",
                    )),
                    Err(_) => None,
                }
            }
            _ => None,
        };
        Ok(ScalingReport {
            n,
            mu,
            delta,
            re,
            omega0,
            c_n,
            lambda_n: Prediction::new(lam, "lambda_n = 3 - 5/(2n) + delta/n"),
            lambda_np1: Prediction::new(lam_next, "lambda_(n+1) = 3 - 5/(2(n+1)) + delta/(n+1)"),
            mu_window: if n >= 2 { Some(mu_window(n, delta)?) } else { None },
            widths,
            widths_note,
            gamma_n: gamma,
            good_bad_ratio: Prediction::new(
                good_bad_ratio_bound(n, mu, delta, re, c_n)?,
                "good/bad residence ratio >= c_n Re^(lambda_n (1/mu - 1))",
            ),
            ladder,
            fn_ceiling,
            ceiling_floor_ratio: ratio,
        })
    }
}
