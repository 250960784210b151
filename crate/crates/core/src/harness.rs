//! Run orchestration: [`cmd_simulate`] drives the solver from a config file
//! into a run directory; [`cmd_analyze`], [`cmd_verify`], and
//! [`cmd_spectrum`] operate on the stored artifacts alone, so a run can be
//! produced once and interrogated forever.

use crate::config::{sha256_hex, ConfigError, SimConfig};
use crate::diagnostics::{
    bulk_parameters, holder_average_bound, sobolev_constant_estimates, tau, BulkParameters,
    DiagSample, DiagnosticsError, HolderBound, RunningAverages, SobolevEstimates,
};
use crate::dynamics::{
    energy_balance_residual, energy_inequality_margin, make_forcing, make_initial_condition,
    DynamicsError, SimState, Stepper,
};
use crate::intervals::{
    classify, dangerous_subintervals, energy_lower_bound_monitor, extract_intervals,
    intersect_bad, lower_bound_check, width_stats, ClassifierConfig, ClassifierMode,
    EnergyMonitorReport, IntervalEntry, IntervalSet, IntervalsError, Label, LowerBoundReport,
    WidthStats,
};
use crate::scaling::{lambda_n, ReportInputs, ScalingError, ScalingReport};
use crate::spectral::{
    read_checkpoint_file, write_checkpoint_file, SpectralError, SpectralField, WavenumberGrid,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const CSV_NAME: &str = "samples.csv";
pub const META_NAME: &str = "run_meta.json";
pub const STATE_NAME: &str = "state.json";
pub const ANALYSIS_NAME: &str = "analysis.json";
pub const VERIFY_NAME: &str = "verify_report.json";
pub const SPECTRUM_NAME: &str = "spectrum.json";

/// Relative slack used by the stored-data invariant checks.
const REL_SLACK: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    JsonFile {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path} line {line}: {message}")]
    Csv { path: String, line: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("run directory belongs to a different sample stream ({found:.12}.. stored, config gives {expected:.12}..)")]
    ResumeMismatch { expected: String, found: String },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Intervals(#[from] IntervalsError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
}

impl HarnessError {
    /// Process exit code: 2 for usage and configuration problems, 1 for
    /// violated run invariants or failed physics preconditions.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Io { .. }
            | HarnessError::JsonFile { .. }
            | HarnessError::Json(_)
            | HarnessError::Csv { .. }
            | HarnessError::Usage(_)
            | HarnessError::ResumeMismatch { .. } => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, line: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Csv { path: path.display().to_string(), line, message: message.into() }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text)
        .map_err(|source| HarnessError::JsonFile { path: path.display().to_string(), source })
}

/// Writes pretty JSON through a temp file so a crash never leaves a torn
/// artifact behind.
fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &text).map_err(|e| io_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Upper bound on worker threads: `KLADDER_THREADS` when set (minimum 1),
/// otherwise the machine's available parallelism.
pub fn thread_cap() -> usize {
    match std::env::var("KLADDER_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map(|t| t.max(1)).unwrap_or(1),
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}

// ---------------------------------------------------------------------------
// sample CSV

/// Column layout for a given `n_max`; the header is part of the format.
pub fn csv_header(n_max: u32) -> String {
    let mut cols = vec!["t".to_string()];
    for i in 0..=n_max + 1 {
        cols.push(format!("H{i}"));
    }
    for i in 0..=n_max + 1 {
        cols.push(format!("F{i}"));
    }
    for n in 1..=n_max {
        for r in 0..n {
            if r == 0 {
                cols.push(format!("kappa_{n}"));
            } else {
                cols.push(format!("kappa_{n}_{r}"));
            }
        }
    }
    cols.push("umax".to_string());
    cols.push("gradmax".to_string());
    for n in 2..=n_max + 1 {
        cols.push(format!("Y{n}"));
    }
    cols.push("einput".to_string());
    cols.join(",")
}

/// One sample as a CSV row; `{:e}` keeps every float bit-exact on re-read.
pub fn csv_row(s: &DiagSample) -> String {
    let mut vals = vec![s.t];
    vals.extend_from_slice(&s.h);
    vals.extend_from_slice(&s.f);
    for row in &s.kappa {
        vals.extend_from_slice(row);
    }
    vals.push(s.max_velocity);
    vals.push(s.max_gradient);
    vals.extend_from_slice(&s.y);
    vals.push(s.energy_input);
    let cells: Vec<String> = vals.iter().map(|v| format!("{v:e}")).collect();
    cells.join(",")
}

/// Parses a sample CSV, recovering `n_max` from the header.
pub fn parse_csv(path: &Path, text: &str) -> Result<(u32, Vec<DiagSample>), HarnessError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| csv_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let f0 = cols
        .iter()
        .position(|c| *c == "F0")
        .ok_or_else(|| csv_err(path, 1, "no F0 column in header"))?;
    if f0 < 5 {
        return Err(csv_err(path, 1, "moment columns start too early"));
    }
    let n_max = (f0 - 3) as u32;
    if header != csv_header(n_max) {
        return Err(csv_err(path, 1, format!("column layout does not match n_max = {n_max}")));
    }
    let o = n_max as usize + 2;
    let expected = 4 + 2 * o + n_max as usize * (n_max as usize + 1) / 2 + n_max as usize;
    let mut samples = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| csv_err(path, i + 1, format!("bad float: {e}")))?;
        if vals.len() != expected {
            return Err(csv_err(
                path,
                i + 1,
                format!("{} columns, expected {expected}", vals.len()),
            ));
        }
        let t = vals[0];
        let h = vals[1..1 + o].to_vec();
        let f = vals[1 + o..1 + 2 * o].to_vec();
        let mut at = 1 + 2 * o;
        let mut kappa = Vec::with_capacity(n_max as usize);
        for n in 1..=n_max as usize {
            kappa.push(vals[at..at + n].to_vec());
            at += n;
        }
        let max_velocity = vals[at];
        let max_gradient = vals[at + 1];
        at += 2;
        let y = vals[at..at + n_max as usize].to_vec();
        at += n_max as usize;
        let energy_input = vals[at];
        samples.push(DiagSample { t, h, f, kappa, max_velocity, max_gradient, y, energy_input });
    }
    Ok((n_max, samples))
}

// ---------------------------------------------------------------------------
// simulate

/// Worst-case step and sample gates accumulated over a whole run, surviving
/// resume through `state.json`.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Gates {
    /// Largest relative defect of the discrete energy balance.
    pub max_energy_residual: f64,
    /// Largest (signed) excess over the energy inequality; positive means a
    /// violation beyond the built-in slack.
    pub max_energy_margin: Option<f64>,
    pub energy_violations: u64,
    /// Largest relative divergence at sample times.
    pub max_divergence: f64,
    pub max_hermitian_asymmetry: f64,
}

impl Gates {
    fn observe_step(&mut self, residual: f64, margin: f64) {
        if residual > self.max_energy_residual {
            self.max_energy_residual = residual;
        }
        self.max_energy_margin = Some(self.max_energy_margin.map_or(margin, |m| m.max(margin)));
        if margin > 0.0 {
            self.energy_violations += 1;
        }
    }

    fn observe_field(&mut self, u: &SpectralField) {
        let d = u.divergence_rel();
        if d > self.max_divergence {
            self.max_divergence = d;
        }
        let h = u.hermitian_asymmetry();
        if h > self.max_hermitian_asymmetry {
            self.max_hermitian_asymmetry = h;
        }
    }
}

/// Resume cursor written next to each checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunProgress {
    pub t: f64,
    pub step: u64,
    pub samples_written: u64,
    /// File name of the checkpoint this cursor points at.
    pub checkpoint: String,
    pub stream_fingerprint: String,
    #[serde(flatten)]
    pub gates: Gates,
}

/// Everything `analyze`, `verify`, and `spectrum` need to know about how the
/// stored samples were produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunMeta {
    pub config: SimConfig,
    pub config_hash: String,
    pub stream_fingerprint: String,
    pub grashof: f64,
    pub tau: f64,
    pub forcing_shell: i64,
    pub forcing_wavenumber: f64,
    pub forcing_l2_norm_sq: f64,
    pub omega0: f64,
    pub steps: u64,
    pub samples_written: u64,
    pub t_final: f64,
    #[serde(flatten)]
    pub gates: Gates,
    pub csv_sha256: String,
}

#[derive(Debug)]
pub struct SimOutcome {
    pub meta: RunMeta,
    pub resumed: bool,
    pub steps_run: u64,
    pub run_dir: PathBuf,
}

fn checkpoint_name(step: u64) -> String {
    format!("checkpoint_{step:09}.bin")
}

/// Rewrites the CSV so exactly `keep_rows` data rows remain, preserving the
/// stored bytes of the survivors.
fn truncate_csv(path: &Path, n_max: u32, keep_rows: u64) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| csv_err(path, 1, "missing header"))?;
    if header != csv_header(n_max) {
        return Err(csv_err(path, 1, "header does not match the configured n_max"));
    }
    let rows: Vec<&str> = lines.collect();
    if (rows.len() as u64) < keep_rows {
        return Err(csv_err(
            path,
            rows.len() + 1,
            format!("{} rows stored but the resume cursor expects {keep_rows}", rows.len()),
        ));
    }
    if rows.len() as u64 > keep_rows {
        let mut out = String::with_capacity(text.len());
        out.push_str(header);
        out.push('\n');
        for r in &rows[..keep_rows as usize] {
            out.push_str(r);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

pub fn cmd_simulate(config_path: &Path) -> Result<SimOutcome, HarnessError> {
    let cfg = SimConfig::from_path(config_path)?;
    simulate(&cfg)
}

/// Runs (or resumes) the solver described by `cfg` into its output directory.
/// The sample stream is a pure function of the stream fingerprint: resuming
/// from any checkpoint reproduces the single-run CSV byte for byte.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutcome, HarnessError> {
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let grid = WavenumberGrid::new(cfg.n, cfg.l)?;
    let mut forcing_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    forcing_rng.set_stream(0);
    let forcing = make_forcing(grid, cfg.ell, cfg.f_amplitude, &mut forcing_rng)?;
    let grashof = cfg.f_amplitude * cfg.ell.powi(3) / (cfg.nu * cfg.nu);
    let tau_f = tau(cfg.nu, cfg.ell, grashof, cfg.delta)?;
    let fingerprint = cfg.stream_fingerprint();
    let total_steps = (cfg.t_end / cfg.dt).round() as u64;

    let csv_path = dir.join(CSV_NAME);
    let state_path = dir.join(STATE_NAME);

    let resumed = state_path.exists();
    let (mut state, mut gates, mut samples_written) = if resumed {
        let prog: RunProgress = read_json(&state_path)?;
        if prog.stream_fingerprint != fingerprint {
            return Err(HarnessError::ResumeMismatch {
                expected: fingerprint,
                found: prog.stream_fingerprint,
            });
        }
        if prog.step > total_steps {
            return Err(HarnessError::Usage(format!(
                "run directory already holds {} steps, beyond t_end = {}",
                prog.step, cfg.t_end
            )));
        }
        let u = read_checkpoint_file(&dir.join(&prog.checkpoint))?;
        truncate_csv(&csv_path, cfg.n_max, prog.samples_written)?;
        (SimState { t: prog.t, step: prog.step, u }, prog.gates, prog.samples_written)
    } else {
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        init_rng.set_stream(1);
        let u = make_initial_condition(grid, cfg.init_shell_max, cfg.init_amplitude, &mut init_rng);
        let mut f = std::fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
        writeln!(f, "{}", csv_header(cfg.n_max)).map_err(|e| io_err(&csv_path, e))?;
        (SimState::new(u), Gates::default(), 0)
    };

    let mut csv = std::io::BufWriter::new(
        std::fs::OpenOptions::new()
            .append(true)
            .open(&csv_path)
            .map_err(|e| io_err(&csv_path, e))?,
    );
    let steps_before = state.step;

    if !resumed {
        let s = DiagSample::compute(state.t, &state.u, &forcing, tau_f, cfg.n_max);
        writeln!(csv, "{}", csv_row(&s)).map_err(|e| io_err(&csv_path, e))?;
        samples_written += 1;
        gates.observe_field(&state.u);
        // Checkpoint the initial state so every run directory is resumable
        // and carries at least one field snapshot.
        csv.flush().map_err(|e| io_err(&csv_path, e))?;
        write_progress(&dir, &state, &gates, samples_written, &fingerprint)?;
    }

    let stepper = Stepper::new(grid, cfg.nu, cfg.dt);
    while state.step < total_steps {
        let next = stepper.step(&state, &forcing)?;
        let residual = energy_balance_residual(&state.u, &next.u, &forcing, cfg.nu, cfg.dt);
        let margin = energy_inequality_margin(&state.u, &next.u, &forcing, cfg.nu, cfg.dt);
        gates.observe_step(residual, margin);
        state = next;
        if state.step % cfg.sample_every == 0 {
            let s = DiagSample::compute(state.t, &state.u, &forcing, tau_f, cfg.n_max);
            writeln!(csv, "{}", csv_row(&s)).map_err(|e| io_err(&csv_path, e))?;
            samples_written += 1;
            gates.observe_field(&state.u);
        }
        let at_checkpoint = cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0;
        if at_checkpoint || state.step == total_steps {
            csv.flush().map_err(|e| io_err(&csv_path, e))?;
            write_progress(&dir, &state, &gates, samples_written, &fingerprint)?;
        }
    }
    csv.flush().map_err(|e| io_err(&csv_path, e))?;
    drop(csv);

    let csv_sha256 = sha256_hex(&std::fs::read(&csv_path).map_err(|e| io_err(&csv_path, e))?);
    let meta = RunMeta {
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        stream_fingerprint: fingerprint,
        grashof,
        tau: tau_f,
        forcing_shell: forcing.shell(),
        forcing_wavenumber: forcing.wavenumber(),
        forcing_l2_norm_sq: forcing.l2_norm_sq(),
        omega0: cfg.nu / (cfg.l * cfg.l),
        steps: state.step,
        samples_written,
        t_final: state.t,
        gates,
        csv_sha256,
    };
    write_json(&dir.join(META_NAME), &meta)?;
    Ok(SimOutcome { meta, resumed, steps_run: state.step - steps_before, run_dir: dir })
}

fn write_progress(
    dir: &Path,
    state: &SimState,
    gates: &Gates,
    samples_written: u64,
    fingerprint: &str,
) -> Result<(), HarnessError> {
    let name = checkpoint_name(state.step);
    write_checkpoint_file(&state.u, &dir.join(&name))?;
    let prog = RunProgress {
        t: state.t,
        step: state.step,
        samples_written,
        checkpoint: name,
        stream_fingerprint: fingerprint.to_string(),
        gates: *gates,
    };
    write_json(&dir.join(STATE_NAME), &prog)
}

/// Loads the metadata and full sample stream of a stored run.
pub fn read_run(dir: &Path) -> Result<(RunMeta, Vec<DiagSample>), HarnessError> {
    let meta: RunMeta = read_json(&dir.join(META_NAME))?;
    let csv_path = dir.join(CSV_NAME);
    let text = std::fs::read_to_string(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let (n_max, samples) = parse_csv(&csv_path, &text)?;
    if n_max != meta.config.n_max {
        return Err(csv_err(
            &csv_path,
            1,
            format!("CSV carries n_max = {n_max} but the run was configured with {}", meta.config.n_max),
        ));
    }
    Ok((meta, samples))
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    /// Orders to classify; empty means every classifiable one.
    pub orders: Vec<u32>,
    /// Override of the configured interpolation exponent.
    pub mu: Option<f64>,
    pub mode: ClassifierMode,
    pub min_duration: Option<f64>,
    /// Bootstrap ladder depth tabulated in the scaling report.
    pub ladder_depth: u32,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            orders: Vec::new(),
            mu: None,
            mode: ClassifierMode::Theoretical,
            min_duration: None,
            ladder_depth: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OrderAnalysis {
    pub n: u32,
    pub intervals: IntervalSet,
    pub widths: WidthStats,
    pub dangerous: IntervalSet,
    pub dangerous_warnings: Vec<String>,
    pub lower_bounds: LowerBoundReport,
    pub energy_monitor: EnergyMonitorReport,
    pub holder: HolderBound,
    pub scaling: ScalingReport,
}

/// Bad-set intersection over the first `p` requested orders.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IntersectionStage {
    pub p: usize,
    pub orders: Vec<u32>,
    pub set: IntervalSet,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AveragesReport {
    pub horizon: (f64, f64),
    pub channels: BTreeMap<String, f64>,
    pub first_half: BTreeMap<String, f64>,
    pub second_half: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalysisReport {
    pub config_hash: String,
    pub mode: ClassifierMode,
    pub mu: f64,
    pub min_duration: f64,
    pub bulk: BulkParameters,
    pub omega0: f64,
    pub orders: Vec<OrderAnalysis>,
    pub intersections: Vec<IntersectionStage>,
    pub sobolev: SobolevEstimates,
    pub averages: AveragesReport,
}

struct OrderCtx<'a> {
    core: &'a [DiagSample],
    times: &'a [f64],
    cfg: &'a SimConfig,
    bulk: &'a BulkParameters,
    omega0: f64,
    mu: f64,
    mode: ClassifierMode,
    min_duration: f64,
    ladder_depth: u32,
    f0_max: f64,
    f0_min: f64,
}

fn order_analysis(ctx: &OrderCtx, n: u32) -> Result<OrderAnalysis, HarnessError> {
    let ccfg = ClassifierConfig::new(
        ctx.mu,
        ctx.mode,
        ctx.cfg.c_of(n),
        ctx.bulk.reynolds,
        ctx.cfg.l,
        ctx.cfg.delta,
    )
    .map_err(|e| HarnessError::Usage(e.to_string()))?;
    let labels = classify(ctx.core, n, &ccfg)?;
    let set = extract_intervals(n, &labels, ctx.times, ctx.min_duration)?;
    let widths = width_stats(&set, &ccfg)?;
    let danger = dangerous_subintervals(ctx.core, n as usize, &set)?;
    let lower = lower_bound_check(ctx.core, n, &danger.set, &ccfg, ctx.omega0)?;
    let energy = energy_lower_bound_monitor(ctx.core, &danger.set, ctx.omega0, ctx.bulk.reynolds);
    let kn: Vec<f64> = ctx.core.iter().map(|s| s.kappa_n(n)).collect();
    let knp1: Vec<f64> = ctx.core.iter().map(|s| s.kappa_n(n + 1)).collect();
    let holder = holder_average_bound(ctx.times, &kn, &knp1, ctx.mu)?;
    let scaling = ScalingReport::evaluate(
        n,
        ctx.mu,
        ctx.cfg.delta,
        ctx.bulk.reynolds,
        ctx.omega0,
        ctx.cfg.c_of(n),
        ReportInputs {
            ladder_depth: ctx.ladder_depth,
            f0_max: Some(ctx.f0_max),
            f0_min: Some(ctx.f0_min),
            l: ctx.cfg.l,
        },
    )?;
    Ok(OrderAnalysis {
        n,
        intervals: set,
        widths,
        dangerous: danger.set,
        dangerous_warnings: danger.warnings,
        lower_bounds: lower,
        energy_monitor: energy,
        holder,
        scaling,
    })
}

/// Two-pass analysis of a stored run: measure bulk parameters first, then
/// classify each requested order against them and intersect the bad sets.
pub fn cmd_analyze(run_dir: &Path, opts: &AnalyzeOptions) -> Result<AnalysisReport, HarnessError> {
    let (meta, samples) = read_run(run_dir)?;
    let cfg = &meta.config;
    if samples.len() < 2 {
        return Err(HarnessError::Usage("analysis needs at least two samples".to_string()));
    }
    let bulk =
        bulk_parameters(&samples, cfg.l, cfg.ell, cfg.nu, cfg.f_amplitude, cfg.burn_in_fraction)?;
    let omega0 = cfg.nu / (cfg.l * cfg.l);
    let start = samples.partition_point(|s| s.t < bulk.horizon.0);
    let core = &samples[start..];
    let times: Vec<f64> = core.iter().map(|s| s.t).collect();
    let mu = opts.mu.unwrap_or(cfg.mu);
    let min_duration = opts.min_duration.unwrap_or(cfg.min_duration);
    let mut orders: Vec<u32> =
        if opts.orders.is_empty() { (1..cfg.n_max).collect() } else { opts.orders.clone() };
    orders.sort_unstable();
    orders.dedup();
    for &n in &orders {
        if n < 1 || n >= cfg.n_max {
            return Err(HarnessError::Usage(format!(
                "order n = {n} is not classifiable; this run supports 1..={}",
                cfg.n_max - 1
            )));
        }
    }
    let f0_max = core.iter().map(|s| s.f[0]).fold(f64::MIN, f64::max);
    let f0_min = core.iter().map(|s| s.f[0]).fold(f64::MAX, f64::min);
    let ctx = OrderCtx {
        core,
        times: &times,
        cfg,
        bulk: &bulk,
        omega0,
        mu,
        mode: opts.mode,
        min_duration,
        ladder_depth: opts.ladder_depth,
        f0_max,
        f0_min,
    };

    let mut slots: Vec<Option<Result<OrderAnalysis, HarnessError>>> =
        orders.iter().map(|_| None).collect();
    let cap = thread_cap().min(orders.len()).max(1);
    if cap > 1 {
        std::thread::scope(|sc| {
            let mut handles = Vec::new();
            for worker in 0..cap {
                let ctx = &ctx;
                let orders = &orders;
                handles.push(sc.spawn(move || {
                    let mut out = Vec::new();
                    let mut i = worker;
                    while i < orders.len() {
                        out.push((i, order_analysis(ctx, orders[i])));
                        i += cap;
                    }
                    out
                }));
            }
            for h in handles {
                for (i, r) in h.join().expect("order analysis worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
    } else {
        for (i, &n) in orders.iter().enumerate() {
            slots[i] = Some(order_analysis(&ctx, n));
        }
    }
    let mut per_order = Vec::with_capacity(slots.len());
    for s in slots {
        per_order.push(s.expect("every slot filled")?);
    }

    let sets: Vec<IntervalSet> = per_order.iter().map(|o| o.intervals.clone()).collect();
    let mut intersections = Vec::new();
    for p in 1..=sets.len() {
        intersections.push(IntersectionStage {
            p,
            orders: orders[..p].to_vec(),
            set: intersect_bad(&sets[..p])?,
        });
    }

    let sobolev = sobolev_constant_estimates(core)?;

    let mut ra = RunningAverages::new(cfg.n_max, cfg.l, mu)?;
    for s in core {
        ra.update(s)?;
    }
    let (t0, t1) = bulk.horizon;
    let mid = 0.5 * (t0 + t1);
    let names: Vec<String> = ra.names().to_vec();
    let mut channels = BTreeMap::new();
    let mut first_half = BTreeMap::new();
    let mut second_half = BTreeMap::new();
    for name in &names {
        if let Ok(v) = ra.average(name) {
            channels.insert(name.clone(), v);
        }
        if let Ok(v) = ra.average_between(name, t0, mid) {
            first_half.insert(name.clone(), v);
        }
        if let Ok(v) = ra.average_between(name, mid, t1) {
            second_half.insert(name.clone(), v);
        }
    }
    let averages = AveragesReport { horizon: bulk.horizon, channels, first_half, second_half };

    let report = AnalysisReport {
        config_hash: meta.config_hash.clone(),
        mode: opts.mode,
        mu,
        min_duration,
        bulk,
        omega0,
        orders: per_order,
        intersections,
        sobolev,
        averages,
    };
    write_json(&run_dir.join(ANALYSIS_NAME), &report)?;
    for o in &report.orders {
        write_json(&run_dir.join(format!("intervals_n{}.json", o.n)), &o.intervals)?;
        write_json(&run_dir.join(format!("dangerous_n{}.json", o.n)), &o.dangerous)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyCheck {
    pub name: String,
    /// True iff `margin >= 0` and finite.
    pub passed: bool,
    /// Distance to failure; the check fails when this goes negative.
    pub margin: f64,
    pub details: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifyReport {
    pub config_hash: String,
    pub passed: bool,
    pub checks: Vec<VerifyCheck>,
}

fn push_check(checks: &mut Vec<VerifyCheck>, name: &str, margin: f64, details: String) {
    checks.push(VerifyCheck {
        name: name.to_string(),
        passed: margin.is_finite() && margin >= 0.0,
        margin,
        details,
    });
}

fn finalize_verify(
    run_dir: &Path,
    config_hash: &str,
    checks: Vec<VerifyCheck>,
) -> Result<VerifyReport, HarnessError> {
    let passed = checks.iter().all(|c| c.passed);
    let report = VerifyReport { config_hash: config_hash.to_string(), passed, checks };
    write_json(&run_dir.join(VERIFY_NAME), &report)?;
    Ok(report)
}

/// Entry-by-entry containment margin of `inner` in the union of `outer`;
/// nonnegative when every inner entry sits inside some outer entry.
fn containment_margin(inner: &[IntervalEntry], outer: &[IntervalEntry]) -> f64 {
    let mut worst = f64::INFINITY;
    for i in inner {
        let best = outer
            .iter()
            .map(|o| (i.start - o.start).min(o.end - i.end))
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.min(best);
    }
    worst
}

/// Re-derives every invariant of a stored run from its artifacts and writes
/// a named check list; any failed check makes the whole report fail.
pub fn cmd_verify(run_dir: &Path) -> Result<VerifyReport, HarnessError> {
    let meta: RunMeta = read_json(&run_dir.join(META_NAME))?;
    let cfg = &meta.config;
    let csv_path = run_dir.join(CSV_NAME);
    let bytes = std::fs::read(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let mut checks: Vec<VerifyCheck> = Vec::new();

    match cfg.validate() {
        Ok(()) => push_check(&mut checks, "config_valid", 0.0, "stored config passes validation".into()),
        Err(e) => push_check(&mut checks, "config_valid", -1.0, e.to_string()),
    }

    let sha = sha256_hex(&bytes);
    push_check(
        &mut checks,
        "csv_hash_matches_meta",
        if sha == meta.csv_sha256 { 0.0 } else { -1.0 },
        format!("sha256 {}..", &sha[..12]),
    );

    let text = String::from_utf8_lossy(&bytes);
    let samples = match parse_csv(&csv_path, &text) {
        Ok((n_max, samples)) if n_max == cfg.n_max && !samples.is_empty() => {
            push_check(
                &mut checks,
                "csv_parses",
                0.0,
                format!("{} samples, n_max = {n_max}", samples.len()),
            );
            samples
        }
        Ok((n_max, samples)) => {
            push_check(
                &mut checks,
                "csv_parses",
                -1.0,
                format!("{} samples, n_max = {n_max} (configured {})", samples.len(), cfg.n_max),
            );
            return finalize_verify(run_dir, &meta.config_hash, checks);
        }
        Err(e) => {
            push_check(&mut checks, "csv_parses", -1.0, e.to_string());
            return finalize_verify(run_dir, &meta.config_hash, checks);
        }
    };

    let nm = cfg.n_max as usize;

    let mut m = f64::INFINITY;
    for w in samples.windows(2) {
        m = m.min(w[1].t - w[0].t);
    }
    push_check(
        &mut checks,
        "time_strictly_increasing",
        if samples.len() < 2 { 0.0 } else { m },
        format!("min spacing over {} samples", samples.len()),
    );

    // kappa_(n+1) >= kappa_n at every sample.
    let mut margin = f64::INFINITY;
    for s in &samples {
        for n in 1..nm {
            margin = margin.min(s.kappa[n][0] / s.kappa[n - 1][0] - 1.0 + REL_SLACK);
        }
    }
    push_check(&mut checks, "kappa_order_monotone", margin, "kappa_(n+1)/kappa_n - 1".into());

    // kappa_(n,r) nondecreasing in the reference index r.
    let mut margin = f64::INFINITY;
    for s in &samples {
        for n in 2..=nm {
            for r in 0..n - 1 {
                margin = margin.min(s.kappa[n - 1][r + 1] / s.kappa[n - 1][r] - 1.0 + REL_SLACK);
            }
        }
    }
    push_check(&mut checks, "kappa_r_monotone", margin, "kappa_(n,r+1)/kappa_(n,r) - 1".into());

    // Every kappa sits on or above the gravest wavenumber.
    let k_min = 2.0 * std::f64::consts::PI / cfg.l;
    let mut margin = f64::INFINITY;
    for s in &samples {
        for n in 1..=nm {
            margin = margin.min(s.kappa[n - 1][0] / k_min - 1.0 + REL_SLACK);
        }
    }
    push_check(&mut checks, "kappa_scale_floor", margin, "L kappa_n / (2 pi) - 1".into());

    // ln F midpoint convexity and the full cross-index inequality.
    let mut margin = f64::INFINITY;
    for s in &samples {
        let lf: Vec<f64> = s.f.iter().map(|v| v.ln()).collect();
        for mid in 1..lf.len() - 1 {
            margin = margin.min(lf[mid - 1] + lf[mid + 1] - 2.0 * lf[mid] + REL_SLACK);
        }
    }
    push_check(&mut checks, "moment_log_convexity", margin, "ln F midpoint defect".into());

    let mut margin = f64::INFINITY;
    for s in &samples {
        let lf: Vec<f64> = s.f.iter().map(|v| v.ln()).collect();
        let top = lf.len() - 1;
        for center in 0..=top {
            for p in 1..=center {
                for q in 1..=top - center {
                    let val = (q as f64 * lf[center - p] + p as f64 * lf[center + q]
                        - (p + q) as f64 * lf[center])
                        / (p + q) as f64;
                    margin = margin.min(val + REL_SLACK);
                }
            }
        }
    }
    push_check(&mut checks, "moment_cross_inequality", margin, "normalized ln F defect".into());

    // F_n never drops below its forcing floor.
    let mut margin = f64::INFINITY;
    for s in &samples {
        for (n, &fv) in s.f.iter().enumerate() {
            let floor = meta.tau * meta.tau
                * meta.forcing_wavenumber.powi(2 * n as i32)
                * meta.forcing_l2_norm_sq;
            margin = margin.min(fv / floor - 1.0 + REL_SLACK);
        }
    }
    push_check(&mut checks, "moment_forcing_floor", margin, "F_n / (tau^2 k_f^2n |f|^2) - 1".into());

    // Stored Y and kappa columns agree with the moment columns.
    let mut worst = 0.0f64;
    for s in &samples {
        for (i, &y) in s.y.iter().enumerate() {
            let n = i + 2;
            let want = s.f[n].powf(-1.0 / (2.0 * n as f64 - 1.0));
            worst = worst.max((y - want).abs() / want.abs());
        }
    }
    push_check(&mut checks, "y_matches_moments", REL_SLACK - worst, format!("worst rel err {worst:.3e}"));

    let mut worst = 0.0f64;
    for s in &samples {
        for n in 1..=nm {
            for r in 0..n {
                let want = (s.f[n] / s.f[r]).powf(1.0 / (2.0 * (n - r) as f64));
                worst = worst.max((s.kappa[n - 1][r] - want).abs() / want);
            }
        }
    }
    push_check(&mut checks, "kappa_matches_moments", REL_SLACK - worst, format!("worst rel err {worst:.3e}"));

    // Time-averaged interpolation bound per order, on the full horizon.
    let mu_v = if cfg.mu > 0.5 && cfg.mu < 0.6 { cfg.mu } else { 0.55 };
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    if samples.len() >= 2 {
        let mut margin = f64::INFINITY;
        let mut detail = String::new();
        for n in 1..nm as u32 {
            let kn: Vec<f64> = samples.iter().map(|s| s.kappa_n(n)).collect();
            let knp1: Vec<f64> = samples.iter().map(|s| s.kappa_n(n + 1)).collect();
            match holder_average_bound(&times, &kn, &knp1, mu_v) {
                Ok(b) => margin = margin.min(b.margin / b.rhs + REL_SLACK),
                Err(e) => {
                    margin = -1.0;
                    detail = e.to_string();
                    break;
                }
            }
        }
        if detail.is_empty() {
            detail = format!("relative margin at mu = {mu_v}");
        }
        push_check(&mut checks, "holder_average_bound", margin, detail);
    } else {
        push_check(&mut checks, "holder_average_bound", 0.0, "vacuous: single sample".into());
    }

    // Step-level gates recorded by the solver.
    push_check(
        &mut checks,
        "energy_balance_residual",
        1e-4 - meta.gates.max_energy_residual,
        format!("max relative residual {:.3e}", meta.gates.max_energy_residual),
    );
    push_check(
        &mut checks,
        "energy_inequality",
        match meta.gates.max_energy_margin {
            None => 0.0,
            Some(worst) => -worst,
        },
        format!("{} violations", meta.gates.energy_violations),
    );
    push_check(
        &mut checks,
        "divergence_free",
        1e-10 - meta.gates.max_divergence,
        format!("max relative divergence {:.3e}", meta.gates.max_divergence),
    );
    push_check(
        &mut checks,
        "hermitian_symmetry",
        1e-12 - meta.gates.max_hermitian_asymmetry,
        format!("max asymmetry {:.3e}", meta.gates.max_hermitian_asymmetry),
    );

    // The final checkpoint still satisfies the field invariants.
    match read_json::<RunProgress>(&run_dir.join(STATE_NAME))
        .and_then(|prog| Ok(read_checkpoint_file(&run_dir.join(&prog.checkpoint))?))
    {
        Ok(u) => {
            let div = u.divergence_rel();
            let herm = u.hermitian_asymmetry();
            let act = u.max_active_wavenumber();
            let cutoff = u.grid().dealias_cutoff();
            let mean = u.mean_mode();
            let mean_norm =
                (mean.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
            let rms = (u.h_norm(0) / u.grid().volume()).sqrt();
            let margin = (1e-10 - div)
                .min(1e-12 - herm)
                .min((cutoff - act) as f64)
                .min(if rms > 0.0 { 1e-12 * rms - mean_norm } else { 0.0 });
            push_check(
                &mut checks,
                "checkpoint_invariants",
                margin,
                format!("div {div:.2e}, herm {herm:.2e}, active |k| {act} <= {cutoff}, mean {mean_norm:.2e}"),
            );
        }
        Err(e) => push_check(&mut checks, "checkpoint_invariants", -1.0, e.to_string()),
    }

    // Classification-level structure, re-derived from scratch.
    if samples.len() >= 2 {
        match verify_classification(&meta, &samples, mu_v) {
            Ok(cls) => {
                push_check(&mut checks, "interval_coverage", cls.coverage, cls.coverage_note);
                push_check(&mut checks, "bad_sample_floor", cls.floor, cls.floor_note);
                push_check(&mut checks, "dangerous_within_bad", cls.containment, "clipped rise intervals".into());
                push_check(&mut checks, "intersection_nesting", cls.nesting, cls.nesting_note);
            }
            Err(e) => {
                let msg = e.to_string();
                push_check(&mut checks, "interval_coverage", -1.0, msg.clone());
                push_check(&mut checks, "bad_sample_floor", -1.0, msg.clone());
                push_check(&mut checks, "dangerous_within_bad", -1.0, msg.clone());
                push_check(&mut checks, "intersection_nesting", -1.0, msg);
            }
        }
    } else {
        for name in
            ["interval_coverage", "bad_sample_floor", "dangerous_within_bad", "intersection_nesting"]
        {
            push_check(&mut checks, name, 0.0, "vacuous: single sample".into());
        }
    }

    finalize_verify(run_dir, &meta.config_hash, checks)
}

struct ClassificationChecks {
    coverage: f64,
    coverage_note: String,
    floor: f64,
    floor_note: String,
    containment: f64,
    nesting: f64,
    nesting_note: String,
}

fn verify_classification(
    meta: &RunMeta,
    samples: &[DiagSample],
    mu_v: f64,
) -> Result<ClassificationChecks, HarnessError> {
    let cfg = &meta.config;
    let bulk =
        bulk_parameters(samples, cfg.l, cfg.ell, cfg.nu, cfg.f_amplitude, cfg.burn_in_fraction)?;
    let start = samples.partition_point(|s| s.t < bulk.horizon.0);
    let core = &samples[start..];
    let times: Vec<f64> = core.iter().map(|s| s.t).collect();
    if core.len() < 2 {
        return Ok(ClassificationChecks {
            coverage: 0.0,
            coverage_note: "vacuous: burn-in leaves fewer than two samples".into(),
            floor: 0.0,
            floor_note: "vacuous".into(),
            containment: 0.0,
            nesting: 0.0,
            nesting_note: "vacuous".into(),
        });
    }

    let mut coverage = f64::INFINITY;
    let mut floor_margin = f64::INFINITY;
    let mut bad_seen = 0usize;
    let mut containment = f64::INFINITY;
    let mut sets = Vec::new();
    for n in 1..cfg.n_max {
        let ccfg = ClassifierConfig::new(
            mu_v,
            ClassifierMode::Theoretical,
            cfg.c_of(n),
            bulk.reynolds,
            cfg.l,
            cfg.delta,
        )
        .map_err(|e| HarnessError::Usage(e.to_string()))?;
        let labels = classify(core, n, &ccfg)?;
        let set = extract_intervals(n, &labels, &times, cfg.min_duration)?;
        coverage = coverage.min(match set.validate(true) {
            Ok(()) => 0.0,
            Err(_) => -1.0,
        });
        // Every sample the classifier marks bad obeys the uniform floor.
        let lam = lambda_n(n, cfg.delta)?;
        let floor = (cfg.c_of(n) * bulk.reynolds.powf(lam)).powf(1.0 / mu_v);
        for (s, lb) in core.iter().zip(&labels) {
            if *lb == Label::Bad {
                bad_seen += 1;
                floor_margin =
                    floor_margin.min(cfg.l * s.kappa_n(n) / floor - 1.0 + REL_SLACK);
            }
        }
        let danger = dangerous_subintervals(core, n as usize, &set)?;
        let bad_entries: Vec<IntervalEntry> =
            set.entries_with(Label::Bad).copied().collect();
        if !danger.set.entries.is_empty() {
            containment =
                containment.min(containment_margin(&danger.set.entries, &bad_entries) + 1e-12);
        }
        sets.push(set);
    }
    let mut nesting = f64::INFINITY;
    let mut stages = 0usize;
    let mut prev: Option<IntervalSet> = None;
    for p in 1..sets.len().min(4) {
        let stage = intersect_bad(&sets[..=p])?;
        let outer: Vec<IntervalEntry> = match &prev {
            Some(s) => s.entries.clone(),
            None => sets[0].entries_with(Label::Bad).copied().collect(),
        };
        if !stage.entries.is_empty() {
            nesting = nesting.min(containment_margin(&stage.entries, &outer) + 1e-12);
        }
        stages += 1;
        prev = Some(stage);
    }
    Ok(ClassificationChecks {
        coverage: if coverage.is_finite() { coverage } else { 0.0 },
        coverage_note: format!("{} orders re-classified at mu = {mu_v}", sets.len()),
        floor: if bad_seen == 0 { 0.0 } else { floor_margin },
        floor_note: if bad_seen == 0 {
            "vacuous: no bad samples".into()
        } else {
            format!("{bad_seen} bad samples against (c_n Re^lambda_n)^(1/mu)")
        },
        containment: if containment.is_finite() { containment } else { 0.0 },
        nesting: if nesting.is_finite() { nesting } else { 0.0 },
        nesting_note: format!("{stages} intersection stages"),
    })
}

// ---------------------------------------------------------------------------
// spectrum

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ShellPoint {
    pub shell: i64,
    pub k: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectrumFit {
    pub config_hash: String,
    pub checkpoints: usize,
    pub k_min: i64,
    pub k_max: i64,
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub shells: Vec<ShellPoint>,
}

/// Least-squares line through `(ln x, ln y)`; returns (slope, intercept,
/// rms residual in log space).
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<(f64, f64, f64), HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::Usage(format!(
            "log-log fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(x, y) in points {
        if !(x > 0.0 && y > 0.0) {
            return Err(HarnessError::Usage(format!(
                "log-log fit needs positive data, got ({x}, {y})"
            )));
        }
        xs.push(x.ln());
        ys.push(y.ln());
    }
    let count = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / count;
    let ybar = ys.iter().sum::<f64>() / count;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    if sxx <= 0.0 {
        return Err(HarnessError::Usage("log-log fit abscissa is degenerate".to_string()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok((slope, intercept, (ss / count).sqrt()))
}

/// Averages the shell spectra of every stored checkpoint and fits a power
/// law over the requested shell range.
pub fn cmd_spectrum(
    run_dir: &Path,
    k_min: i64,
    k_max: Option<i64>,
) -> Result<SpectrumFit, HarnessError> {
    let meta: RunMeta = read_json(&run_dir.join(META_NAME))?;
    let mut names: Vec<String> = std::fs::read_dir(run_dir)
        .map_err(|e| io_err(run_dir, e))?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().into_string().ok()?;
            (name.starts_with("checkpoint_") && name.ends_with(".bin")).then_some(name)
        })
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(HarnessError::Usage(format!(
            "no checkpoints under {}",
            run_dir.display()
        )));
    }
    let mut energy: Vec<f64> = Vec::new();
    let mut centers: Vec<f64> = Vec::new();
    for nm in &names {
        let u = read_checkpoint_file(&run_dir.join(nm))?;
        let sp = u.shell_spectrum();
        if energy.is_empty() {
            centers = sp.shell_centers.clone();
            energy = vec![0.0; sp.shell_energy.len()];
        } else if sp.shell_energy.len() != energy.len() {
            return Err(HarnessError::Usage("checkpoints disagree on the grid".to_string()));
        }
        for (acc, e) in energy.iter_mut().zip(&sp.shell_energy) {
            *acc += e;
        }
    }
    for acc in &mut energy {
        *acc /= names.len() as f64;
    }
    let top = energy.len() as i64 - 1;
    let k_hi = k_max.unwrap_or(top).min(top);
    if k_min < 1 || k_hi < k_min {
        return Err(HarnessError::Usage(format!("empty shell range {k_min}..={k_hi}")));
    }
    let mut shells = Vec::new();
    let mut pts = Vec::new();
    for s in k_min..=k_hi {
        let e = energy[s as usize];
        shells.push(ShellPoint { shell: s, k: centers[s as usize], energy: e });
        if e > 0.0 {
            pts.push((centers[s as usize], e));
        }
    }
    if pts.len() < 3 {
        return Err(HarnessError::Usage(format!(
            "log-log fit needs at least 3 shells with energy; shells {k_min}..={k_hi} hold {}",
            pts.len()
        )));
    }
    let (slope, intercept, residual_rms) = fit_loglog(&pts)?;
    let fit = SpectrumFit {
        config_hash: meta.config_hash,
        checkpoints: names.len(),
        k_min,
        k_max: k_hi,
        slope,
        intercept,
        residual_rms,
        shells,
    };
    write_json(&run_dir.join(SPECTRUM_NAME), &fit)?;
    Ok(fit)
}
