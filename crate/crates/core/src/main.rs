//! Command-line front end: simulate, analyze, verify, spectrum.

use clap::{Parser, Subcommand, ValueEnum};
use kladder::harness::{
    cmd_analyze, cmd_simulate, cmd_spectrum, cmd_verify, AnalyzeOptions, HarnessError,
};
use kladder::intervals::{ClassifierMode, Label};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "kladder",
    version,
    about = "forced Navier-Stokes runs with moment-ladder diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Threshold from the proven per-order inequality at measured Re.
    Theoretical,
    /// Threshold from the run's own time-averaged kappa statistics.
    Empirical,
}

impl From<ModeArg> for ClassifierMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Theoretical => ClassifierMode::Theoretical,
            ModeArg::Empirical => ClassifierMode::Empirical,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run (or resume) the solver described by a config file.
    Simulate {
        /// Path to the JSON config.
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Classify stored samples into good/bad/dangerous intervals.
    Analyze {
        /// Run directory holding samples.csv and run_meta.json.
        #[arg(short, long)]
        run: PathBuf,
        /// Orders to classify, comma separated; default is every
        /// classifiable order.
        #[arg(short = 'n', long = "n", value_delimiter = ',')]
        orders: Vec<u32>,
        /// Interpolation exponent; defaults to the configured value.
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, value_enum, default_value_t = ModeArg::Theoretical)]
        mode: ModeArg,
        /// Narrowest surviving interval; defaults to the configured value.
        #[arg(long)]
        min_duration: Option<f64>,
        /// Bootstrap ladder depth tabulated in the scaling report.
        #[arg(long, default_value_t = 2)]
        ladder_depth: u32,
    },
    /// Re-check every invariant of a stored run; nonzero exit on violation.
    Verify {
        #[arg(short, long)]
        run: PathBuf,
    },
    /// Fit a power law to the time-averaged shell spectrum.
    Spectrum {
        #[arg(short, long)]
        run: PathBuf,
        /// Lowest shell in the fit.
        #[arg(long, default_value_t = 1)]
        kmin: i64,
        /// Highest shell in the fit; defaults to the largest resolved one.
        #[arg(long)]
        kmax: Option<i64>,
    },
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4e}")).unwrap_or_else(|| "-".to_string())
}

fn dispatch(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Simulate { config } => {
            let out = cmd_simulate(&config)?;
            println!(
                "run {}{}: {} steps, {} samples, t = {}",
                &out.meta.config_hash[..12],
                if out.resumed { " (resumed)" } else { "" },
                out.meta.steps,
                out.meta.samples_written,
                out.meta.t_final
            );
            println!(
                "  max energy residual {:.3e}, divergence {:.3e}, artifacts in {}",
                out.meta.gates.max_energy_residual,
                out.meta.gates.max_divergence,
                out.run_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { run, orders, mu, mode, min_duration, ladder_depth } => {
            let opts = AnalyzeOptions {
                orders,
                mu,
                mode: mode.into(),
                min_duration,
                ladder_depth,
            };
            let report = cmd_analyze(&run, &opts)?;
            println!(
                "Re = {:.4e} (Gr = {:.4e}), horizon [{:.4}, {:.4}], mu = {}",
                report.bulk.reynolds,
                report.bulk.grashof,
                report.bulk.horizon.0,
                report.bulk.horizon.1,
                report.mu
            );
            for o in &report.orders {
                let good = o.intervals.entries.iter().filter(|e| e.label == Label::Good).count();
                let bad = o.intervals.entries.len() - good;
                println!(
                    "  n = {}: {good} good / {bad} bad entries, mean widths good {} bad {}, {} dangerous",
                    o.n,
                    fmt_opt(o.widths.mean_good),
                    fmt_opt(o.widths.mean_bad),
                    o.dangerous.entries.len()
                );
            }
            for st in &report.intersections {
                println!(
                    "  S^({}) over n = {:?}: {} common bad entries",
                    st.p,
                    st.orders,
                    st.set.entries.len()
                );
            }
            println!("  wrote {}", run.join("analysis.json").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { run } => {
            let report = cmd_verify(&run)?;
            for c in &report.checks {
                println!(
                    "{} {:<26} margin {:+.3e}  {}",
                    if c.passed { "ok  " } else { "FAIL" },
                    c.name,
                    c.margin,
                    c.details
                );
            }
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            println!("verify: {} checks, {failed} failed", report.checks.len());
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Spectrum { run, kmin, kmax } => {
            let fit = cmd_spectrum(&run, kmin, kmax)?;
            println!(
                "slope {:.6} intercept {:.6} rms {:.3e} over shells {}..={} ({} checkpoints)",
                fit.slope, fit.intercept, fit.residual_rms, fit.k_min, fit.k_max, fit.checkpoints
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
