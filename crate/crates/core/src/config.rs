//! Run configuration: a flat JSON file mapped onto [`SimConfig`], validated
//! as a whole so one pass reports every violation, and hashed so artifacts
//! can name the exact configuration that produced them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

fn default_burn_in() -> f64 {
    0.2
}

fn default_init_amplitude() -> f64 {
    1.0
}

fn default_init_shell_max() -> i64 {
    2
}

/// One simulation run, fully determined (bit-for-bit) by these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SimConfig {
    /// Grid points per axis; even, at least 8.
    pub n: usize,
    /// Box length.
    pub l: f64,
    /// Forcing length scale; `L/(2 pi ell)` must be an integer shell.
    pub ell: f64,
    /// Viscosity.
    pub nu: f64,
    /// Forcing amplitude: the RMS of the forcing field.
    pub f_amplitude: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between diagnostic samples.
    pub sample_every: u64,
    pub seed: u64,
    /// Forcing-time exponent; strictly inside (0, 1/6).
    pub delta: f64,
    /// Classifier interpolation exponent.
    pub mu: f64,
    /// Highest kappa order computed; moments go one order further.
    pub n_max: u32,
    /// Order constants `c_1 ..`; empty means all ones.
    #[serde(default)]
    pub c_constants: Vec<f64>,
    /// Fraction of the run dropped before averaging.
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    /// Narrowest interval kept by the label merge filter.
    #[serde(default)]
    pub min_duration: f64,
    pub output_dir: String,
    /// RMS of the random initial velocity.
    #[serde(default = "default_init_amplitude")]
    pub init_amplitude: f64,
    /// Initial energy occupies shells `1 ..= init_shell_max`.
    #[serde(default = "default_init_shell_max")]
    pub init_shell_max: i64,
    /// Steps between checkpoints; 0 writes only the final one.
    #[serde(default)]
    pub checkpoint_every: u64,
}

/// The subset of fields that determine the sample stream byte-for-byte.
/// Changing anything else (horizon, analysis knobs, paths) keeps a stored
/// run resumable.
#[derive(Serialize)]
struct StreamKey<'a> {
    n: usize,
    l: f64,
    ell: f64,
    nu: f64,
    f_amplitude: f64,
    dt: f64,
    sample_every: u64,
    seed: u64,
    delta: f64,
    n_max: u32,
    init_amplitude: f64,
    init_shell_max: i64,
    #[serde(skip)]
    _marker: std::marker::PhantomData<&'a ()>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

impl SimConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: SimConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Largest integer wavenumber kept by dealiasing.
    pub fn dealias_cutoff(&self) -> i64 {
        (self.n / 3) as i64
    }

    /// Forcing shell index `L/(2 pi ell)`, not yet validated as integral.
    pub fn forcing_shell(&self) -> f64 {
        self.l / (2.0 * std::f64::consts::PI * self.ell)
    }

    /// Order constant `c_n`, defaulting to 1.
    pub fn c_of(&self, n: u32) -> f64 {
        if self.c_constants.is_empty() {
            1.0
        } else {
            self.c_constants[(n - 1) as usize]
        }
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        if self.n < 8 || self.n % 2 != 0 {
            bad.push(format!("n must be even and at least 8, got {}", self.n));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            bad.push(format!("l must be positive and finite, got {}", self.l));
        }
        if !(self.ell > 0.0) {
            bad.push(format!("ell must be positive, got {}", self.ell));
        } else if self.ell > self.l / (2.0 * std::f64::consts::PI) * (1.0 + 1e-12) {
            bad.push(format!(
                "ell = {} exceeds L/(2 pi) = {}",
                self.ell,
                self.l / (2.0 * std::f64::consts::PI)
            ));
        } else {
            let shells = self.forcing_shell();
            let rounded = shells.round();
            if (shells - rounded).abs() > 1e-9 * shells.abs() {
                bad.push(format!(
                    "ell = {} maps to fractional shell {shells}; L/(2 pi ell) must be an integer",
                    self.ell
                ));
            } else if rounded > self.dealias_cutoff() as f64 {
                bad.push(format!(
                    "forcing shell {rounded} exceeds the dealias cutoff {}",
                    self.dealias_cutoff()
                ));
            }
        }
        if !(self.nu > 0.0) {
            bad.push(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.f_amplitude > 0.0) {
            bad.push(format!("f_amplitude must be positive, got {}", self.f_amplitude));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt must be positive and finite, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            bad.push(format!("t_end must be nonnegative and finite, got {}", self.t_end));
        }
        if self.sample_every < 1 {
            bad.push("sample_every must be at least 1".to_string());
        }
        if !(self.delta > 0.0 && self.delta < 1.0 / 6.0) {
            bad.push(format!("delta must lie strictly inside (0, 1/6), got {}", self.delta));
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            bad.push(format!("mu must lie strictly inside (0, 1), got {}", self.mu));
        }
        if !(2..=8).contains(&self.n_max) {
            bad.push(format!("n_max must lie in 2..=8, got {}", self.n_max));
        }
        if !self.c_constants.is_empty() {
            if self.c_constants.len() < self.n_max as usize {
                bad.push(format!(
                    "c_constants needs one entry per order up to n_max = {}, got {}",
                    self.n_max,
                    self.c_constants.len()
                ));
            }
            for (i, &c) in self.c_constants.iter().enumerate() {
                if !(c > 0.0 && c.is_finite()) {
                    bad.push(format!("c_constants[{i}] must be positive, got {c}"));
                }
            }
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            bad.push(format!(
                "burn_in_fraction must lie in [0, 1), got {}",
                self.burn_in_fraction
            ));
        }
        if !(self.min_duration >= 0.0) {
            bad.push(format!("min_duration must be nonnegative, got {}", self.min_duration));
        }
        if self.output_dir.is_empty() {
            bad.push("output_dir must not be empty".to_string());
        }
        if !(self.init_amplitude > 0.0) {
            bad.push(format!("init_amplitude must be positive, got {}", self.init_amplitude));
        }
        if self.init_shell_max < 1 || self.init_shell_max > self.dealias_cutoff() {
            bad.push(format!(
                "init_shell_max must lie in 1..={}, got {}",
                self.dealias_cutoff(),
                self.init_shell_max
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }

    /// SHA-256 of the canonical serialization; names artifacts.
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// SHA-256 over the sample-stream-determining fields only; resume
    /// compatibility key.
    pub fn stream_fingerprint(&self) -> String {
        let key = StreamKey {
            n: self.n,
            l: self.l,
            ell: self.ell,
            nu: self.nu,
            f_amplitude: self.f_amplitude,
            dt: self.dt,
            sample_every: self.sample_every,
            seed: self.seed,
            delta: self.delta,
            n_max: self.n_max,
            init_amplitude: self.init_amplitude,
            init_shell_max: self.init_shell_max,
            _marker: std::marker::PhantomData,
        };
        sha256_hex(serde_json::to_string(&key).expect("key serializes").as_bytes())
    }
}
