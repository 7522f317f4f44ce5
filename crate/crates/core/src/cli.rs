//! Command-line front end: configuration, density-matrix files, CSV output
//! and the experiment commands.
//!
//! Every command is a pure function from an [`ExperimentConfig`] to a
//! [`CommandOutput`]; [`run`] only merges configuration and writes files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::circuits::{generate_optimal_state, CircuitError, TargetState};
use crate::hpea::{
    outcome_bits, qpea_state, run_ensemble, Estimator, HpeaError,
    ProtocolConfig,
};
use crate::metrics::{
    self, calibrate_protocol, exact_holevo_deviation, fidelity, holevo_from_runs, holevo_from_table,
    hl_bound, qpea_bound, snl_optimize, snl_variance, tabulate, MetricsError, SNL_ANGLES_N7,
};
use crate::noise::{
    hom_brute_force, hom_visibility, noisy_probe_state, NoiseConfig, NoiseError, NoiseMode,
    DEFAULT_ZETA, MAX_EPSILON,
};
use crate::qubit::{QubitError, QubitState, PSD_TOL};

/// Version written to and required from density-matrix files.
pub const DM_FORMAT_VERSION: u32 = 1;
/// Hermiticity, trace and eigenvalue tolerance applied when loading.
pub const DM_LOAD_TOL: f64 = 1e-6;
/// Deviations below this are left untouched on load.
const DM_EXACT_TOL: f64 = 1e-12;
const MAX_N_ENS: usize = 100_000_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("density-matrix file: {0}")]
    DensityFile(#[from] DensityFileError),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    /// 2 for configuration and input problems, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::DensityFile(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl From<NoiseError> for CliError {
    fn from(e: NoiseError) -> Self {
        match e {
            NoiseError::Parameter { .. } => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<CircuitError> for CliError {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::Noise(n) => (*n).into(),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<HpeaError> for CliError {
    fn from(e: HpeaError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<QubitError> for CliError {
    fn from(e: QubitError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    #[default]
    Binary,
    Calibrated,
}

/// Which source efficiency an SPDC sweep varies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SpdcVary {
    #[default]
    Eps1,
    Eps2,
}

/// Resolved parameters of one command. Loaded from a TOML file, then
/// overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Ensemble size; commands pick their own default when unset.
    pub n_ens: Option<usize>,
    pub xi: Option<f64>,
    pub zeta: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub estimator: EstimatorChoice,
    /// `optimal`, `qpea`, `ghz0`..`ghz3`, `mixed`, or a density-matrix file.
    pub state: Option<String>,
    pub out: Option<PathBuf>,
    pub xi_min: f64,
    pub xi_max: f64,
    pub xi_step: f64,
    pub vary: SpdcVary,
    pub eps_min: f64,
    pub eps_max: f64,
    pub eps_steps: usize,
    /// Value of the source efficiency held fixed in an SPDC sweep.
    pub eps_fixed: f64,
    pub phi_grid: usize,
    pub calibration_grid: usize,
    pub exact_grid: usize,
    pub photons: usize,
    pub restarts: usize,
    pub xi1: Option<f64>,
    pub xi2: Option<f64>,
    pub hom_grid: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_ens: None,
            xi: None,
            zeta: None,
            eps1: None,
            eps2: None,
            estimator: EstimatorChoice::Binary,
            state: None,
            out: None,
            xi_min: 0.90,
            xi_max: 1.00,
            xi_step: 0.01,
            vary: SpdcVary::Eps1,
            eps_min: 0.05,
            eps_max: 0.10,
            eps_steps: 6,
            eps_fixed: 0.05,
            phi_grid: 256,
            calibration_grid: metrics::MIN_CALIBRATION_GRID,
            exact_grid: 1024,
            photons: 7,
            restarts: metrics::DEFAULT_SNL_RESTARTS,
            xi1: None,
            xi2: None,
            hom_grid: 10,
        }
    }
}

fn check(name: &str, value: f64, lo: f64, hi: f64) -> Result<(), CliError> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(CliError::config(format!("{name} = {value} outside [{lo}, {hi}]")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(n) = self.n_ens {
            if n == 0 || n > MAX_N_ENS {
                return Err(CliError::config(format!("n_ens = {n} outside [1, {MAX_N_ENS}]")));
            }
        }
        for (name, v) in [("xi", self.xi), ("xi1", self.xi1), ("xi2", self.xi2)] {
            if let Some(v) = v {
                check(name, v, 0.0, 1.0)?;
            }
        }
        if let Some(z) = self.zeta {
            check("zeta", z, f64::MIN_POSITIVE, 1.0)?;
        }
        for (name, v) in [("eps1", self.eps1), ("eps2", self.eps2)] {
            if let Some(v) = v {
                check(name, v, 0.0, MAX_EPSILON)?;
            }
        }
        check("xi_min", self.xi_min, 0.0, 1.0)?;
        check("xi_max", self.xi_max, self.xi_min, 1.0)?;
        check("xi_step", self.xi_step, 1e-6, 1.0)?;
        check("eps_min", self.eps_min, 0.0, MAX_EPSILON)?;
        check("eps_max", self.eps_max, self.eps_min, MAX_EPSILON)?;
        check("eps_fixed", self.eps_fixed, 0.0, MAX_EPSILON)?;
        if self.eps_steps == 0 {
            return Err(CliError::config("eps_steps must be at least 1"));
        }
        if self.phi_grid < 8 {
            return Err(CliError::config(format!("phi_grid = {} is below 8", self.phi_grid)));
        }
        if self.calibration_grid < metrics::MIN_CALIBRATION_GRID {
            return Err(CliError::config(format!(
                "calibration_grid = {} is below {}",
                self.calibration_grid,
                metrics::MIN_CALIBRATION_GRID
            )));
        }
        if self.exact_grid < 64 {
            return Err(CliError::config(format!("exact_grid = {} is below 64", self.exact_grid)));
        }
        if !(1..=10).contains(&self.photons) {
            return Err(CliError::config(format!("photons = {} outside [1, 10]", self.photons)));
        }
        if self.restarts == 0 || self.hom_grid == 0 {
            return Err(CliError::config("restarts and hom_grid must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the command name and the canonical TOML form of the
    /// config. The output path is excluded: where results go does not
    /// change them.
    pub fn hash(&self, command: &str) -> String {
        let body = toml::to_string(&Self { out: None, ..self.clone() }).unwrap_or_default();
        let digest = Sha256::digest(format!("command = \"{command}\"\n{body}").as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn has_noise(&self) -> bool {
        self.xi.is_some() || self.zeta.is_some() || self.eps1.is_some() || self.eps2.is_some()
    }

    /// Noise parameters given on the command line or in the config file;
    /// `None` when none were.
    pub fn noise(&self) -> Option<NoiseConfig> {
        self.has_noise().then(|| NoiseConfig {
            xi: self.xi.unwrap_or(1.0),
            zeta: self.zeta.unwrap_or(DEFAULT_ZETA),
            eps1: self.eps1.unwrap_or(0.0),
            eps2: self.eps2.unwrap_or(0.0),
            ..NoiseConfig::default()
        })
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// Seed of every stochastic step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of protocol runs per ensemble.
    #[arg(long, global = true)]
    pub n_ens: Option<usize>,
    /// Mode overlap at every mismatch site.
    #[arg(long, global = true)]
    pub xi: Option<f64>,
    /// Detection-path transmissivity.
    #[arg(long, global = true)]
    pub zeta: Option<f64>,
    /// Heralded single-photon source efficiency.
    #[arg(long, global = true)]
    pub eps1: Option<f64>,
    /// Entangled-pair source efficiency.
    #[arg(long, global = true)]
    pub eps2: Option<f64>,
    /// Input state: optimal, qpea, ghz0..ghz3, mixed, or a density-matrix file.
    #[arg(long, global = true)]
    pub state: Option<String>,
    /// Output file (CSV, or a density matrix for generate-state).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub estimator: Option<EstimatorChoice>,
    /// TOML file with any `ExperimentConfig` field; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct SweepMismatchArgs {
    #[arg(long)]
    pub xi_min: Option<f64>,
    #[arg(long)]
    pub xi_max: Option<f64>,
    #[arg(long)]
    pub xi_step: Option<f64>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct SweepSpdcArgs {
    /// Efficiency to vary; the other is held at `--eps-fixed`.
    #[arg(long, value_enum)]
    pub vary: Option<SpdcVary>,
    #[arg(long)]
    pub eps_min: Option<f64>,
    #[arg(long)]
    pub eps_max: Option<f64>,
    #[arg(long)]
    pub eps_steps: Option<usize>,
    #[arg(long)]
    pub eps_fixed: Option<f64>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct SnlArgs {
    /// Number of photons.
    #[arg(long = "n")]
    pub photons: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct PdfArgs {
    #[arg(long)]
    pub phi_grid: Option<usize>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct HomArgs {
    #[arg(long)]
    pub xi1: Option<f64>,
    #[arg(long)]
    pub xi2: Option<f64>,
    /// Points per axis of the (ξ₁, ξ₂) grid when no pair is given.
    #[arg(long)]
    pub hom_grid: Option<usize>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub calibration_grid: Option<usize>,
}

#[derive(Subcommand, Clone, Debug)]
pub enum Command {
    /// Run the generator and report fidelity, purity and success probability.
    GenerateState,
    /// Monte Carlo ensemble of the adaptive protocol.
    SimulateHpea,
    /// Holevo deviation against mode overlap.
    SweepMismatch(SweepMismatchArgs),
    /// Holevo deviation against source efficiency.
    SweepSpdc(SweepSpdcArgs),
    /// Optimize single-photon measurement angles.
    SnlOptimize(SnlArgs),
    /// Outcome probabilities against the phase.
    Pdf(PdfArgs),
    /// Two-photon coincidence probability and visibility.
    Hom(HomArgs),
    /// Per-outcome calibrated estimates.
    Calibrate(CalibrateArgs),
    /// Report properties of a density-matrix file.
    AnalyzeState,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenerateState => "generate-state",
            Command::SimulateHpea => "simulate-hpea",
            Command::SweepMismatch(_) => "sweep-mismatch",
            Command::SweepSpdc(_) => "sweep-spdc",
            Command::SnlOptimize(_) => "snl-optimize",
            Command::Pdf(_) => "pdf",
            Command::Hom(_) => "hom",
            Command::Calibrate(_) => "calibrate",
            Command::AnalyzeState => "analyze-state",
        }
    }

    fn apply(&self, cfg: &mut ExperimentConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        match self {
            Command::SweepMismatch(a) => {
                set(&mut cfg.xi_min, &a.xi_min);
                set(&mut cfg.xi_max, &a.xi_max);
                set(&mut cfg.xi_step, &a.xi_step);
            }
            Command::SweepSpdc(a) => {
                set(&mut cfg.vary, &a.vary);
                set(&mut cfg.eps_min, &a.eps_min);
                set(&mut cfg.eps_max, &a.eps_max);
                set(&mut cfg.eps_steps, &a.eps_steps);
                set(&mut cfg.eps_fixed, &a.eps_fixed);
            }
            Command::SnlOptimize(a) => {
                set(&mut cfg.photons, &a.photons);
                set(&mut cfg.restarts, &a.restarts);
            }
            Command::Pdf(a) => set(&mut cfg.phi_grid, &a.phi_grid),
            Command::Hom(a) => {
                if a.xi1.is_some() {
                    cfg.xi1 = a.xi1;
                }
                if a.xi2.is_some() {
                    cfg.xi2 = a.xi2;
                }
                set(&mut cfg.hom_grid, &a.hom_grid);
            }
            Command::Calibrate(a) => set(&mut cfg.calibration_grid, &a.calibration_grid),
            Command::GenerateState | Command::SimulateHpea | Command::AnalyzeState => {}
        }
    }
}

#[derive(Parser, Clone, Debug)]
#[command(name = "hpea", version, about = "Photonic Heisenberg-limited phase estimation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

impl Cli {
    /// Config file (if any), then shared flags, then subcommand flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.common.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let c = &self.common;
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if c.n_ens.is_some() {
            cfg.n_ens = c.n_ens;
        }
        for (dst, src) in [
            (&mut cfg.xi, c.xi),
            (&mut cfg.zeta, c.zeta),
            (&mut cfg.eps1, c.eps1),
            (&mut cfg.eps2, c.eps2),
        ] {
            if src.is_some() {
                *dst = src;
            }
        }
        if c.state.is_some() {
            cfg.state = c.state.clone();
        }
        if c.out.is_some() {
            cfg.out = c.out.clone();
        }
        if let Some(e) = c.estimator {
            cfg.estimator = e;
        }
        self.command.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing header field `{0}`")]
    MissingHeader(&'static str),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("dimension {dimension} does not match {qubits} qubits")]
    Dimension { dimension: usize, qubits: usize },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("not a density matrix: {0}")]
    Invalid(String),
}

/// Serializes a state in the line-oriented density-matrix format. Numbers
/// are written in shortest round-trip form, so loading restores every bit.
pub fn format_density_matrix(state: &QubitState) -> String {
    let d = state.dim();
    let mut s = String::new();
    let _ = writeln!(s, "format_version {DM_FORMAT_VERSION}");
    let _ = writeln!(s, "qubits {}", state.qubits());
    let _ = writeln!(s, "dimension {d}");
    let m = state.matrix();
    for i in 0..d {
        let row: Vec<String> = (0..d).map(|j| format!("{} {}", m[(i, j)].re, m[(i, j)].im)).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    s
}

/// A state read from disk and what repair, if any, was applied.
#[derive(Clone, Debug)]
pub struct LoadedState {
    pub state: QubitState,
    pub repair: Option<crate::qubit::RepairReport>,
}

/// Parses the density-matrix format. Blank lines and `#` comments are
/// ignored. Matrices within [`DM_LOAD_TOL`] of a valid state are accepted;
/// small defects are repaired (Hermitian part, clipped eigenvalues, unit
/// trace) and reported.
pub fn parse_density_matrix(text: &str) -> Result<LoadedState, DensityFileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let mut header = |key: &'static str| -> Result<usize, DensityFileError> {
        let (line, l) = lines.next().ok_or(DensityFileError::MissingHeader(key))?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(DensityFileError::MissingHeader(key));
        }
        let v = it.next().ok_or(DensityFileError::MissingHeader(key))?;
        if it.next().is_some() {
            return Err(DensityFileError::Parse { line, message: format!("trailing text after {key}") });
        }
        v.parse().map_err(|_| DensityFileError::Parse { line, message: format!("bad {key} `{v}`") })
    };
    let version = header("format_version")? as u32;
    if version != DM_FORMAT_VERSION {
        return Err(DensityFileError::Version(version));
    }
    let qubits = header("qubits")?;
    let dimension = header("dimension")?;
    if qubits == 0 || qubits > 16 || dimension != 1usize << qubits {
        return Err(DensityFileError::Dimension { dimension, qubits });
    }
    let mut m = DMatrix::<Complex64>::zeros(dimension, dimension);
    let mut rows = 0;
    for (line, l) in lines {
        if rows == dimension {
            return Err(DensityFileError::RowCount { expected: dimension, found: rows + 1 });
        }
        let nums: Vec<f64> = l
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| DensityFileError::Parse { line, message: format!("bad number `{t}`") })
            })
            .collect::<Result<_, _>>()?;
        if nums.len() != 2 * dimension {
            return Err(DensityFileError::Parse {
                line,
                message: format!("expected {} numbers, found {}", 2 * dimension, nums.len()),
            });
        }
        for j in 0..dimension {
            m[(rows, j)] = Complex64::new(nums[2 * j], nums[2 * j + 1]);
        }
        rows += 1;
    }
    if rows != dimension {
        return Err(DensityFileError::RowCount { expected: dimension, found: rows });
    }
    // Reject anything beyond the load tolerance before deciding on repair.
    QubitState::with_tolerance(m.clone(), DM_LOAD_TOL)
        .map_err(|e| DensityFileError::Invalid(e.to_string()))?;
    if let Ok(state) = QubitState::with_tolerance(m.clone(), DM_EXACT_TOL) {
        if state.eigenvalues()[0] >= -PSD_TOL {
            return Ok(LoadedState { state, repair: None });
        }
    }
    let (state, report) =
        QubitState::repaired(m).map_err(|e| DensityFileError::Invalid(e.to_string()))?;
    log::warn!(
        "density matrix repaired on load: trace {:.3e} off, hermiticity error {:.3e}, min eigenvalue {:.3e}, clipped weight {:.3e}",
        report.trace_before - 1.0,
        report.hermiticity_error,
        report.min_eigenvalue,
        report.clipped_weight
    );
    Ok(LoadedState { state, repair: Some(report) })
}

pub fn load_density_matrix(path: &Path) -> Result<LoadedState, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    Ok(parse_density_matrix(&text)?)
}

pub fn save_density_matrix(path: &Path, state: &QubitState) -> Result<(), CliError> {
    fs::write(path, format_density_matrix(state))
        .map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Column-labelled table rendered as CSV with a provenance comment line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self, command: &str, config_hash: &str, seed: u64) -> String {
        let mut s = format!("# command={command} config_hash={config_hash} seed={seed}\n");
        s.push_str(&self.header.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// What a command produced.
#[derive(Clone, Debug, Default)]
pub struct CommandOutput {
    /// `key = value` summary lines.
    pub report: Vec<(String, String)>,
    pub table: Option<Table>,
    /// State to write to `--out` (generate-state).
    pub state: Option<QubitState>,
}

impl CommandOutput {
    fn line(&mut self, key: &str, value: impl ToString) {
        self.report.push((key.to_string(), value.to_string()));
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.report.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Input state named by `--state`, with noise applied to the generated
/// optimal state when noise flags are present.
pub fn resolve_state(cfg: &ExperimentConfig) -> Result<QubitState, CliError> {
    let name = cfg.state.as_deref().unwrap_or("optimal");
    let named = match name {
        "optimal" => {
            return match cfg.noise() {
                Some(noise) => Ok(generate_optimal_state(Some(&noise))?.state),
                None => Ok(TargetState::OptimalN7.qubit_state()?),
            }
        }
        "qpea" => Some(qpea_state(2)),
        "mixed" => Some(QubitState::maximally_mixed(3)),
        _ => match name.strip_prefix("ghz").and_then(|j| j.parse::<usize>().ok()) {
            Some(j) => Some(TargetState::Ghz(j).qubit_state()?),
            None => None,
        },
    };
    match named {
        Some(s) => Ok(s),
        None => Ok(load_density_matrix(Path::new(name))?.state),
    }
}

/// Protocol for `state` with the requested estimator, calibrating on the
/// configured grid when needed.
pub fn protocol_for(
    state: QubitState,
    choice: EstimatorChoice,
    calibration_grid: usize,
) -> Result<ProtocolConfig, CliError> {
    let cfg = ProtocolConfig::new(state, Estimator::Binary)?;
    Ok(match choice {
        EstimatorChoice::Binary => cfg,
        EstimatorChoice::Calibrated => {
            let table = calibrate_protocol(&cfg, calibration_grid)?;
            cfg.with_estimator(Estimator::Calibrated(table))
        }
    })
}

fn ghz_weights(state: &QubitState) -> Result<Vec<f64>, CliError> {
    (0..4)
        .map(|j| {
            let g = TargetState::Ghz(j).amplitudes()?;
            Ok(state.expectation_pure(&g))
        })
        .collect()
}

pub fn cmd_generate_state(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let noise = cfg.noise();
    let generated = generate_optimal_state(noise.as_ref())?;
    let target = TargetState::OptimalN7.qubit_state()?;
    let mut out = CommandOutput::default();
    out.line("fidelity", fidelity(&generated.state, &target)?);
    out.line("purity", generated.state.purity());
    out.line("success_probability", generated.success_probability);
    out.line("click_probability", generated.click_probability);
    for (j, w) in ghz_weights(&generated.state)?.iter().enumerate() {
        out.line(&format!("ghz{j}_weight"), w);
    }
    out.state = Some(generated.state);
    Ok(out)
}

fn bits_string(bits: &[u8]) -> String {
    bits.iter().map(|b| char::from(b'0' + b)).collect()
}

fn reference_lines(out: &mut CommandOutput, resources: usize) -> Result<(), CliError> {
    out.line("hl_bound", hl_bound(resources)?);
    out.line("qpea_bound", qpea_bound(resources)?);
    if resources == 7 {
        out.line("snl_bound", snl_variance(&SNL_ANGLES_N7)?);
    }
    Ok(())
}

pub fn cmd_simulate_hpea(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let n_ens = cfg.n_ens.unwrap_or(50_000);
    let protocol = protocol_for(resolve_state(cfg)?, cfg.estimator, cfg.calibration_grid)?
        .with_seed(cfg.seed);
    let runs = run_ensemble(&protocol, n_ens, cfg.seed)?;
    let stats = holevo_from_runs(&runs)?;
    let mut table = Table::new(["run", "phi_true", "bits", "phi_est"]);
    for (i, r) in runs.iter().enumerate() {
        table.push(vec![
            i.to_string(),
            r.phi_true.to_string(),
            bits_string(&r.bits),
            r.phi_est.to_string(),
        ]);
    }
    let mut out = CommandOutput { table: Some(table), ..Default::default() };
    out.line("n_ens", n_ens);
    out.line("d_h", stats.deviation);
    out.line("d_h_stderr", stats.deviation_stderr);
    out.line("mu", stats.mu);
    out.line("mu_stderr", stats.mu_stderr);
    out.line("d_h_exact", exact_holevo_deviation(&protocol, cfg.exact_grid)?);
    reference_lines(&mut out, protocol.resources())?;
    Ok(out)
}

/// One point of a noise sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub parameter: f64,
    /// Monte Carlo Holevo deviation.
    pub d_h: f64,
    pub stderr: f64,
    /// Phase-averaged Holevo deviation from exact outcome distributions.
    pub d_h_exact: f64,
    pub fidelity: f64,
    pub success_probability: f64,
}

/// Simulates the noisy probe state, then runs the protocol on it. Every
/// point of a sweep uses the same seed, so differences between points are
/// not dominated by sampling noise.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_noise_point(
    parameter: f64,
    noise: &NoiseConfig,
    mode: NoiseMode,
    n_ens: usize,
    seed: u64,
    estimator: EstimatorChoice,
    calibration_grid: usize,
    exact_grid: usize,
) -> Result<SweepPoint, CliError> {
    let probe = noisy_probe_state(noise, mode)?;
    let target = TargetState::OptimalN7.qubit_state()?;
    let f = fidelity(&probe.state, &target)?;
    let protocol = protocol_for(probe.state, estimator, calibration_grid)?;
    let runs = run_ensemble(&protocol, n_ens, seed)?;
    let stats = holevo_from_runs(&runs)?;
    Ok(SweepPoint {
        parameter,
        d_h: stats.deviation,
        stderr: stats.deviation_stderr,
        d_h_exact: exact_holevo_deviation(&protocol, exact_grid)?,
        fidelity: f,
        success_probability: probe.success_probability,
    })
}

/// Rounds away accumulated binary noise so grid values print as typed.
fn tidy(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// `lo, lo + step, …` up to `hi` inclusive, robust to rounding.
pub fn inclusive_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| tidy(lo + step * i as f64)).collect()
}

/// First crossing of `threshold` when scanning from the largest parameter
/// down, linearly interpolated between the bracketing points.
pub fn threshold_crossing(points: &[SweepPoint], threshold: f64) -> Option<f64> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.parameter.total_cmp(&a.parameter));
    sorted.windows(2).find_map(|w| {
        let (hi, lo) = (w[0], w[1]);
        (hi.d_h <= threshold && lo.d_h > threshold).then(|| {
            hi.parameter + (threshold - hi.d_h) * (lo.parameter - hi.parameter) / (lo.d_h - hi.d_h)
        })
    })
}

fn sweep_table(name: &str, points: &[SweepPoint]) -> Table {
    let mut t = Table::new([name, "d_h", "stderr", "d_h_exact", "fidelity", "success_probability"]);
    for p in points {
        t.push(vec![
            p.parameter.to_string(),
            p.d_h.to_string(),
            p.stderr.to_string(),
            p.d_h_exact.to_string(),
            p.fidelity.to_string(),
            p.success_probability.to_string(),
        ]);
    }
    t
}

pub fn sweep_mismatch(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, CliError> {
    let n_ens = cfg.n_ens.unwrap_or(10_000);
    let zeta = cfg.zeta.unwrap_or(DEFAULT_ZETA);
    inclusive_grid(cfg.xi_min, cfg.xi_max, cfg.xi_step)
        .into_iter()
        .map(|xi| {
            let xi = xi.min(1.0);
            let noise = NoiseConfig { xi, zeta, ..NoiseConfig::default() };
            evaluate_noise_point(
                xi,
                &noise,
                NoiseMode::Mismatch,
                n_ens,
                cfg.seed,
                cfg.estimator,
                cfg.calibration_grid,
                cfg.exact_grid,
            )
        })
        .collect()
}

pub fn sweep_spdc(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, CliError> {
    let n_ens = cfg.n_ens.unwrap_or(10_000);
    let steps = cfg.eps_steps;
    (0..steps)
        .map(|i| {
            let eps = if steps == 1 {
                cfg.eps_min
            } else {
                tidy(cfg.eps_min + (cfg.eps_max - cfg.eps_min) * i as f64 / (steps - 1) as f64)
            };
            let (eps1, eps2) = match cfg.vary {
                SpdcVary::Eps1 => (eps, cfg.eps_fixed),
                SpdcVary::Eps2 => (cfg.eps_fixed, eps),
            };
            let noise = NoiseConfig {
                xi: cfg.xi.unwrap_or(1.0),
                zeta: cfg.zeta.unwrap_or(DEFAULT_ZETA),
                eps1,
                eps2,
                ..NoiseConfig::default()
            };
            evaluate_noise_point(
                eps,
                &noise,
                noise.default_mode(),
                n_ens,
                cfg.seed,
                cfg.estimator,
                cfg.calibration_grid,
                cfg.exact_grid,
            )
        })
        .collect()
}

pub fn cmd_sweep_mismatch(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let points = sweep_mismatch(cfg)?;
    let snl = snl_variance(&SNL_ANGLES_N7)?;
    let mut out = CommandOutput { table: Some(sweep_table("xi", &points)), ..Default::default() };
    out.line("snl_bound", snl);
    out.line("hl_bound", hl_bound(7)?);
    match threshold_crossing(&points, snl) {
        Some(x) => out.line("snl_crossing_xi", x),
        None => out.line("snl_crossing_xi", "none"),
    }
    Ok(out)
}

pub fn cmd_sweep_spdc(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let points = sweep_spdc(cfg)?;
    let name = match cfg.vary {
        SpdcVary::Eps1 => "eps1",
        SpdcVary::Eps2 => "eps2",
    };
    let snl = snl_variance(&SNL_ANGLES_N7)?;
    let mut out = CommandOutput { table: Some(sweep_table(name, &points)), ..Default::default() };
    out.line("snl_bound", snl);
    out.line("hl_bound", hl_bound(7)?);
    out.line("all_below_snl", points.iter().all(|p| p.d_h < snl));
    Ok(out)
}

pub fn cmd_snl(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let r = snl_optimize(cfg.photons, cfg.restarts, cfg.seed)?;
    let mut table = Table::new(["photon", "theta"]);
    for (i, t) in r.angles.iter().enumerate() {
        table.push(vec![i.to_string(), t.to_string()]);
    }
    let mut out = CommandOutput { table: Some(table), ..Default::default() };
    out.line("photons", cfg.photons);
    out.line("v_snl", r.variance);
    out.line("hl_bound", hl_bound(cfg.photons)?);
    Ok(out)
}

pub fn cmd_pdf(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let protocol = ProtocolConfig::new(resolve_state(cfg)?, Estimator::Binary)?;
    let k = protocol.k;
    let mut header = vec!["phi".to_string()];
    header.extend((0..protocol.outcomes()).map(|y| format!("p_{}", bits_string(&outcome_bits(k, y)))));
    let mut table = Table::new(header);
    for d in tabulate(&protocol, cfg.phi_grid)? {
        let mut row = vec![d.phi.to_string()];
        row.extend(d.probabilities.iter().map(f64::to_string));
        table.push(row);
    }
    let mut out = CommandOutput { table: Some(table), ..Default::default() };
    out.line("phi_grid", cfg.phi_grid);
    out.line("outcomes", protocol.outcomes());
    Ok(out)
}

pub fn cmd_hom(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let pairs: Vec<(f64, f64)> = match (cfg.xi1, cfg.xi2) {
        (None, None) => {
            let n = cfg.hom_grid;
            let axis: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
            axis.iter().flat_map(|&a| axis.iter().map(move |&b| (a, b))).collect()
        }
        (a, b) => vec![(a.unwrap_or(1.0), b.unwrap_or(1.0))],
    };
    let mut table = Table::new(["xi1", "xi2", "p_coin", "visibility", "p_coin_fock"]);
    for (a, b) in pairs {
        let h = hom_visibility(a, b)?;
        let brute = hom_brute_force(a, b, 0.5)?;
        table.push(vec![
            a.to_string(),
            b.to_string(),
            h.p_coin.to_string(),
            h.visibility.to_string(),
            brute.to_string(),
        ]);
    }
    let mut out = CommandOutput::default();
    out.line("points", table.rows.len());
    if table.rows.len() == 1 {
        out.line("p_coin", &table.rows[0][2]);
        out.line("visibility", &table.rows[0][3]);
    }
    out.table = Some(table);
    Ok(out)
}

pub fn cmd_calibrate(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let protocol = ProtocolConfig::new(resolve_state(cfg)?, Estimator::Binary)?;
    let grid = tabulate(&protocol, cfg.calibration_grid)?;
    let table_cal = metrics::calibrate_estimator(&grid)?;
    let calibrated = Estimator::Calibrated(table_cal.clone());
    let mut table = Table::new(["outcome", "bits", "phi_binary", "phi_calibrated"]);
    for y in 0..protocol.outcomes() {
        table.push(vec![
            y.to_string(),
            bits_string(&outcome_bits(protocol.k, y)),
            Estimator::Binary.estimate(protocol.k, y).to_string(),
            table_cal.estimate(y).to_string(),
        ]);
    }
    let mut out = CommandOutput { table: Some(table), ..Default::default() };
    out.line("d_h_binary", holevo_from_table(&grid, &Estimator::Binary)?);
    out.line("d_h_calibrated", holevo_from_table(&grid, &calibrated)?);
    Ok(out)
}

pub fn cmd_analyze_state(cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    let path = cfg
        .state
        .as_deref()
        .ok_or_else(|| CliError::config("analyze-state needs --state <file>"))?;
    let loaded = load_density_matrix(Path::new(path))?;
    let state = loaded.state;
    let mut out = CommandOutput::default();
    out.line("qubits", state.qubits());
    out.line("repaired", loaded.repair.is_some());
    if let Some(r) = &loaded.repair {
        out.line("min_eigenvalue_before_repair", r.min_eigenvalue);
        out.line("clipped_weight", r.clipped_weight);
    }
    out.line("purity", state.purity());
    let ev: Vec<String> = state.eigenvalues().iter().rev().map(|l| format!("{l:.6}")).collect();
    out.line("eigenvalues", ev.join(" "));
    if state.qubits() == 3 {
        let target = TargetState::OptimalN7.qubit_state()?;
        out.line("fidelity_optimal", fidelity(&state, &target)?);
        for (j, w) in ghz_weights(&state)?.iter().enumerate() {
            out.line(&format!("ghz{j}_weight"), w);
        }
    }
    let protocol = ProtocolConfig::new(state, Estimator::Binary)?;
    let grid = tabulate(&protocol, cfg.calibration_grid)?;
    let table = metrics::calibrate_estimator(&grid)?;
    out.line("d_h_binary", holevo_from_table(&grid, &Estimator::Binary)?);
    out.line("d_h_calibrated", holevo_from_table(&grid, &Estimator::Calibrated(table))?);
    reference_lines(&mut out, protocol.resources())?;
    Ok(out)
}

pub fn execute(command: &Command, cfg: &ExperimentConfig) -> Result<CommandOutput, CliError> {
    match command {
        Command::GenerateState => cmd_generate_state(cfg),
        Command::SimulateHpea => cmd_simulate_hpea(cfg),
        Command::SweepMismatch(_) => cmd_sweep_mismatch(cfg),
        Command::SweepSpdc(_) => cmd_sweep_spdc(cfg),
        Command::SnlOptimize(_) => cmd_snl(cfg),
        Command::Pdf(_) => cmd_pdf(cfg),
        Command::Hom(_) => cmd_hom(cfg),
        Command::Calibrate(_) => cmd_calibrate(cfg),
        Command::AnalyzeState => cmd_analyze_state(cfg),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Resolves the configuration, runs the command and writes its output.
/// Tables go to `--out` when given (and the report to stdout), otherwise to
/// stdout with the report on stderr as `#` comments.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    let name = cli.command.name();
    let hash = cfg.hash(name);
    let output = execute(&cli.command, &cfg)?;
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    let report: String =
        output.report.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let io_err = |source| CliError::Io { path: PathBuf::from("<stdout>"), source };
    match (&output.table, &output.state, &cfg.out) {
        (Some(t), _, Some(path)) => {
            write_file(path, &t.to_csv(name, &hash, cfg.seed))?;
            write!(stdout, "{report}").map_err(io_err)?;
        }
        (Some(t), _, None) => {
            write!(stdout, "{}", t.to_csv(name, &hash, cfg.seed)).map_err(io_err)?;
            for line in report.lines() {
                eprintln!("# {line}");
            }
        }
        (None, Some(state), Some(path)) => {
            save_density_matrix(path, state)?;
            write!(stdout, "{report}").map_err(io_err)?;
        }
        (None, _, _) => write!(stdout, "{report}").map_err(io_err)?,
    }
    Ok(())
}
