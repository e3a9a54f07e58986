//! Configuration-driven command line front end.
//!
//! Every run reads one JSON config, resolves it (model inlined, seed override
//! applied), hashes the resolved form and writes that hash into each
//! artifact. `resolved_config.json` reproduces a run exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::branching::{mixing_bound, BranchingError, CertificatePolicy};
use crate::model::{HawkesModel, ModelError};
use crate::simulate::{simulate, RunConfig, SimError, Simulator};
use crate::spectrum::{
    asymptotic_variance_const, asymptotic_variance_periodic, variance_curve, LinearStatistic, Spectrum,
    SpectrumError, TestFunction, VarianceOptions,
};
use crate::stats::{clt_harness, mixing_decay_diagnostic, DecayConfig, HarnessConfig, StatsError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hawkesmix", version, about = "Hawkes process simulation, spectra and mixing diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, env = "HAWKESMIX_OUT", default_value = "hawkesmix-out")]
    pub out: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check subcriticality and print the spectral radius and mean intensity.
    Validate,
    /// Simulate one event log.
    Simulate,
    /// Bartlett spectral density on a frequency grid.
    Spectrum,
    /// Variance of a linear statistic over a set of horizons.
    Variance,
    /// Numeric covariance-decay bound.
    MixingBound,
    /// Monte Carlo check of the central limit theorem and Brownian covariance.
    CltTest,
    /// Empirical covariance decay against the spectral value and the bound.
    Decay,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Spectrum => "spectrum",
            Command::Variance => "variance",
            Command::MixingBound => "mixing-bound",
            Command::CltTest => "clt-test",
            Command::Decay => "decay",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Branching(#[from] BranchingError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl CliError {
    pub fn is_hypothesis(&self) -> bool {
        match self {
            CliError::Model(e) => e.is_hypothesis(),
            CliError::Simulation(e) => e.is_hypothesis(),
            CliError::Spectrum(e) => e.is_hypothesis(),
            CliError::Branching(e) => e.is_hypothesis(),
            CliError::Stats(e) => e.is_hypothesis(),
            _ => false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_hypothesis() {
            EXIT_HYPOTHESIS
        } else {
            EXIT_FAIL
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// A model given inline or as a path relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(HawkesModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub horizon: f64,
    #[serde(default)]
    pub burn_in: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub simulator: Simulator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrequencyGrid {
    List(Vec<f64>),
    Range(GridRange),
}

impl FrequencyGrid {
    pub fn points(&self) -> Result<Vec<f64>, CliError> {
        match self {
            FrequencyGrid::List(v) => Ok(v.clone()),
            FrequencyGrid::Range(r) => {
                if r.points < 2 || !(r.start.is_finite() && r.stop.is_finite() && r.stop > r.start) {
                    return Err(CliError::Config("grid range needs stop > start and at least 2 points".into()));
                }
                let h = (r.stop - r.start) / (r.points - 1) as f64;
                Ok((0..r.points).map(|k| r.start + k as f64 * h).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumBlock {
    pub grid: FrequencyGrid,
}

fn default_harmonics() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceBlock {
    pub statistic: LinearStatistic,
    pub horizons: Vec<f64>,
    #[serde(default)]
    pub options: VarianceOptions,
    /// Period of the statistic, for the periodic long-run limit.
    #[serde(default)]
    pub period: Option<f64>,
    #[serde(default = "default_harmonics")]
    pub harmonics: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingBlock {
    pub beta: f64,
    pub gamma: f64,
    pub lags: Vec<f64>,
    #[serde(default)]
    pub policy: CertificatePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltBlock {
    pub statistic: LinearStatistic,
    #[serde(flatten)]
    pub harness: HarnessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayConfig>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &Path) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{}: at `{path}`: {}", origin.display(), e.into_inner()))
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: ExperimentConfig = parse_json(&text, path)?;
        if let ModelSource::Path(rel) = &cfg.model {
            let model_path = path.parent().unwrap_or(Path::new(".")).join(rel);
            let text = fs::read_to_string(&model_path).map_err(io_err(&model_path))?;
            cfg.model = ModelSource::Inline(parse_json(&text, &model_path)?);
        }
        Ok(cfg)
    }

    pub fn model(&self) -> Result<&HawkesModel, CliError> {
        match &self.model {
            ModelSource::Inline(m) => Ok(m),
            ModelSource::Path(p) => Err(CliError::Config(format!("model path {} was not resolved", p.display()))),
        }
    }

    pub fn override_seed(&mut self, seed: u64) {
        if let Some(b) = &mut self.simulate {
            b.seed = seed;
        }
        if let Some(b) = &mut self.clt {
            b.harness.seed = seed;
        }
        if let Some(b) = &mut self.decay {
            b.seed = seed;
        }
    }

    /// Canonical serialization used for hashing and `resolved_config.json`.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

fn block<'a, T>(b: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    b.as_ref().ok_or_else(|| CliError::Config(format!("config has no `{name}` block")))
}

/// Artifact files of one run, written into the output directory.
struct Artifacts {
    dir: PathBuf,
    hash: String,
    command: &'static str,
    files: Vec<(String, String)>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    result: &'a T,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    file: &'a str,
    sha256: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    seed: Option<u64>,
    package: &'a str,
    version: &'a str,
    artifacts: Vec<ManifestEntry<'a>>,
}

impl Artifacts {
    fn new(dir: &Path, hash: String, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { dir: dir.to_path_buf(), hash, command, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.push((name.to_string(), hex::encode(Sha256::digest(bytes))));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, result: &T) -> Result<(), CliError> {
        let env = Envelope { command: self.command, config_hash: &self.hash, result };
        let mut text = serde_json::to_string_pretty(&env).expect("report serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn csv_comment(&self) -> String {
        format!("config_hash={}", self.hash)
    }

    fn finish(mut self, resolved: &ExperimentConfig, seed: Option<u64>) -> Result<(), CliError> {
        let mut text = resolved.canonical_json();
        text.push('\n');
        self.write("resolved_config.json", text.as_bytes())?;
        let manifest = Manifest {
            command: self.command,
            config_hash: &self.hash,
            seed,
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            artifacts: self.files.iter().map(|(f, h)| ManifestEntry { file: f, sha256: h }).collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(io_err(&path))
    }
}

/// What a finished command reports: a human summary and whether its checks
/// passed.
pub struct Outcome {
    pub summary: String,
    pub pass: bool,
}

fn primary_seed(cfg: &ExperimentConfig, command: Command) -> Option<u64> {
    match command {
        Command::Simulate => cfg.simulate.as_ref().map(|b| b.seed),
        Command::CltTest => cfg.clt.as_ref().map(|b| b.harness.seed),
        Command::Decay => cfg.decay.as_ref().map(|b| b.seed),
        _ => None,
    }
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    meta: &'a crate::simulate::EventMeta,
    counts: Vec<usize>,
    empirical_rates: Vec<f64>,
    mean_intensity: &'a [f64],
}

#[derive(Serialize)]
struct SpectrumSummary {
    dimension: usize,
    points: usize,
    gamma_zero: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct VarianceSummary {
    estimates: Vec<crate::spectrum::VarianceEstimate>,
    normalized: Vec<f64>,
    asymptotic_const: Option<f64>,
    asymptotic_periodic: Option<crate::spectrum::PeriodicVariance>,
}

/// Runs one command against a resolved config, writing artifacts into `out`.
pub fn execute(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let summary = model.validate()?;
    let mut art = Artifacts::new(out, cfg.hash(), command.name())?;
    let outcome = match command {
        Command::Validate => {
            art.json("validate.json", &summary)?;
            let mut s = format!("spectral radius {:.6}\nmean intensity", summary.spectral_radius);
            for m in &summary.mean_intensity {
                write!(s, " {m:.6}").expect("string write");
            }
            Outcome { summary: s, pass: true }
        }
        Command::Simulate => {
            let b = block(&cfg.simulate, "simulate")?;
            let mut run = RunConfig::new(b.horizon, b.seed);
            run.burn_in = b.burn_in;
            let log = simulate(model, &run, b.simulator)?;
            let mut csv = Vec::new();
            log.write_csv(&mut csv, Some(&art.csv_comment())).map_err(io_err(&out.join("events.csv")))?;
            art.write("events.csv", &csv)?;
            let counts: Vec<usize> = log.events.iter().map(Vec::len).collect();
            let rates = counts.iter().map(|&c| c as f64 / b.horizon).collect();
            art.json(
                "simulate.json",
                &SimulateSummary {
                    meta: &log.meta,
                    counts: counts.clone(),
                    empirical_rates: rates,
                    mean_intensity: &summary.mean_intensity,
                },
            )?;
            Outcome { summary: format!("{} events on [0, {}]", log.total(), b.horizon), pass: true }
        }
        Command::Spectrum => {
            let b = block(&cfg.spectrum, "spectrum")?;
            let grid = b.grid.points()?;
            if grid.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Config("frequency grid must be finite".into()));
            }
            let spec = Spectrum::new(model)?;
            let mut csv = Vec::new();
            spec.write_grid_csv(&mut csv, &grid, Some(&art.csv_comment()))
                .map_err(io_err(&out.join("spectrum.csv")))?;
            art.write("spectrum.csv", &csv)?;
            let g0 = spec.at_zero()?;
            let d = spec.dim();
            let gamma_zero = (0..d).map(|i| (0..d).map(|j| g0[(i, j)]).collect()).collect();
            art.json("spectrum.json", &SpectrumSummary { dimension: d, points: grid.len(), gamma_zero })?;
            Outcome { summary: format!("{} frequencies written", grid.len()), pass: true }
        }
        Command::Variance => {
            let b = block(&cfg.variance, "variance")?;
            let spec = Spectrum::new(model)?;
            let estimates = variance_curve(&spec, &b.statistic, &b.horizons, &b.options)?;
            let constants: Option<Vec<f64>> = b
                .statistic
                .components()
                .iter()
                .map(|f| match f {
                    TestFunction::Constant { k } => Some(*k),
                    _ => None,
                })
                .collect();
            let asymptotic_const = constants.map(|k| asymptotic_variance_const(&spec, &k)).transpose()?;
            let asymptotic_periodic =
                b.period.map(|p| asymptotic_variance_periodic(&spec, &b.statistic, p, b.harmonics)).transpose()?;
            let summary = VarianceSummary {
                normalized: estimates.iter().map(|e| e.value / e.horizon).collect(),
                estimates,
                asymptotic_const,
                asymptotic_periodic,
            };
            let mut s = String::from("horizon variance variance/T");
            for e in &summary.estimates {
                write!(s, "\n{} {:.10e} {:.10e}", e.horizon, e.value, e.value / e.horizon).expect("string write");
            }
            art.json("variance.json", &summary)?;
            Outcome { summary: s, pass: true }
        }
        Command::MixingBound => {
            let b = block(&cfg.mixing, "mixing")?;
            let report = mixing_bound(model, b.beta, b.gamma, &b.lags, &b.policy)?;
            art.json("mixing_bound.json", &report)?;
            let mut s = String::from("lag bound");
            for row in &report.table {
                write!(s, "\n{} {:.6e}", row.lag, row.bound).expect("string write");
            }
            Outcome { summary: s, pass: true }
        }
        Command::CltTest => {
            let b = block(&cfg.clt, "clt")?;
            let report = clt_harness(model, &b.statistic, &b.harness)?;
            let mut csv = Vec::new();
            report
                .write_replicates_csv(&mut csv, Some(&art.csv_comment()))
                .map_err(io_err(&out.join("clt_replicates.csv")))?;
            art.write("clt_replicates.csv", &csv)?;
            art.json("clt_report.json", &report)?;
            let s = format!(
                "KS D = {:.5} (critical {:.5}, p = {:.4}) {}\nmax |Cov(W(u), W(v)) - min(u, v)| = {:.5} (tolerance {:.5}) {}",
                report.ks.statistic,
                report.ks_critical,
                report.ks.p_value,
                if report.ks_pass { "PASS" } else { "FAIL" },
                report.max_covariance_deviation,
                report.covariance_tolerance,
                if report.covariance_pass { "PASS" } else { "FAIL" },
            );
            Outcome { summary: s, pass: report.pass }
        }
        Command::Decay => {
            let b = block(&cfg.decay, "decay")?;
            let report = mixing_decay_diagnostic(model, b)?;
            let mut csv = format!("# {}\nlag,gap,empirical,std_error,model,bound\n", art.csv_comment());
            for r in &report.rows {
                writeln!(csv, "{},{},{},{},{},{}", r.lag, r.gap, r.empirical, r.std_error, r.model, r.bound)
                    .expect("string write");
            }
            art.write("decay.csv", csv.as_bytes())?;
            art.json("decay.json", &report)?;
            let s = format!(
                "{} lags, empirical below bound at all lags: {}",
                report.rows.len(),
                report.all_below_bound
            );
            Outcome { summary: s, pass: report.all_below_bound }
        }
    };
    art.finish(cfg, primary_seed(cfg, command))?;
    Ok(outcome)
}

/// Full CLI entry point; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match run_inner(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.pass {
                EXIT_PASS
            } else {
                eprintln!("{}: check failed", cli.command.name());
                EXIT_FAIL
            }
        }
        Err(e) => {
            if e.is_hypothesis() {
                eprintln!("refused: {e}");
            } else {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}

fn run_inner(cli: &Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // A pool may already exist when called more than once in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let outcome = execute(cli.command, &cfg, &cli.out)?;
    std::io::stdout().flush().ok();
    Ok(outcome)
}
