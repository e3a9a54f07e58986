//! Monte Carlo check of the central limit theorem for `S_T / σ_T` and of the
//! Brownian covariance of `W_T` on a grid.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::statistic::{path_sample, time_change, validate_grid, Centered};
use super::{kolmogorov_quantile, ks_one_sample, normal_cdf, KsResult, StatsError};
use crate::model::HawkesModel;
use crate::simulate::{run_replicates, simulate, RunConfig, Simulator};
use crate::spectrum::{LinearStatistic, Spectrum};

fn default_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

fn default_level() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub horizon: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Delay moment order and integrability exponent of the statistic.
    pub beta: f64,
    pub delta: f64,
    #[serde(default)]
    pub simulator: Simulator,
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    /// Time-change grid step; `T / 1000` when absent.
    #[serde(default)]
    pub grid_step: Option<f64>,
    /// KS test level.
    #[serde(default = "default_level")]
    pub level: f64,
}

impl HarnessConfig {
    pub fn new(horizon: f64, replicates: usize, seed: u64) -> Self {
        Self {
            horizon,
            replicates,
            seed,
            beta: 4.0,
            delta: 1.0,
            simulator: Simulator::Cluster,
            burn_in: None,
            grid: default_grid(),
            grid_step: None,
            level: default_level(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub statistic: f64,
    /// `W_T(u)` on the configured grid; the last entry is `S_T / σ_T`.
    pub path: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessReport {
    pub replicates: usize,
    pub horizon: f64,
    pub seed: u64,
    pub simulator: Simulator,
    pub beta: f64,
    pub delta: f64,
    /// `sup ∫ t^{1+β} h*_ij`.
    pub moment_bound: f64,
    pub sigma2: f64,
    pub ks: KsResult,
    /// Critical value of `D` at the configured level.
    pub ks_critical: f64,
    pub ks_pass: bool,
    pub mean_standardized: f64,
    pub mean_standardized_se: f64,
    pub empirical_variance: f64,
    pub empirical_variance_se: f64,
    pub grid: Vec<f64>,
    pub grid_times: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub max_covariance_deviation: f64,
    /// `4 / √R`.
    pub covariance_tolerance: f64,
    pub covariance_pass: bool,
    pub pass: bool,
    #[serde(skip)]
    pub records: Vec<ReplicateRecord>,
}

impl HarnessReport {
    /// One row per replicate: `replicate,statistic,w_<u>...`.
    pub fn write_replicates_csv<W: Write>(&self, mut w: W, comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        write!(w, "replicate,statistic")?;
        for u in &self.grid {
            write!(w, ",w_{u}")?;
        }
        writeln!(w)?;
        for r in &self.records {
            write!(w, "{},{}", r.replicate, r.statistic)?;
            for v in &r.path {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Refuses unless `(β - 1) δ > 2` and the delay moment of order `1 + β` is
/// finite. Boundedness of the test functions gives the integrability.
pub fn check_hypotheses(model: &HawkesModel, beta: f64, delta: f64) -> Result<f64, StatsError> {
    if !(beta.is_finite() && delta.is_finite() && delta > 0.0) {
        return Err(StatsError::Domain(format!("beta = {beta} and delta = {delta} must be finite, delta > 0")));
    }
    if (beta - 1.0) * delta <= 2.0 {
        return Err(StatsError::Hypothesis(format!(
            "moment condition (beta - 1) * delta > 2 fails: ({beta} - 1) * {delta} = {}",
            (beta - 1.0) * delta
        )));
    }
    model.validate()?;
    Ok(model.delay_moment_bound(beta)?)
}

pub fn clt_harness(model: &HawkesModel, stat: &LinearStatistic, cfg: &HarnessConfig) -> Result<HarnessReport, StatsError> {
    if cfg.replicates < 2 {
        return Err(StatsError::Domain("at least two replicates are needed".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(StatsError::Domain(format!("level must lie in (0, 1), got {}", cfg.level)));
    }
    validate_grid(&cfg.grid)?;
    let moment_bound = check_hypotheses(model, cfg.beta, cfg.delta)?;
    let spec = Spectrum::new(model)?;
    let tc = time_change(&spec, stat, cfg.horizon, cfg.grid_step)?;
    let centered = Centered::new(stat, spec.mean_intensity())?;

    let records = run_replicates(cfg.replicates, |r| {
        let mut run = RunConfig::new(cfg.horizon, cfg.seed).stream(r);
        run.burn_in = cfg.burn_in;
        let log = simulate(model, &run, cfg.simulator)?;
        let path = path_sample(&log, &centered, &tc, &cfg.grid)?;
        Ok::<_, StatsError>(ReplicateRecord {
            replicate: r,
            statistic: centered.at(&log, cfg.horizon)?,
            path: path.values,
        })
    })?;

    let n = cfg.replicates as f64;
    let sigma = tc.sigma2().sqrt();
    let mut z: Vec<f64> = records.iter().map(|r| r.statistic / sigma).collect();
    let mean_z = z.iter().sum::<f64>() / n;
    let var_z = z.iter().map(|x| (x - mean_z).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = z.iter().map(|x| (x - mean_z).powi(4)).sum::<f64>() / n;
    let ks = ks_one_sample(&mut z, normal_cdf);
    let ks_critical = kolmogorov_quantile(1.0 - cfg.level) / n.sqrt();

    let g = cfg.grid.len();
    let means: Vec<f64> = (0..g).map(|a| records.iter().map(|r| r.path[a]).sum::<f64>() / n).collect();
    let mut covariance = vec![vec![0.0; g]; g];
    let mut max_dev: f64 = 0.0;
    for a in 0..g {
        for b in 0..g {
            let c = records.iter().map(|r| (r.path[a] - means[a]) * (r.path[b] - means[b])).sum::<f64>() / (n - 1.0);
            covariance[a][b] = c;
            max_dev = max_dev.max((c - cfg.grid[a].min(cfg.grid[b])).abs());
        }
    }
    let covariance_tolerance = 4.0 / n.sqrt();
    let ks_pass = ks.statistic < ks_critical;
    let covariance_pass = max_dev < covariance_tolerance;
    Ok(HarnessReport {
        replicates: cfg.replicates,
        horizon: cfg.horizon,
        seed: cfg.seed,
        simulator: cfg.simulator,
        beta: cfg.beta,
        delta: cfg.delta,
        moment_bound,
        sigma2: tc.sigma2(),
        ks,
        ks_critical,
        ks_pass,
        mean_standardized: mean_z,
        mean_standardized_se: (var_z / n).sqrt(),
        empirical_variance: var_z * tc.sigma2(),
        empirical_variance_se: ((m4 - var_z * var_z).max(0.0) / n).sqrt() * tc.sigma2(),
        grid: cfg.grid.clone(),
        grid_times: cfg.grid.iter().map(|&u| tc.v(u)).collect(),
        covariance,
        max_covariance_deviation: max_dev,
        covariance_tolerance,
        covariance_pass,
        pass: ks_pass && covariance_pass,
        records,
    })
}
