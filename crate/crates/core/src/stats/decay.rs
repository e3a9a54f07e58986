//! Empirical covariance decay of window counts next to the spectral value and
//! the numeric mixing bound.

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::branching::{mixing_bound, CertificatePolicy};
use crate::model::HawkesModel;
use crate::simulate::{run_replicates, simulate, RunConfig, Simulator};
use crate::spectrum::{cov_counts, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// Component counted on `(0, w]`.
    pub i: usize,
    /// Component counted on `(τ, τ + w]`.
    pub j: usize,
    pub window: f64,
    pub lags: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub simulator: Simulator,
    #[serde(default)]
    pub burn_in: Option<f64>,
    #[serde(default)]
    pub policy: CertificatePolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub lag: f64,
    /// `τ - w`, the gap between the windows.
    pub gap: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub model: f64,
    pub bound: f64,
    pub below_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub i: usize,
    pub j: usize,
    pub window: f64,
    pub replicates: usize,
    pub seed: u64,
    pub beta: f64,
    pub gamma: f64,
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `log model` against `log τ` over rows with a
    /// positive model value.
    pub model_loglog_slope: Option<f64>,
    pub all_below_bound: bool,
}

pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn mixing_decay_diagnostic(model: &HawkesModel, cfg: &DecayConfig) -> Result<DecayReport, StatsError> {
    let d = model.dim();
    if cfg.i >= d || cfg.j >= d {
        return Err(StatsError::Domain(format!("component index out of range for dimension {d}")));
    }
    if !(cfg.window.is_finite() && cfg.window > 0.0) {
        return Err(StatsError::Domain(format!("window must be finite and > 0, got {}", cfg.window)));
    }
    if cfg.lags.is_empty() || cfg.lags.iter().any(|&t| !(t.is_finite() && t > cfg.window)) {
        return Err(StatsError::Domain(format!("lags must be finite and exceed the window {}", cfg.window)));
    }
    if cfg.replicates < 2 {
        return Err(StatsError::Domain("at least two replicates are needed".into()));
    }
    let gaps: Vec<f64> = cfg.lags.iter().map(|&t| t - cfg.window).collect();
    let bound = mixing_bound(model, cfg.beta, cfg.gamma, &gaps, &cfg.policy)?;
    let spec = Spectrum::new(model)?;
    let w = cfg.window;
    let horizon = cfg.lags.iter().copied().fold(0.0, f64::max) + w;

    let counts = run_replicates(cfg.replicates, |r| {
        let mut run = RunConfig::new(horizon, cfg.seed).stream(r);
        run.burn_in = cfg.burn_in;
        let log = simulate(model, &run, cfg.simulator)?;
        let mut v = Vec::with_capacity(cfg.lags.len() + 1);
        v.push(log.count(cfg.i, 0.0, w)? as f64);
        for &t in &cfg.lags {
            v.push(log.count(cfg.j, t, t + w)? as f64);
        }
        Ok::<_, StatsError>(v)
    })?;

    let n = cfg.replicates as f64;
    let mean_x = counts.iter().map(|c| c[0]).sum::<f64>() / n;
    let mut rows = Vec::with_capacity(cfg.lags.len());
    for (l, (&lag, &gap)) in cfg.lags.iter().zip(&gaps).enumerate() {
        let mean_y = counts.iter().map(|c| c[l + 1]).sum::<f64>() / n;
        let prod: Vec<f64> = counts.iter().map(|c| (c[0] - mean_x) * (c[l + 1] - mean_y)).collect();
        let empirical = prod.iter().sum::<f64>() / (n - 1.0);
        let spread = prod.iter().map(|p| (p - empirical).powi(2)).sum::<f64>() / (n - 1.0);
        let model_cov = cov_counts(&spec, cfg.i, cfg.j, (0.0, w), (lag, lag + w))?.value;
        let b = bound.pair_bound(cfg.i, cfg.j, gap);
        rows.push(DecayRow {
            lag,
            gap,
            empirical,
            std_error: (spread / n).sqrt(),
            model: model_cov,
            bound: b,
            below_bound: empirical <= b,
        });
    }
    let slope = loglog_slope(&rows.iter().map(|r| (r.lag, r.model)).collect::<Vec<_>>());
    Ok(DecayReport {
        i: cfg.i,
        j: cfg.j,
        window: w,
        replicates: cfg.replicates,
        seed: cfg.seed,
        beta: cfg.beta,
        gamma: cfg.gamma,
        all_below_bound: rows.iter().all(|r| r.below_bound),
        model_loglog_slope: slope,
        rows,
    })
}
