//! Centered linear statistics `S_T`, the variance time change `v_T` and the
//! rescaled paths `W_T(u) = S_{v_T(u)} / σ_T`.

use serde::Serialize;

use super::StatsError;
use crate::model::HawkesModel;
use crate::simulate::EventLog;
use crate::spectrum::{variance_curve, Compiled, LinearStatistic, Spectrum, VarianceEstimate, VarianceOptions};

/// `S_t = Σ_i [Σ_{events s ≤ t of i} f_i(s) - m_i ∫_0^t f_i]` for a fixed
/// statistic and mean intensity.
#[derive(Debug, Clone)]
pub struct Centered {
    comp: Vec<Compiled>,
    mean: Vec<f64>,
}

impl Centered {
    pub fn new(stat: &LinearStatistic, mean: &[f64]) -> Result<Self, StatsError> {
        let comp = stat.compile(mean.len())?;
        Ok(Self { comp, mean: mean.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, log: &EventLog, t: f64) -> Result<(), StatsError> {
        if log.dim() != self.dim() {
            return Err(StatsError::Domain(format!(
                "log has {} components, statistic has {}",
                log.dim(),
                self.dim()
            )));
        }
        if !(t >= 0.0 && t <= log.horizon()) {
            return Err(StatsError::Domain(format!("time {t} outside the log window [0, {}]", log.horizon())));
        }
        Ok(())
    }

    pub fn at(&self, log: &EventLog, t: f64) -> Result<f64, StatsError> {
        Ok(self.path(log, &[t])?[0])
    }

    /// `S_t` at each of the nondecreasing `times` in one pass over the log.
    pub fn path(&self, log: &EventLog, times: &[f64]) -> Result<Vec<f64>, StatsError> {
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(StatsError::Domain("path times must be nondecreasing".into()));
        }
        for &t in times {
            self.check(log, t)?;
        }
        let mut out: Vec<f64> = times
            .iter()
            .map(|&t| -self.comp.iter().zip(&self.mean).map(|(f, &m)| m * f.integral(t)).sum::<f64>())
            .collect();
        for (f, events) in self.comp.iter().zip(&log.events) {
            let mut acc = 0.0;
            let mut next = 0;
            for (k, &t) in times.iter().enumerate() {
                while next < events.len() && events[next] <= t {
                    acc += f.eval(events[next]);
                    next += 1;
                }
                out[k] += acc;
            }
        }
        Ok(out)
    }
}

/// `S_T` for one log.
pub fn statistic_st(log: &EventLog, model: &HawkesModel, stat: &LinearStatistic, horizon: f64) -> Result<f64, StatsError> {
    let mean = model.mean_intensity()?;
    Centered::new(stat, &mean)?.at(log, horizon)
}

/// `σ_t²` on the grid `t_k = k · step`, `k = 1..n`, with `t_n = T`.
#[derive(Debug, Clone, Serialize)]
pub struct TimeChange {
    pub horizon: f64,
    pub grid_step: f64,
    pub times: Vec<f64>,
    pub variances: Vec<f64>,
    #[serde(skip)]
    pub estimates: Vec<VarianceEstimate>,
}

impl TimeChange {
    pub fn sigma2(&self) -> f64 {
        *self.variances.last().expect("non-empty grid")
    }

    /// `v_T(u)`: the first grid time with `σ_t² / σ_T² ≥ u`.
    pub fn v(&self, u: f64) -> f64 {
        let total = self.sigma2();
        self.times
            .iter()
            .zip(&self.variances)
            .find(|(_, &s)| s / total >= u)
            .map(|(&t, _)| t)
            .unwrap_or(self.horizon)
    }
}

/// Default number of grid steps per horizon.
pub const TIME_CHANGE_STEPS: usize = 1000;

pub fn time_change(
    spec: &Spectrum,
    stat: &LinearStatistic,
    horizon: f64,
    grid_step: Option<f64>,
) -> Result<TimeChange, StatsError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(StatsError::Domain(format!("horizon must be finite and > 0, got {horizon}")));
    }
    let step = grid_step.unwrap_or(horizon / TIME_CHANGE_STEPS as f64);
    if !(step.is_finite() && step > 0.0 && step <= horizon) {
        return Err(StatsError::Domain(format!("grid step must lie in (0, {horizon}], got {step}")));
    }
    let n = ((horizon / step).round() as usize).max(1);
    let mut times: Vec<f64> = (1..n).map(|k| k as f64 * step).filter(|&t| t < horizon).collect();
    times.push(horizon);
    let estimates = variance_curve(spec, stat, &times, &VarianceOptions::default())?;
    let variances: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    for k in 1..estimates.len() {
        let (a, b) = (&estimates[k - 1], &estimates[k]);
        let slack = 10.0 * (a.quadrature_error + b.quadrature_error + a.tail_bound + b.tail_bound) + 1e-9 * a.value.abs();
        if b.value < a.value - slack {
            return Err(StatsError::NonMonotone { t: b.horizon, previous: a.value, value: b.value });
        }
    }
    let total = *variances.last().expect("non-empty grid");
    if !(total > 0.0) {
        return Err(StatsError::Degenerate(format!("σ_T² = {total} at T = {horizon}")));
    }
    Ok(TimeChange { horizon, grid_step: step, times, variances, estimates })
}

/// `W_T(u)` on a grid of `u` values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub grid: Vec<f64>,
    /// `v_T(u)` for each grid point.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub sigma: f64,
}

pub fn validate_grid(grid: &[f64]) -> Result<(), StatsError> {
    if grid.is_empty() || grid.iter().any(|&u| !(u > 0.0 && u <= 1.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StatsError::Domain("path grid must be strictly increasing in (0, 1]".into()));
    }
    Ok(())
}

pub fn path_sample(log: &EventLog, centered: &Centered, tc: &TimeChange, grid: &[f64]) -> Result<PathSample, StatsError> {
    validate_grid(grid)?;
    let times: Vec<f64> = grid.iter().map(|&u| tc.v(u)).collect();
    let sigma = tc.sigma2().sqrt();
    let values = centered.path(log, &times)?.into_iter().map(|s| s / sigma).collect();
    Ok(PathSample { grid: grid.to_vec(), times, values, sigma })
}
