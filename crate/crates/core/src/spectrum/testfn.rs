//! Test functions `f_i` of the linear statistic `Σ_i N_i(f_i)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{interval_transform, SpectrumError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant {
        k: f64,
    },
    /// `𝟙_(start, end]`.
    Indicator {
        start: f64,
        end: f64,
    },
    /// `k + height · 𝟙_(start, end]`.
    ConstPlusIndicator {
        k: f64,
        height: f64,
        start: f64,
        end: f64,
    },
    /// Equally spaced samples `h(n τ / N)` over one period, extended by
    /// trigonometric interpolation.
    Periodic {
        period: f64,
        samples: Vec<f64>,
    },
    /// `mean + Σ_k cos[k-1] cos(2πkt/τ) + sin[k-1] sin(2πkt/τ)`.
    Trigonometric {
        period: f64,
        mean: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

/// One test function per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinearStatistic(pub Vec<TestFunction>);

impl LinearStatistic {
    pub fn constant(k: &[f64]) -> Self {
        Self(k.iter().map(|&k| TestFunction::Constant { k }).collect())
    }

    pub fn components(&self) -> &[TestFunction] {
        &self.0
    }

    pub(crate) fn compile(&self, d: usize) -> Result<Vec<Compiled>, SpectrumError> {
        if self.0.len() != d {
            return Err(SpectrumError::Domain(format!(
                "statistic has {} test functions for a {d}-dimensional model",
                self.0.len()
            )));
        }
        self.0.iter().map(TestFunction::compile).collect()
    }
}

fn finite(name: &str, v: f64) -> Result<(), SpectrumError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(SpectrumError::Domain(format!("{name} must be finite, got {v}")))
    }
}

fn interval(start: f64, end: f64) -> Result<(), SpectrumError> {
    finite("start", start)?;
    finite("end", end)?;
    if start >= end {
        return Err(SpectrumError::Domain(format!("empty interval ({start}, {end}]")));
    }
    Ok(())
}

fn period_ok(period: f64) -> Result<(), SpectrumError> {
    if !(period.is_finite() && period > 0.0) {
        return Err(SpectrumError::Domain(format!("period must be finite and > 0, got {period}")));
    }
    Ok(())
}

impl TestFunction {
    pub(crate) fn compile(&self) -> Result<Compiled, SpectrumError> {
        let mut c = Compiled::default();
        match self {
            &TestFunction::Constant { k } => {
                finite("k", k)?;
                c.push_harmonic(0.0, Complex64::new(k, 0.0));
            }
            &TestFunction::Indicator { start, end } => {
                interval(start, end)?;
                c.windows.push((start, end, 1.0));
            }
            &TestFunction::ConstPlusIndicator { k, height, start, end } => {
                finite("k", k)?;
                finite("height", height)?;
                interval(start, end)?;
                c.push_harmonic(0.0, Complex64::new(k, 0.0));
                c.windows.push((start, end, height));
            }
            TestFunction::Periodic { period, samples } => {
                period_ok(*period)?;
                if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
                    return Err(SpectrumError::Domain("periodic samples must be non-empty and finite".into()));
                }
                c.period = Some(*period);
                let n = samples.len();
                let coef = |k: usize| -> Complex64 {
                    samples
                        .iter()
                        .enumerate()
                        .map(|(m, &v)| Complex64::from_polar(v, -2.0 * PI * (k * m % n) as f64 / n as f64))
                        .sum::<Complex64>()
                        / n as f64
                };
                c.push_harmonic(0.0, coef(0));
                for k in 1..=n / 2 {
                    let mut ck = coef(k);
                    if 2 * k == n {
                        ck = Complex64::new(0.5 * ck.re, 0.0);
                    }
                    let nu = k as f64 / period;
                    c.push_harmonic(nu, ck);
                    c.push_harmonic(-nu, ck.conj());
                }
            }
            TestFunction::Trigonometric { period, mean, cos, sin } => {
                period_ok(*period)?;
                finite("mean", *mean)?;
                if cos.iter().chain(sin).any(|v| !v.is_finite()) {
                    return Err(SpectrumError::Domain("trigonometric coefficients must be finite".into()));
                }
                c.period = Some(*period);
                c.push_harmonic(0.0, Complex64::new(*mean, 0.0));
                for k in 1..=cos.len().max(sin.len()) {
                    let a = cos.get(k - 1).copied().unwrap_or(0.0);
                    let b = sin.get(k - 1).copied().unwrap_or(0.0);
                    let nu = k as f64 / period;
                    c.push_harmonic(nu, Complex64::new(0.5 * a, -0.5 * b));
                    c.push_harmonic(-nu, Complex64::new(0.5 * a, 0.5 * b));
                }
            }
        }
        Ok(c)
    }
}

/// `f(t) = Re Σ c_h e^{2πi ν_h t} + Σ w 𝟙_(a, b](t)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Compiled {
    pub harmonics: Vec<(f64, Complex64)>,
    pub windows: Vec<(f64, f64, f64)>,
    /// Set for periodic forms.
    pub period: Option<f64>,
}

impl Compiled {
    fn push_harmonic(&mut self, nu: f64, c: Complex64) {
        if c != Complex64::new(0.0, 0.0) {
            self.harmonics.push((nu, c));
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut v = 0.0;
        for &(nu, c) in &self.harmonics {
            v += (c * Complex64::from_polar(1.0, 2.0 * PI * nu * t)).re;
        }
        for &(a, b, w) in &self.windows {
            if t > a && t <= b {
                v += w;
            }
        }
        v
    }

    fn clipped(&self, horizon: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.windows.iter().filter_map(move |&(a, b, w)| {
            let (lo, hi) = (a.max(0.0), b.min(horizon));
            (hi > lo).then_some((lo, hi, w))
        })
    }

    /// `F (f 𝟙_[0, T])(ξ)`.
    #[cfg(test)]
    pub fn fourier(&self, xi: f64, horizon: f64) -> Complex64 {
        let mut v = Complex64::new(0.0, 0.0);
        for &(nu, c) in &self.harmonics {
            v += c * interval_transform(xi - nu, 0.0, horizon);
        }
        for (a, b, w) in self.clipped(horizon) {
            v += interval_transform(xi, a, b) * w;
        }
        v
    }

    /// `∫_0^T f`.
    pub fn integral(&self, horizon: f64) -> f64 {
        let mut v = Complex64::new(0.0, 0.0);
        for &(nu, c) in &self.harmonics {
            v += c * interval_transform(-nu, 0.0, horizon);
        }
        let windows: f64 = self.clipped(horizon).map(|(a, b, w)| w * (b - a)).sum();
        v.re + windows
    }

    /// `∫_0^T f²`.
    pub fn integral_sq(&self, horizon: f64) -> f64 {
        let mut v = Complex64::new(0.0, 0.0);
        for &(nu1, c1) in &self.harmonics {
            for &(nu2, c2) in &self.harmonics {
                v += c1 * c2 * interval_transform(-(nu1 + nu2), 0.0, horizon);
            }
        }
        let windows: Vec<_> = self.clipped(horizon).collect();
        for &(a, b, w) in &windows {
            for &(nu, c) in &self.harmonics {
                v += c * interval_transform(-nu, a, b) * (2.0 * w);
            }
            for &(a2, b2, w2) in &windows {
                let overlap = (b.min(b2) - a.max(a2)).max(0.0);
                v += w * w2 * overlap;
            }
        }
        v.re
    }

    /// `V` with `|F(f 𝟙_[0,T])(ξ)| ≤ V / (2π|ξ|)` whenever `|ξ| ≥ 2 max|ν|`.
    pub fn decay_constant(&self) -> f64 {
        let h: f64 = self
            .harmonics
            .iter()
            .map(|&(nu, c)| if nu == 0.0 { 2.0 * c.norm() } else { 4.0 * c.norm() })
            .sum();
        let w: f64 = self.windows.iter().map(|w| 2.0 * w.2.abs()).sum();
        h + w
    }

    pub fn max_frequency(&self) -> f64 {
        self.harmonics.iter().map(|h| h.0.abs()).fold(0.0, f64::max)
    }
}
