//! Limits of `σ_T² / T` for asymptotically constant and asymptotically
//! periodic test functions.

use num_complex::Complex64;
use serde::Serialize;

use super::{LinearStatistic, Spectrum, SpectrumError};

/// `kᵀ γ(0) k`.
pub fn asymptotic_variance_const(spec: &Spectrum, k: &[f64]) -> Result<f64, SpectrumError> {
    let d = spec.dim();
    if k.len() != d {
        return Err(SpectrumError::Domain(format!("k has length {} for a {d}-dimensional model", k.len())));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(SpectrumError::Domain("k must be finite".into()));
    }
    let g = spec.at_zero()?;
    let mut v = 0.0;
    for i in 0..d {
        for j in 0..d {
            v += k[i] * g[(i, j)] * k[j];
        }
    }
    Ok(v.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicVariance {
    pub value: f64,
    /// Bound on the contribution of harmonics `|n| > K`.
    pub tail_estimate: f64,
    pub period: f64,
    pub harmonics: usize,
    /// Number of harmonics `|n| ≤ K` with a nonzero coefficient.
    pub terms: usize,
}

/// `Σ_{|n| ≤ K} c_nᴴ γ(n/τ) c_n`, where `c_{i,n}` is the coefficient of
/// `e^{2πint/τ}` in the periodic part of `f_i`. Windows are integrable
/// perturbations and do not affect the limit.
pub fn asymptotic_variance_periodic(
    spec: &Spectrum,
    stat: &LinearStatistic,
    period: f64,
    harmonics: usize,
) -> Result<PeriodicVariance, SpectrumError> {
    let d = spec.dim();
    if !(period.is_finite() && period > 0.0) {
        return Err(SpectrumError::Domain(format!("period must be finite and > 0, got {period}")));
    }
    if harmonics == 0 {
        return Err(SpectrumError::Domain("harmonic truncation must be at least 1".into()));
    }
    let comp = stat.compile(d)?;
    // Coefficients keyed by harmonic index n.
    let mut coef: std::collections::BTreeMap<i64, Vec<Complex64>> = Default::default();
    for (i, f) in comp.iter().enumerate() {
        for &(nu, c) in &f.harmonics {
            let x = nu * period;
            let n = x.round();
            if (x - n).abs() > 1e-9 * x.abs().max(1.0) {
                return Err(SpectrumError::Domain(format!(
                    "component {i} has frequency {nu}, not a multiple of 1/{period}"
                )));
            }
            coef.entry(n as i64).or_insert_with(|| vec![Complex64::new(0.0, 0.0); d])[i] += c;
        }
    }
    let mean: f64 = coef.get(&0).map(|c| c.iter().map(|z| z.re).sum()).unwrap_or(0.0);
    if mean == 0.0 {
        return Err(SpectrumError::Degenerate(
            "periodic parts have zero total mean over one period".into(),
        ));
    }
    let m = spec.mean_intensity();
    let (mut value, mut tail, mut terms) = (0.0, 0.0, 0);
    for (&n, c) in &coef {
        if n.unsigned_abs() as usize <= harmonics {
            let g = spec.density(n as f64 / period)?;
            let mut q = Complex64::new(0.0, 0.0);
            for i in 0..d {
                for j in 0..d {
                    q += c[i].conj() * g[(i, j)] * c[j];
                }
            }
            value += q.re;
            terms += 1;
        } else {
            let xi = (n as f64 / period).abs();
            for i in 0..d {
                for j in 0..d {
                    let diag = if i == j { m[i] } else { 0.0 };
                    tail += c[i].norm() * c[j].norm() * (diag + spec.b1()[(i, j)] / xi);
                }
            }
        }
    }
    Ok(PeriodicVariance { value: value.max(0.0), tail_estimate: tail, period, harmonics, terms })
}
