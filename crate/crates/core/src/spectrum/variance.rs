//! `σ_T² = Var Σ_i N_i(f_i 𝟙_[0,T])` by frequency-domain quadrature.
//!
//! By Parseval `σ_T² = Σ_i m_i ∫_0^T f_i² + ∫ aᴴ (γ - diag m) a dξ` with
//! `a_i = F(f_i 𝟙_[0,T])`. The first part is exact. The integrand of the
//! second is real and even in `ξ`, so it is integrated over `[0, Ξ]` and
//! doubled. Beyond `Ξ` it is bounded by `Σ V_i V_j b1_ij / (4π² ξ³)`, giving
//! a certified tail `tail_c / Ξ²`.
//!
//! Several horizons share every evaluation of `γ`: each horizon has its own
//! cutoff, and the panel width on a segment follows the longest horizon still
//! active there.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{interval_transform, Compiled, LinearStatistic, Spectrum, SpectrumError};
use crate::quadrature::gk15_rule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceOptions {
    /// Certified tail must stay below this share of the value.
    pub tail_rel_tol: f64,
    /// Kronrod-Gauss error estimate must stay below this share of the value.
    pub quad_rel_tol: f64,
}

impl Default for VarianceOptions {
    fn default() -> Self {
        Self { tail_rel_tol: 1e-6, quad_rel_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceEstimate {
    pub horizon: f64,
    pub value: f64,
    /// `Σ_i m_i ∫_0^T f_i²`.
    pub poisson_part: f64,
    pub spectral_part: f64,
    pub quadrature_error: f64,
    pub tail_bound: f64,
    /// Frequency cutoff `Ξ`.
    pub cutoff: f64,
}

const MAX_DOUBLINGS: u32 = 40;
const MAX_REFINE: u32 = 16;

pub fn variance_st(spec: &Spectrum, stat: &LinearStatistic, horizon: f64) -> Result<VarianceEstimate, SpectrumError> {
    let mut v = variance_curve(spec, stat, &[horizon], &VarianceOptions::default())?;
    Ok(v.remove(0))
}

pub fn variance_curve(
    spec: &Spectrum,
    stat: &LinearStatistic,
    horizons: &[f64],
    opts: &VarianceOptions,
) -> Result<Vec<VarianceEstimate>, SpectrumError> {
    let d = spec.dim();
    let comp = stat.compile(d)?;
    if let Some(&t) = horizons.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(SpectrumError::Domain(format!("horizon must be finite and > 0, got {t}")));
    }
    for (name, v) in [("tail_rel_tol", opts.tail_rel_tol), ("quad_rel_tol", opts.quad_rel_tol)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(SpectrumError::Domain(format!("{name} must be finite and > 0, got {v}")));
        }
    }
    let m = spec.mean_intensity();
    let poisson: Vec<f64> = horizons
        .iter()
        .map(|&t| comp.iter().zip(m).map(|(f, &mi)| mi * f.integral_sq(t)).sum())
        .collect();
    let decay: Vec<f64> = comp.iter().map(Compiled::decay_constant).collect();
    let mut tail_c = 0.0;
    for i in 0..d {
        for j in 0..d {
            tail_c += decay[i] * decay[j] * spec.b1()[(i, j)];
        }
    }
    tail_c /= 4.0 * PI * PI;
    let xi_min = comp.iter().map(Compiled::max_frequency).fold(0.0, f64::max) * 2.0;

    // A zero Poisson part means every f_i vanishes on [0, T] or N_i never fires.
    let mut cutoff: Vec<f64> = poisson
        .iter()
        .map(|&p| {
            if tail_c == 0.0 || p == 0.0 {
                0.0
            } else {
                xi_min.max((tail_c / (opts.tail_rel_tol * p)).sqrt())
            }
        })
        .collect();

    let mut refine = 1u32;
    let mut doublings = 0u32;
    loop {
        let sums = integrate(spec, &comp, horizons, &cutoff, refine)?;
        let mut out = Vec::with_capacity(horizons.len());
        let mut widen = false;
        let mut sharpen = false;
        for k in 0..horizons.len() {
            let spectral = 2.0 * sums[k].0;
            let error = 2.0 * sums[k].1;
            let value = poisson[k] + spectral;
            let tail = if cutoff[k] > 0.0 { tail_c / (cutoff[k] * cutoff[k]) } else { 0.0 };
            // Guard against values that cancel far below the Poisson scale.
            let scale = value.abs().max(1e-6 * poisson[k]);
            if tail > opts.tail_rel_tol * scale {
                cutoff[k] *= 2.0;
                widen = true;
            }
            if error > opts.quad_rel_tol * scale {
                sharpen = true;
            }
            out.push(VarianceEstimate {
                horizon: horizons[k],
                value,
                poisson_part: poisson[k],
                spectral_part: spectral,
                quadrature_error: error,
                tail_bound: tail,
                cutoff: cutoff[k],
            });
        }
        if !widen && !sharpen {
            return Ok(out);
        }
        if widen {
            doublings += 1;
        }
        if sharpen {
            refine *= 2;
        }
        if doublings > MAX_DOUBLINGS || refine > MAX_REFINE {
            let worst = out
                .iter()
                .max_by(|a, b| {
                    let ra = (a.quadrature_error + a.tail_bound) / a.value.abs().max(f64::MIN_POSITIVE);
                    let rb = (b.quadrature_error + b.tail_bound) / b.value.abs().max(f64::MIN_POSITIVE);
                    ra.total_cmp(&rb)
                })
                .expect("non-empty horizons");
            return Err(SpectrumError::Accuracy(format!(
                "variance at T = {}: value {:e}, quadrature error {:e}, tail bound {:e}, cutoff {} after {} cutoff doublings and {}x panel refinement",
                worst.horizon, worst.value, worst.quadrature_error, worst.tail_bound, worst.cutoff, doublings, refine
            )));
        }
    }
}

/// Below this `|ζ| t` the closed form `(1 - e^{-2πiζt}) / (2πiζ)` loses
/// digits and the sinc form is used instead.
const SMALL_PHASE: f64 = 1e-3;
/// Phase recurrences are restarted from an exact value this often.
const RESYNC: usize = 64;

/// Evaluates `a(ξ; t_k)` for many horizons from a single phase
/// `e^{-2πiξt_k}` per horizon.
struct Transforms<'a> {
    comp: &'a [Compiled],
    horizons: &'a [f64],
    /// `e^{2πiν t_k}` per component, harmonic and horizon.
    shifts: Vec<Vec<Vec<Complex64>>>,
    /// `Δ` when `t_k = (k + 1) Δ` up to rounding.
    step: Option<f64>,
}

/// Quantities shared by all horizons at one frequency.
struct Node {
    xi: f64,
    /// `1 / (2πi(ξ - ν))` per component and harmonic.
    inv: Vec<Vec<Complex64>>,
    /// Per component and window: `e^{-2πiξa}` and the unclipped transform.
    windows: Vec<Vec<(Complex64, Complex64)>>,
}

impl<'a> Transforms<'a> {
    fn new(comp: &'a [Compiled], horizons: &'a [f64]) -> Self {
        let shifts = comp
            .iter()
            .map(|f| {
                f.harmonics
                    .iter()
                    .map(|&(nu, _)| horizons.iter().map(|&t| Complex64::from_polar(1.0, 2.0 * PI * nu * t)).collect())
                    .collect()
            })
            .collect();
        let step = horizons[0];
        let uniform = horizons
            .iter()
            .enumerate()
            .all(|(k, &t)| (t - (k + 1) as f64 * step).abs() <= 8.0 * f64::EPSILON * t);
        Self { comp, horizons, shifts, step: uniform.then_some(step) }
    }

    fn node(&self, xi: f64) -> Node {
        let inv = self
            .comp
            .iter()
            .map(|f| f.harmonics.iter().map(|&(nu, _)| 1.0 / Complex64::new(0.0, 2.0 * PI * (xi - nu))).collect())
            .collect();
        let windows = self
            .comp
            .iter()
            .map(|f| {
                f.windows
                    .iter()
                    .map(|&(a, b, _)| {
                        let lo = a.max(0.0);
                        (Complex64::from_polar(1.0, -2.0 * PI * xi * lo), interval_transform(xi, lo, b))
                    })
                    .collect()
            })
            .collect();
        Node { xi, inv, windows }
    }

    /// Phases `e^{-2πiξt_k}` for `k ≤ last`, by recurrence on uniform grids.
    fn phases(&self, xi: f64, last: usize, out: &mut Vec<Complex64>) {
        out.clear();
        match self.step {
            Some(step) => {
                let z = Complex64::from_polar(1.0, -2.0 * PI * xi * step);
                let mut p = Complex64::new(1.0, 0.0);
                for k in 0..=last {
                    p = if k % RESYNC == 0 {
                        Complex64::from_polar(1.0, -2.0 * PI * xi * (k + 1) as f64 * step)
                    } else {
                        p * z
                    };
                    out.push(p);
                }
            }
            None => out.extend(self.horizons[..=last].iter().map(|&t| Complex64::from_polar(1.0, -2.0 * PI * xi * t))),
        }
    }

    fn eval(&self, node: &Node, k: usize, phase: Complex64, out: &mut [Complex64]) {
        let t = self.horizons[k];
        let xi = node.xi;
        for (c, f) in self.comp.iter().enumerate() {
            let mut v = Complex64::new(0.0, 0.0);
            for (h, &(nu, coef)) in f.harmonics.iter().enumerate() {
                let zeta = xi - nu;
                v += if zeta.abs() * t < SMALL_PHASE {
                    coef * interval_transform(zeta, 0.0, t)
                } else {
                    let e = if nu == 0.0 { phase } else { phase * self.shifts[c][h][k] };
                    coef * (Complex64::new(1.0, 0.0) - e) * node.inv[c][h]
                };
            }
            for (wi, &(a, b, w)) in f.windows.iter().enumerate() {
                let lo = a.max(0.0);
                if t <= lo || b <= lo {
                    continue;
                }
                let (start, full) = node.windows[c][wi];
                v += w * if t >= b {
                    full
                } else if xi.abs() * (t - lo) < SMALL_PHASE {
                    interval_transform(xi, lo, t)
                } else {
                    (start - phase) / Complex64::new(0.0, 2.0 * PI * xi)
                };
            }
            out[c] = v;
        }
    }
}

/// Per horizon, `(∫_0^Ξ_k Re aᴴ(γ - D)a, Σ |Kronrod - Gauss|)`.
fn integrate(
    spec: &Spectrum,
    comp: &[Compiled],
    horizons: &[f64],
    cutoff: &[f64],
    refine: u32,
) -> Result<Vec<(f64, f64)>, SpectrumError> {
    let d = spec.dim();
    let m = spec.mean_intensity();
    let n = horizons.len();
    let mut sums = vec![(0.0, 0.0); n];
    let transforms = Transforms::new(comp, horizons);

    let mut by_cutoff: Vec<usize> = (0..n).filter(|&k| cutoff[k] > 0.0).collect();
    by_cutoff.sort_by(|&a, &b| cutoff[b].total_cmp(&cutoff[a]));
    let mut breaks: Vec<f64> = by_cutoff.iter().map(|&k| cutoff[k]).collect();
    breaks.push(0.0);
    breaks.reverse();
    breaks.dedup();

    let mut a = vec![Complex64::new(0.0, 0.0); d];
    let mut phases = Vec::with_capacity(n);
    let mut panel_k = vec![0.0; n];
    let mut panel_g = vec![0.0; n];
    for seg in breaks.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let mut active: Vec<usize> = by_cutoff.iter().copied().filter(|&k| cutoff[k] >= hi).collect();
        active.sort_unstable();
        let last = *active.last().expect("segment has an active horizon");
        let t_req = active.iter().map(|&k| horizons[k]).fold(0.0, f64::max);
        let width = spec.panel_cap().min(1.0 / t_req) / refine as f64;
        let panels = ((hi - lo) / width).ceil().max(1.0) as usize;
        for p in 0..panels {
            let x0 = lo + (hi - lo) * p as f64 / panels as f64;
            let x1 = lo + (hi - lo) * (p + 1) as f64 / panels as f64;
            let rule = gk15_rule(x0, x1);
            for &k in &active {
                panel_k[k] = 0.0;
                panel_g[k] = 0.0;
            }
            for s in 0..15 {
                let xi = rule.nodes[s];
                let mut g = spec.density(xi)?;
                for i in 0..d {
                    g[(i, i)] -= m[i];
                }
                let node = transforms.node(xi);
                transforms.phases(xi, last, &mut phases);
                for &k in &active {
                    transforms.eval(&node, k, phases[k], &mut a);
                    let mut q = 0.0;
                    for i in 0..d {
                        let mut row = Complex64::new(0.0, 0.0);
                        for j in 0..d {
                            row += g[(i, j)] * a[j];
                        }
                        q += (a[i].conj() * row).re;
                    }
                    panel_k[k] += rule.kronrod[s] * q;
                    panel_g[k] += rule.gauss[s] * q;
                }
            }
            for &k in &active {
                sums[k].0 += panel_k[k];
                sums[k].1 += (panel_k[k] - panel_g[k]).abs();
            }
        }
    }
    Ok(sums)
}
