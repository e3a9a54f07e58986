//! `Cov(N_i(A), N_j(B))` for bounded intervals.
//!
//! Writing `γ = D + H̃ᵀD + D conj(H̃) + R`, the first three terms integrate in
//! closed form against `conj(F 𝟙_A) F 𝟙_B`: the Poisson overlap and the
//! direct parent-child terms through second antiderivatives of the kernels.
//! The remainder `R = O(ξ⁻²)` is integrated numerically with the certified
//! tail `2 V_A V_B b2 / (4π² · 3Ξ³)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::{interval_transform, Spectrum, SpectrumError};
use crate::kernel::Kernel;
use crate::quadrature::Adaptive;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceEstimate {
    pub value: f64,
    /// Poisson overlap plus the direct parent-child terms.
    pub first_order: f64,
    pub remainder: f64,
    pub quadrature_error: f64,
    pub tail_bound: f64,
    pub cutoff: f64,
}

const MAX_DOUBLINGS: u32 = 30;

/// `∫_A ∫_B h(t - s) dt ds` for `A = (a1, a2]`, `B = (b1, b2]`.
fn rectangle(h: &Kernel, a: (f64, f64), b: (f64, f64)) -> f64 {
    let k = |x: f64| h.second_antiderivative(x);
    k(b.1 - a.0) - k(b.0 - a.0) - k(b.1 - a.1) + k(b.0 - a.1)
}

fn check_interval(name: &str, x: (f64, f64)) -> Result<(), SpectrumError> {
    if !(x.0.is_finite() && x.1.is_finite() && x.0 <= x.1) {
        return Err(SpectrumError::Domain(format!("{name} = ({}, {}] is not a bounded interval", x.0, x.1)));
    }
    Ok(())
}

pub fn cov_counts(
    spec: &Spectrum,
    i: usize,
    j: usize,
    a: (f64, f64),
    b: (f64, f64),
) -> Result<CovarianceEstimate, SpectrumError> {
    let d = spec.dim();
    if i >= d || j >= d {
        return Err(SpectrumError::Domain(format!("component index out of range for dimension {d}")));
    }
    check_interval("A", a)?;
    check_interval("B", b)?;
    let m = spec.mean_intensity();
    let overlap = if i == j { m[i] * (a.1.min(b.1) - a.0.max(b.0)).max(0.0) } else { 0.0 };
    let first_order =
        overlap + m[i] * rectangle(spec.kernel(i, j), a, b) + m[j] * rectangle(spec.kernel(j, i), b, a);

    let scale = (m[i] * m[j] * (a.1 - a.0) * (b.1 - b.0)).sqrt();
    let b2 = spec.b2()[(i, j)];
    if scale == 0.0 || b2 == 0.0 {
        return Ok(CovarianceEstimate {
            value: first_order,
            first_order,
            remainder: 0.0,
            quadrature_error: 0.0,
            tail_bound: 0.0,
            cutoff: 0.0,
        });
    }
    // |F 𝟙_A(ξ)| ≤ 2 / (2π|ξ|) and |R_ij| ≤ b2 / ξ².
    let tail_c = 2.0 * 4.0 * b2 / (4.0 * PI * PI * 3.0);
    let ends = [a.0, a.1, b.0, b.1];
    let span = ends
        .iter()
        .flat_map(|x| ends.iter().map(move |y| (x - y).abs()))
        .fold(0.0, f64::max);
    let width = spec.panel_cap().min(0.5 / span);
    let tol_for = |value: f64| (1e-6 * value.abs()).max(1e-10 * scale);

    let mut cutoff = (tail_c / (1e-6 * first_order.abs().max(scale))).cbrt();
    let mut doublings = 0;
    let integrand = |xi: f64| -> Result<f64, SpectrumError> {
        let (g, h) = spec.density_and_transfer(xi)?;
        let r = g[(i, j)]
            - if i == j { Complex64::new(m[i], 0.0) } else { Complex64::new(0.0, 0.0) }
            - h[(j, i)] * m[j]
            - h[(i, j)].conj() * m[i];
        let fa = interval_transform(xi, a.0, a.1);
        let fb = interval_transform(xi, b.0, b.1);
        Ok((fa.conj() * fb * r).re)
    };
    loop {
        let panels = (cutoff / width).ceil().max(1.0) as usize;
        let mut failure = None;
        let est = Adaptive::with_tolerances(0.1 * tol_for(first_order), 1e-9)
            .initial_panels(panels)
            .integrate(
                |xi| match integrand(xi) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                0.0,
                cutoff,
            )?;
        if let Some(e) = failure {
            return Err(e);
        }
        let remainder = 2.0 * est.value;
        let value = first_order + remainder;
        let tail = tail_c / cutoff.powi(3);
        if tail <= tol_for(value) {
            return Ok(CovarianceEstimate {
                value,
                first_order,
                remainder,
                quadrature_error: 2.0 * est.error,
                tail_bound: tail,
                cutoff,
            });
        }
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(SpectrumError::Accuracy(format!(
                "covariance of components {i}, {j}: value {value:e}, tail bound {tail:e} at cutoff {cutoff}"
            )));
        }
        cutoff *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HawkesModel;
    use crate::simulate::{run_replicates, simulate, RunConfig, Simulator};
    use crate::spectrum::tests::{exp1, exp2, mixed2};
    use crate::spectrum::{variance_st, LinearStatistic, TestFunction};

    #[test]
    fn poisson_cases() {
        let model = HawkesModel::new(vec![1.5, 0.5], vec![vec![Kernel::Zero; 2]; 2]).unwrap();
        let s = Spectrum::new(&model).unwrap();
        assert_eq!(cov_counts(&s, 0, 0, (0.0, 1.0), (2.0, 3.0)).unwrap().value, 0.0);
        assert_eq!(cov_counts(&s, 0, 0, (0.0, 1.0), (0.0, 1.0)).unwrap().value, 1.5);
        assert_eq!(cov_counts(&s, 1, 1, (0.0, 1.0), (0.5, 3.0)).unwrap().value, 0.25);
        assert_eq!(cov_counts(&s, 0, 1, (0.0, 1.0), (0.0, 1.0)).unwrap().value, 0.0);
    }

    #[test]
    fn variance_of_a_count_matches_variance_engine() {
        for model in [exp1(), exp2(), mixed2()] {
            let s = Spectrum::new(&model).unwrap();
            let d = s.dim();
            for i in 0..d {
                let mut fs = vec![TestFunction::Constant { k: 0.0 }; d];
                fs[i] = TestFunction::Indicator { start: 1.0, end: 3.5 };
                let v = variance_st(&s, &LinearStatistic(fs), 5.0).unwrap().value;
                let c = cov_counts(&s, i, i, (1.0, 3.5), (1.0, 3.5)).unwrap();
                assert!((c.value - v).abs() < 1e-6 * v, "{} vs {v}", c.value);
            }
        }
    }

    #[test]
    fn sum_of_components_matches_variance_engine() {
        let s = Spectrum::new(&mixed2()).unwrap();
        let (a, b) = ((0.0, 2.0), (1.0, 4.0));
        let stat = LinearStatistic(vec![
            TestFunction::Indicator { start: a.0, end: a.1 },
            TestFunction::Indicator { start: b.0, end: b.1 },
        ]);
        let v = variance_st(&s, &stat, 5.0).unwrap().value;
        let c = |i, j, x, y| cov_counts(&s, i, j, x, y).unwrap().value;
        let total = c(0, 0, a, a) + c(1, 1, b, b) + c(0, 1, a, b) + c(1, 0, b, a);
        assert!((total - v).abs() < 1e-6 * v, "{total} vs {v}");
        assert!((c(0, 1, a, b) - c(1, 0, b, a)).abs() < 1e-9);
    }

    #[test]
    fn one_way_excitation_is_directional() {
        let model = HawkesModel::new(
            vec![1.0, 1.0],
            vec![vec![Kernel::Zero, Kernel::exponential(0.5, 1.0)], vec![Kernel::Zero, Kernel::Zero]],
        )
        .unwrap();
        let s = Spectrum::new(&model).unwrap();
        let forward = cov_counts(&s, 0, 1, (0.0, 1.0), (1.0, 2.0)).unwrap().value;
        let backward = cov_counts(&s, 0, 1, (1.0, 2.0), (0.0, 1.0)).unwrap().value;
        assert!(forward > 0.1);
        assert!(backward.abs() < 1e-9, "{backward}");
    }

    #[test]
    fn decays_and_matches_simulation() {
        let model = exp1();
        let s = Spectrum::new(&model).unwrap();
        let lags = [0.5, 1.0, 2.0, 4.0];
        let exact: Vec<f64> =
            lags.iter().map(|&t| cov_counts(&s, 0, 0, (0.0, 1.0), (t, t + 1.0)).unwrap().value).collect();
        assert!(exact.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0), "{exact:?}");

        let reps = 20_000;
        let counts: Vec<Vec<f64>> = run_replicates(reps, |r| {
            let cfg = RunConfig::new(6.0, 17).stream(r);
            let log = simulate(&model, &cfg, Simulator::Cluster)?;
            let mut v = vec![log.count(0, 0.0, 1.0)? as f64];
            for &t in &lags {
                v.push(log.count(0, t, t + 1.0)? as f64);
            }
            Ok::<_, crate::simulate::SimError>(v)
        })
        .unwrap();
        let n = reps as f64;
        for (l, &want) in exact.iter().enumerate() {
            let x: Vec<f64> = counts.iter().map(|c| c[0]).collect();
            let y: Vec<f64> = counts.iter().map(|c| c[l + 1]).collect();
            let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
            let prod: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).collect();
            let cov = prod.iter().sum::<f64>() / (n - 1.0);
            let var = prod.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            assert!((cov - want).abs() < 3.0 * se, "lag {}: {cov} vs {want} (se {se})", lags[l]);
        }
    }
}
