//! Parametric reproduction kernels.
//!
//! A kernel `h` gives the rate at which an event of one component spawns
//! events of another, as a function of the delay since the parent. Every
//! family here has an exact L¹ mass (the `alpha` parameter), a closed-form
//! CDF for the normalised delay density `h / alpha`, and is non-increasing on
//! `[0, ∞)`, which the thinning simulator relies on.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{Adaptive, QuadError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel evaluated at negative time {0}")]
    NegativeTime(f64),
    #[error("non-finite argument {0}")]
    NonFinite(f64),
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
    #[error("moment of order {order} is infinite for a power-law kernel with tail index {theta}")]
    InfiniteMoment { order: f64, theta: f64 },
    #[error("kernel has zero mass: {0}")]
    ZeroMass(&'static str),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// One reproduction function `h_ij`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `h(t) = alpha * beta * exp(-beta t)`.
    Exponential { alpha: f64, beta: f64 },
    /// `h(t) = alpha * theta * c^theta / (c + t)^(1 + theta)`.
    PowerLaw {
        alpha: f64,
        #[serde(alias = "c")]
        scale: f64,
        theta: f64,
    },
    /// `h(t) = alpha / a` on `[0, a]`.
    Uniform {
        alpha: f64,
        #[serde(alias = "a")]
        support: f64,
    },
    Zero,
}

fn positive(name: &str, v: f64) -> Result<(), KernelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<(), KernelError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl Kernel {
    pub fn exponential(alpha: f64, beta: f64) -> Self {
        Kernel::Exponential { alpha, beta }
    }

    pub fn power_law(alpha: f64, scale: f64, theta: f64) -> Self {
        Kernel::PowerLaw { alpha, scale, theta }
    }

    pub fn uniform(alpha: f64, support: f64) -> Self {
        Kernel::Uniform { alpha, support }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        match *self {
            Kernel::Exponential { alpha, beta } => {
                nonnegative("alpha", alpha)?;
                positive("beta", beta)
            }
            Kernel::PowerLaw { alpha, scale, theta } => {
                nonnegative("alpha", alpha)?;
                positive("scale", scale)?;
                if !(theta.is_finite() && theta > 1.0) {
                    return Err(KernelError::InvalidParameter(format!(
                        "theta must be finite and > 1, got {theta}"
                    )));
                }
                Ok(())
            }
            Kernel::Uniform { alpha, support } => {
                nonnegative("alpha", alpha)?;
                positive("support", support)
            }
            Kernel::Zero => Ok(()),
        }
    }

    /// L¹ norm, which is the mass parameter for every family.
    pub fn l1_norm(&self) -> f64 {
        match *self {
            Kernel::Exponential { alpha, .. }
            | Kernel::PowerLaw { alpha, .. }
            | Kernel::Uniform { alpha, .. } => alpha,
            Kernel::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.l1_norm() == 0.0
    }

    pub fn evaluate(&self, t: f64) -> Result<f64, KernelError> {
        if !t.is_finite() {
            return Err(KernelError::NonFinite(t));
        }
        if t < 0.0 {
            return Err(KernelError::NegativeTime(t));
        }
        Ok(self.density_unchecked(t))
    }

    /// `h(t)` for `t >= 0` without argument checks; zero for `t < 0`.
    pub(crate) fn density_unchecked(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            Kernel::Exponential { alpha, beta } => alpha * beta * (-beta * t).exp(),
            Kernel::PowerLaw { alpha, scale, theta } => {
                alpha * theta / scale * (scale / (scale + t)).powf(1.0 + theta)
            }
            Kernel::Uniform { alpha, support } => {
                if t <= support {
                    alpha / support
                } else {
                    0.0
                }
            }
            Kernel::Zero => 0.0,
        }
    }

    /// `h(0)`, the supremum of the kernel.
    pub fn peak(&self) -> f64 {
        self.density_unchecked(0.0)
    }

    /// CDF of the normalised delay density `h / alpha`.
    pub fn delay_cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Kernel::Exponential { beta, .. } => -(-beta * t).exp_m1(),
            Kernel::PowerLaw { scale, theta, .. } => 1.0 - (scale / (scale + t)).powf(theta),
            Kernel::Uniform { support, .. } => (t / support).min(1.0),
            Kernel::Zero => 0.0,
        }
    }

    /// Mass beyond `t`: `∫_t^∞ h`.
    pub fn tail_mass(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match *self {
            Kernel::Exponential { alpha, beta } => alpha * (-beta * t).exp(),
            Kernel::PowerLaw { alpha, scale, theta } => alpha * (scale / (scale + t)).powf(theta),
            Kernel::Uniform { alpha, support } => alpha * (1.0 - t / support).max(0.0),
            Kernel::Zero => 0.0,
        }
    }

    /// `∫_0^x (x - s) h(s) ds` for `x >= 0` and zero for `x <= 0`: the second
    /// antiderivative of `h`, used for exact double integrals of `h(v - u)` over
    /// rectangles.
    pub fn second_antiderivative(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Kernel::Exponential { alpha, beta } => alpha * (beta * x + (-beta * x).exp_m1()) / beta,
            Kernel::PowerLaw { alpha, scale, theta } => {
                let decay = (scale / (scale + x)).powf(theta - 1.0);
                alpha * (x - scale / (theta - 1.0) * (1.0 - decay))
            }
            Kernel::Uniform { alpha, support } => {
                if x <= support {
                    alpha * x * x / (2.0 * support)
                } else {
                    alpha * (x - 0.5 * support)
                }
            }
            Kernel::Zero => 0.0,
        }
    }

    /// Moment `∫ t^p h*(t) dt` of the normalised delay density.
    pub fn moment(&self, p: f64) -> Result<f64, KernelError> {
        if !(p.is_finite() && p > 0.0) {
            return Err(KernelError::InvalidParameter(format!("moment order must be > 0, got {p}")));
        }
        if self.is_zero() {
            return Err(KernelError::ZeroMass("moment of a zero kernel is undefined"));
        }
        match *self {
            Kernel::Exponential { beta, .. } => Ok(libm::tgamma(p + 1.0) / beta.powf(p)),
            Kernel::Uniform { support, .. } => Ok(support.powf(p) / (p + 1.0)),
            Kernel::PowerLaw { scale, theta, .. } => {
                if p >= theta {
                    return Err(KernelError::InfiniteMoment { order: p, theta });
                }
                // With x = c / (c + t) and then x = y^(1/(theta - p)) the moment
                // becomes theta c^p / (theta - p) ∫_0^1 (1 - y^(1/(theta-p)))^p dy,
                // whose integrand is bounded on [0, 1].
                let gap = theta - p;
                let inv_gap = 1.0 / gap;
                let est = Adaptive::with_tolerances(1e-14, 1e-12)
                    .integrate(|y: f64| (1.0 - y.powf(inv_gap)).max(0.0).powf(p), 0.0, 1.0)?;
                Ok(theta * scale.powf(p) / gap * est.value)
            }
            Kernel::Zero => unreachable!(),
        }
    }

    /// Fourier transform `∫ e^{-2πiξt} h(t) dt`, `xi` in cycles per unit time.
    pub fn fourier(&self, xi: f64) -> Result<Complex64, KernelError> {
        if !xi.is_finite() {
            return Err(KernelError::NonFinite(xi));
        }
        let omega = 2.0 * PI * xi;
        Ok(match *self {
            Kernel::Exponential { alpha, beta } => {
                Complex64::new(alpha * beta, 0.0) / Complex64::new(beta, omega)
            }
            Kernel::Uniform { alpha, support } => {
                let half = 0.5 * omega * support;
                Complex64::from_polar(alpha * sinc(half), -half)
            }
            Kernel::PowerLaw { alpha, scale, theta } => {
                if xi == 0.0 {
                    Complex64::new(alpha, 0.0)
                } else {
                    let v = power_law_fourier(theta, omega.abs() * scale)? * alpha;
                    if xi > 0.0 {
                        v
                    } else {
                        v.conj()
                    }
                }
            }
            Kernel::Zero => Complex64::new(0.0, 0.0),
        })
    }

    /// Constant `κ` with `|F h(ξ)| ≤ κ / |ξ|` for every `ξ ≠ 0`.
    pub fn fourier_decay_constant(&self) -> f64 {
        match *self {
            Kernel::Exponential { alpha, beta } => alpha * beta / (2.0 * PI),
            Kernel::Uniform { alpha, support } => alpha / (PI * support),
            Kernel::PowerLaw { .. } => self.peak() / PI,
            Kernel::Zero => 0.0,
        }
    }

    /// Frequency below which the transform varies appreciably.
    pub(crate) fn frequency_scale(&self) -> f64 {
        match *self {
            Kernel::Exponential { beta, .. } => beta / (2.0 * PI),
            Kernel::Uniform { support, .. } => 1.0 / support,
            Kernel::PowerLaw { scale, .. } => 1.0 / (2.0 * PI * scale),
            Kernel::Zero => f64::INFINITY,
        }
    }

    /// Inverse-CDF draw of one parent-to-child delay from `uniform ∈ (0, 1]`.
    pub fn delay_from_uniform(&self, uniform: f64) -> Result<f64, KernelError> {
        if !(uniform > 0.0 && uniform <= 1.0) {
            return Err(KernelError::InvalidParameter(format!(
                "uniform variate must lie in (0, 1], got {uniform}"
            )));
        }
        if self.is_zero() {
            return Err(KernelError::ZeroMass("a zero kernel has no offspring delays"));
        }
        Ok(match *self {
            Kernel::Exponential { beta, .. } => -uniform.ln() / beta,
            Kernel::Uniform { support, .. } => support * uniform,
            Kernel::PowerLaw { scale, theta, .. } => scale * (uniform.powf(-1.0 / theta) - 1.0),
            Kernel::Zero => unreachable!(),
        })
    }

    pub fn sample_inter_arrival<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64, KernelError> {
        // 1 - U with U in [0, 1) lies in (0, 1].
        let u = 1.0 - rng.random::<f64>();
        self.delay_from_uniform(u)
    }
}

pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Normalised power-law transform at angular frequency `kappa = ω c > 0`.
///
/// Uses the continued fraction where it converges quickly. Otherwise the
/// real-line integral is rotated onto the ray `s = c - i y`, where the
/// oscillation turns into exponential decay:
/// `F = -i θ ∫_0^∞ e^{-κ x} (1 - i x)^{-1-θ} dx`.
fn power_law_fourier(theta: f64, kappa: f64) -> Result<Complex64, KernelError> {
    if let Some(v) = power_law_fourier_cf(theta, kappa) {
        return Ok(v);
    }
    let scale = 1.0 / kappa.max(1.0);
    let expo = 1.0 + theta;
    let est = Adaptive::with_tolerances(1e-15, 1e-12).integrate_to_infinity(
        |s: f64| {
            let x = scale * s;
            let modulus = (1.0 + x * x).powf(-0.5 * expo) * (-kappa * x).exp();
            Complex64::from_polar(modulus * scale, expo * x.atan())
        },
        0.0,
    )?;
    Ok(Complex64::new(0.0, -theta) * est.value)
}

/// `θ e^{iκ} E_{θ+1}(iκ)` by the modified-Lentz continued fraction for the
/// generalized exponential integral. Convergence slows as `κ → 0`, where the
/// contour quadrature takes over.
fn power_law_fourier_cf(theta: f64, kappa: f64) -> Option<Complex64> {
    if kappa < 0.25 {
        return None;
    }
    let n = theta + 1.0;
    let tiny = 1e-300;
    let mut b = Complex64::new(n, kappa);
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 1..5000 {
        let fi = i as f64;
        let an = -fi * (n - 1.0 + fi);
        b += 2.0;
        d = (d * an + b).inv();
        c = b + c.inv() * an;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            return Some(h * theta);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn families() -> Vec<Kernel> {
        vec![
            Kernel::exponential(0.5, 2.0),
            Kernel::power_law(0.4, 1.0, 2.5),
            Kernel::power_law(0.7, 0.3, 1.2),
            Kernel::uniform(0.5, 2.0),
        ]
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(Kernel::exponential(0.5, 2.0).evaluate(0.0).unwrap(), 1.0);
        assert_eq!(Kernel::Zero.evaluate(3.7).unwrap(), 0.0);
        assert_eq!(Kernel::uniform(0.5, 2.0).evaluate(1.0).unwrap(), 0.25);
        assert!(matches!(
            Kernel::exponential(0.5, 2.0).evaluate(-0.1),
            Err(KernelError::NegativeTime(_))
        ));
    }

    #[test]
    fn moment_examples() {
        assert!((Kernel::exponential(0.3, 1.0).moment(2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((Kernel::uniform(1.0, 2.0).moment(1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            Kernel::power_law(0.4, 1.0, 1.5).moment(2.0),
            Err(KernelError::InfiniteMoment { .. })
        ));
    }

    #[test]
    fn power_law_moment_matches_beta_function() {
        // Lomax moments: c^p Γ(p+1) Γ(θ-p) / Γ(θ).
        for &(c, theta, p) in &[(1.0, 2.5, 2.4), (2.0, 3.0, 1.0), (0.5, 1.5, 0.3), (1.0, 2.5, 1.0)] {
            let k = Kernel::power_law(0.4, c, theta);
            let exact = f64::powf(c, p) * libm::tgamma(p + 1.0) * libm::tgamma(theta - p) / libm::tgamma(theta);
            let got = k.moment(p).unwrap();
            assert!((got - exact).abs() < 1e-9 * exact, "c={c} θ={theta} p={p}: {got} vs {exact}");
        }
    }

    #[test]
    fn fourier_examples() {
        let k = Kernel::exponential(0.5, 2.0);
        assert_eq!(k.fourier(0.0).unwrap(), Complex64::new(0.5, 0.0));
        let v = k.fourier(2.0 / (2.0 * PI)).unwrap();
        assert!((v - Complex64::new(0.25, -0.25)).norm() < 1e-15);
        assert_eq!(Kernel::Zero.fourier(1.3).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn continued_fraction_agrees_with_contour_quadrature() {
        for &theta in &[1.2, 2.0, 2.5, 4.0, 9.0] {
            for &kappa in &[0.3, 1.0, 3.0, 10.0, 60.0, 300.0] {
                let cf = power_law_fourier_cf(theta, kappa).unwrap();
                let scale = 1.0 / kappa.max(1.0);
                let expo = 1.0 + theta;
                let quad = Adaptive::with_tolerances(1e-18, 1e-13)
                    .integrate_to_infinity(
                        |s: f64| {
                            let x = scale * s;
                            let modulus = (1.0 + x * x).powf(-0.5 * expo) * (-kappa * x).exp();
                            Complex64::from_polar(modulus * scale, expo * x.atan())
                        },
                        0.0,
                    )
                    .unwrap()
                    .value
                    * Complex64::new(0.0, -theta);
                assert!((cf - quad).norm() <= 1e-11 * quad.norm(), "{theta} {kappa}: {cf} vs {quad}");
            }
        }
        assert!(power_law_fourier_cf(2.5, 0.1).is_none());
    }

    #[test]
    fn fourier_decay_constant_bounds_transform() {
        for k in families() {
            let kappa = k.fourier_decay_constant();
            for i in 1..400 {
                let xi = 0.05 * i as f64;
                assert!(k.fourier(xi).unwrap().norm() * xi <= kappa * (1.0 + 1e-9), "{k:?} {xi}");
            }
        }
    }

    #[test]
    fn fourier_at_zero_is_mass() {
        for k in families() {
            let v = k.fourier(0.0).unwrap();
            assert!((v.re - k.l1_norm()).abs() <= 1e-15 && v.im == 0.0, "{k:?}");
        }
    }

    #[test]
    fn power_law_fourier_continuous_at_zero() {
        let k = Kernel::power_law(0.4, 1.0, 2.5);
        let v = k.fourier(1e-9).unwrap();
        assert!((v - Complex64::new(0.4, 0.0)).norm() < 1e-7);
    }

    #[test]
    fn power_law_fourier_matches_direct_quadrature() {
        // Oracle: real-line quadrature of e^{-2πiξt} h(t) on [0, X] plus the
        // analytic tail mass bound.
        for &(c, theta) in &[(1.0, 2.5), (0.5, 3.0), (2.0, 1.5)] {
            let k = Kernel::power_law(0.4, c, theta);
            for &xi in &[0.05, 0.3, 1.0, 2.7] {
                let x_max = 2000.0;
                let direct = Adaptive::with_tolerances(1e-13, 1e-12)
                    .initial_panels((x_max * xi * 4.0) as usize + 16)
                    .integrate(
                        |t: f64| Complex64::from_polar(k.density_unchecked(t), -2.0 * PI * xi * t),
                        0.0,
                        x_max,
                    )
                    .unwrap()
                    .value;
                let tail = k.tail_mass(x_max);
                let got = k.fourier(xi).unwrap();
                assert!(
                    (got - direct).norm() <= tail + 1e-9,
                    "c={c} θ={theta} ξ={xi}: {got} vs {direct} (tail {tail})"
                );
            }
        }
    }

    #[test]
    fn l1_norm_matches_quadrature() {
        for k in families() {
            let q = Adaptive::with_tolerances(1e-14, 1e-12);
            let est = match k {
                Kernel::Uniform { support, .. } => q.integrate(|t: f64| k.density_unchecked(t), 0.0, support).unwrap(),
                _ => q.integrate_to_infinity(|t: f64| k.density_unchecked(t), 0.0).unwrap(),
            };
            assert!((est.value - k.l1_norm()).abs() < 1e-8 * k.l1_norm(), "{k:?}: {}", est.value);
        }
    }

    #[test]
    fn second_antiderivative_matches_quadrature() {
        for k in families() {
            for &x in &[0.3, 1.7, 25.0] {
                let est = Adaptive::with_tolerances(1e-14, 1e-12)
                    .initial_panels(8)
                    .integrate(|s: f64| (x - s) * k.density_unchecked(s), 0.0, x)
                    .unwrap();
                let got = k.second_antiderivative(x);
                assert!((got - est.value).abs() < 1e-9 * (1.0 + got.abs()), "{k:?} x={x}: {got} vs {}", est.value);
            }
        }
    }

    #[test]
    fn inverse_cdf_examples() {
        let e = Kernel::exponential(0.5, 2.0);
        assert!((e.delay_from_uniform((-2.0f64).exp()).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(Kernel::uniform(1.0, 2.0).delay_from_uniform(0.25).unwrap(), 0.5);
        assert!(Kernel::Zero.delay_from_uniform(0.5).is_err());
    }

    #[test]
    fn exponential_sample_mean() {
        let k = Kernel::exponential(1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mean = (0..n).map(|_| k.sample_inter_arrival(&mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn samples_pass_ks_against_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in families() {
            let mut xs: Vec<f64> = (0..100_000).map(|_| k.sample_inter_arrival(&mut rng).unwrap()).collect();
            let res = crate::stats::ks_one_sample(&mut xs, |t| k.delay_cdf(t));
            assert!(res.p_value > 0.01, "{k:?}: D={} p={}", res.statistic, res.p_value);
        }
    }

    #[test]
    fn serde_shape() {
        let k: Kernel = serde_json::from_str(r#"{"family":"exponential","alpha":0.5,"beta":2.0}"#).unwrap();
        assert_eq!(k, Kernel::exponential(0.5, 2.0));
        let k: Kernel = serde_json::from_str(r#"{"family":"power_law","alpha":0.4,"c":1.0,"theta":2.5}"#).unwrap();
        assert_eq!(k, Kernel::power_law(0.4, 1.0, 2.5));
        let k: Kernel = serde_json::from_str(r#"{"family":"zero"}"#).unwrap();
        assert_eq!(k, Kernel::Zero);
        assert!(serde_json::from_str::<Kernel>(r#"{"family":"exponential","alpha":0.5,"beta":2.0,"x":1}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn kernel_strategy() -> impl Strategy<Value = Kernel> {
            prop_oneof![
                (0.0..2.0f64, 0.1..5.0f64).prop_map(|(a, b)| Kernel::exponential(a, b)),
                (0.0..2.0f64, 0.1..3.0f64, 1.05..4.0f64).prop_map(|(a, c, t)| Kernel::power_law(a, c, t)),
                (0.0..2.0f64, 0.1..5.0f64).prop_map(|(a, s)| Kernel::uniform(a, s)),
                Just(Kernel::Zero),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn fourier_is_hermitian_and_bounded(k in kernel_strategy(), xi in -20.0..20.0f64) {
                let plus = k.fourier(xi).unwrap();
                let minus = k.fourier(-xi).unwrap();
                prop_assert!((plus - minus.conj()).norm() <= 1e-12 * (1.0 + k.l1_norm()));
                prop_assert!(plus.norm() <= k.l1_norm() * (1.0 + 1e-10) + 1e-14);
            }

            #[test]
            fn kernel_is_nonnegative_and_nonincreasing(k in kernel_strategy(), t in 0.0..50.0f64, dt in 0.0..5.0f64) {
                let a = k.evaluate(t).unwrap();
                let b = k.evaluate(t + dt).unwrap();
                prop_assert!(a >= 0.0 && b >= 0.0 && b <= a);
            }
        }
    }
}
