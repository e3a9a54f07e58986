//! Kolmogorov–Smirnov tests with asymptotic p-values, and the normal CDF.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    /// Supremum distance `D` between the two distribution functions.
    pub statistic: f64,
    /// Effective sample size: `n` for one sample, `nm / (n + m)` for two.
    pub effective_n: f64,
    /// Asymptotic `P(K > √n_eff · D)`.
    pub p_value: f64,
}

impl KsResult {
    pub fn scaled_statistic(&self) -> f64 {
        self.effective_n.sqrt() * self.statistic
    }

    /// Reject at level `alpha` using the asymptotic critical value.
    pub fn rejects(&self, alpha: f64) -> bool {
        self.scaled_statistic() > kolmogorov_quantile(1.0 - alpha)
    }
}

/// One-sample test of `sample` against the continuous CDF `cdf`. The sample
/// is sorted in place; NaNs are not allowed.
pub fn ks_one_sample(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    assert!(!sample.is_empty(), "KS test needs a non-empty sample");
    sample.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (k, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - k as f64 / n).max((k + 1) as f64 / n - f);
    }
    KsResult {
        statistic: d,
        effective_n: n,
        p_value: kolmogorov_sf(n.sqrt() * d),
    }
}

/// Two-sample test. Both inputs are sorted in place.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs non-empty samples");
    let cmp = |x: &f64, y: &f64| x.partial_cmp(y).expect("NaN in KS sample");
    a.sort_by(cmp);
    b.sort_by(cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    KsResult {
        statistic: d,
        effective_n: ne,
        p_value: kolmogorov_sf(ne.sqrt() * d),
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // Jacobi-theta form converges fast for small arguments.
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        for k in 1..=20 {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * pi2 / (8.0 * x * x)).exp();
            cdf += term;
            if term < 1e-17 * cdf {
                break;
            }
        }
        let cdf = cdf * (2.0 * std::f64::consts::PI).sqrt() / x;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sf = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sf += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sf).clamp(0.0, 1.0)
}

/// Quantile of the Kolmogorov distribution: the `x` with `P(K ≤ x) = prob`.
pub fn kolmogorov_quantile(prob: f64) -> f64 {
    assert!(prob > 0.0 && prob < 1.0, "probability must lie in (0, 1)");
    let target = 1.0 - prob;
    let (mut lo, mut hi) = (0.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
