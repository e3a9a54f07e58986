//! Multitype Galton–Watson analytics behind the covariance-decay bound.
//!
//! A cluster started by one type-`z0` immigrant is a Galton–Watson process
//! with Poisson(`M_ij`) offspring. Its generation sizes `Z_k` have Laplace
//! transform `E[exp(Z_kᵀu)] = exp(g^k(u)_{z0})` with `g(u) = M(e^u - 1)`,
//! and a contraction certificate turns that recurrence into summable tail
//! bounds. [`mixing_bound`] assembles those pieces into a numeric bound on
//! `|Cov(N_i(A), N_j(B))|` for `A ⊂ (-∞, t]`, `B ⊂ (t + τ, ∞)`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{norm_l1, spectral_radius, HawkesModel, Matrix, ModelError};

#[derive(Debug, Error)]
pub enum BranchingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("g^k(u) overflowed at generation {k}")]
    Overflow { k: usize },
    #[error("certificate check failed: {0}")]
    Certificate(String),
    #[error("series did not reach the requested accuracy: {0}")]
    Truncation(String),
}

impl BranchingError {
    pub fn is_hypothesis(&self) -> bool {
        match self {
            BranchingError::Model(e) => e.is_hypothesis(),
            BranchingError::Hypothesis(_) => true,
            _ => false,
        }
    }
}

/// `M (e^u - 1)`.
pub fn g_map(m: &Matrix, u: &[f64]) -> Vec<f64> {
    let d = u.len();
    let e: Vec<f64> = u.iter().map(|&x| x.exp_m1()).collect();
    (0..d).map(|i| (0..d).map(|j| m[(i, j)] * e[j]).sum()).collect()
}

/// Offspring law: a type-`i` parent has Poisson(`M_ij`) children of type `j`.
#[derive(Debug, Clone)]
pub struct GwLaw {
    m: Matrix,
    rho: f64,
}

impl GwLaw {
    pub fn new(m: Matrix) -> Result<Self, BranchingError> {
        let rho = spectral_radius(&m)?;
        if rho >= 1.0 {
            return Err(ModelError::Supercritical { rho }.into());
        }
        Ok(Self { m, rho })
    }

    pub fn from_model(model: &HawkesModel) -> Result<Self, BranchingError> {
        let summary = model.validate()?;
        Ok(Self { m: summary.reproduction_matrix, rho: summary.spectral_radius })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn spectral_radius(&self) -> f64 {
        self.rho
    }

    pub fn g(&self, u: &[f64]) -> Vec<f64> {
        g_map(&self.m, u)
    }

    /// `g^k(u)`.
    pub fn g_iterate(&self, u: &[f64], k: usize) -> Result<Vec<f64>, BranchingError> {
        self.check_vector(u)?;
        let mut v = u.to_vec();
        for step in 1..=k {
            v = self.g(&v);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(BranchingError::Overflow { k: step });
            }
        }
        Ok(v)
    }

    /// `E[exp(Z_kᵀu)]` for a single type-`z0` ancestor.
    pub fn laplace_zk(&self, u: &[f64], k: usize, z0: usize) -> Result<f64, BranchingError> {
        self.check_type(z0)?;
        let v = self.g_iterate(u, k)?[z0].exp();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(BranchingError::Overflow { k })
        }
    }

    /// Expected total offspring of each type over all generations, including
    /// the ancestor: row `z0` of `(I - M)⁻¹`.
    pub fn expected_totals(&self) -> Result<Matrix, BranchingError> {
        let d = self.dim();
        (Matrix::identity(d, d) - &self.m)
            .try_inverse()
            .ok_or_else(|| BranchingError::Domain("I - M is singular".into()))
    }

    /// Generation sizes `Z_0, …, Z_{k_max}` of one simulated process.
    pub fn simulate_generations<R: Rng + ?Sized>(&self, z0: usize, k_max: usize, rng: &mut R) -> Vec<Vec<u64>> {
        let d = self.dim();
        let mut out = Vec::with_capacity(k_max + 1);
        let mut z = vec![0u64; d];
        z[z0] = 1;
        out.push(z.clone());
        for _ in 0..k_max {
            let mut next = vec![0u64; d];
            for j in 0..d {
                let mean: f64 = (0..d).map(|i| z[i] as f64 * self.m[(i, j)]).sum();
                if mean > 0.0 {
                    next[j] = Poisson::new(mean).expect("finite mean").sample(rng) as u64;
                }
            }
            z = next;
            out.push(z.clone());
        }
        out
    }

    fn check_type(&self, z0: usize) -> Result<(), BranchingError> {
        if z0 >= self.dim() {
            return Err(BranchingError::Domain(format!("type {z0} out of range (d = {})", self.dim())));
        }
        Ok(())
    }

    fn check_vector(&self, u: &[f64]) -> Result<(), BranchingError> {
        if u.len() != self.dim() || u.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
            return Err(BranchingError::Domain(format!(
                "u must be a finite nonnegative vector of length {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificatePolicy {
    /// Explicit `δ ∈ (1, 1/ρ)`; `None` picks the midpoint `(1 + 1/ρ) / 2`.
    pub delta: Option<f64>,
    /// Cap on the automatic choice of `δ`.
    pub delta_max: f64,
    /// Geometric-tail threshold defining the finite scan horizon `K`.
    pub tail_tolerance: f64,
}

impl Default for CertificatePolicy {
    fn default() -> Self {
        Self { delta: None, delta_max: 2.0, tail_tolerance: 1e-12 }
    }
}

/// Constants under which `g^k(u) ≤ δ^k M^k u` for every `k` and
/// `‖g^k(u)‖₁ ≤ c^k ‖u‖₁` for every `k ≥ k0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionCert {
    pub rho: f64,
    pub delta: f64,
    pub u0: f64,
    pub u: Vec<f64>,
    pub epsilon: f64,
    pub c: f64,
    pub k0: usize,
    /// Scan horizon: beyond it `c^k ‖u‖₁` is below the tail tolerance.
    pub horizon: usize,
}

const K0_SEARCH_LIMIT: usize = 100_000;

pub fn contraction_certificate(law: &GwLaw, policy: &CertificatePolicy) -> Result<ContractionCert, BranchingError> {
    let rho = law.rho;
    let d = law.dim();
    let delta = match policy.delta {
        Some(delta) => {
            if !(delta > 1.0 && delta * rho < 1.0) {
                return Err(BranchingError::Domain(format!("delta = {delta} must lie in (1, 1/rho) with rho = {rho}")));
            }
            delta
        }
        None => {
            if !(policy.delta_max > 1.0) {
                return Err(BranchingError::Domain("delta_max must exceed 1".into()));
            }
            if rho == 0.0 {
                policy.delta_max
            } else {
                (0.5 * (1.0 + 1.0 / rho)).min(policy.delta_max)
            }
        }
    };
    let u0 = expm1_crossing(delta);
    let epsilon = 0.5 * (1.0 / delta - rho);
    let c = delta * (rho + epsilon);
    let k0 = certified_k0(&law.m, rho + epsilon)?;
    let tol = policy.tail_tolerance;
    let mut horizon = k0;
    while c.powi(horizon as i32) * d as f64 * u0 >= tol {
        horizon += 1;
    }
    let mut w = vec![1.0; d];
    let mut sup: f64 = 1.0;
    for _ in 0..horizon {
        w = (0..d).map(|i| delta * (0..d).map(|j| law.m[(i, j)] * w[j]).sum::<f64>()).collect();
        sup = sup.max(w.iter().copied().fold(0.0, f64::max));
    }
    let s = u0 / sup;
    Ok(ContractionCert { rho, delta, u0, u: vec![s; d], epsilon, c, k0, horizon })
}

/// Largest `x > 0` with `e^x - 1 ≤ δ x`, from below.
fn expm1_crossing(delta: f64) -> f64 {
    let f = |x: f64| x.exp_m1() - delta * x;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest `k ≥ 1` with `‖M^j‖₁ ≤ r^j` for every `j ∈ [k, 2k - 1]`. Every
/// `n ≥ k` is a sum of integers from that window, so submultiplicativity
/// extends the inequality to all `n ≥ k`.
fn certified_k0(m: &Matrix, r: f64) -> Result<usize, BranchingError> {
    let mut norms = vec![1.0];
    let mut power = Matrix::identity(m.nrows(), m.nrows());
    let ok = |norms: &[f64], j: usize| norms[j] <= r.powi(j as i32);
    for k in 1..=K0_SEARCH_LIMIT {
        while norms.len() < 2 * k {
            power = &power * m;
            norms.push(norm_l1(&power));
        }
        if (k..2 * k).all(|j| ok(&norms, j)) {
            return Ok(k);
        }
    }
    Err(BranchingError::Certificate(format!("no k0 found below {K0_SEARCH_LIMIT}")))
}

impl ContractionCert {
    /// Re-checks every certificate condition numerically, scanning
    /// generations up to `max(k_max, horizon)`.
    pub fn verify(&self, law: &GwLaw, k_max: usize) -> Result<(), BranchingError> {
        let fail = |msg: String| Err(BranchingError::Certificate(msg));
        let d = law.dim();
        if !(self.delta > 1.0 && self.delta * law.rho < 1.0 && self.c < 1.0 && self.u0 > 0.0) {
            return fail(format!("constants out of range: {self:?}"));
        }
        if self.u.len() != d || self.u.iter().any(|&x| x <= 0.0) {
            return fail("u must be strictly positive".into());
        }
        for n in 0..=10_000 {
            let x = self.u0 * n as f64 / 10_000.0;
            if x.exp_m1() > self.delta * x * (1.0 + 1e-12) {
                return fail(format!("e^x - 1 > delta x at x = {x}"));
            }
        }
        let u_norm: f64 = self.u.iter().sum();
        let scan = k_max.max(self.horizon);
        let mut bound = self.u.clone();
        let mut g = self.u.clone();
        for k in 0..=scan {
            if k > 0 {
                bound = (0..d)
                    .map(|i| self.delta * (0..d).map(|j| law.m[(i, j)] * bound[j]).sum::<f64>())
                    .collect();
                g = law.g(&g);
            }
            if k <= self.horizon && bound.iter().any(|&b| b > self.u0 * (1.0 + 1e-12)) {
                return fail(format!("|delta^k M^k u|_inf exceeds u0 at k = {k}"));
            }
            if g.iter().zip(&bound).any(|(&gi, &bi)| gi > bi * (1.0 + 1e-10) + 1e-300) {
                return fail(format!("g^k(u) exceeds delta^k M^k u at k = {k}"));
            }
            if k >= self.k0 {
                let lhs: f64 = g.iter().sum();
                if lhs > self.c.powi(k as i32) * u_norm * (1.0 + 1e-10) + 1e-300 {
                    return fail(format!("|g^k(u)|_1 exceeds c^k |u|_1 at k = {k}"));
                }
            }
        }
        Ok(())
    }
}

/// A positive series summed to a certified remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesSum {
    pub partial: f64,
    pub remainder: f64,
    pub terms: usize,
}

impl SeriesSum {
    /// Upper bound on the full series.
    pub fn value(&self) -> f64 {
        self.partial + self.remainder
    }
}

/// `C₁(u_i, p) = Σ_{n ≥ 1} (e^{u_i n} - 1)^{-1/p}`.
pub fn c1_constant(u_i: f64, p: f64) -> Result<SeriesSum, BranchingError> {
    if !(u_i > 0.0 && u_i.is_finite()) {
        return Err(BranchingError::Domain(format!("C1 diverges for u_i = {u_i}")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(BranchingError::Domain(format!("Hölder exponent p = {p} must be >= 1")));
    }
    let mut partial = 0.0;
    let decay = (-u_i / p).exp();
    let mut n = 0usize;
    loop {
        n += 1;
        partial += (u_i * n as f64).exp_m1().powf(-1.0 / p);
        // (e^{ux} - 1)^{-1/p} ≤ (1 - e^{-u(N+1)})^{-1/p} e^{-ux/p} for x ≥ N + 1.
        let lead = (-(u_i * (n + 1) as f64)).exp();
        let remainder = (1.0 - lead).powf(-1.0 / p) * decay.powi(n as i32 + 1) / (1.0 - decay);
        if remainder <= 1e-15 * partial || n >= 100_000_000 {
            return Ok(SeriesSum { partial, remainder, terms: n });
        }
    }
}

/// Upper bound `C₁ (L{Z_k}(u) - 1)^{1/p}` on `Σ_n P(Z_ki ≥ n)^{1/p}`. With
/// `ancestor = None` the bound holds for every ancestor type.
pub fn tail_sum_z(
    law: &GwLaw,
    cert: &ContractionCert,
    k: usize,
    i: usize,
    p: f64,
    ancestor: Option<usize>,
) -> Result<f64, BranchingError> {
    law.check_type(i)?;
    let c1 = c1_constant(cert.u[i], p)?.value();
    let g = law.g_iterate(&cert.u, k)?;
    let exponent = match ancestor {
        Some(z0) => {
            law.check_type(z0)?;
            g[z0]
        }
        None => g.iter().copied().fold(0.0, f64::max),
    };
    Ok(c1 * exponent.exp_m1().powf(1.0 / p))
}

/// Markov bound `min(1, l^{1+β} ν / h^{1+β})` on the chance that a
/// generation-`l` descendant arrives later than `h` after its immigrant.
pub fn arrival_tail_bound(nu: f64, beta: f64, l: usize, horizon: f64) -> f64 {
    if l == 0 {
        return 0.0;
    }
    let e = 1.0 + beta;
    ((l as f64).powf(e) * nu / horizon.powf(e)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LagBound {
    pub lag: f64,
    pub bound: f64,
    /// `pair_bounds[i][j]` bounds `|Cov(N_i(A), N_j(B))|`.
    pub pair_bounds: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingBoundReport {
    pub beta: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    /// Exponent paired with `r` in the product-of-means branch.
    pub q_mean: f64,
    pub nu: f64,
    pub certificate: ContractionCert,
    pub c1_p: SeriesSum,
    pub c1_q: SeriesSum,
    pub c1_q_mean: SeriesSum,
    /// `ν^{1/r} / γ`: the immigrant-location integral at unit lag.
    pub immigrant_factor: f64,
    /// `C` in `bound(τ) = C τ^{-γ}`.
    pub constant: f64,
    pub pair_constants: Vec<Vec<f64>>,
    /// Generations summed explicitly before switching to the certified tail.
    pub generations: usize,
    /// Share of `constant` contributed by certified series remainders.
    pub truncation_share: f64,
    pub table: Vec<LagBound>,
}

const TRUNCATION_TARGET: f64 = 1e-6;
const MAX_GENERATIONS: usize = 2_000_000;

/// Numeric covariance-decay bound.
///
/// For an immigrant of type `z0` at distance `h` before `B`, the cluster
/// contribution is bounded by
/// `Σ_{k,l} [S_p(k, i) S_q(l, j) + E[Z_ki] S_{q'}(l, j)] (l^{1+β} ν / h^{1+β})^{1/r}`
/// where `S_p(k, i) = C₁ (L{Z_k}(u) - 1)^{1/p}`. Both branches factor into a
/// sum over `k` times a sum over `l` weighted by `l^{1+γ}`. Integrating the
/// immigrant position over `h > τ` against `η_{z0} dh` gives the
/// `ν^{1/r} τ^{-γ} / γ` factor.
pub fn mixing_bound(
    model: &HawkesModel,
    beta: f64,
    gamma: f64,
    lags: &[f64],
    policy: &CertificatePolicy,
) -> Result<MixingBoundReport, BranchingError> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(BranchingError::Domain(format!("gamma = {gamma} must be > 0")));
    }
    if gamma >= beta {
        return Err(BranchingError::Hypothesis(format!("gamma = {gamma} must be < beta = {beta}")));
    }
    if let Some(&bad) = lags.iter().find(|&&t| !(t > 0.0 && t.is_finite())) {
        return Err(BranchingError::Domain(format!("lag {bad} must be finite and > 0")));
    }
    let nu = model.delay_moment_bound(beta)?;
    if !nu.is_finite() {
        return Err(BranchingError::Hypothesis(format!("moment of order {} is not finite", 1.0 + beta)));
    }
    let law = GwLaw::from_model(model)?;
    let cert = contraction_certificate(&law, policy)?;
    let d = law.dim();
    let r = (1.0 + beta) / (1.0 + gamma);
    let p = 2.0 * (1.0 + beta) / (beta - gamma);
    let q = p;
    let q_mean = r / (r - 1.0);
    let s = cert.u[0];
    let c1_p = c1_constant(s, p)?;
    let c1_q = c1_constant(s, q)?;
    let c1_q_mean = c1_constant(s, q_mean)?;
    let weight = 1.0 + gamma;
    let immigrant_factor = nu.powf(1.0 / r) / gamma;
    let totals = law.expected_totals()?;

    // Explicit sums over generations 1..=K of expm1(g^k(u)_{z0})^{1/e},
    // optionally weighted by k^{1+γ}; generation 0 is handled exactly.
    let mut gk: Vec<Vec<f64>> = vec![cert.u.clone()];
    let u_norm = d as f64 * s;
    let mut kmax = cert.k0.max(cert.horizon).max(16);
    let (sums, tails) = loop {
        while gk.len() <= kmax {
            let next = law.g(gk.last().expect("non-empty"));
            gk.push(next);
        }
        let mut sums = vec![[0.0f64; 3]; d];
        for (z0, row) in sums.iter_mut().enumerate() {
            for (k, g) in gk.iter().enumerate().skip(1).take(kmax) {
                let x = g[z0].exp_m1();
                let kw = (k as f64).powf(weight);
                row[0] += x.powf(1.0 / p);
                row[1] += kw * x.powf(1.0 / q);
                row[2] += kw * x.powf(1.0 / q_mean);
            }
        }
        // For k > K ≥ k0: g^k(u)_{z0} ≤ c^k |u|_1 = x_k and expm1(x_k) ≤ A c^k.
        let x_next = cert.c.powi(kmax as i32 + 1) * u_norm;
        let a = u_norm * x_next.exp();
        let plain = |e: f64| {
            let ratio = cert.c.powf(1.0 / e);
            a.powf(1.0 / e) * ratio.powi(kmax as i32 + 1) / (1.0 - ratio)
        };
        let weighted = |e: f64| {
            let ratio = cert.c.powf(1.0 / e);
            let step = ((kmax + 2) as f64 / (kmax + 1) as f64).powf(weight) * ratio;
            if step >= 1.0 {
                return f64::INFINITY;
            }
            a.powf(1.0 / e) * ((kmax + 1) as f64).powf(weight) * ratio.powi(kmax as i32 + 1) / (1.0 - step)
        };
        let tails = [plain(p), weighted(q), weighted(q_mean)];
        let mut full = 0.0;
        let mut truncated = 0.0;
        for z0 in 0..d {
            let pair = |t: [f64; 3]| {
                let mut acc = 0.0;
                for i in 0..d {
                    let p_i = c1_p.value() * t[0] + if i == z0 { 1.0 } else { 0.0 };
                    acc += d as f64 * (p_i * c1_q.value() * t[1] + totals[(z0, i)] * c1_q_mean.value() * t[2]);
                }
                acc
            };
            let with_tail = [sums[z0][0] + tails[0], sums[z0][1] + tails[1], sums[z0][2] + tails[2]];
            full += model.eta[z0] * pair(with_tail);
            truncated += model.eta[z0] * pair(sums[z0]);
        }
        let share = if full > 0.0 { (full - truncated) / full } else { 0.0 };
        if share <= TRUNCATION_TARGET {
            break (sums, tails);
        }
        if kmax >= MAX_GENERATIONS {
            return Err(BranchingError::Truncation(format!(
                "remainder share {share:e} after {kmax} generations"
            )));
        }
        kmax *= 2;
    };

    // Both branches are independent of the target type j because u is isotropic.
    let mut pair_constants = vec![vec![0.0; d]; d];
    let mut truncated_total = 0.0;
    for z0 in 0..d {
        let scale = model.eta[z0] * immigrant_factor;
        for (i, row) in pair_constants.iter_mut().enumerate() {
            let exact0 = if i == z0 { 1.0 } else { 0.0 };
            let p_full = c1_p.value() * (sums[z0][0] + tails[0]) + exact0;
            let p_trunc = c1_p.value() * sums[z0][0] + exact0;
            let full = p_full * c1_q.value() * (sums[z0][1] + tails[1])
                + totals[(z0, i)] * c1_q_mean.value() * (sums[z0][2] + tails[2]);
            let trunc = p_trunc * c1_q.value() * sums[z0][1] + totals[(z0, i)] * c1_q_mean.value() * sums[z0][2];
            for c in row.iter_mut() {
                *c += scale * full;
            }
            truncated_total += d as f64 * scale * trunc;
        }
    }
    let constant: f64 = pair_constants.iter().flatten().sum();
    let truncation_share = if constant > 0.0 { (constant - truncated_total) / constant } else { 0.0 };
    let table = lags
        .iter()
        .map(|&lag| {
            let scale = lag.powf(-gamma);
            LagBound {
                lag,
                bound: constant * scale,
                pair_bounds: pair_constants.iter().map(|row| row.iter().map(|c| c * scale).collect()).collect(),
            }
        })
        .collect();
    Ok(MixingBoundReport {
        beta,
        gamma,
        p,
        q,
        r,
        q_mean,
        nu,
        certificate: cert,
        c1_p,
        c1_q,
        c1_q_mean,
        immigrant_factor,
        constant,
        pair_constants,
        generations: kmax,
        truncation_share,
        table,
    })
}

impl MixingBoundReport {
    /// Bound on `|Cov(N_i(A), N_j(B))|` when `B` starts `gap` after `A` ends.
    pub fn pair_bound(&self, i: usize, j: usize, gap: f64) -> f64 {
        self.pair_constants[i][j] * gap.powf(-self.gamma)
    }
}
