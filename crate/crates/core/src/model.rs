//! Multivariate linear Hawkes model: baselines, kernel matrix and the
//! first-order quantities derived from them.
//!
//! Orientation is fixed throughout the crate: `kernels[i][j]` is `h_ij`, the
//! influence of component `i` on component `j`, so that
//! `λ_j(t) = η_j + Σ_i Σ_{T_i < t} h_ij(t - T_i)` and `M_ij = ‖h_ij‖₁`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Kernel, KernelError};

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("baseline intensity eta[{index}] = {value} must be finite and > 0")]
    Baseline { index: usize, value: f64 },
    #[error("kernel ({i}, {j}): {source}")]
    Kernel {
        i: usize,
        j: usize,
        #[source]
        source: KernelError,
    },
    #[error(
        "subcriticality violated: spectral radius of the reproduction matrix is {rho:.6} (must be < 1)"
    )]
    Supercritical { rho: f64 },
    #[error("moment hypothesis violated for beta = {beta}: {reason}")]
    MomentHypothesis { beta: f64, reason: String },
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl ModelError {
    /// True when the model was rejected because a modelling hypothesis fails,
    /// as opposed to malformed input or a numerical failure.
    pub fn is_hypothesis(&self) -> bool {
        matches!(self, ModelError::Supercritical { .. } | ModelError::MomentHypothesis { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HawkesModel {
    pub eta: Vec<f64>,
    pub kernels: Vec<Vec<Kernel>>,
}

/// Output of [`HawkesModel::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub dimension: usize,
    #[serde(serialize_with = "crate::model::serialize_rows")]
    pub reproduction_matrix: Matrix,
    pub spectral_radius: f64,
    pub mean_intensity: Vec<f64>,
}

pub(crate) fn serialize_rows<S: serde::Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = (0..m.ncols()).map(|j| m[(i, j)]).collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl HawkesModel {
    pub fn new(eta: Vec<f64>, kernels: Vec<Vec<Kernel>>) -> Result<Self, ModelError> {
        let model = Self { eta, kernels };
        model.check_structure()?;
        Ok(model)
    }

    /// Model whose kernels are all of one family, scaled to the given masses.
    pub fn from_masses(eta: Vec<f64>, masses: &[Vec<f64>], shape: impl Fn(f64) -> Kernel) -> Result<Self, ModelError> {
        let kernels = masses
            .iter()
            .map(|row| row.iter().map(|&a| if a == 0.0 { Kernel::Zero } else { shape(a) }).collect())
            .collect();
        Self::new(eta, kernels)
    }

    pub fn dim(&self) -> usize {
        self.eta.len()
    }

    pub fn kernel(&self, i: usize, j: usize) -> &Kernel {
        &self.kernels[i][j]
    }

    pub fn check_structure(&self) -> Result<(), ModelError> {
        let d = self.eta.len();
        if d == 0 {
            return Err(ModelError::Dimension("model needs at least one component".into()));
        }
        if self.kernels.len() != d || self.kernels.iter().any(|row| row.len() != d) {
            return Err(ModelError::Dimension(format!("kernel matrix must be {d}x{d}")));
        }
        for (index, &value) in self.eta.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::Baseline { index, value });
            }
        }
        for (i, row) in self.kernels.iter().enumerate() {
            for (j, k) in row.iter().enumerate() {
                k.validate().map_err(|source| ModelError::Kernel { i, j, source })?;
            }
        }
        Ok(())
    }

    pub fn reproduction_matrix(&self) -> Matrix {
        let d = self.dim();
        Matrix::from_fn(d, d, |i, j| self.kernels[i][j].l1_norm())
    }

    /// Structural checks, subcriticality, and the stationary mean intensity.
    pub fn validate(&self) -> Result<ModelSummary, ModelError> {
        self.check_structure()?;
        let m = self.reproduction_matrix();
        let rho = spectral_radius(&m)?;
        if rho >= 1.0 {
            return Err(ModelError::Supercritical { rho });
        }
        let mean = solve_mean_intensity(&m, &self.eta)?;
        Ok(ModelSummary {
            dimension: self.dim(),
            reproduction_matrix: m,
            spectral_radius: rho,
            mean_intensity: mean,
        })
    }

    pub fn mean_intensity(&self) -> Result<Vec<f64>, ModelError> {
        Ok(self.validate()?.mean_intensity)
    }

    /// `sup_ij ∫ t^(1+beta) h*_ij(t) dt` over the non-zero kernels (zero when
    /// every kernel vanishes).
    pub fn delay_moment_bound(&self, beta: f64) -> Result<f64, ModelError> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(ModelError::MomentHypothesis {
                beta,
                reason: "beta must be finite and > 0".into(),
            });
        }
        let mut nu: f64 = 0.0;
        for (i, row) in self.kernels.iter().enumerate() {
            for (j, k) in row.iter().enumerate() {
                if k.is_zero() {
                    continue;
                }
                match k.moment(1.0 + beta) {
                    Ok(v) => nu = nu.max(v),
                    Err(KernelError::InfiniteMoment { order, theta }) => {
                        return Err(ModelError::MomentHypothesis {
                            beta,
                            reason: format!(
                                "kernel ({i}, {j}) has an infinite moment of order {order} (tail index {theta})"
                            ),
                        })
                    }
                    Err(source) => return Err(ModelError::Kernel { i, j, source }),
                }
            }
        }
        Ok(nu)
    }
}

/// Solve `(I - Mᵀ) m = η`.
pub fn solve_mean_intensity(m: &Matrix, eta: &[f64]) -> Result<Vec<f64>, ModelError> {
    let d = eta.len();
    if m.nrows() != d || m.ncols() != d {
        return Err(ModelError::Dimension("reproduction matrix and baseline differ in size".into()));
    }
    let rho = spectral_radius(m)?;
    if rho >= 1.0 {
        return Err(ModelError::Supercritical { rho });
    }
    let a = Matrix::identity(d, d) - m.transpose();
    let rhs = nalgebra::DVector::from_column_slice(eta);
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ModelError::Numeric("I - Mᵀ is singular".into()))?;
    let out: Vec<f64> = sol.iter().copied().collect();
    if out.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(ModelError::Numeric(format!("mean intensity not strictly positive: {out:?}")));
    }
    Ok(out)
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 100_000;

/// Perron root of a square nonnegative matrix.
///
/// Power iteration runs on `M + I`, whose dominant eigenvalue `ρ + 1` is the
/// unique eigenvalue of maximal modulus for any nonnegative `M`. The
/// Collatz–Wielandt ratios `min_i (Ax)_i / x_i ≤ ρ(A) ≤ max_i (Ax)_i / x_i`
/// bracket the root at every step and the iteration stops once the bracket is
/// narrower than `1e-12`. Reducible or defective matrices can keep the bracket
/// open; for `d ≤ 4` a direct eigenvalue solve takes over.
pub fn spectral_radius(m: &Matrix) -> Result<f64, ModelError> {
    let d = m.nrows();
    if d == 0 || m.ncols() != d {
        return Err(ModelError::Dimension("spectral radius needs a non-empty square matrix".into()));
    }
    if m.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(ModelError::Numeric("reproduction matrix must be finite and nonnegative".into()));
    }
    let shifted = m + Matrix::identity(d, d);
    let mut x = nalgebra::DVector::from_element(d, 1.0);
    for _ in 0..POWER_MAX_ITER {
        let y = &shifted * &x;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..d {
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if hi - lo <= POWER_TOL {
            return Ok((0.5 * (lo + hi) - 1.0).max(0.0));
        }
        let scale = y.max();
        x = y / scale;
    }
    if d <= 4 {
        let rho = m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        return Ok(rho);
    }
    Err(ModelError::Numeric(format!(
        "power iteration did not converge after {POWER_MAX_ITER} iterations"
    )))
}

/// Induced ℓ¹ operator norm (maximum absolute column sum).
pub fn norm_l1(m: &Matrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2() -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.5, 0.3, 0.2, 0.4])
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&m2()).unwrap() - 0.7).abs() < 1e-11);
        assert_eq!(spectral_radius(&Matrix::zeros(1, 1)).unwrap(), 0.0);
        assert!((spectral_radius(&(Matrix::identity(3, 3) * 0.6)).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn spectral_radius_of_reducible_and_defective_matrices() {
        let diag = Matrix::from_row_slice(2, 2, &[0.6, 0.0, 0.0, 0.3]);
        assert!((spectral_radius(&diag).unwrap() - 0.6).abs() < 1e-10);
        let nil = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(spectral_radius(&nil).unwrap() < 1e-6);
        let perm = Matrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert!((spectral_radius(&perm).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn mean_intensity_examples() {
        let m = Matrix::from_row_slice(1, 1, &[0.5]);
        assert!((solve_mean_intensity(&m, &[1.0]).unwrap()[0] - 2.0).abs() < 1e-14);
        let mean = solve_mean_intensity(&m2(), &[1.0, 1.0]).unwrap();
        assert!((mean[0] - 10.0 / 3.0).abs() < 1e-12 && (mean[1] - 10.0 / 3.0).abs() < 1e-12);
        let zero = solve_mean_intensity(&Matrix::zeros(3, 3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(zero, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn mean_intensity_matches_neumann_series() {
        let m = Matrix::from_row_slice(3, 3, &[0.2, 0.1, 0.3, 0.0, 0.4, 0.1, 0.25, 0.05, 0.1]);
        let eta = [0.5, 1.0, 2.0];
        let rho = spectral_radius(&m).unwrap();
        let terms = ((1e-10f64).ln() / rho.ln()).ceil() as usize + 10;
        let mt = m.transpose();
        let mut acc = nalgebra::DVector::from_column_slice(&eta);
        let mut term = acc.clone();
        for _ in 0..terms {
            term = &mt * term;
            acc += &term;
        }
        let mean = solve_mean_intensity(&m, &eta).unwrap();
        for i in 0..3 {
            assert!((mean[i] - acc[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn supercritical_model_is_rejected() {
        let model = HawkesModel::from_masses(vec![1.0, 1.0], &[vec![0.9, 0.5], vec![0.5, 0.6]], |a| {
            Kernel::exponential(a, 1.0)
        })
        .unwrap();
        let err = model.validate().unwrap_err();
        assert!(matches!(err, ModelError::Supercritical { rho } if rho > 1.0));
        assert!(err.is_hypothesis());
    }

    #[test]
    fn structural_errors() {
        assert!(HawkesModel::new(vec![1.0], vec![vec![Kernel::Zero, Kernel::Zero]]).is_err());
        assert!(matches!(
            HawkesModel::new(vec![0.0], vec![vec![Kernel::Zero]]),
            Err(ModelError::Baseline { .. })
        ));
        assert!(matches!(
            HawkesModel::new(vec![1.0], vec![vec![Kernel::exponential(0.5, -1.0)]]),
            Err(ModelError::Kernel { .. })
        ));
    }

    #[test]
    fn moment_bound_and_hypothesis() {
        let model = HawkesModel::new(
            vec![1.0, 1.0],
            vec![
                vec![Kernel::power_law(0.3, 1.0, 2.5), Kernel::exponential(0.2, 2.0)],
                vec![Kernel::Zero, Kernel::uniform(0.3, 1.0)],
            ],
        )
        .unwrap();
        let nu = model.delay_moment_bound(1.4).unwrap();
        let pl = Kernel::power_law(0.3, 1.0, 2.5).moment(2.4).unwrap();
        assert_eq!(nu, pl);
        assert!(matches!(
            model.delay_moment_bound(1.6),
            Err(ModelError::MomentHypothesis { .. })
        ));
    }

    #[test]
    fn model_json_roundtrip() {
        let text = r#"{"eta":[1.0],"kernels":[[{"family":"exponential","alpha":0.5,"beta":2.0}]]}"#;
        let model: HawkesModel = serde_json::from_str(text).unwrap();
        let summary = model.validate().unwrap();
        assert!((summary.mean_intensity[0] - 2.0).abs() < 1e-14);
        let json = serde_json::to_value(&summary).unwrap();
        assert_eq!(json["reproduction_matrix"][0][0], 0.5);
    }
}
