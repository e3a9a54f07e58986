//! Bartlett spectral density and the long-run variances built from it.
//!
//! Fourier convention: `F f(ξ) = ∫ e^{-2πiξt} f(t) dt`. With
//! `H̃_ij(ξ) = F h_ij(ξ)` and `m` the mean intensity, the spectral density is
//! `γ(ξ) = (I - H̃(ξ)ᵀ)⁻¹ diag(m) (I - H̃(-ξ))⁻¹`. It is Hermitian and
//! `γ(-ξ) = conj(γ(ξ)) = γ(ξ)ᵀ`.
//!
//! Covariances of linear statistics pair transforms as
//! `Cov(N_i(f), N_j(g)) = ∫ conj(F f(ξ)) F g(ξ) γ_ij(ξ) dξ`. With this
//! orientation a kernel `h_ij` feeds covariance from earlier `i` events to
//! later `j` events.

mod asymptotic;
mod covariance;
mod testfn;
mod variance;

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::kernel::{Kernel, KernelError};
use crate::model::{HawkesModel, Matrix, ModelError, ModelSummary};
use crate::quadrature::QuadError;

pub use asymptotic::{asymptotic_variance_const, asymptotic_variance_periodic, PeriodicVariance};
pub use covariance::{cov_counts, CovarianceEstimate};
pub use testfn::{LinearStatistic, TestFunction};
pub use variance::{variance_curve, variance_st, VarianceEstimate, VarianceOptions};

pub(crate) use testfn::Compiled;

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("I - H(xi) is singular at xi = {xi}")]
    Singular { xi: f64 },
    #[error("degenerate statistic: {0}")]
    Degenerate(String),
    #[error("requested accuracy not reached: {0}")]
    Accuracy(String),
}

impl SpectrumError {
    pub fn is_hypothesis(&self) -> bool {
        matches!(self, SpectrumError::Model(e) if e.is_hypothesis())
    }
}

/// `γ(ξ)` at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMatrix {
    pub xi: f64,
    pub value: CMatrix,
}

/// A validated model together with the constants used to bound spectral
/// integrands at high frequency.
#[derive(Debug, Clone)]
pub struct Spectrum {
    kernels: Vec<Vec<Kernel>>,
    summary: ModelSummary,
    /// `|γ(ξ) - diag(m)| ≤ b1 / |ξ|` entrywise.
    b1: Matrix,
    /// `|γ - diag(m) - H̃ᵀ diag(m) - diag(m) conj(H̃)| ≤ b2 / ξ²` entrywise.
    b2: Matrix,
    /// Panel width cap for frequency quadrature.
    panel_cap: f64,
}

impl Spectrum {
    pub fn new(model: &HawkesModel) -> Result<Self, SpectrumError> {
        let summary = model.validate()?;
        let d = summary.dimension;
        // |H̃_ij(ξ)| ≤ kappa_ij / |ξ|.
        let kappa = Matrix::from_fn(d, d, |i, j| model.kernels[i][j].fourier_decay_constant());
        let q = (Matrix::identity(d, d) - summary.reproduction_matrix.transpose())
            .try_inverse()
            .ok_or_else(|| SpectrumError::Domain("I - Mᵀ is singular".into()))?;
        let diag = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(&summary.mean_intensity));
        let g = &q * &diag * q.transpose();
        let dq_kappa = &diag * q.transpose() * &kappa;
        let b1 = kappa.transpose() * &g + &dq_kappa;
        let b2 = kappa.transpose() * &b1 + &dq_kappa * &kappa;
        let scale = model
            .kernels
            .iter()
            .flatten()
            .filter(|k| !k.is_zero())
            .map(|k| k.frequency_scale())
            .fold(f64::INFINITY, f64::min);
        let panel_cap = 0.25 * (1.0 - summary.spectral_radius) * scale;
        Ok(Self { kernels: model.kernels.clone(), summary, b1, b2, panel_cap })
    }

    pub fn dim(&self) -> usize {
        self.summary.dimension
    }

    pub fn summary(&self) -> &ModelSummary {
        &self.summary
    }

    pub fn mean_intensity(&self) -> &[f64] {
        &self.summary.mean_intensity
    }

    pub(crate) fn b1(&self) -> &Matrix {
        &self.b1
    }

    pub(crate) fn b2(&self) -> &Matrix {
        &self.b2
    }

    pub(crate) fn panel_cap(&self) -> f64 {
        self.panel_cap
    }

    pub(crate) fn kernel(&self, i: usize, j: usize) -> &Kernel {
        &self.kernels[i][j]
    }

    /// `H̃(ξ)` with entry `(i, j) = F h_ij(ξ)`.
    pub fn transfer(&self, xi: f64) -> Result<CMatrix, SpectrumError> {
        let d = self.dim();
        let mut h = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                h[(i, j)] = self.kernels[i][j].fourier(xi)?;
            }
        }
        Ok(h)
    }

    /// `γ(ξ) = Y diag(m) Yᴴ` with `Y = (I - H̃ᵀ)⁻¹` from an LU solve, filled
    /// from the upper triangle so it is Hermitian to the last bit.
    pub fn density(&self, xi: f64) -> Result<CMatrix, SpectrumError> {
        let (gamma, _) = self.density_and_transfer(xi)?;
        Ok(gamma)
    }

    pub(crate) fn density_and_transfer(&self, xi: f64) -> Result<(CMatrix, CMatrix), SpectrumError> {
        let d = self.dim();
        let h = self.transfer(xi)?;
        let a = CMatrix::identity(d, d) - h.transpose();
        let y = a.lu().solve(&CMatrix::identity(d, d)).ok_or(SpectrumError::Singular { xi })?;
        if y.iter().any(|z| !z.is_finite()) {
            return Err(SpectrumError::Singular { xi });
        }
        let m = &self.summary.mean_intensity;
        let mut gamma = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v: Complex64 = (0..d).map(|k| y[(i, k)] * y[(j, k)].conj() * m[k]).sum();
                if i == j {
                    gamma[(i, i)] = Complex64::new(v.re, 0.0);
                } else {
                    gamma[(i, j)] = v;
                    gamma[(j, i)] = v.conj();
                }
            }
        }
        Ok((gamma, h))
    }

    /// Real matrix `γ(0)`.
    pub fn at_zero(&self) -> Result<Matrix, SpectrumError> {
        let g = self.density(0.0)?;
        Ok(g.map(|z| z.re))
    }

    /// CSV rows `xi,i,j,re,im` over a frequency grid.
    pub fn write_grid_csv<W: Write>(&self, mut w: W, grid: &[f64], comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "xi,i,j,re,im")?;
        for &xi in grid {
            let g = self.density(xi).map_err(|e| io::Error::other(e.to_string()))?;
            for i in 0..self.dim() {
                for j in 0..self.dim() {
                    writeln!(w, "{xi},{i},{j},{},{}", g[(i, j)].re, g[(i, j)].im)?;
                }
            }
        }
        Ok(())
    }
}

pub fn bartlett_density(model: &HawkesModel, xi: f64) -> Result<SpectrumMatrix, SpectrumError> {
    let spectrum = Spectrum::new(model)?;
    Ok(SpectrumMatrix { xi, value: spectrum.density(xi)? })
}

/// `∫_a^b e^{-2πiζt} dt`.
pub(crate) fn interval_transform(zeta: f64, a: f64, b: f64) -> Complex64 {
    let len = b - a;
    if len <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let amp = len * crate::kernel::sinc(PI * zeta * len);
    Complex64::from_polar(amp, -PI * zeta * (a + b))
}
