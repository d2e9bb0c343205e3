//! Photon-number-basis density matrix of a coherent state whose phase is
//! drawn from a given distribution.
//!
//! `rho_nm = exp(-mu) mu^((n+m)/2) / sqrt(n! m!) * E[exp(i (n-m) theta)]`.
//! A uniform phase leaves only the Poisson diagonal.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circfit::WrappedVoigtParams;
use crate::error::{param, Result};
use crate::quad::integrate;
use crate::synth::PhaseDistribution;

pub const DEFAULT_N_MAX: i64 = 20;
const QUAD_TOL: f64 = 1e-10;

/// Phase law entering the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PhaseSource {
    Distribution(PhaseDistribution),
    Fitted(WrappedVoigtParams),
}

impl PhaseSource {
    fn density(&self, theta: f64) -> Option<f64> {
        match self {
            Self::Distribution(d) => d.density(theta),
            Self::Fitted(p) => Some(p.pdf(theta)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub dim: usize,
    pub mu_photon: f64,
    /// Row-major entries.
    pub entries: Vec<Complex64>,
    /// Circular moments `E[exp(i k theta)]` for `k = 0..dim`.
    pub moments: Vec<Complex64>,
    /// Poisson weight beyond the cutoff.
    pub trace_deficit: f64,
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Circular moments `E[exp(i k theta)]`, `k = 0..=k_max`, by adaptive
/// quadrature; exact for the point mass.
pub fn phase_moments(source: &PhaseSource, k_max: usize) -> Result<Vec<Complex64>> {
    if let PhaseSource::Distribution(d) = source {
        d.validate()?;
        if d.density(0.0).is_none() {
            return Ok((0..=k_max).map(|k| d.circular_moment(k as i64)).collect());
        }
    }
    if let PhaseSource::Fitted(p) = source {
        p.validate()?;
    }
    let f = |t: f64| source.density(t).unwrap_or(0.0);
    let norm = integrate(f, -PI, PI, QUAD_TOL);
    if (norm - 1.0).abs() > 1e-6 {
        return Err(param(format!("phase density integrates to {norm}, not 1")));
    }
    let mut out = vec![Complex64::new(1.0, 0.0)];
    for k in 1..=k_max {
        let kf = k as f64;
        let re = integrate(|t| f(t) * (kf * t).cos(), -PI, PI, QUAD_TOL);
        let im = integrate(|t| f(t) * (kf * t).sin(), -PI, PI, QUAD_TOL);
        out.push(Complex64::new(re, im));
    }
    Ok(out)
}

/// Builds the truncated density matrix for mean photon number `mu_photon`.
pub fn density_matrix(mu_photon: f64, source: &PhaseSource, n_max: i64) -> Result<DensityMatrix> {
    if n_max < 0 {
        return Err(param(format!("n_max must be non-negative, got {n_max}")));
    }
    if !(mu_photon >= 0.0 && mu_photon.is_finite()) {
        return Err(param(format!("mean photon number must be >= 0, got {mu_photon}")));
    }
    let dim = n_max as usize + 1;
    let moments = phase_moments(source, dim - 1)?;
    Ok(from_moments(mu_photon, moments))
}

/// Density matrix from precomputed circular moments (`moments[0]` must be 1).
pub fn from_moments(mu_photon: f64, moments: Vec<Complex64>) -> DensityMatrix {
    let dim = moments.len();
    let lf = ln_factorials(dim);
    let amp: Vec<f64> = (0..dim)
        .map(|n| {
            if mu_photon == 0.0 {
                if n == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (0.5 * (n as f64 * mu_photon.ln() - lf[n] - mu_photon)).exp()
            }
        })
        .collect();
    let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
    for n in 0..dim {
        for m in 0..dim {
            let mom = if n >= m {
                moments[n - m]
            } else {
                moments[m - n].conj()
            };
            entries[n * dim + m] = amp[n] * amp[m] * mom;
        }
    }
    let kept: f64 = amp.iter().map(|a| a * a).sum();
    DensityMatrix {
        dim,
        mu_photon,
        entries,
        moments,
        trace_deficit: (1.0 - kept).max(0.0),
    }
}

impl DensityMatrix {
    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.entries[n * self.dim + m]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|n| self.get(n, n).re).sum()
    }

    /// Largest `|rho_nm - conj(rho_mn)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 0..self.dim {
            for m in 0..self.dim {
                worst = worst.max((self.get(n, m) - self.get(m, n).conj()).norm());
            }
        }
        worst
    }

    pub fn max_offdiag(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 0..self.dim {
            for m in 0..self.dim {
                if n != m {
                    worst = worst.max(self.get(n, m).norm());
                }
            }
        }
        worst
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = self.to_matrix();
        let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

/// Frobenius norm of the off-diagonal part.
pub fn offdiag_norm(rho: &DensityMatrix) -> f64 {
    let mut s = 0.0;
    for n in 0..rho.dim {
        for m in 0..rho.dim {
            if n != m {
                s += rho.get(n, m).norm_sqr();
            }
        }
    }
    s.sqrt()
}
