//! Wrapped Voigt density and its least-squares fit to phase histograms.
//!
//! The density is the sum of 2π-translates of a Voigt profile (the
//! convolution of a Gaussian of standard deviation `sigma` with a Cauchy
//! distribution of scale `gamma`). Images with `|k| <= K` are summed exactly,
//! where `K` is at least `k_max` and large enough that the Gaussian part of
//! every omitted image is negligible. The remaining Cauchy tail is added in
//! closed form so the density stays normalized even for heavy tails.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circular::wrap_angle;
use crate::error::{param, Error, Result};
use crate::faddeeva::{faddeeva, faddeeva_with_derivative};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
const TWO_PI: f64 = 2.0 * PI;

/// Default number of 2π images on each side.
pub const DEFAULT_K_MAX: u32 = 10;
/// Minimum total count accepted by [`fit_wrapped_voigt`].
pub const MIN_FIT_SAMPLES: u64 = 100;
/// Default histogram resolution.
pub const DEFAULT_BINS: usize = 64;

/// Parameters of a wrapped Voigt density.
///
/// `mu_v` is the location of the unwrapped profile (its median), `sigma` the
/// Gaussian standard deviation and `gamma` the Cauchy scale, all in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrappedVoigtParams {
    pub mu_v: f64,
    pub sigma: f64,
    pub gamma: f64,
    #[serde(default = "default_k_max")]
    pub k_max: u32,
}

fn default_k_max() -> u32 {
    DEFAULT_K_MAX
}

impl WrappedVoigtParams {
    pub fn new(mu_v: f64, sigma: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            mu_v: wrap_angle(mu_v),
            sigma,
            gamma,
            k_max: DEFAULT_K_MAX,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_k_max(mut self, k_max: u32) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_v.is_finite() && self.sigma.is_finite() && self.gamma.is_finite()) {
            return Err(param("wrapped Voigt parameters must be finite"));
        }
        if self.sigma < 0.0 || self.gamma < 0.0 {
            return Err(param(format!(
                "sigma and gamma must be non-negative (got {}, {})",
                self.sigma, self.gamma
            )));
        }
        if self.sigma == 0.0 && self.gamma == 0.0 {
            return Err(Error::DegenerateProfile);
        }
        Ok(())
    }

    /// Density at `phi`.
    pub fn pdf(&self, phi: f64) -> f64 {
        wrapped_eval(phi, self, false).0
    }
}

/// Voigt profile located at `mu_v`, evaluated at `phi` (no wrapping).
pub fn voigt_pdf(phi: f64, mu_v: f64, sigma: f64, gamma: f64) -> Result<f64> {
    if sigma < 0.0 || gamma < 0.0 || !sigma.is_finite() || !gamma.is_finite() {
        return Err(param(format!(
            "sigma and gamma must be finite and non-negative (got {sigma}, {gamma})"
        )));
    }
    if sigma == 0.0 && gamma == 0.0 {
        return Err(Error::DegenerateProfile);
    }
    Ok(voigt_unchecked(phi - mu_v, sigma, gamma))
}

#[inline]
fn lorentz(x: f64, gamma: f64) -> f64 {
    gamma / (PI * (x * x + gamma * gamma))
}

#[inline]
fn voigt_unchecked(x: f64, sigma: f64, gamma: f64) -> f64 {
    if sigma == 0.0 {
        return lorentz(x, gamma);
    }
    let z = Complex64::new(x, gamma) / (sigma * SQRT_2);
    faddeeva(z).re / (sigma * SQRT_2PI)
}

/// Wrapped Voigt density `sum_k V(phi + 2 pi k)`.
pub fn wrapped_voigt_pdf(phi: f64, params: &WrappedVoigtParams) -> Result<f64> {
    params.validate()?;
    Ok(wrapped_eval(phi, params, false).0)
}

/// Number of images summed on each side.
fn image_count(p: &WrappedVoigtParams) -> i64 {
    let gaussian_reach = ((TWO_PI + 40.0 * p.sigma) / TWO_PI).ceil() as i64;
    (p.k_max as i64).max(gaussian_reach)
}

/// Sum over `k > K` of the large-`x` expansion of the Voigt profile,
/// `(gamma / pi) (1 / (x^2 + gamma^2) + 3 sigma^2 / x^4)` with `x = 2 pi k + d`.
/// The Cauchy part uses the midpoint Euler-Maclaurin formula with its first
/// correction; the `sigma^2` part only its integral. Valid for
/// `2 pi (K + 1/2) + d > 0`.
fn voigt_image_tail(d: f64, sigma: f64, gamma: f64, k: i64) -> f64 {
    let u0 = TWO_PI * (k as f64 + 0.5) + d;
    let integral = if gamma < 1e-12 {
        1.0 / u0
    } else {
        (gamma / u0).atan() / gamma
    } / TWO_PI;
    let q = u0 * u0 + gamma * gamma;
    let g_prime = -2.0 * TWO_PI * u0 / (q * q);
    let gaussian_broadening = sigma * sigma / (TWO_PI * u0 * u0 * u0);
    gamma / PI * (integral + g_prime / 24.0 + gaussian_broadening)
}

/// Closed-form contribution of the images with `|k| > K`, where the Voigt
/// profile is in its Cauchy-like tail.
fn tail_density(d: f64, sigma: f64, gamma: f64, k: i64) -> f64 {
    if gamma == 0.0 {
        return 0.0;
    }
    voigt_image_tail(d, sigma, gamma, k) + voigt_image_tail(-d, sigma, gamma, k)
}

/// Largest Fourier order used by the series form.
const MAX_FOURIER_TERMS: usize = 48;
/// Series terms are dropped once `exp(-exponent)` is below double precision.
const FOURIER_CUTOFF: f64 = 40.0;

/// Number of Fourier terms needed for full precision, if the series form is
/// cheap enough to use.
fn fourier_terms(p: &WrappedVoigtParams) -> Option<usize> {
    (1..=MAX_FOURIER_TERMS).find(|&n| {
        let n = n as f64;
        0.5 * n * n * p.sigma * p.sigma + n * p.gamma > FOURIER_CUTOFF
    })
}

/// Density and (optionally) its gradient with respect to `(mu_v, sigma, gamma)`.
pub(crate) fn wrapped_eval(phi: f64, p: &WrappedVoigtParams, grad: bool) -> (f64, [f64; 3]) {
    match fourier_terms(p) {
        Some(n) => wrapped_fourier(phi, p, n, grad),
        None => wrapped_images(phi, p, grad),
    }
}

/// Series form `(1 + 2 sum_n exp(-n^2 sigma^2 / 2 - n gamma) cos(n d)) / 2 pi`,
/// exact for the untruncated image sum.
fn wrapped_fourier(phi: f64, p: &WrappedVoigtParams, terms: usize, grad: bool) -> (f64, [f64; 3]) {
    let d = wrap_angle(phi - p.mu_v);
    let step = Complex64::from_polar(1.0, d);
    let mut rot = Complex64::new(1.0, 0.0);
    let mut f = 1.0;
    let mut g = [0.0; 3];
    for n in 1..=terms {
        rot *= step;
        let nf = n as f64;
        let a = 2.0 * (-0.5 * nf * nf * p.sigma * p.sigma - nf * p.gamma).exp();
        f += a * rot.re;
        if grad {
            g[0] += a * nf * rot.im;
            g[1] -= a * nf * nf * p.sigma * rot.re;
            g[2] -= a * nf * rot.re;
        }
    }
    (f / TWO_PI, g.map(|x| x / TWO_PI))
}

fn wrapped_images(phi: f64, p: &WrappedVoigtParams, grad: bool) -> (f64, [f64; 3]) {
    let k_img = image_count(p);
    let d0 = wrap_angle(phi - p.mu_v);
    let mut f = 0.0;
    let mut g = [0.0; 3];
    if p.sigma == 0.0 {
        for k in -k_img..=k_img {
            let x = d0 + TWO_PI * k as f64;
            let q = x * x + p.gamma * p.gamma;
            f += p.gamma / (PI * q);
            if grad {
                g[0] += 2.0 * p.gamma * x / (PI * q * q);
                g[2] += (x * x - p.gamma * p.gamma) / (PI * q * q);
            }
        }
    } else {
        let s2 = p.sigma * SQRT_2;
        let norm = 1.0 / (p.sigma * SQRT_2PI);
        for k in -k_img..=k_img {
            let x = d0 + TWO_PI * k as f64;
            let z = Complex64::new(x, p.gamma) / s2;
            if grad {
                let (w, dw) = faddeeva_with_derivative(z);
                let v = w.re * norm;
                f += v;
                g[0] += -dw.re / s2 * norm;
                g[1] += (-(dw * z).re / p.sigma) * norm - v / p.sigma;
                g[2] += -dw.im / s2 * norm;
            } else {
                f += faddeeva(z).re * norm;
            }
        }
    }
    if p.gamma > 0.0 || grad {
        let (s, gm) = (p.sigma, p.gamma);
        f += tail_density(d0, s, gm, k_img);
        if grad {
            let h = 1e-6;
            let dd = (tail_density(d0 + h, s, gm, k_img) - tail_density(d0 - h, s, gm, k_img))
                / (2.0 * h);
            let ds = (tail_density(d0, s + h, gm, k_img) - tail_density(d0, (s - h).max(0.0), gm, k_img))
                / (s + h - (s - h).max(0.0));
            let lo = (gm - h).max(0.0);
            let dg = (tail_density(d0, s, gm + h, k_img) - tail_density(d0, s, lo, k_img))
                / (gm + h - lo);
            g[0] -= dd;
            g[1] += ds;
            g[2] += dg;
        }
    }
    (f, g)
}

/// Equal-width (by default) histogram of phases over `[-pi, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl PhaseHistogram {
    /// Bins phases (wrapped into `[-pi, pi)`) into `bins` equal-width bins.
    pub fn from_phases(phases: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(param("histogram needs at least one bin"));
        }
        let width = TWO_PI / bins as f64;
        let bin_edges = (0..=bins).map(|b| -PI + b as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for &p in phases {
            let idx = ((wrap_angle(p) + PI) / width).floor() as usize;
            counts[idx.min(bins - 1)] += 1;
        }
        Ok(Self {
            bin_edges,
            counts,
            total: phases.len() as u64,
        })
    }

    /// Builds a histogram from explicit edges and counts.
    pub fn from_counts(bin_edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if bin_edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(param("need B+1 edges for B counts"));
        }
        if bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(param("bin edges must be strictly increasing"));
        }
        let total = counts.iter().sum();
        Ok(Self {
            bin_edges,
            counts,
            total,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Sum of squared residuals between the model, scaled to counts, and the
/// histogram: `sum_b (N * width_b * f_w(center_b) - c_b)^2`.
pub fn residual_sum(params: &WrappedVoigtParams, hist: &PhaseHistogram) -> f64 {
    let n = hist.total as f64;
    hist.centers()
        .iter()
        .zip(hist.widths())
        .zip(&hist.counts)
        .map(|((&c, w), &count)| {
            let r = n * w * params.pdf(c) - count as f64;
            r * r
        })
        .sum()
}

/// Residual weighting used by the fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Residuals divided by `sqrt(max(c_b, 1))`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub max_iterations: usize,
    /// Number of rotated starting locations, spaced by `2 pi / n`.
    pub starts: usize,
    pub k_max: u32,
    pub sigma_bounds: (f64, f64),
    pub gamma_max: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            weighting: Weighting::Unweighted,
            max_iterations: 500,
            starts: 4,
            k_max: DEFAULT_K_MAX,
            sigma_bounds: (1e-3, 10.0),
            gamma_max: 20.0,
        }
    }
}

/// Outcome of a wrapped Voigt fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: WrappedVoigtParams,
    /// Unweighted sum of squared residuals in count units.
    pub s_squared: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// `S^2 / (B - 3) * (J^T J)^-1` in `(mu_v, sigma, gamma)` order, when the
    /// normal matrix is invertible.
    pub covariance: Option<[[f64; 3]; 3]>,
    /// Largest cosine between the residual vector and a free Jacobian column.
    pub gradient_norm: f64,
}

const STEP_TOL: f64 = 1e-8;
const REL_COST_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-4;

struct Problem<'a> {
    centers: Vec<f64>,
    scale: Vec<f64>,
    counts: &'a [u64],
    weights: Vec<f64>,
    k_max: u32,
    lower: [f64; 3],
    upper: [f64; 3],
}

impl Problem<'_> {
    fn params(&self, p: &[f64; 3]) -> WrappedVoigtParams {
        WrappedVoigtParams {
            mu_v: wrap_angle(p[0]),
            sigma: p[1],
            gamma: p[2],
            k_max: self.k_max,
        }
    }

    fn residuals(&self, p: &[f64; 3], jac: Option<&mut Vec<[f64; 3]>>) -> (Vec<f64>, f64) {
        let wp = self.params(p);
        let want_grad = jac.is_some();
        let mut rows = Vec::with_capacity(if want_grad { self.centers.len() } else { 0 });
        let mut r = Vec::with_capacity(self.centers.len());
        for (i, &c) in self.centers.iter().enumerate() {
            let (f, g) = wrapped_eval(c, &wp, want_grad);
            let w = self.weights[i];
            r.push(w * (self.scale[i] * f - self.counts[i] as f64));
            if want_grad {
                rows.push([
                    w * self.scale[i] * g[0],
                    w * self.scale[i] * g[1],
                    w * self.scale[i] * g[2],
                ]);
            }
        }
        if let Some(j) = jac {
            *j = rows;
        }
        let cost = r.iter().map(|x| x * x).sum();
        (r, cost)
    }

    fn clamp(&self, p: [f64; 3]) -> [f64; 3] {
        let mut q = p;
        q[0] = wrap_angle(q[0]);
        for i in 1..3 {
            q[i] = q[i].clamp(self.lower[i], self.upper[i]);
        }
        q
    }

    /// Projected scaled gradient (MINPACK-style orthogonality measure).
    fn gradient_measure(&self, p: &[f64; 3], r: &[f64], jac: &[[f64; 3]]) -> f64 {
        let rnorm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rnorm == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            let gi: f64 = jac.iter().zip(r).map(|(row, ri)| row[i] * ri).sum();
            let at_lower = i > 0 && p[i] <= self.lower[i] && gi > 0.0;
            let at_upper = i > 0 && p[i] >= self.upper[i] && gi < 0.0;
            if at_lower || at_upper {
                continue;
            }
            let cnorm = jac.iter().map(|row| row[i] * row[i]).sum::<f64>().sqrt();
            if cnorm > 0.0 {
                worst = worst.max(gi.abs() / (cnorm * rnorm));
            }
        }
        worst
    }
}

struct LmOutcome {
    p: [f64; 3],
    cost: f64,
    converged: bool,
    iterations: usize,
    grad: f64,
    jtj: Matrix3<f64>,
}

fn normal_equations(r: &[f64], jac: &[[f64; 3]]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut a = Matrix3::zeros();
    let mut g = Vector3::zeros();
    for (row, &ri) in jac.iter().zip(r) {
        for i in 0..3 {
            g[i] += row[i] * ri;
            for j in 0..3 {
                a[(i, j)] += row[i] * row[j];
            }
        }
    }
    (a, g)
}

fn levenberg_marquardt(prob: &Problem, start: [f64; 3], max_iter: usize) -> LmOutcome {
    let mut p = prob.clamp(start);
    let mut jac = Vec::new();
    let (mut r, mut cost) = prob.residuals(&p, Some(&mut jac));
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let (mut a, mut g) = normal_equations(&r, &jac);
    let mut grad = prob.gradient_measure(&p, &r, &jac);

    while iterations < max_iter {
        if grad <= GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let max_diag = a.diagonal().max().max(1e-300);
        let mut damped = a;
        let mut rhs = -g;
        for i in 0..3 {
            damped[(i, i)] += lambda * a[(i, i)].max(1e-9 * max_diag);
        }
        // Variables pinned at a bound with the descent direction pointing
        // outward are held fixed for this step.
        for i in 1..3 {
            let pinned = (p[i] <= prob.lower[i] && g[i] > 0.0) || (p[i] >= prob.upper[i] && g[i] < 0.0);
            if pinned {
                for j in 0..3 {
                    damped[(i, j)] = 0.0;
                    damped[(j, i)] = 0.0;
                }
                damped[(i, i)] = 1.0;
                rhs[i] = 0.0;
            }
        }
        let step = match damped.lu().solve(&rhs) {
            Some(s) => s,
            None => {
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
                continue;
            }
        };
        let trial = prob.clamp([p[0] + step[0], p[1] + step[1], p[2] + step[2]]);
        let (r_new, cost_new) = prob.residuals(&trial, None);
        if cost_new < cost {
            let moved = (wrap_angle(trial[0] - p[0]).abs())
                .max((trial[1] - p[1]).abs())
                .max((trial[2] - p[2]).abs());
            let rel = (cost - cost_new) / cost.max(1e-300);
            p = trial;
            cost = cost_new;
            drop(r_new);
            (r, _) = prob.residuals(&p, Some(&mut jac));
            (a, g) = normal_equations(&r, &jac);
            grad = prob.gradient_measure(&p, &r, &jac);
            lambda = (lambda / 10.0).max(1e-12);
            if moved < STEP_TOL || rel < REL_COST_TOL {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                converged = grad <= GRAD_TOL.sqrt();
                break;
            }
        }
    }
    LmOutcome {
        p,
        cost,
        converged,
        iterations,
        grad,
        jtj: a,
    }
}

/// Starting point from the circular mean and standard deviation of the
/// histogram, with `gamma = sigma / 4`.
pub fn initial_guess(hist: &PhaseHistogram) -> WrappedVoigtParams {
    let centers = hist.centers();
    let mut expanded_c = 0.0;
    let mut expanded_s = 0.0;
    for (c, &n) in centers.iter().zip(&hist.counts) {
        expanded_c += n as f64 * c.cos();
        expanded_s += n as f64 * c.sin();
    }
    let total = hist.total.max(1) as f64;
    let mu = expanded_s.atan2(expanded_c);
    let r = (expanded_c.hypot(expanded_s) / total).clamp(1e-12, 1.0);
    let sigma = if r >= 1.0 {
        0.05
    } else {
        (-2.0 * r.ln()).sqrt().clamp(0.05, 5.0)
    };
    WrappedVoigtParams {
        mu_v: wrap_angle(mu),
        sigma,
        gamma: sigma / 4.0,
        k_max: DEFAULT_K_MAX,
    }
}

/// Fits the wrapped Voigt model to a histogram by damped least squares from
/// several rotated starting locations and returns the best fit.
pub fn fit_wrapped_voigt(
    hist: &PhaseHistogram,
    init: Option<WrappedVoigtParams>,
    opts: &FitOptions,
) -> Result<FitResult> {
    if hist.total < MIN_FIT_SAMPLES {
        return Err(Error::FitRefused(format!(
            "{} samples is below the minimum of {MIN_FIT_SAMPLES}",
            hist.total
        )));
    }
    if hist.occupied_bins() < 3 {
        return Err(Error::FitRefused(
            "data occupy fewer than 3 histogram bins".into(),
        ));
    }
    let n = hist.total as f64;
    let scale = hist.widths().iter().map(|w| n * w).collect();
    let weights = match opts.weighting {
        Weighting::Unweighted => vec![1.0; hist.n_bins()],
        Weighting::Poisson => hist
            .counts
            .iter()
            .map(|&c| 1.0 / (c.max(1) as f64).sqrt())
            .collect(),
    };
    let (s_lo, s_hi) = opts.sigma_bounds;
    let prob = Problem {
        centers: hist.centers(),
        scale,
        counts: &hist.counts,
        weights,
        k_max: opts.k_max,
        lower: [f64::NEG_INFINITY, s_lo, 0.0],
        upper: [f64::INFINITY, s_hi, opts.gamma_max],
    };
    let base = init.unwrap_or_else(|| initial_guess(hist));
    let starts = opts.starts.max(1);
    let mut best: Option<LmOutcome> = None;
    let mut total_iterations = 0;
    for j in 0..starts {
        let mu0 = base.mu_v + TWO_PI * j as f64 / starts as f64;
        let out = levenberg_marquardt(&prob, [mu0, base.sigma, base.gamma], opts.max_iterations);
        total_iterations += out.iterations;
        let better = match &best {
            None => true,
            Some(b) => (out.converged && !b.converged) || (out.converged == b.converged && out.cost < b.cost),
        };
        if better {
            best = Some(out);
        }
    }
    let best = best.expect("at least one start");
    let params = prob.params(&best.p);
    let s_squared = residual_sum(&params, hist);
    let dof = hist.n_bins().saturating_sub(3).max(1) as f64;
    let covariance = best
        .jtj
        .try_inverse()
        .map(|inv| {
            let s2 = best.cost / dof;
            let mut out = [[0.0; 3]; 3];
            for (i, row) in out.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = s2 * inv[(i, j)];
                }
            }
            out
        })
        .filter(|c| c.iter().flatten().all(|v| v.is_finite()));
    let result = FitResult {
        params,
        s_squared,
        converged: best.converged,
        n_iterations: total_iterations,
        covariance,
        gradient_norm: best.grad,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NonConvergence {
            iterations: total_iterations,
            best: Box::new(result),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn gaussian_limit_at_center() {
        let s = 0.37;
        let v = voigt_pdf(0.2, 0.2, s, 0.0).unwrap();
        assert!((v - 1.0 / (s * SQRT_2PI)).abs() < 1e-9);
    }

    #[test]
    fn cauchy_limit() {
        for &x in &[0.0, 0.1, 0.5, 2.0] {
            let v = voigt_pdf(x, 0.0, 1e-6, 0.3).unwrap();
            let l = 0.3 / (PI * (x * x + 0.09));
            assert!((v - l).abs() < 1e-4, "x={x}: {v} vs {l}");
        }
    }

    #[test]
    fn degenerate_and_negative_parameters_rejected() {
        assert!(matches!(voigt_pdf(0.0, 0.0, 0.0, 0.0), Err(Error::DegenerateProfile)));
        assert!(matches!(voigt_pdf(0.0, 0.0, -1.0, 0.1), Err(Error::Parameter(_))));
        assert!(WrappedVoigtParams::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn flat_limit() {
        let p = WrappedVoigtParams::new(0.3, 50.0, 0.0).unwrap();
        for i in 0..16 {
            let phi = -PI + i as f64 * 0.39;
            assert!((p.pdf(phi) - 1.0 / TWO_PI).abs() < 1e-3);
        }
    }

    #[test]
    fn normalization_with_heavy_tails() {
        for &(mu, s, g) in &[(0.3, 0.4, 0.2), (-2.0, 0.05, 0.5), (1.0, 1.5, 2.0), (3.0, 0.01, 0.02)] {
            let p = WrappedVoigtParams::new(mu, s, g).unwrap();
            let total = simpson(|x| p.pdf(x), -PI, PI, 20_000);
            assert!((total - 1.0).abs() < 1e-6, "({mu},{s},{g}): {total}");
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let p = WrappedVoigtParams::new(0.4, 0.3, 0.15).unwrap();
        let phi = -1.1;
        let (_, g) = wrapped_eval(phi, &p, true);
        let h = 1e-6;
        let shift = |dm: f64, ds: f64, dg: f64| {
            let q = WrappedVoigtParams {
                mu_v: p.mu_v + dm,
                sigma: p.sigma + ds,
                gamma: p.gamma + dg,
                ..p
            };
            wrapped_eval(phi, &q, false).0
        };
        let fd = [
            (shift(h, 0.0, 0.0) - shift(-h, 0.0, 0.0)) / (2.0 * h),
            (shift(0.0, h, 0.0) - shift(0.0, -h, 0.0)) / (2.0 * h),
            (shift(0.0, 0.0, h) - shift(0.0, 0.0, -h)) / (2.0 * h),
        ];
        for i in 0..3 {
            assert!((g[i] - fd[i]).abs() < 1e-6, "component {i}: {} vs {}", g[i], fd[i]);
        }
    }

    #[test]
    fn series_and_image_sums_agree() {
        for &(s, g) in &[(0.3, 0.1), (0.8, 0.0), (1.5, 0.4), (0.0, 1.2), (2.5, 3.0)] {
            let p = WrappedVoigtParams::new(0.7, s, g).unwrap();
            let n = fourier_terms(&p).expect("series applies");
            for i in 0..24 {
                let phi = -PI + i as f64 * 0.26;
                let (a, ga) = wrapped_fourier(phi, &p, n, true);
                let (b, gb) = wrapped_images(phi, &p, true);
                assert!((a - b).abs() < 1e-8, "({s},{g}) phi={phi}: {a} vs {b}");
                for k in 0..3 {
                    assert!((ga[k] - gb[k]).abs() < 1e-6, "({s},{g}) grad {k}");
                }
            }
        }
    }

    #[test]
    fn residual_sum_definition() {
        let p = WrappedVoigtParams::new(0.0, 0.8, 0.1).unwrap();
        let bins = 16;
        let total = 10_000u64;
        let width = TWO_PI / bins as f64;
        let centers: Vec<f64> = (0..bins).map(|b| -PI + (b as f64 + 0.5) * width).collect();
        let model: Vec<f64> = centers.iter().map(|&c| total as f64 * width * p.pdf(c)).collect();
        let edges: Vec<f64> = (0..=bins).map(|b| -PI + b as f64 * width).collect();
        // Non-integer model counts cannot be matched exactly by a histogram, so
        // compare against the closed form directly.
        let counts: Vec<u64> = model.iter().map(|m| m.round() as u64).collect();
        let hist = PhaseHistogram {
            bin_edges: edges,
            counts: counts.clone(),
            total,
        };
        let want: f64 = model
            .iter()
            .zip(&counts)
            .map(|(m, &c)| (m - c as f64).powi(2))
            .sum();
        assert!((residual_sum(&p, &hist) - want).abs() < 1e-9);
    }

    #[test]
    fn fit_refuses_small_or_degenerate_samples() {
        let h = PhaseHistogram::from_phases(&vec![0.1; 50], 64).unwrap();
        assert!(matches!(
            fit_wrapped_voigt(&h, None, &FitOptions::default()),
            Err(Error::FitRefused(_))
        ));
        let h = PhaseHistogram::from_phases(&vec![0.1; 5000], 64).unwrap();
        assert!(matches!(
            fit_wrapped_voigt(&h, None, &FitOptions::default()),
            Err(Error::FitRefused(_))
        ));
    }

    #[test]
    fn histogram_counts_sum_to_total() {
        let phases: Vec<f64> = (0..1000).map(|i| i as f64 * 0.731).collect();
        let h = PhaseHistogram::from_phases(&phases, 64).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), h.total);
        assert!(h.bin_edges.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(h.bin_edges.len(), 65);
    }
}
