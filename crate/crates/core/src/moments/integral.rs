//! The Gaussian moment integral
//!
//! ```text
//! I(Σ, ε, α, d) = ∫_{R^{2d}} exp(−½ yᵀ((Σ + εI) ⊗ I_d) y) (|y_1| |y_2|)^{2α} dy
//! ```
//!
//! For `d ≤ 2` the angular parts are integrated exactly: with `A = Σ + εI`,
//! rescaling `x_i = √A_ii |y_i|` and `c = A_12 / √(A_11 A_22)` leaves
//!
//! ```text
//! I = (A_11 A_22)^{−(d+2α)/2} ∫∫ (x_1 x_2)^{d−1+2α} e^{−(x_1²+x_2²)/2} K_d(c x_1 x_2) dx
//! ```
//!
//! with `K_1(z) = 4 cosh z` and `K_2(z) = 4π² I_0(z)`, which a tensor exp-sinh
//! rule handles to near machine precision. For `d ≥ 3` the integral is a
//! Gaussian expectation and is estimated by Monte Carlo with the control
//! variate `|y_1|²|y_2|²`. Antithetic pairs would be useless here since the
//! integrand is even.

use rayon::prelude::*;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};
use crate::moments::SigmaMatrix;
use crate::quadrature::exp_sinh_rule;
use crate::rng::{self, Domain};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentIntegral {
    pub value: f64,
    /// Step-halving difference for quadrature, standard error for Monte Carlo.
    pub error: f64,
    /// `2^{d(2α+1)} Γ(α+½)^{2d} / det(Σ+εI)^{d/2+dα}`.
    pub closed_form: f64,
    pub method: MomentMethod,
}

impl MomentIntegral {
    pub fn ratio(&self) -> f64 {
        self.value / self.closed_form
    }
}

/// Monte Carlo settings for `d ≥ 3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self { samples: 1_000_000, seed: 0 }
    }
}

pub fn moment_closed_form(det: f64, alpha: f64, d: usize) -> f64 {
    let d = d as f64;
    let log = d * (2.0 * alpha + 1.0) * std::f64::consts::LN_2 + 2.0 * d * ln_gamma(alpha + 0.5) - (d / 2.0 + d * alpha) * det.ln();
    log.exp()
}

pub fn gaussian_moment_integral<T: Real>(sigma: &SigmaMatrix<T>, eps: T, alpha: f64, d: usize) -> Result<MomentIntegral> {
    gaussian_moment_integral_with(sigma, eps, alpha, d, &MomentOptions::default())
}

pub fn gaussian_moment_integral_with<T: Real>(
    sigma: &SigmaMatrix<T>,
    eps: T,
    alpha: f64,
    d: usize,
    options: &MomentOptions,
) -> Result<MomentIntegral> {
    if !(0.5..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter { name: "alpha", reason: format!("must lie in [0.5, 1), got {alpha}") });
    }
    if !(eps > T::zero()) {
        return Err(Error::InvalidParameter { name: "eps", reason: "must be positive".into() });
    }
    if d == 0 {
        return Err(Error::InvalidParameter { name: "d", reason: "must be at least 1".into() });
    }
    let reg = sigma.regularized(eps);
    let (a, b, m) = (reg.lambda.to_f64_lossy(), reg.rho.to_f64_lossy(), reg.mu.to_f64_lossy());
    let det = a * b - m * m;
    if !(a > 0.0 && b > 0.0 && det > 0.0) {
        return Err(Error::NotPositiveDefinite { minor: if a > 0.0 { 2 } else { 1 } });
    }
    let closed_form = moment_closed_form(det, alpha, d);
    let (value, error, method) = if d <= 2 {
        let (v, e) = radial_quadrature(a, b, m, alpha, d);
        (v, e, MomentMethod::Quadrature)
    } else {
        let (v, e) = monte_carlo(a, b, m, alpha, d, options);
        (v, e, MomentMethod::MonteCarlo)
    };
    Ok(MomentIntegral { value, error, closed_form, method })
}

const BESSEL_SWITCH: f64 = 60.0;

/// `ln I_0(z)` for `z ≥ 0`.
fn ln_bessel_i0(z: f64) -> f64 {
    if z < BESSEL_SWITCH {
        ln_i0_series(z)
    } else {
        ln_i0_asymptotic(z)
    }
}

fn ln_i0_series(z: f64) -> f64 {
    let q = z * z / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..300 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum.ln()
}

fn ln_i0_asymptotic(z: f64) -> f64 {
    // coefficients ((2k−1)!!)² / k!
    const C: [f64; 7] = [1.0, 1.0, 4.5, 37.5, 459.375, 7441.875, 150_077.812_5];
    let r = 1.0 / (8.0 * z);
    let series = C.iter().rev().fold(0.0, |acc, c| acc * r + c);
    z - 0.5 * (2.0 * std::f64::consts::PI * z).ln() + series.ln()
}

/// `ln K_d(z)`, the angular integral of `e^{−z θ₁·θ₂}` over two unit spheres.
fn ln_angular(d: usize, z: f64) -> f64 {
    let z = z.abs();
    match d {
        1 => z + (2.0 * (1.0 + (-2.0 * z).exp())).ln(),
        2 => (4.0 * std::f64::consts::PI * std::f64::consts::PI).ln() + ln_bessel_i0(z),
        _ => unreachable!("angular reduction is only used for d ≤ 2"),
    }
}

fn radial_quadrature(a: f64, b: f64, m: f64, alpha: f64, d: usize) -> (f64, f64) {
    let c = m / (a * b).sqrt();
    let p = (d - 1) as f64 + 2.0 * alpha;
    let rule = |h: f64| {
        let (xs, ws) = exp_sinh_rule(h, -4.0, 3.0);
        let logs: Vec<f64> = xs.iter().map(|x| p * x.ln() - 0.5 * x * x).collect();
        let mut total = 0.0;
        for i in 0..xs.len() {
            let mut row = 0.0;
            for j in 0..xs.len() {
                row += ws[j] * (logs[i] + logs[j] + ln_angular(d, c * xs[i] * xs[j])).exp();
            }
            total += ws[i] * row;
        }
        total
    };
    let prefactor = (a * b).powf(-(d as f64 + 2.0 * alpha) / 2.0);
    let coarse = rule(1.0 / 16.0) * prefactor;
    let fine = rule(1.0 / 32.0) * prefactor;
    (fine, (fine - coarse).abs())
}

const MC_CHUNK: usize = 1 << 14;

/// Sample `(y_1, y_2) ~ N(0, A^{-1} ⊗ I_d)` and average `(|y_1||y_2|)^{2α}`.
fn monte_carlo(a: f64, b: f64, m: f64, alpha: f64, d: usize, options: &MomentOptions) -> (f64, f64) {
    let det = a * b - m * m;
    let (c11, c22, c12) = (b / det, a / det, -m / det);
    // Cholesky of A^{-1}
    let l11 = c11.sqrt();
    let l21 = c12 / l11;
    let l22 = (c22 - l21 * l21).max(0.0).sqrt();
    let df = d as f64;
    let cv_mean = df * df * c11 * c22 + 2.0 * df * c12 * c12;

    let chunks = options.samples.div_ceil(MC_CHUNK).max(1);
    // (Σf, Σg, Σf², Σg², Σfg, n)
    let sums: Vec<[f64; 6]> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = rng::domain_rng(options.seed, Domain::Moments, ci as u64);
            let count = MC_CHUNK.min(options.samples - ci * MC_CHUNK);
            let mut acc = [0.0; 6];
            for _ in 0..count {
                let (mut r1, mut r2) = (0.0, 0.0);
                for _ in 0..d {
                    let z1: f64 = rng::standard_normal(&mut rng);
                    let z2: f64 = rng::standard_normal(&mut rng);
                    let y1 = l11 * z1;
                    let y2 = l21 * z1 + l22 * z2;
                    r1 += y1 * y1;
                    r2 += y2 * y2;
                }
                let f = (r1 * r2).powf(alpha);
                let g = r1 * r2;
                acc[0] += f;
                acc[1] += g;
                acc[2] += f * f;
                acc[3] += g * g;
                acc[4] += f * g;
                acc[5] += 1.0;
            }
            acc
        })
        .collect();
    let mut s = [0.0; 6];
    for c in &sums {
        for k in 0..6 {
            s[k] += c[k];
        }
    }
    let n = s[5];
    let (mf, mg) = (s[0] / n, s[1] / n);
    let vf = s[2] / n - mf * mf;
    let vg = s[3] / n - mg * mg;
    let cfg = s[4] / n - mf * mg;
    let beta = if vg > 0.0 { cfg / vg } else { 0.0 };
    let mean = mf - beta * (mg - cv_mean);
    let var = (vf - 2.0 * beta * cfg + beta * beta * vg).max(0.0);
    let prefactor = (2.0 * std::f64::consts::PI).powf(df) * det.powf(-df / 2.0);
    (prefactor * mean, prefactor * (var / (n - 1.0)).sqrt())
}

/// `∫_{R^d} |y|^{2α} e^{−a|y|²/2} dy`: the one-block factor of the integral for diagonal `Σ`.
pub fn radial_moment(a: f64, alpha: f64, d: usize) -> f64 {
    let df = d as f64;
    let sphere = 2.0 * std::f64::consts::PI.powf(df / 2.0) / gamma(df / 2.0);
    sphere * 0.5 * (2.0 / a).powf(alpha + df / 2.0) * gamma(alpha + df / 2.0)
}
