//! The 2×2 covariance of two fBm increments.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Covariance of `(B_t − B_s, B_{t'} − B_{s'})` for one fBm component:
///
/// ```text
/// λ = |t−s|^{2H},  ρ = |t'−s'|^{2H},
/// μ = ½(|t−s'|^{2H} + |t'−s|^{2H} − |t−t'|^{2H} − |s−s'|^{2H})
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaMatrix<T> {
    pub lambda: T,
    pub rho: T,
    pub mu: T,
    /// `(s, t, s', t')`, when built from a quadruple.
    pub quadruple: Option<[T; 4]>,
}

const PSD_SLACK: f64 = 1e-10;

impl<T: Real> SigmaMatrix<T> {
    /// Wraps raw entries; only symmetry is implied, positivity is checked where it matters.
    pub fn from_entries(lambda: T, rho: T, mu: T) -> Self {
        Self { lambda, rho, mu, quadruple: None }
    }

    pub fn det(&self) -> T {
        self.lambda * self.rho - self.mu * self.mu
    }

    /// `Σ + εI`.
    pub fn regularized(&self, eps: T) -> Self {
        Self { lambda: self.lambda + eps, rho: self.rho + eps, mu: self.mu, quadruple: self.quadruple }
    }

    pub fn is_psd(&self) -> bool {
        self.lambda >= T::zero() && self.rho >= T::zero() && self.det() >= -T::lit(PSD_SLACK)
    }

    /// `yᵀΣy` for `y = (y1, y2)`.
    pub fn quadratic_form(&self, y1: T, y2: T) -> T {
        self.lambda * y1 * y1 + (self.mu + self.mu) * y1 * y2 + self.rho * y2 * y2
    }

    /// `E exp(i y1 (B_t − B_s) − i y2 (B_{t'} − B_{s'}))`.
    ///
    /// The second increment enters with a minus sign, so the quadratic form
    /// is evaluated at `(y1, −y2)`.
    pub fn characteristic_function(&self, y1: T, y2: T) -> T {
        (-T::lit(0.5) * self.quadratic_form(y1, -y2)).exp()
    }
}

/// Builds `Σ` for `(s, t, s', t')` with `0 ≤ s < t` and `0 ≤ s' < t'`.
pub fn sigma_matrix<T: Real>(hurst: T, quadruple: [T; 4]) -> Result<SigmaMatrix<T>> {
    if !(hurst > T::zero() && hurst < T::one()) {
        return Err(Error::InvalidParameter { name: "H", reason: format!("must lie in (0, 1), got {hurst}") });
    }
    let [s, t, s2, t2] = quadruple;
    if !quadruple.iter().all(|v| v.is_finite() && *v >= T::zero()) || !(s < t) || !(s2 < t2) {
        return Err(Error::Domain(format!("quadruple ({s}, {t}, {s2}, {t2}) needs 0 ≤ s < t and 0 ≤ s' < t'")));
    }
    let two_h = hurst + hurst;
    let p = |x: T| x.abs().powf(two_h);
    let sigma = SigmaMatrix {
        lambda: p(t - s),
        rho: p(t2 - s2),
        mu: T::lit(0.5) * (p(t - s2) + p(t2 - s) - p(t - t2) - p(s - s2)),
        quadruple: Some(quadruple),
    };
    let scale = sigma.lambda * sigma.rho;
    if sigma.det() < -T::lit(PSD_SLACK) * scale.max(T::one()) {
        return Err(Error::NotPositiveDefinite { minor: 2 });
    }
    Ok(sigma)
}

/// As [`sigma_matrix`], additionally requiring `t, t' ≤ horizon`.
pub fn sigma_matrix_on<T: Real>(hurst: T, quadruple: [T; 4], horizon: T) -> Result<SigmaMatrix<T>> {
    if quadruple[1] > horizon || quadruple[3] > horizon {
        return Err(Error::Domain(format!("quadruple exceeds the horizon {horizon}")));
    }
    sigma_matrix(hurst, quadruple)
}
