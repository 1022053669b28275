//! Heat-kernel regularized self-intersection local time.
//!
//! ```text
//! L_ε(T) = ∫_0^T dt ∫_0^t ds p_ε(x_t − x_s),   p_ε(x) = (2πε)^{-d/2} e^{-|x|²/2ε}
//! ```
//!
//! discretized with product trapezoid weights on the open simplex
//! (`Δ² Σ_{i<j} c_i c_j p_ε(x_j − x_i)`, `c = ½` at the endpoints and 1
//! inside, diagonal excluded).
//!
//! Centering subtracts the expectation under the *unshifted* fBm law. By
//! default this is the exact expectation of the grid sum, so the centered
//! estimator is unbiased at every `(ε, N)`; the continuum integral is
//! available through [`Centering::Continuum`].

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::{ModelParams, PathLike, TimeGrid};
use crate::quadrature;
use crate::scalar::Real;

const ROW_BLOCK: usize = 32;

/// Gaussian heat kernel `p_ε(x)` in `d = x.len()` dimensions.
pub fn heat_kernel<T: Real>(eps: T, x: &[T]) -> Result<T> {
    if !(eps > T::zero()) {
        return Err(Error::Domain(format!("heat kernel needs eps > 0, got {eps}")));
    }
    let r2: T = x.iter().map(|&v| v * v).sum();
    Ok(kernel_prefactor(eps, x.len()) * (-r2 / (eps + eps)).exp())
}

#[inline]
fn kernel_prefactor<T: Real>(eps: T, d: usize) -> T {
    (T::TAU() * eps).powf(-T::from_count(d) * T::lit(0.5))
}

#[inline]
fn endpoint_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5
    } else {
        1.0
    }
}

/// Sum of `c_i c_{i+m}` over all pairs at lag `m ≥ 1`.
fn lag_weight(m: usize, n: usize) -> f64 {
    if m + 1 == n {
        0.25
    } else {
        (n - m - 1) as f64
    }
}

fn check_eps<T: Real>(eps: &[T]) -> Result<()> {
    match eps.iter().find(|e| !(**e > T::zero())) {
        Some(e) => Err(Error::Domain(format!("regularization must be positive, got {e}"))),
        None => Ok(()),
    }
}

/// `L_ε(T)` on the grid for several `ε` at once (pair distances shared).
///
/// Rows are summed in fixed blocks and the blocks reduced in index order, so
/// the result does not depend on the thread count.
pub fn silt_raw_multi<T: Real, P: PathLike<T> + Sync>(path: &P, eps: &[T]) -> Result<Vec<T>> {
    check_eps(eps)?;
    let n = path.grid().len();
    let d = path.dim();
    let x = path.values();
    let inv2: Vec<T> = eps.iter().map(|&e| -T::one() / (e + e)).collect();
    let blocks: Vec<Vec<T>> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(ROW_BLOCK)
        .map(|rows| {
            let mut acc = vec![T::zero(); eps.len()];
            for &i in rows {
                let xi = &x[i * d..(i + 1) * d];
                let ci = T::lit(endpoint_weight(i, n));
                for j in (i + 1)..n {
                    let xj = &x[j * d..(j + 1) * d];
                    let mut r2 = T::zero();
                    for c in 0..d {
                        let diff = xj[c] - xi[c];
                        r2 += diff * diff;
                    }
                    let w = ci * T::lit(endpoint_weight(j, n));
                    for (a, &s) in acc.iter_mut().zip(&inv2) {
                        *a += w * (r2 * s).exp();
                    }
                }
            }
            acc
        })
        .collect();
    let dt = path.grid().spacing();
    let mut out = vec![T::zero(); eps.len()];
    for b in &blocks {
        for (o, v) in out.iter_mut().zip(b) {
            *o += *v;
        }
    }
    Ok(out.into_iter().zip(eps).map(|(s, &e)| s * dt * dt * kernel_prefactor(e, d)).collect())
}

/// `L_ε(T)` on the grid.
pub fn silt_raw<T: Real, P: PathLike<T> + Sync>(path: &P, eps: T) -> Result<T> {
    Ok(silt_raw_multi(path, &[eps])?[0])
}

/// `L_ε(T)` and its gradient with respect to the grid values (N × d,
/// row-major; the `t_0` row is included and is zero-sum with the rest).
pub fn silt_raw_gradient<T: Real, P: PathLike<T>>(path: &P, eps: T) -> Result<(T, Vec<T>)> {
    check_eps(&[eps])?;
    let n = path.grid().len();
    let d = path.dim();
    let x = path.values();
    let s = -T::one() / (eps + eps);
    let inv_eps = T::one() / eps;
    let mut grad = vec![T::zero(); n * d];
    let mut total = T::zero();
    let mut diff = vec![T::zero(); d];
    for i in 0..n {
        let ci = T::lit(endpoint_weight(i, n));
        for j in (i + 1)..n {
            let mut r2 = T::zero();
            for c in 0..d {
                diff[c] = x[j * d + c] - x[i * d + c];
                r2 += diff[c] * diff[c];
            }
            let w = ci * T::lit(endpoint_weight(j, n)) * (r2 * s).exp();
            total += w;
            // ∂/∂x_j p(x_j − x_i) = −(x_j − x_i)/ε · p
            let f = w * inv_eps;
            for c in 0..d {
                grad[j * d + c] -= f * diff[c];
                grad[i * d + c] += f * diff[c];
            }
        }
    }
    let dt = path.grid().spacing();
    let scale = dt * dt * kernel_prefactor(eps, d);
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((total * scale, grad))
}

/// Continuum expectation `E L_ε(T) = ∫_0^T (T−u)(2π)^{-d/2}(ε + u^{2H})^{-d/2} du`
/// by adaptive Gauss–Kronrod.
pub fn silt_expectation<T: Real>(params: &ModelParams<T>, eps: T) -> Result<T> {
    if !(eps > T::zero()) {
        return Err(Error::Domain(format!("regularization must be positive, got {eps}")));
    }
    let (h, t, e) = (params.hurst.to_f64_lossy(), params.horizon.to_f64_lossy(), eps.to_f64_lossy());
    let half_d = params.dim as f64 / 2.0;
    let pre = (2.0 * std::f64::consts::PI).powf(-half_d);
    // split at the kernel width so the first panel sees the peak
    let knee = e.powf(1.0 / (2.0 * h)).min(t);
    let f = |u: f64| (t - u) * pre * (e + u.powf(2.0 * h)).powf(-half_d);
    let v = quadrature::adaptive(0.0, knee, 0.0, 1e-13, f) + quadrature::adaptive(knee, t, 0.0, 1e-13, f);
    Ok(T::lit(v))
}

/// Closed form of [`silt_expectation`] for Brownian motion in the plane
/// (`H = ½`, `d = 2`): `(2π)^{-1} [(T+ε) ln((T+ε)/ε) − T]`.
pub fn silt_expectation_brownian_plane(horizon: f64, eps: f64) -> f64 {
    ((horizon + eps) * ((horizon + eps) / eps).ln() - horizon) / (2.0 * std::f64::consts::PI)
}

/// Exact expectation of the grid estimator [`silt_raw`] under fBm:
/// `Δ² Σ_m W_m (2π)^{-d/2} (ε + (mΔ)^{2H})^{-d/2}`, `W_m` the lag weights.
pub fn silt_expectation_grid<T: Real>(hurst: T, dim: usize, grid: &TimeGrid<T>, eps: T) -> Result<T> {
    if !(eps > T::zero()) {
        return Err(Error::Domain(format!("regularization must be positive, got {eps}")));
    }
    let n = grid.len();
    let (h, e, dt) = (hurst.to_f64_lossy(), eps.to_f64_lossy(), grid.spacing().to_f64_lossy());
    let half_d = dim as f64 / 2.0;
    let pre = (2.0 * std::f64::consts::PI).powf(-half_d);
    let sum: f64 = (1..n).map(|m| lag_weight(m, n) * (e + (m as f64 * dt).powf(2.0 * h)).powf(-half_d)).sum();
    Ok(T::lit(sum * pre * dt * dt))
}

/// Which expectation is subtracted when centering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Centering {
    /// Expectation of the grid estimator itself.
    #[default]
    Grid,
    /// Continuum double integral.
    Continuum,
}

/// One regularization level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiltEstimate<T> {
    pub epsilon: T,
    pub raw: T,
    pub expectation: T,
    pub centered: T,
}

/// Geometric regularization ladder `ε_j = ε_0 2^{-j}`, `j = 0..=levels`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderConfig<T> {
    pub eps0: T,
    pub levels: usize,
}

impl<T: Real> LadderConfig<T> {
    pub fn new(eps0: T, levels: usize) -> Result<Self> {
        if !(eps0 > T::zero()) {
            return Err(Error::InvalidParameter { name: "eps0", reason: "must be positive".into() });
        }
        if levels < 3 {
            return Err(Error::InvalidParameter { name: "levels", reason: "ladder needs at least 3 levels".into() });
        }
        Ok(Self { eps0, levels })
    }

    pub fn epsilons(&self) -> Vec<T> {
        (0..=self.levels).map(|j| self.eps0 * T::lit(0.5f64.powi(j as i32))).collect()
    }

    pub fn smallest(&self) -> T {
        self.eps0 * T::lit(0.5f64.powi(self.levels as i32))
    }
}

/// Centered values along a ladder plus the convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsLadder<T> {
    pub estimates: Vec<SiltEstimate<T>>,
    /// Centered value at the smallest `ε`: the `L_c` estimate.
    pub limit: T,
    /// Aitken-extrapolated value from the last three rungs (advisory).
    pub extrapolated: T,
    /// `c_j − c_{j−1}` for every consecutive pair of rungs.
    pub differences: Vec<T>,
    /// `|d_j| / |d_{j+1}|` for consecutive differences.
    pub ratios: Vec<T>,
    /// Successive differences shrank by at least 1.2 on the last two rungs.
    pub converged: bool,
    /// The smallest `ε` is below `0.1 Δ^{2H}`.
    pub under_resolved: bool,
}

impl<T: Real> EpsLadder<T> {
    pub fn epsilons(&self) -> Vec<T> {
        self.estimates.iter().map(|e| e.epsilon).collect()
    }

    pub fn centered(&self) -> Vec<T> {
        self.estimates.iter().map(|e| e.centered).collect()
    }
}

/// Evaluator bound to a model and grid; caches nothing path-dependent.
#[derive(Debug, Clone)]
pub struct SiltEstimator<T> {
    params: ModelParams<T>,
    grid: Arc<TimeGrid<T>>,
    centering: Centering,
}

impl<T: Real> SiltEstimator<T> {
    pub fn new(params: &ModelParams<T>, grid: Arc<TimeGrid<T>>) -> Self {
        Self { params: *params, grid, centering: Centering::Grid }
    }

    pub fn with_centering(mut self, centering: Centering) -> Self {
        self.centering = centering;
        self
    }

    pub fn centering(&self) -> Centering {
        self.centering
    }

    pub fn grid(&self) -> &Arc<TimeGrid<T>> {
        &self.grid
    }

    /// `E L_ε(T)` under the unshifted law, per the centering mode.
    pub fn expectation(&self, eps: T) -> Result<T> {
        match self.centering {
            Centering::Grid => silt_expectation_grid(self.params.hurst, self.params.dim, &self.grid, eps),
            Centering::Continuum => silt_expectation(&self.params, eps),
        }
    }

    /// Floor below which the grid cannot resolve the kernel width.
    pub fn resolution_floor(&self) -> T {
        T::lit(0.1) * self.grid.spacing().powf(self.params.hurst + self.params.hurst)
    }

    pub fn centered<P: PathLike<T> + Sync>(&self, path: &P, eps: T) -> Result<SiltEstimate<T>> {
        Ok(self.centered_multi(path, &[eps])?[0])
    }

    pub fn centered_multi<P: PathLike<T> + Sync>(&self, path: &P, eps: &[T]) -> Result<Vec<SiltEstimate<T>>> {
        self.check_path(path)?;
        let raw = silt_raw_multi(path, eps)?;
        eps.iter()
            .zip(raw)
            .map(|(&epsilon, raw)| {
                let expectation = self.expectation(epsilon)?;
                Ok(SiltEstimate { epsilon, raw, expectation, centered: raw - expectation })
            })
            .collect()
    }

    pub fn ladder<P: PathLike<T> + Sync>(&self, path: &P, config: &LadderConfig<T>) -> Result<EpsLadder<T>> {
        let estimates = self.centered_multi(path, &config.epsilons())?;
        Ok(assemble_ladder(estimates, self.resolution_floor()))
    }

    fn check_path<P: PathLike<T>>(&self, path: &P) -> Result<()> {
        if !path.grid().same_as(&self.grid) || path.dim() != self.params.dim {
            return Err(Error::GridMismatch("path does not match the estimator grid".into()));
        }
        Ok(())
    }
}

fn assemble_ladder<T: Real>(estimates: Vec<SiltEstimate<T>>, floor: T) -> EpsLadder<T> {
    let c: Vec<T> = estimates.iter().map(|e| e.centered).collect();
    let differences: Vec<T> = c.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios: Vec<T> = differences.windows(2).map(|w| if w[1] == T::zero() { T::infinity() } else { w[0].abs() / w[1].abs() }).collect();
    let converged = ratios.last().is_some_and(|&r| r >= T::lit(1.2));
    let last = *c.last().expect("non-empty ladder");
    let extrapolated = if c.len() >= 3 && converged {
        let (d1, d2) = (differences[differences.len() - 2], differences[differences.len() - 1]);
        let denom = d2 - d1;
        if denom != T::zero() && denom.is_finite() {
            last - d2 * d2 / denom
        } else {
            last
        }
    } else {
        last
    };
    let smallest = estimates.last().expect("non-empty ladder").epsilon;
    EpsLadder { estimates, limit: last, extrapolated, differences, ratios, converged, under_resolved: smallest < floor }
}

/// Centered estimate with the default (grid) centering.
pub fn silt_centered<T: Real, P: PathLike<T> + Sync>(params: &ModelParams<T>, path: &P, eps: T) -> Result<SiltEstimate<T>> {
    SiltEstimator::new(params, Arc::new(path.grid().clone())).centered(path, eps)
}

pub fn silt_limit<T: Real, P: PathLike<T> + Sync>(params: &ModelParams<T>, path: &P, config: &LadderConfig<T>) -> Result<EpsLadder<T>> {
    SiltEstimator::new(params, Arc::new(path.grid().clone())).ladder(path, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cameron_martin::{NamedShift, ShiftedPath};
    use crate::fbm::{FbmSampler, RawPath};
    use crate::stats;
    use std::f64::consts::PI;

    fn bm_plane(n: usize) -> (ModelParams<f64>, FbmSampler<f64>) {
        let p = ModelParams::new(0.5, 2, 1.0, 0.1, n, 3).unwrap();
        (p, FbmSampler::new(&p).unwrap())
    }

    #[test]
    fn heat_kernel_examples() {
        assert!((heat_kernel(1.0 / (2.0 * PI), &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((heat_kernel(1.0, &[0.0, 0.0]).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(heat_kernel(0.0, &[0.0]).is_err());
        assert!(heat_kernel(-1.0, &[0.0]).is_err());
    }

    #[test]
    fn heat_kernel_normalized() {
        // 2-d midpoint rule over ±8√ε
        let eps = 0.3f64;
        let half = 8.0 * eps.sqrt();
        let m = 800;
        let h = 2.0 * half / m as f64;
        let mut sum = 0.0;
        for a in 0..m {
            for b in 0..m {
                let x = [-half + (a as f64 + 0.5) * h, -half + (b as f64 + 0.5) * h];
                sum += heat_kernel(eps, &x).unwrap();
            }
        }
        assert!((sum * h * h - 1.0).abs() < 1e-6, "{}", sum * h * h);
    }

    #[test]
    fn constant_path_gives_simplex_area() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 1025).unwrap());
        let zero = RawPath::zeros(grid, 2);
        for &eps in &[0.01, 1.0] {
            let raw = silt_raw(&zero, eps).unwrap();
            let target = 0.5 / (2.0 * PI * eps);
            assert!(((raw - target) / target).abs() < 1e-3, "eps={eps}");
        }
    }

    #[test]
    fn flat_kernel_limit() {
        let (_, s) = bm_plane(1025);
        let path = s.replica(0);
        let eps = 1e6;
        let ratio = silt_raw(&path, eps).unwrap() / (0.5 / (2.0 * PI * eps));
        assert!((ratio - 1.0).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn multi_matches_single() {
        let (_, s) = bm_plane(64);
        let path = s.replica(1);
        let eps = [0.1, 0.01, 0.003];
        let multi = silt_raw_multi(&path, &eps).unwrap();
        for (e, m) in eps.iter().zip(&multi) {
            assert_eq!(silt_raw(&path, *e).unwrap().to_bits(), m.to_bits());
        }
    }

    #[test]
    fn expectation_matches_closed_form() {
        let p = ModelParams::new(0.5, 2, 1.0, 0.1, 256, 0).unwrap();
        for &eps in &[1.0, 0.1, 0.01] {
            let q = silt_expectation(&p, eps).unwrap();
            let c = silt_expectation_brownian_plane(1.0, eps);
            assert!(((q - c) / c).abs() < 1e-8, "eps={eps}: {q} vs {c}");
        }
        let c1 = silt_expectation_brownian_plane(1.0, 1.0);
        assert!((c1 - (2.0 * 2f64.ln() - 1.0) / (2.0 * PI)).abs() < 1e-15);
        assert!((c1 - 0.061481).abs() < 1e-6);
    }

    #[test]
    fn expectation_increases_as_eps_shrinks() {
        let p = ModelParams::new(0.25, 4, 1.0, 0.1, 64, 0).unwrap();
        let grid = p.grid();
        let eps = [1.0, 0.3, 0.1, 0.03, 0.01];
        for w in eps.windows(2) {
            assert!(silt_expectation(&p, w[1]).unwrap() > silt_expectation(&p, w[0]).unwrap());
            assert!(silt_expectation_grid(0.25, 4, &grid, w[1]).unwrap() > silt_expectation_grid(0.25, 4, &grid, w[0]).unwrap());
        }
    }

    #[test]
    fn flat_expectation_limit() {
        let p = ModelParams::new(0.5, 2, 1.0, 0.1, 64, 0).unwrap();
        let eps = 1e7;
        let v = silt_expectation(&p, eps).unwrap() * 2.0 * PI * eps;
        assert!((v - 0.5).abs() < 1e-3);
    }

    #[test]
    fn grid_expectation_converges_to_continuum() {
        let p = ModelParams::new(0.5, 2, 1.0, 0.1, 2, 0).unwrap();
        let eps = 0.05;
        let cont = silt_expectation(&p, eps).unwrap();
        let err = |n: usize| {
            let g = TimeGrid::uniform(1.0, n).unwrap();
            (silt_expectation_grid(0.5f64, 2, &g, eps).unwrap() - cont).abs()
        };
        let (e1, e2, e3) = (err(65), err(129), err(257));
        assert!(e2 < e1 && e3 < e2, "{e1} {e2} {e3}");
    }

    /// Brute force: sum the closed-form pair expectations directly.
    #[test]
    fn grid_expectation_matches_pair_sum() {
        let n = 40;
        let g = TimeGrid::<f64>::uniform(2.0, n).unwrap();
        let (h, d, eps) = (0.3f64, 3usize, 0.02f64);
        let mut brute = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let w = endpoint_weight(i, n) * endpoint_weight(j, n);
                let var = (g.points()[j] - g.points()[i]).powf(2.0 * h);
                brute += w * (2.0 * PI * (eps + var)).powf(-(d as f64) / 2.0);
            }
        }
        brute *= g.spacing() * g.spacing();
        let v = silt_expectation_grid(h, d, &g, eps).unwrap();
        assert!((v - brute).abs() < 1e-12 * brute);
    }

    #[test]
    fn mean_centered_is_zero() {
        let (p, s) = bm_plane(128);
        let est = SiltEstimator::new(&p, s.grid.clone());
        let eps = [0.1, 0.01];
        let per_eps: Vec<Vec<f64>> = {
            let rows: Vec<Vec<SiltEstimate<f64>>> = (0..2000).map(|r| est.centered_multi(&s.replica(r), &eps).unwrap()).collect();
            (0..eps.len()).map(|k| rows.iter().map(|r| r[k].centered).collect()).collect()
        };
        for (k, vals) in per_eps.iter().enumerate() {
            let m = stats::mean_se(vals);
            assert!(m.within(0.0, 5.0), "eps={}: {} ± {}", eps[k], m.mean, m.se);
        }
    }

    #[test]
    fn shifted_matches_explicit_sum() {
        let (_, s) = bm_plane(64);
        let shift = NamedShift::Sine.build(&s.covariance, &s.grid, 2).unwrap();
        let base = s.replica(2);
        let shifted = ShiftedPath::new(&base, &shift, 0.7).unwrap();
        let explicit =
            RawPath { grid: base.grid.clone(), dim: 2, values: base.values.iter().zip(&shift.k).map(|(x, k)| x + 0.7 * k).collect() };
        assert_eq!(silt_raw(&shifted, 0.01).unwrap().to_bits(), silt_raw(&explicit, 0.01).unwrap().to_bits());
    }

    #[test]
    fn shifted_centering_uses_unshifted_expectation() {
        let (p, s) = bm_plane(32);
        let shift = NamedShift::Linear.build(&s.covariance, &s.grid, 2).unwrap();
        let base = s.replica(0);
        let est = SiltEstimator::new(&p, s.grid.clone());
        let a = est.centered(&base, 0.05).unwrap();
        let b = est.centered(&ShiftedPath::new(&base, &shift, 1.5).unwrap(), 0.05).unwrap();
        assert_eq!(a.expectation, b.expectation);
        assert_eq!(b.centered, b.raw - b.expectation);
    }

    /// Nested grids on one fine path per seed: the doubling differences
    /// `|L(N) − L(2N)|` trend down with N. Pathwise quadrature noise makes
    /// single doublings non-monotone, so the trend is a log-log fit.
    #[test]
    fn refinement_shrinks_differences() {
        let eps = 0.01;
        for seed in 0..5 {
            let p = ModelParams::new(0.5, 2, 1.0, 0.0, 2049, seed).unwrap();
            let fine = FbmSampler::new(&p).unwrap().replica(0);
            let sub = |stride: usize| {
                let n = 2048 / stride + 1;
                let grid = Arc::new(TimeGrid::<f64>::uniform(1.0, n).unwrap());
                let values: Vec<f64> = (0..n).flat_map(|i| fine.point(i * stride).to_vec()).collect();
                silt_raw(&RawPath::new(grid, 2, values).unwrap(), eps).unwrap()
            };
            let strides = [32usize, 16, 8, 4, 2, 1];
            let raw: Vec<f64> = strides.iter().map(|&s| sub(s)).collect();
            let diffs: Vec<f64> = raw.windows(2).map(|w| (w[0] - w[1]).abs().ln()).collect();
            let log_n: Vec<f64> = strides[..5].iter().map(|&s| ((2048 / s + 1) as f64).ln()).collect();
            let fit = stats::weighted_line_fit(&log_n, &diffs, &[1.0; 5]);
            assert!(fit.slope < 0.0 && diffs[4] < diffs[0], "seed {seed}: {diffs:?}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (_, s) = bm_plane(24);
        let path = s.replica(5).to_raw();
        let eps = 0.02;
        let (raw, grad) = silt_raw_gradient(&path, eps).unwrap();
        assert!((raw - silt_raw(&path, eps).unwrap()).abs() < 1e-12 * raw);
        let h = 1e-6;
        for k in [2usize, 7, 16, 31, 47] {
            let mut up = path.clone();
            up.values[k] += h;
            let mut dn = path.clone();
            dn.values[k] -= h;
            let fd = (silt_raw(&up, eps).unwrap() - silt_raw(&dn, eps).unwrap()) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-6 * grad[k].abs().max(1e-3), "k={k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn ladder_bookkeeping() {
        let (p, s) = bm_plane(128);
        let cfg = LadderConfig::new(0.1, 4).unwrap();
        let lad = silt_limit(&p, &s.replica(0), &cfg).unwrap();
        let eps = lad.epsilons();
        assert_eq!(eps.len(), 5);
        assert!(eps.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(lad.differences.len(), 4);
        assert_eq!(lad.ratios.len(), 3);
        assert_eq!(lad.limit, lad.estimates[4].centered);
        assert!(!lad.under_resolved);
        assert!(LadderConfig::new(0.1, 2).is_err());
        let tight = LadderConfig::new(1e-3, 4).unwrap();
        assert!(silt_limit(&p, &s.replica(0), &tight).unwrap().under_resolved);
    }

    #[test]
    fn f32_estimator_tracks_f64() {
        let p64 = ModelParams::new(0.5, 2, 1.0, 0.1, 64, 9).unwrap();
        let p32 = ModelParams::<f32>::new(0.5, 2, 1.0, 0.1, 64, 9).unwrap();
        let a = silt_centered(&p64, &FbmSampler::new(&p64).unwrap().replica(0), 0.01).unwrap();
        let b = silt_centered(&p32, &FbmSampler::new(&p32).unwrap().replica(0), 0.01).unwrap();
        assert!(((a.raw - b.raw as f64) / a.raw).abs() < 1e-3);
    }
}
