//! Fractional Brownian motion on a uniform grid.
//!
//! The `d` spatial components are independent copies of a one-dimensional
//! fBm with covariance
//!
//! ```text
//! cov_H(t, s) = ½ (t^{2H} + s^{2H} − |t − s|^{2H})
//! ```
//!
//! Paths are drawn exactly from the Cholesky factor of the grid covariance
//! restricted to `t_1 .. t_{N-1}` (the value at `t_0 = 0` is pinned to zero).
//! A Davies–Harte circulant backend is available for long grids.

mod circulant;
pub mod io;

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::rng::{self, Domain, StreamRng};
use crate::scalar::Real;

pub use circulant::CirculantPlan;

/// Global model configuration shared by every computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<T> {
    /// Hurst exponent `H ∈ (0, 1)`.
    pub hurst: T,
    /// Spatial dimension `d ≥ 1`.
    pub dim: usize,
    /// Time horizon `T > 0`.
    pub horizon: T,
    /// Coupling constant `g` of the Edwards weight.
    pub coupling: T,
    /// Number of grid points `N ≥ 2`, endpoints included.
    pub grid_points: usize,
    pub seed: u64,
}

impl<T: Real> ModelParams<T> {
    pub fn new(hurst: T, dim: usize, horizon: T, coupling: T, grid_points: usize, seed: u64) -> Result<Self> {
        let p = Self { hurst, dim, horizon, coupling, grid_points, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > T::zero() && self.hurst < T::one()) {
            return Err(Error::InvalidParameter { name: "H", reason: format!("{} not in (0, 1)", self.hurst) });
        }
        if self.dim == 0 {
            return Err(Error::InvalidParameter { name: "d", reason: "must be at least 1".into() });
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter { name: "T", reason: format!("{} must be positive", self.horizon) });
        }
        if !self.coupling.is_finite() {
            return Err(Error::InvalidParameter { name: "g", reason: "must be finite".into() });
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidParameter { name: "N", reason: "need at least 2 grid points".into() });
        }
        Ok(())
    }

    /// `H·d`.
    pub fn hd(&self) -> T {
        self.hurst * T::from_count(self.dim)
    }

    /// Whether the parameters sit on the critical line `H·d = 1`.
    pub fn critical(&self) -> bool {
        (self.hd().to_f64_lossy() - 1.0).abs() < 1e-12
    }

    pub fn grid(&self) -> TimeGrid<T> {
        TimeGrid::uniform(self.horizon, self.grid_points).expect("validated parameters")
    }

    pub fn with_coupling(mut self, g: T) -> Self {
        self.coupling = g;
        self
    }

    pub fn with_grid_points(mut self, n: usize) -> Self {
        self.grid_points = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Uniform grid `0 = t_0 < … < t_{N-1} = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    points: Vec<T>,
    spacing: T,
}

impl<T: Real> TimeGrid<T> {
    pub fn uniform(horizon: T, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter { name: "N", reason: "need at least 2 grid points".into() });
        }
        if !(horizon > T::zero()) {
            return Err(Error::InvalidParameter { name: "T", reason: "must be positive".into() });
        }
        let last = T::from_count(n - 1);
        let spacing = horizon / last;
        let mut points: Vec<T> = (0..n).map(|i| horizon * T::from_count(i) / last).collect();
        points[n - 1] = horizon;
        Ok(Self { points, spacing })
    }

    /// Adopts externally supplied points, checking strict monotonicity and
    /// uniform spacing.
    pub fn from_points(points: Vec<T>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::GridMismatch("fewer than 2 points".into()));
        }
        if points[0] != T::zero() {
            return Err(Error::GridMismatch("grid must start at t = 0".into()));
        }
        let n = points.len();
        let spacing = points[n - 1] / T::from_count(n - 1);
        let tol = T::lit(1e-9).max(T::default_tolerance());
        for w in points.windows(2) {
            let step = w[1] - w[0];
            if !(step > T::zero()) {
                return Err(Error::GridMismatch("points not strictly increasing".into()));
            }
            if ((step - spacing) / spacing).abs() > tol {
                return Err(Error::GridMismatch("non-uniform spacing".into()));
            }
        }
        Ok(Self { points, spacing })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn spacing(&self) -> T {
        self.spacing
    }

    #[inline]
    pub fn points(&self) -> &[T] {
        &self.points
    }

    #[inline]
    pub fn horizon(&self) -> T {
        self.points[self.points.len() - 1]
    }

    /// Points after `t_0`, the support of the covariance matrix.
    pub fn interior(&self) -> &[T] {
        &self.points[1..]
    }

    pub fn same_as(&self, other: &TimeGrid<T>) -> bool {
        self.len() == other.len() && self.horizon() == other.horizon()
    }
}

/// fBm covariance of a single component.
pub fn cov_h<T: Real>(hurst: T, t: T, s: T) -> Result<T> {
    if t < T::zero() || s < T::zero() {
        return Err(Error::Domain(format!("negative time in cov_h({t}, {s})")));
    }
    Ok(cov_h_unchecked(hurst, t, s))
}

#[inline]
pub(crate) fn cov_h_unchecked<T: Real>(hurst: T, t: T, s: T) -> T {
    let two_h = hurst + hurst;
    T::lit(0.5) * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h))
}

/// Grid covariance `Σ[i][j] = cov_H(t_{i+1}, t_{j+1})`, of size `(N−1)²`.
pub fn build_covariance<T: Real>(params: &ModelParams<T>, grid: &TimeGrid<T>) -> Result<Matrix<T>> {
    if grid.len() != params.grid_points {
        return Err(Error::GridMismatch(format!("grid has {} points, params say {}", grid.len(), params.grid_points)));
    }
    let ts = grid.interior();
    Ok(Matrix::from_fn(ts.len(), |i, j| cov_h_unchecked(params.hurst, ts[i], ts[j])))
}

/// Grid covariance with its Cholesky factor; immutable and shared.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCovariance<T> {
    pub matrix: Matrix<T>,
    pub factor: Cholesky<T>,
}

impl<T: Real> GridCovariance<T> {
    pub fn new(params: &ModelParams<T>, grid: &TimeGrid<T>) -> Result<Self> {
        let matrix = build_covariance(params, grid)?;
        let factor = Cholesky::new(&matrix)?;
        Ok(Self { matrix, factor })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// Anything that carries `N × d` grid values (row-major: `values[i*d + c]`).
pub trait PathLike<T: Real> {
    fn grid(&self) -> &TimeGrid<T>;
    fn values(&self) -> &[T];
    fn dim(&self) -> usize;

    fn point(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.values()[i * d..(i + 1) * d]
    }

    /// Component `c` at grid points `t_1 .. t_{N-1}`.
    fn component(&self, c: usize) -> Vec<T> {
        let d = self.dim();
        self.values().iter().skip(d + c).step_by(d).copied().collect()
    }
}

/// Grid values without any sampling provenance (synthetic or loaded paths).
#[derive(Debug, Clone, PartialEq)]
pub struct RawPath<T> {
    pub grid: Arc<TimeGrid<T>>,
    pub dim: usize,
    pub values: Vec<T>,
}

impl<T: Real> RawPath<T> {
    pub fn new(grid: Arc<TimeGrid<T>>, dim: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() * dim {
            return Err(Error::GridMismatch(format!("{} values for {}×{} path", values.len(), grid.len(), dim)));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn zeros(grid: Arc<TimeGrid<T>>, dim: usize) -> Self {
        let n = grid.len();
        Self { grid, dim, values: vec![T::zero(); n * dim] }
    }

    /// Assembles a path from per-component interior values (`t_0` pinned to 0).
    pub fn from_components(grid: Arc<TimeGrid<T>>, comps: &[Vec<T>]) -> Result<Self> {
        let d = comps.len();
        let n = grid.len();
        if comps.iter().any(|c| c.len() != n - 1) {
            return Err(Error::GridMismatch("component length must be N-1".into()));
        }
        let mut values = vec![T::zero(); n * d];
        for (c, comp) in comps.iter().enumerate() {
            for (i, &v) in comp.iter().enumerate() {
                values[(i + 1) * d + c] = v;
            }
        }
        Ok(Self { grid, dim: d, values })
    }
}

impl<T: Real> PathLike<T> for RawPath<T> {
    fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }
    fn values(&self) -> &[T] {
        &self.values
    }
    fn dim(&self) -> usize {
        self.dim
    }
}

/// A sampled `d`-dimensional fBm trajectory together with the (shared)
/// covariance factor it was drawn from.
#[derive(Debug, Clone)]
pub struct FbmPath<T> {
    pub grid: Arc<TimeGrid<T>>,
    pub dim: usize,
    pub values: Vec<T>,
    pub covariance: Arc<GridCovariance<T>>,
}

impl<T: Real> PathLike<T> for FbmPath<T> {
    fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }
    fn values(&self) -> &[T] {
        &self.values
    }
    fn dim(&self) -> usize {
        self.dim
    }
}

impl<T: Real> FbmPath<T> {
    pub fn to_raw(&self) -> RawPath<T> {
        RawPath { grid: self.grid.clone(), dim: self.dim, values: self.values.clone() }
    }
}

#[derive(Debug, Clone)]
pub enum Backend<T> {
    Cholesky,
    Circulant(Arc<CirculantPlan<T>>),
}

/// Reusable sampler: the covariance factorization is done once.
#[derive(Debug, Clone)]
pub struct FbmSampler<T> {
    pub params: ModelParams<T>,
    pub grid: Arc<TimeGrid<T>>,
    pub covariance: Arc<GridCovariance<T>>,
    backend: Backend<T>,
}

impl<T: Real> FbmSampler<T> {
    pub fn new(params: &ModelParams<T>) -> Result<Self> {
        params.validate()?;
        let grid = params.grid();
        Self::with_grid(params, grid)
    }

    pub fn with_grid(params: &ModelParams<T>, grid: TimeGrid<T>) -> Result<Self> {
        let covariance = Arc::new(GridCovariance::new(params, &grid)?);
        Ok(Self { params: *params, grid: Arc::new(grid), covariance, backend: Backend::Cholesky })
    }

    /// Switches to circulant embedding of the increment process.
    pub fn circulant(mut self) -> Result<Self> {
        let plan = CirculantPlan::new(self.params.hurst, self.grid.spacing(), self.grid.len() - 1)?;
        self.backend = Backend::Circulant(Arc::new(plan));
        Ok(self)
    }

    pub fn backend(&self) -> &Backend<T> {
        &self.backend
    }

    /// Draws one path from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FbmPath<T> {
        let n = self.grid.len();
        let d = self.params.dim;
        let mut values = vec![T::zero(); n * d];
        let mut z = vec![T::zero(); n - 1];
        for c in 0..d {
            let comp = match &self.backend {
                Backend::Cholesky => {
                    rng::fill_standard_normal(rng, &mut z);
                    self.covariance.factor.mul_lower(&z)
                }
                Backend::Circulant(plan) => plan.sample_path(rng),
            };
            for (i, v) in comp.into_iter().enumerate() {
                values[(i + 1) * d + c] = v;
            }
        }
        FbmPath { grid: self.grid.clone(), dim: d, values, covariance: self.covariance.clone() }
    }

    /// Replica `index` of the run, from its own counter-based stream.
    pub fn replica(&self, index: u64) -> FbmPath<T> {
        let mut rng = rng::domain_rng(self.params.seed, Domain::Paths, index);
        self.sample(&mut rng)
    }

    pub fn replica_rng(&self, index: u64) -> StreamRng {
        rng::domain_rng(self.params.seed, Domain::Paths, index)
    }
}

/// One-shot sampling: factorizes the grid covariance and draws a path.
pub fn sample_fbm<T: Real, R: Rng + ?Sized>(params: &ModelParams<T>, grid: &TimeGrid<T>, rng: &mut R) -> Result<FbmPath<T>> {
    let sampler = FbmSampler::with_grid(params, grid.clone())?;
    Ok(sampler.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use proptest::prelude::*;
    use rand::Rng;

    fn params(h: f64, d: usize, n: usize) -> ModelParams<f64> {
        ModelParams::new(h, d, 1.0, 0.1, n, 7).unwrap()
    }

    #[test]
    fn cov_examples() {
        assert_eq!(cov_h(0.5, 1.0, 2.0).unwrap(), 1.0);
        assert_eq!(cov_h(0.37, 1.0, 1.0).unwrap(), 1.0);
        assert!((cov_h(0.25, 2.0, 1.0).unwrap() - 2f64.powf(-0.5)).abs() < 1e-15);
        assert!(matches!(cov_h(0.5, -1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn regime_flag() {
        assert!(params(0.25, 4, 8).critical());
        assert!(params(0.5, 2, 8).critical());
        assert!(!params(0.3, 2, 8).critical());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ModelParams::new(1.0, 2, 1.0, 0.0, 8, 0).is_err());
        assert!(ModelParams::new(0.5, 0, 1.0, 0.0, 8, 0).is_err());
        assert!(ModelParams::new(0.5, 2, 0.0, 0.0, 8, 0).is_err());
        assert!(ModelParams::new(0.5, 2, 1.0, 0.0, 1, 0).is_err());
    }

    #[test]
    fn grid_is_uniform() {
        let g = TimeGrid::uniform(2.0, 9).unwrap();
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(g.horizon(), 2.0);
        assert_eq!(g.spacing(), 0.25);
        assert!(TimeGrid::from_points(vec![0.0, 0.1, 0.3]).is_err());
        assert!(TimeGrid::from_points(vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn factor_reproduces_grid_covariance() {
        for &h in &[0.1, 0.25, 0.5, 0.75, 0.9] {
            let p = params(h, 1, 128);
            let cov = GridCovariance::new(&p, &p.grid()).unwrap();
            assert!(cov.factor.relative_residual(&cov.matrix) < 1e-8, "H = {h}");
        }
    }

    #[test]
    fn starts_at_origin_and_is_reproducible() {
        let p = params(0.5, 2, 16);
        let s = FbmSampler::new(&p).unwrap();
        let a = s.replica(3);
        let b = s.replica(3);
        assert!(a.point(0).iter().all(|&v| v == 0.0));
        assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_ne!(a.values, s.replica(4).values);
    }

    #[test]
    fn brownian_increments_uncorrelated() {
        let p = params(0.5, 1, 33);
        let s = FbmSampler::new(&p).unwrap();
        let prods: Vec<f64> = (0..4000)
            .map(|r| {
                let path = s.replica(r);
                let a = path.values[8] - path.values[0];
                let b = path.values[32] - path.values[16];
                a * b
            })
            .collect();
        assert!(stats::mean_se(&prods).within(0.0, 5.0));
    }

    #[test]
    fn stationary_increments() {
        let p = params(0.3, 1, 33);
        let s = FbmSampler::new(&p).unwrap();
        let paths: Vec<_> = (0..3000).map(|r| s.replica(r)).collect();
        let ts = s.grid.points().to_vec();
        let mut rng = rng::stream_rng(99, 0);
        for _ in 0..20 {
            let i = rng.random_range(0..33usize);
            let mut j = rng.random_range(0..33usize);
            if i == j {
                j = (j + 1) % 33;
            }
            let sq: Vec<f64> = paths.iter().map(|q| (q.values[i] - q.values[j]).powi(2)).collect();
            let target = (ts[i] - ts[j]).abs().powf(0.6);
            assert!(stats::mean_se(&sq).within(target, 5.0), "({i}, {j})");
        }
    }

    #[test]
    fn f32_paths_track_f64() {
        let p64 = params(0.5, 2, 16);
        let p32 = ModelParams::<f32>::new(0.5, 2, 1.0, 0.1, 16, 7).unwrap();
        let a = FbmSampler::new(&p64).unwrap().replica(0);
        let b = FbmSampler::new(&p32).unwrap().replica(0);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }

    proptest! {
        #[test]
        fn cov_is_symmetric(h in 0.01f64..0.99, t in 0.0f64..10.0, s in 0.0f64..10.0) {
            prop_assert_eq!(cov_h(h, t, s).unwrap(), cov_h(h, s, t).unwrap());
        }

        #[test]
        fn cov_is_self_similar(h in 0.01f64..0.99, t in 0.0f64..5.0, s in 0.0f64..5.0, a in 0.1f64..10.0) {
            let lhs = cov_h(h, a * t, a * s).unwrap();
            let rhs = a.powf(2.0 * h) * cov_h(h, t, s).unwrap();
            let scale = (a * t).max(a * s).powf(2.0 * h).max(1e-300);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }
}
