//! Cameron–Martin directions and the Gaussian change of measure.
//!
//! A direction `k` lives on the grid and is represented through the weights
//! `w = Σ⁻¹ k` (one solve per component). Everything downstream (norms,
//! Radon–Nikodym densities, orthonormalization) goes through `w`; the
//! derivative `k̇` is never formed.
//!
//! For `H > ½` directions can also be generated from a square-integrable `h`
//! through the Volterra kernel `R_H`, which is kept mostly as a consistency
//! check on the discrete construction.

use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fbm::{FbmPath, GridCovariance, PathLike, RawPath, TimeGrid};
use crate::linalg::dot;
use crate::quadrature::{tanh_sinh, GaussLegendre};
use crate::scalar::Real;

/// The square-integrable kernel `R_H(t, s)`, defined for `H > ½`.
#[derive(Debug, Clone)]
pub struct KernelRH {
    hurst: f64,
    c_h: f64,
    rule: GaussLegendre,
}

impl KernelRH {
    pub fn new(hurst: f64) -> Result<Self> {
        if !(hurst > 0.5 && hurst < 1.0) {
            return Err(Error::UnsupportedRegime(format!(
                "the R_H kernel needs H in (1/2, 1), got {hurst}; build directions with make_shift_from_target"
            )));
        }
        let beta = statrs::function::beta::beta(2.0 - 2.0 * hurst, hurst - 0.5);
        let c_h = (hurst * (2.0 * hurst - 1.0) / beta).sqrt();
        Ok(Self { hurst, c_h, rule: GaussLegendre::new(64) })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Normalization `C_H = sqrt(H(2H−1) / β(2−2H, H−½))`.
    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    /// `R_H(t, s)`; zero for `t ≤ s`.
    ///
    /// The inner integral `∫_s^t (u−s)^{H−3/2} u^{H−½} du` is regularized by
    /// `u = s + τ^{1/(H−½)}`, which turns it into the smooth
    /// `p ∫_0^{(t−s)^{H−½}} (s + τ^p)^{H−½} dτ`, `p = 1/(H−½)`.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        if t <= s {
            return 0.0;
        }
        let a = self.hurst - 0.5;
        let p = 1.0 / a;
        let upper = (t - s).powf(a);
        let inner = self.rule.integrate(0.0, upper, |tau| (s + tau.powf(p)).powf(a));
        self.c_h * s.powf(-a) * p * inner
    }
}

/// `R_H(t, s)` with the regime check.
pub fn kernel_rh(hurst: f64, t: f64, s: f64) -> Result<f64> {
    Ok(KernelRH::new(hurst)?.eval(t, s))
}

/// A Cameron–Martin direction sampled on the grid.
#[derive(Debug, Clone)]
pub struct CMShift<T> {
    pub grid: Arc<TimeGrid<T>>,
    pub dim: usize,
    /// Generator `h` (N × d), when the shift was built from one.
    pub h: Option<Vec<T>>,
    /// Shift path `k` (N × d, row-major, zero at `t_0`).
    pub k: Vec<T>,
    /// Weights `w_c = Σ⁻¹ k_c`, stored per component ((N−1) entries each).
    pub w: Vec<Vec<T>>,
    pub covariance: Arc<GridCovariance<T>>,
}

impl<T: Real> CMShift<T> {
    /// Component `c` of `k` at `t_1 .. t_{N-1}`.
    pub fn k_component(&self, c: usize) -> Vec<T> {
        self.k.iter().skip(self.dim + c).step_by(self.dim).copied().collect()
    }

    /// Discrete Cameron–Martin energy `Σ_c w_cᵀ k_c`.
    pub fn energy(&self) -> T {
        (0..self.dim).map(|c| dot(&self.w[c], &self.k_component(c))).sum()
    }

    /// Discrete inner product `Σ_c w_cᵀ Σ w'_c = Σ_c w_cᵀ k'_c`.
    pub fn inner(&self, other: &CMShift<T>) -> T {
        (0..self.dim).map(|c| dot(&self.w[c], &other.k_component(c))).sum()
    }

    /// `max_c ‖Σ w_c − k_c‖ / ‖k_c‖`.
    pub fn solve_residual(&self) -> T {
        let mut worst = T::zero();
        for c in 0..self.dim {
            let k = self.k_component(c);
            let back = self.covariance.matrix.matvec(&self.w[c]);
            let num: T = back.iter().zip(&k).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>().sqrt();
            let den: T = k.iter().map(|v| *v * *v).sum::<T>().sqrt();
            if den > T::zero() {
                worst = worst.max(num / den);
            }
        }
        worst
    }

    /// `self · a + other · b`, recomputing nothing: weights combine linearly.
    pub fn combine(&self, a: T, other: &CMShift<T>, b: T) -> CMShift<T> {
        let k = self.k.iter().zip(&other.k).map(|(&x, &y)| a * x + b * y).collect();
        let w = self.w.iter().zip(&other.w).map(|(wa, wb)| wa.iter().zip(wb).map(|(&x, &y)| a * x + b * y).collect()).collect();
        CMShift { grid: self.grid.clone(), dim: self.dim, h: None, k, w, covariance: self.covariance.clone() }
    }

    pub fn scaled(&self, a: T) -> CMShift<T> {
        CMShift {
            grid: self.grid.clone(),
            dim: self.dim,
            h: self.h.as_ref().map(|h| h.iter().map(|&v| a * v).collect()),
            k: self.k.iter().map(|&v| a * v).collect(),
            w: self.w.iter().map(|wc| wc.iter().map(|&v| a * v).collect()).collect(),
            covariance: self.covariance.clone(),
        }
    }

    pub fn as_path(&self) -> RawPath<T> {
        RawPath { grid: self.grid.clone(), dim: self.dim, values: self.k.clone() }
    }
}

/// Builds `k` from grid values of a target path; valid for every `H ∈ (0, 1)`.
pub fn make_shift_from_target<T: Real>(
    covariance: &Arc<GridCovariance<T>>,
    grid: &Arc<TimeGrid<T>>,
    dim: usize,
    k: Vec<T>,
) -> Result<CMShift<T>> {
    let n = grid.len();
    if k.len() != n * dim || covariance.dim() != n - 1 {
        return Err(Error::GridMismatch(format!("shift of {} values does not fit {n}×{dim}", k.len())));
    }
    if k[..dim].iter().any(|&v| v != T::zero()) {
        return Err(Error::Domain("shift must vanish at t = 0".into()));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("shift has non-finite values".into()));
    }
    let mut shift = CMShift { grid: grid.clone(), dim, h: None, k, w: Vec::with_capacity(dim), covariance: covariance.clone() };
    for c in 0..dim {
        let kc = shift.k_component(c);
        let wc = covariance.factor.solve(&kc);
        if wc.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        shift.w.push(wc);
    }
    Ok(shift)
}

/// Builds `k_t = ∫_0^t R_H(t, s) h(s) ds` from grid samples of `h`
/// (linearly interpolated between grid points). Requires `H > ½`.
pub fn make_shift_from_h<T: Real>(
    covariance: &Arc<GridCovariance<T>>,
    grid: &Arc<TimeGrid<T>>,
    hurst: T,
    dim: usize,
    h: Vec<T>,
) -> Result<CMShift<T>> {
    let kernel = KernelRH::new(hurst.to_f64_lossy())?;
    let n = grid.len();
    if h.len() != n * dim {
        return Err(Error::GridMismatch("h must have N × d values".into()));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("h has non-finite values".into()));
    }
    let ts: Vec<f64> = grid.points().iter().map(|t| t.to_f64_lossy()).collect();
    let hf: Vec<f64> = h.iter().map(|v| v.to_f64_lossy()).collect();
    let mut k = vec![T::zero(); n * dim];
    let cell = GaussLegendre::new(16);
    for c in 0..dim {
        let hc = |i: usize| hf[i * dim + c];
        for j in 1..n {
            let t = ts[j];
            let mut total = 0.0;
            for i in 0..j {
                let (a, b) = (ts[i], ts[i + 1]);
                let (ha, hb) = (hc(i), hc(i + 1));
                let lin = |s: f64| ha + (hb - ha) * (s - a) / (b - a);
                total += if i == 0 || i + 1 == j {
                    tanh_sinh(a, b, 1e-12, |s, _| kernel.eval(t, s) * lin(s))
                } else {
                    cell.integrate(a, b, |s| kernel.eval(t, s) * lin(s))
                };
            }
            k[j * dim + c] = T::lit(total);
        }
    }
    let mut shift = make_shift_from_target(covariance, grid, dim, k)?;
    shift.h = Some(h);
    Ok(shift)
}

/// Built-in directions accepted by the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NamedShift {
    /// `k(t) = t · e_1`.
    Linear,
    /// `k(t) = sin(πt/T) · e_1`.
    Sine,
    /// `k = Σ e_j` in the first component (`j` is 1-based over `t_1 .. t_{N-1}`).
    CovCol(usize),
}

impl FromStr for NamedShift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear" => Ok(NamedShift::Linear),
            "sine" => Ok(NamedShift::Sine),
            other => {
                let j = other
                    .strip_prefix("covcol:")
                    .and_then(|j| j.parse::<usize>().ok())
                    .filter(|&j| j >= 1)
                    .ok_or_else(|| Error::Format(format!("unknown shift `{other}` (linear | sine | covcol:j)")))?;
                Ok(NamedShift::CovCol(j))
            }
        }
    }
}

impl std::fmt::Display for NamedShift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NamedShift::Linear => write!(f, "linear"),
            NamedShift::Sine => write!(f, "sine"),
            NamedShift::CovCol(j) => write!(f, "covcol:{j}"),
        }
    }
}

impl NamedShift {
    pub fn build<T: Real>(&self, covariance: &Arc<GridCovariance<T>>, grid: &Arc<TimeGrid<T>>, dim: usize) -> Result<CMShift<T>> {
        let n = grid.len();
        let horizon = grid.horizon();
        let mut k = vec![T::zero(); n * dim];
        match *self {
            NamedShift::Linear => {
                for (i, &t) in grid.points().iter().enumerate() {
                    k[i * dim] = t;
                }
            }
            NamedShift::Sine => {
                for (i, &t) in grid.points().iter().enumerate().skip(1) {
                    k[i * dim] = (T::PI() * t / horizon).sin();
                }
            }
            NamedShift::CovCol(j) => {
                if j > n - 1 {
                    return Err(Error::InvalidParameter { name: "shift", reason: format!("covcol:{j} exceeds N-1 = {}", n - 1) });
                }
                for i in 1..n {
                    k[i * dim] = covariance.matrix.get(i - 1, j - 1);
                }
            }
        }
        make_shift_from_target(covariance, grid, dim, k)
    }
}

/// `base + u·k` on the grid.
#[derive(Debug, Clone)]
pub struct ShiftedPath<'a, T, P> {
    pub base: &'a P,
    pub shift: &'a CMShift<T>,
    pub u: T,
    pub values: Vec<T>,
}

impl<'a, T: Real, P: PathLike<T>> ShiftedPath<'a, T, P> {
    pub fn new(base: &'a P, shift: &'a CMShift<T>, u: T) -> Result<Self> {
        if !base.grid().same_as(&shift.grid) || base.dim() != shift.dim {
            return Err(Error::GridMismatch("path and shift live on different grids".into()));
        }
        let values = base.values().iter().zip(&shift.k).map(|(&x, &k)| x + u * k).collect();
        Ok(Self { base, shift, u, values })
    }
}

impl<T: Real, P: PathLike<T>> PathLike<T> for ShiftedPath<'_, T, P> {
    fn grid(&self) -> &TimeGrid<T> {
        self.base.grid()
    }
    fn values(&self) -> &[T] {
        &self.values
    }
    fn dim(&self) -> usize {
        self.base.dim()
    }
}

/// `Σ_c (u·w_cᵀx_c − ½u²·w_cᵀk_c)`.
pub fn log_rn_density<T: Real, P: PathLike<T>>(shift: &CMShift<T>, u: T, path: &P) -> Result<T> {
    if !path.grid().same_as(&shift.grid) || path.dim() != shift.dim {
        return Err(Error::GridMismatch("path and shift live on different grids".into()));
    }
    let half = T::lit(0.5);
    let mut acc = T::zero();
    for c in 0..shift.dim {
        let x = path.component(c);
        let kc = shift.k_component(c);
        acc += u * dot(&shift.w[c], &x) - half * u * u * dot(&shift.w[c], &kc);
    }
    Ok(acc)
}

/// Density of the law of `X + u·k` with respect to the law of `X`,
/// evaluated at `path`.
pub fn gaussian_rn_density<T: Real, P: PathLike<T>>(shift: &CMShift<T>, u: T, path: &P) -> Result<T> {
    if u == T::zero() {
        return Ok(T::one());
    }
    let v = log_rn_density(shift, u, path)?.exp();
    if !v.is_finite() || v == T::zero() {
        return Err(Error::Range(format!("Radon–Nikodym density leaves the floating-point range at u = {u}")));
    }
    Ok(v)
}

pub fn write_shift_csv<T: Real, W: std::io::Write>(shift: &CMShift<T>, out: W) -> Result<()> {
    crate::fbm::io::write_table_csv(&shift.grid, shift.dim, &shift.k, "k", out)
}

/// Reads `t,k_1..k_d` and solves for the weights against `covariance`.
pub fn read_shift_csv<T: Real, R: std::io::Read>(covariance: &Arc<GridCovariance<T>>, input: R) -> Result<CMShift<T>> {
    let (grid, dim, k) = crate::fbm::io::read_table_csv(input)?;
    make_shift_from_target(covariance, &Arc::new(grid), dim, k)
}

impl<T: Real> FbmPath<T> {
    /// The path as a Cameron–Martin-style target (used by the `covcol` checks).
    pub fn as_shift(&self) -> Result<CMShift<T>> {
        make_shift_from_target(&self.covariance, &self.grid, self.dim, self.values.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{cov_h, FbmSampler, ModelParams};
    use crate::stats;

    fn setup(h: f64, d: usize, n: usize) -> (ModelParams<f64>, FbmSampler<f64>) {
        let p = ModelParams::new(h, d, 1.0, 0.1, n, 21).unwrap();
        let s = FbmSampler::new(&p).unwrap();
        (p, s)
    }

    #[test]
    fn kernel_vanishes_off_support() {
        let k = KernelRH::new(0.7).unwrap();
        assert_eq!(k.eval(0.3, 0.5), 0.0);
        assert_eq!(k.eval(1.0, 1.0), 0.0);
        assert!(k.eval(1.0, 0.5) > 0.0);
    }

    #[test]
    fn kernel_rejects_rough_regime() {
        assert!(matches!(kernel_rh(0.5, 1.0, 0.5), Err(Error::UnsupportedRegime(_))));
        assert!(matches!(kernel_rh(0.25, 1.0, 0.5), Err(Error::UnsupportedRegime(_))));
    }

    /// `∫_0^{s∧t} R_H(t,r) R_H(s,r) dr = cov_H(t, s)` by nested quadrature.
    #[test]
    fn kernel_factorizes_covariance() {
        let k = KernelRH::new(0.7).unwrap();
        for &(t, s) in &[(1.0, 0.5), (0.3, 0.9), (1.0, 1.0), (0.2, 0.2), (0.75, 0.4)] {
            let m: f64 = f64::min(t, s);
            let v = tanh_sinh(0.0, m, 1e-9, |r, _| k.eval(t, r) * k.eval(s, r));
            let c = cov_h(0.7, t, s).unwrap();
            assert!((v - c).abs() < 1e-3, "({t},{s}): {v} vs {c}");
        }
    }

    #[test]
    fn covariance_column_gives_unit_weight() {
        let (_, s) = setup(0.25, 2, 64);
        let shift = NamedShift::CovCol(10).build(&s.covariance, &s.grid, 2).unwrap();
        for (i, &w) in shift.w[0].iter().enumerate() {
            let target = if i == 9 { 1.0 } else { 0.0 };
            assert!((w - target).abs() < 1e-8, "w[{i}] = {w}");
        }
        assert!(shift.w[1].iter().all(|&w| w == 0.0));
        assert!(shift.solve_residual() < 1e-8);
    }

    #[test]
    fn brownian_drift_energy_is_horizon() {
        let (_, s) = setup(0.5, 1, 256);
        let shift = NamedShift::Linear.build(&s.covariance, &s.grid, 1).unwrap();
        assert!((shift.energy() - 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_shift_has_zero_energy() {
        let (_, s) = setup(0.3, 2, 32);
        let shift = make_shift_from_target(&s.covariance, &s.grid, 2, vec![0.0; 64]).unwrap();
        assert!(shift.w.iter().flatten().all(|&w| w == 0.0));
        assert_eq!(shift.energy(), 0.0);
    }

    #[test]
    fn target_must_start_at_zero() {
        let (_, s) = setup(0.3, 1, 8);
        let mut k = vec![0.1; 8];
        assert!(make_shift_from_target(&s.covariance, &s.grid, 1, k.clone()).is_err());
        k[0] = 0.0;
        assert!(make_shift_from_target(&s.covariance, &s.grid, 1, k).is_ok());
    }

    #[test]
    fn named_shift_parsing() {
        assert_eq!("sine".parse::<NamedShift>().unwrap(), NamedShift::Sine);
        assert_eq!("covcol:3".parse::<NamedShift>().unwrap(), NamedShift::CovCol(3));
        assert!("covcol:0".parse::<NamedShift>().is_err());
        assert!("cosine".parse::<NamedShift>().is_err());
        assert_eq!(NamedShift::CovCol(7).to_string(), "covcol:7");
    }

    #[test]
    fn zero_magnitude_density_is_one() {
        let (_, s) = setup(0.5, 2, 32);
        let shift = NamedShift::Sine.build(&s.covariance, &s.grid, 2).unwrap();
        assert_eq!(gaussian_rn_density(&shift, 0.0, &s.replica(0)).unwrap(), 1.0);
    }

    #[test]
    fn density_cocycle() {
        let (_, s) = setup(0.5, 2, 64);
        let shift = NamedShift::Sine.build(&s.covariance, &s.grid, 2).unwrap();
        let (u, v) = (0.4, -0.7);
        for r in 0..10 {
            let x = s.replica(r);
            let lhs = gaussian_rn_density(&shift, u + v, &x).unwrap();
            let back = ShiftedPath::new(&x, &shift, -u).unwrap();
            let rhs = gaussian_rn_density(&shift, u, &x).unwrap() * gaussian_rn_density(&shift, v, &back).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs());
        }
    }

    #[test]
    fn log_density_is_affine_in_path() {
        let (_, s) = setup(0.4, 2, 32);
        let shift = NamedShift::Linear.build(&s.covariance, &s.grid, 2).unwrap();
        let (a, b) = (s.replica(1), s.replica(2));
        let lam = 0.3;
        let mix = RawPath {
            grid: a.grid.clone(),
            dim: 2,
            values: a.values.iter().zip(&b.values).map(|(x, y)| lam * x + (1.0 - lam) * y).collect(),
        };
        let la = log_rn_density(&shift, 0.8, &a).unwrap();
        let lb = log_rn_density(&shift, 0.8, &b).unwrap();
        let lm = log_rn_density(&shift, 0.8, &mix).unwrap();
        assert!((lm - (lam * la + (1.0 - lam) * lb)).abs() < 1e-10);
    }

    #[test]
    fn density_has_unit_mean() {
        let (_, s) = setup(0.5, 2, 64);
        let shift = NamedShift::Linear.build(&s.covariance, &s.grid, 2).unwrap();
        let vals: Vec<f64> = (0..4000).map(|r| gaussian_rn_density(&shift, 0.5, &s.replica(r)).unwrap()).collect();
        assert!(stats::mean_se(&vals).within(1.0, 5.0));
    }

    #[test]
    fn extreme_magnitude_is_range_error() {
        let (_, s) = setup(0.5, 1, 64);
        let shift = NamedShift::Sine.build(&s.covariance, &s.grid, 1).unwrap();
        let err = gaussian_rn_density(&shift, -1e3, &s.replica(0));
        assert!(matches!(err, Err(Error::Range(_))), "{err:?}");
        let far = shift.scaled(1e3).as_path();
        let err = gaussian_rn_density(&shift, 1.0, &far);
        assert!(matches!(err, Err(Error::Range(_))), "{err:?}");
    }

    #[test]
    fn shifted_values_offset_by_uk() {
        let (_, s) = setup(0.5, 2, 16);
        let shift = NamedShift::Sine.build(&s.covariance, &s.grid, 2).unwrap();
        let base = s.replica(0);
        let sp = ShiftedPath::new(&base, &shift, 0.75).unwrap();
        for ((v, b), k) in sp.values.iter().zip(&base.values).zip(&shift.k) {
            assert!(((v - b) - 0.75 * k).abs() <= 4.0 * f64::EPSILON * (v.abs() + b.abs()));
        }
    }

    #[test]
    fn kernel_and_target_shifts_agree() {
        let p = ModelParams::new(0.7, 1, 1.0, 0.0, 17, 0).unwrap();
        let s = FbmSampler::new(&p).unwrap();
        let h: Vec<f64> = s.grid.points().iter().map(|t| 1.0 + t).collect();
        let from_h = make_shift_from_h(&s.covariance, &s.grid, 0.7, 1, h.clone()).unwrap();
        // Independent k: nested tanh-sinh on the whole of [0, t].
        let kernel = KernelRH::new(0.7).unwrap();
        let k_ref: Vec<f64> = s
            .grid
            .points()
            .iter()
            .map(|&t| if t == 0.0 { 0.0 } else { tanh_sinh(0.0, t, 1e-12, |r, _| kernel.eval(t, r) * (1.0 + r)) })
            .collect();
        let from_target = make_shift_from_target(&s.covariance, &s.grid, 1, k_ref).unwrap();
        let num: f64 = from_h.w[0].iter().zip(&from_target.w[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = from_target.w[0].iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(num / den < 1e-3, "relative w difference {}", num / den);
    }

    #[test]
    fn shift_csv_round_trip() {
        let (_, s) = setup(0.5, 2, 16);
        let shift = NamedShift::Sine.build(&s.covariance, &s.grid, 2).unwrap();
        let mut buf = Vec::new();
        write_shift_csv(&shift, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,k_1,k_2"));
        let back = read_shift_csv(&s.covariance, &buf[..]).unwrap();
        assert_eq!(back.k, shift.k);
    }
}
