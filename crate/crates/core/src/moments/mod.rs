//! Moment machinery behind the continuity of the shifted Edwards density.
//!
//! - [`sigma_matrix`]: covariance of two fBm increments and its characteristic function.
//! - [`gaussian_moment_integral`]: the Gaussian moment integral with its closed-form candidate.
//! - [`l2_difference_silt`] and [`holder_verify`]: empirical `L²` Hölder bound for `u ↦ L_{ε,c}(X + uk)`.
//! - [`DensityProcess`] and [`continuity_scan`]: the density `a_{uk}` and a sampled continuity check.

mod integral;
mod sigma;

pub use integral::{
    gaussian_moment_integral, gaussian_moment_integral_with, moment_closed_form, radial_moment, MomentIntegral, MomentMethod, MomentOptions,
};
pub use sigma::{sigma_matrix, sigma_matrix_on, SigmaMatrix};

use rayon::prelude::*;

use crate::cameron_martin::{gaussian_rn_density, log_rn_density, CMShift, ShiftedPath};
use crate::error::{Error, Result};
use crate::fbm::{FbmSampler, ModelParams, PathLike};
use crate::scalar::Real;
use crate::silt::{silt_raw_multi, LadderConfig};
use crate::stats::{self, MeanSe};

fn check_shift<T: Real>(sampler: &FbmSampler<T>, shift: &CMShift<T>) -> Result<()> {
    if !sampler.grid.same_as(&shift.grid) || sampler.params.dim != shift.dim {
        return Err(Error::GridMismatch("shift does not live on the sampler grid".into()));
    }
    Ok(())
}

/// `E[(L_ε(X + uk) − L_ε(X + vk))²]` over `replicas` base paths shared by both
/// arguments. The expectations cancel, so raw sums are differenced directly.
pub fn l2_difference_silt<T: Real>(sampler: &FbmSampler<T>, shift: &CMShift<T>, eps: T, u: T, v: T, replicas: usize) -> Result<MeanSe> {
    check_shift(sampler, shift)?;
    if replicas < 2 {
        return Err(Error::InvalidParameter { name: "M", reason: "need at least two replicas".into() });
    }
    if u == v {
        return Ok(MeanSe { mean: 0.0, se: 0.0, n: replicas });
    }
    let sq: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let base = sampler.replica(r);
            let lu = silt_raw_multi(&ShiftedPath::new(&base, shift, u)?, &[eps])?[0];
            let lv = silt_raw_multi(&ShiftedPath::new(&base, shift, v)?, &[eps])?[0];
            let diff = (lu - lv).to_f64_lossy();
            Ok(diff * diff)
        })
        .collect::<Result<_>>()?;
    Ok(stats::mean_se(&sq))
}

/// Pairs `(anchor, anchor + gap)` probed by [`holder_verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct PairSchedule<T> {
    pub anchor: T,
    pub gaps: Vec<T>,
}

impl<T: Real> Default for PairSchedule<T> {
    fn default() -> Self {
        Self { anchor: T::zero(), gaps: [0.4, 0.2, 0.1, 0.05].iter().map(|&g| T::lit(g)).collect() }
    }
}

/// Squared differences and their log–log fit at one `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderLevel {
    pub epsilon: f64,
    pub sq_diff: Vec<MeanSe>,
    pub slope: f64,
    pub intercept: f64,
    /// Delete-a-block jackknife standard error of the slope.
    pub slope_se: f64,
}

impl HolderLevel {
    pub fn slope_interval(&self, z: f64) -> (f64, f64) {
        (self.slope - z * self.slope_se, self.slope + z * self.slope_se)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderReport {
    pub pairs: Vec<(f64, f64)>,
    /// One entry per ladder rung, largest `ε` first.
    pub levels: Vec<HolderLevel>,
    /// Exponent `1 + γ` the slope is compared against.
    pub target_exponent: f64,
    pub replicas: usize,
}

impl HolderReport {
    pub fn smallest(&self) -> &HolderLevel {
        self.levels.last().expect("report has at least one level")
    }

    /// Lower end of the two-sided 95% interval at the smallest `ε` clears the target.
    pub fn passes(&self) -> bool {
        self.smallest().slope_interval(1.96).0 >= self.target_exponent
    }
}

const JACKKNIFE_BLOCKS: usize = 20;

fn log_log_fit(gaps: &[f64], means: &[f64]) -> (f64, f64) {
    let x: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let y: Vec<f64> = means.iter().map(|m| m.max(f64::MIN_POSITIVE).ln()).collect();
    let fit = stats::weighted_line_fit(&x, &y, &vec![1.0; x.len()]);
    (fit.slope, fit.intercept)
}

/// Squared-difference scaling in `|u − v|` at every ladder rung.
pub fn holder_verify<T: Real>(
    sampler: &FbmSampler<T>,
    shift: &CMShift<T>,
    ladder: &LadderConfig<T>,
    schedule: &PairSchedule<T>,
    replicas: usize,
) -> Result<HolderReport> {
    check_shift(sampler, shift)?;
    if schedule.gaps.len() < 2 || schedule.gaps.iter().any(|g| !(*g > T::zero())) {
        return Err(Error::InvalidParameter { name: "gaps", reason: "need at least two positive gaps".into() });
    }
    if replicas < 2 * JACKKNIFE_BLOCKS {
        return Err(Error::InvalidParameter { name: "M", reason: format!("need at least {} replicas", 2 * JACKKNIFE_BLOCKS) });
    }
    let eps = ladder.epsilons();
    let n_pairs = schedule.gaps.len();
    // diffs[r][level * n_pairs + pair]
    let diffs: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let base = sampler.replica(r);
            let anchor = silt_raw_multi(&ShiftedPath::new(&base, shift, schedule.anchor)?, &eps)?;
            let mut out = vec![0.0; eps.len() * n_pairs];
            for (p, &gap) in schedule.gaps.iter().enumerate() {
                let moved = silt_raw_multi(&ShiftedPath::new(&base, shift, schedule.anchor + gap)?, &eps)?;
                for l in 0..eps.len() {
                    out[l * n_pairs + p] = (moved[l] - anchor[l]).to_f64_lossy();
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let gaps: Vec<f64> = schedule.gaps.iter().map(|g| g.to_f64_lossy()).collect();
    let block = replicas / JACKKNIFE_BLOCKS;
    let mut levels = Vec::with_capacity(eps.len());
    for (l, e) in eps.iter().enumerate() {
        let column = |p: usize| -> Vec<f64> { diffs.iter().map(|row| row[l * n_pairs + p] * row[l * n_pairs + p]).collect() };
        let cols: Vec<Vec<f64>> = (0..n_pairs).map(column).collect();
        let sq_diff: Vec<MeanSe> = cols.iter().map(|c| stats::mean_se(c)).collect();
        let means: Vec<f64> = sq_diff.iter().map(|m| m.mean).collect();
        let (slope, intercept) = log_log_fit(&gaps, &means);
        let totals: Vec<f64> = cols.iter().map(|c| c.iter().sum()).collect();
        let jack: Vec<f64> = (0..JACKKNIFE_BLOCKS)
            .map(|b| {
                let (lo, hi) = (b * block, if b + 1 == JACKKNIFE_BLOCKS { replicas } else { (b + 1) * block });
                let kept = (replicas - (hi - lo)) as f64;
                let m: Vec<f64> = cols.iter().zip(&totals).map(|(c, t)| (t - c[lo..hi].iter().sum::<f64>()) / kept).collect();
                log_log_fit(&gaps, &m).0
            })
            .collect();
        let jm = jack.iter().sum::<f64>() / JACKKNIFE_BLOCKS as f64;
        let b = JACKKNIFE_BLOCKS as f64;
        let slope_se = ((b - 1.0) / b * jack.iter().map(|s| (s - jm) * (s - jm)).sum::<f64>()).sqrt();
        levels.push(HolderLevel { epsilon: e.to_f64_lossy(), sq_diff, slope, intercept, slope_se });
    }
    let a = schedule.anchor.to_f64_lossy();
    Ok(HolderReport { pairs: gaps.iter().map(|g| (a, a + g)).collect(), levels, target_exponent: 1.5, replicas })
}

/// Which factor multiplies the local-time increment in the exponent of `a_{uk}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExponentMode {
    /// `exp(−g (L(x − uk) − L(x))) ρ_u(x)`: the density of the `uk`-translate of
    /// the Edwards measure with respect to itself.
    #[default]
    Coupling,
    /// `exp(−u (L(x + uk) − L(x))) ρ_u(x)`, the literal form with `u` in the exponent.
    StrictPaper,
}

/// `a_{uk}` at a fixed regularization.
#[derive(Debug, Clone)]
pub struct DensityProcess<'a, T> {
    pub shift: &'a CMShift<T>,
    pub coupling: T,
    pub eps: T,
    pub mode: ExponentMode,
}

impl<'a, T: Real> DensityProcess<'a, T> {
    pub fn new(params: &ModelParams<T>, shift: &'a CMShift<T>, eps: T) -> Result<Self> {
        if !(eps > T::zero()) {
            return Err(Error::InvalidParameter { name: "eps", reason: "must be positive".into() });
        }
        Ok(Self { shift, coupling: params.coupling, eps, mode: ExponentMode::Coupling })
    }

    pub fn with_mode(mut self, mode: ExponentMode) -> Self {
        self.mode = mode;
        self
    }

    fn local_time_shift(&self, u: T) -> T {
        match self.mode {
            ExponentMode::Coupling => -u,
            ExponentMode::StrictPaper => u,
        }
    }

    fn exponent_factor(&self, u: T) -> T {
        match self.mode {
            ExponentMode::Coupling => self.coupling,
            ExponentMode::StrictPaper => u,
        }
    }

    fn trivial(&self, u: T) -> bool {
        self.exponent_factor(u) == T::zero()
    }

    /// `log a_{uk}(x)`, reusing `base_raw = L_ε(x)` when given.
    fn log_with_base<P: PathLike<T> + Sync>(&self, path: &P, u: T, base_raw: T) -> Result<T> {
        let log_rn = log_rn_density(self.shift, u, path)?;
        if self.trivial(u) {
            return Ok(log_rn);
        }
        let moved = silt_raw_multi(&ShiftedPath::new(path, self.shift, self.local_time_shift(u))?, &[self.eps])?[0];
        Ok(-self.exponent_factor(u) * (moved - base_raw) + log_rn)
    }

    pub fn log_at<P: PathLike<T> + Sync>(&self, path: &P, u: T) -> Result<T> {
        if u == T::zero() {
            return Ok(T::zero());
        }
        if self.trivial(u) {
            return log_rn_density(self.shift, u, path);
        }
        let base = silt_raw_multi(path, &[self.eps])?[0];
        self.log_with_base(path, u, base)
    }

    pub fn at<P: PathLike<T> + Sync>(&self, path: &P, u: T) -> Result<T> {
        if u == T::zero() {
            return Ok(T::one());
        }
        if self.trivial(u) {
            return gaussian_rn_density(self.shift, u, path);
        }
        let v = self.log_at(path, u)?.exp();
        if !v.is_finite() || v == T::zero() {
            return Err(Error::Range(format!("density process leaves the floating-point range at u = {u}")));
        }
        Ok(v)
    }

    /// `log a_{uk}(x)` along a `u` grid for one path.
    pub fn log_scan<P: PathLike<T> + Sync>(&self, path: &P, us: &[T]) -> Result<Vec<T>> {
        let base = silt_raw_multi(path, &[self.eps])?[0];
        us.iter().map(|&u| if u == T::zero() { Ok(T::zero()) } else { self.log_with_base(path, u, base) }).collect()
    }
}

/// `a_{uk}(path)` with the default exponent.
pub fn density_process<T: Real, P: PathLike<T> + Sync>(params: &ModelParams<T>, shift: &CMShift<T>, u: T, path: &P, eps: T) -> Result<T> {
    DensityProcess::new(params, shift, eps)?.at(path, u)
}

/// Per-`u` envelope and adjacent-jump statistics of `a_{uk}` over a path set.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityScan {
    /// Fine grid; the coarse grid is every other point.
    pub us: Vec<f64>,
    pub a_min: Vec<f64>,
    pub a_max: Vec<f64>,
    /// Largest relative jump over paths from `us[i−1]` to `us[i]` (0 at `i = 0`).
    pub max_jump: Vec<f64>,
    /// Per path: largest adjacent relative jump on the fine and coarse grids.
    pub path_max_fine: Vec<f64>,
    pub path_max_coarse: Vec<f64>,
    pub p95_fine: f64,
    pub p95_coarse: f64,
}

impl ContinuityScan {
    /// How much halving the `u` step shrinks the 95th-percentile jump.
    pub fn ratio(&self) -> f64 {
        self.p95_coarse / self.p95_fine
    }

    pub fn passes(&self) -> bool {
        self.ratio() >= 2.0
    }
}

/// Relative jump `|a' − a| / min(a, a')` from log values.
fn relative_jump(la: f64, lb: f64) -> f64 {
    (la - lb).abs().exp_m1()
}

/// Evaluates `a_{uk}` on `fine_steps + 1` equispaced points of `[u_lo, u_hi]`
/// for every path. `fine_steps` must be even so the coarse grid nests.
pub fn continuity_scan<T: Real, P: PathLike<T> + Sync>(
    process: &DensityProcess<'_, T>,
    u_lo: T,
    u_hi: T,
    fine_steps: usize,
    paths: &[P],
) -> Result<ContinuityScan> {
    if fine_steps < 2 || !fine_steps.is_multiple_of(2) || !(u_hi > u_lo) {
        return Err(Error::InvalidParameter { name: "u grid", reason: "need u_hi > u_lo and an even step count ≥ 2".into() });
    }
    if paths.is_empty() {
        return Err(Error::InvalidParameter { name: "paths", reason: "empty path set".into() });
    }
    let step = (u_hi - u_lo) / T::from_count(fine_steps);
    let us: Vec<T> = (0..=fine_steps).map(|i| u_lo + step * T::from_count(i)).collect();
    let logs: Vec<Vec<f64>> =
        paths.par_iter().map(|p| Ok(process.log_scan(p, &us)?.iter().map(|v| v.to_f64_lossy()).collect())).collect::<Result<_>>()?;
    if logs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Range("non-finite log density in continuity scan".into()));
    }
    let n = us.len();
    let mut a_min = vec![f64::INFINITY; n];
    let mut a_max = vec![f64::NEG_INFINITY; n];
    let mut max_jump = vec![0.0f64; n];
    let mut path_max_fine = Vec::with_capacity(paths.len());
    let mut path_max_coarse = Vec::with_capacity(paths.len());
    for l in &logs {
        let mut fine = 0.0f64;
        for i in 0..n {
            let a = l[i].exp();
            a_min[i] = a_min[i].min(a);
            a_max[i] = a_max[i].max(a);
            if i > 0 {
                let j = relative_jump(l[i], l[i - 1]);
                max_jump[i] = max_jump[i].max(j);
                fine = fine.max(j);
            }
        }
        let coarse = (2..n).step_by(2).map(|i| relative_jump(l[i], l[i - 2])).fold(0.0, f64::max);
        path_max_fine.push(fine);
        path_max_coarse.push(coarse);
    }
    Ok(ContinuityScan {
        us: us.iter().map(|u| u.to_f64_lossy()).collect(),
        a_min,
        a_max,
        max_jump,
        p95_fine: stats::quantile(&path_max_fine, 0.95),
        p95_coarse: stats::quantile(&path_max_coarse, 0.95),
        path_max_fine,
        path_max_coarse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cameron_martin::NamedShift;
    use crate::fbm::FbmPath;
    use crate::silt::silt_raw;

    fn setup(n: usize, g: f64, shift: NamedShift) -> (FbmSampler<f64>, CMShift<f64>) {
        let p = ModelParams::new(0.5, 2, 1.0, g, n, 21).unwrap();
        let s = FbmSampler::new(&p).unwrap();
        let k = shift.build(&s.covariance, &s.grid, 2).unwrap();
        (s, k)
    }

    #[test]
    fn l2_difference_vanishes_on_the_diagonal() {
        let (s, k) = setup(33, 0.0, NamedShift::Sine);
        let m = l2_difference_silt(&s, &k, 0.05, 0.3, 0.3, 10).unwrap();
        assert_eq!((m.mean, m.se), (0.0, 0.0));
    }

    #[test]
    fn l2_difference_is_symmetric_and_scale_covariant() {
        let (s, k) = setup(33, 0.0, NamedShift::Sine);
        let a = l2_difference_silt(&s, &k, 0.05, 0.2, 0.7, 20).unwrap();
        let b = l2_difference_silt(&s, &k, 0.05, 0.7, 0.2, 20).unwrap();
        assert_eq!(a, b);
        assert!(a.mean > 0.0);
        let k2 = k.scaled(2.0);
        let c = l2_difference_silt(&s, &k2, 0.05, 0.2, 0.7, 20).unwrap();
        let d = l2_difference_silt(&s, &k, 0.05, 0.4, 1.4, 20).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn holder_slope_exceeds_threshold() {
        let (s, k) = setup(65, 0.0, NamedShift::Sine);
        let ladder = LadderConfig::new(0.04, 3).unwrap();
        let r = holder_verify(&s, &k, &ladder, &PairSchedule::default(), 200).unwrap();
        assert_eq!(r.levels.len(), 4);
        assert!(r.levels.iter().all(|l| l.sq_diff.iter().all(|m| m.mean >= 0.0)));
        assert!(r.passes(), "slope {} ± {}", r.smallest().slope, r.smallest().slope_se);
    }

    #[test]
    fn density_is_one_at_zero_shift() {
        let (s, k) = setup(33, 0.1, NamedShift::Sine);
        let path = s.replica(0);
        assert_eq!(density_process(&s.params, &k, 0.0, &path, 0.01).unwrap(), 1.0);
    }

    #[test]
    fn zero_coupling_is_gaussian_density() {
        let (s, k) = setup(33, 0.0, NamedShift::Linear);
        for r in 0..5 {
            let path = s.replica(r);
            let a = density_process(&s.params, &k, 0.7, &path, 0.01).unwrap();
            assert_eq!(a, gaussian_rn_density(&k, 0.7, &path).unwrap());
        }
    }

    /// Cocycle `a_{u+v}(x) = a_u(x) a_v(x − uk)` for `g = 0`.
    #[test]
    fn zero_coupling_cocycle() {
        let (s, k) = setup(33, 0.0, NamedShift::Sine);
        let proc = DensityProcess::new(&s.params, &k, 0.01).unwrap();
        let path = s.replica(3);
        let (u, v) = (0.4, -0.9);
        let back = ShiftedPath::new(&path, &k, -u).unwrap();
        let lhs = proc.at(&path, u + v).unwrap();
        let rhs = proc.at(&path, u).unwrap() * proc.at(&back, v).unwrap();
        assert!((lhs / rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn modes_differ_only_in_the_exponent() {
        let (s, k) = setup(33, 0.1, NamedShift::Sine);
        let path = s.replica(1);
        let u = 0.5;
        let eps = 0.02;
        let base = silt_raw(&path, eps).unwrap();
        let plus = silt_raw(&ShiftedPath::new(&path, &k, u).unwrap(), eps).unwrap();
        let minus = silt_raw(&ShiftedPath::new(&path, &k, -u).unwrap(), eps).unwrap();
        let lr = log_rn_density(&k, u, &path).unwrap();
        let strict = DensityProcess::new(&s.params, &k, eps).unwrap().with_mode(ExponentMode::StrictPaper);
        assert!((strict.log_at(&path, u).unwrap() - (-u * (plus - base) + lr)).abs() < 1e-12);
        let coupled = DensityProcess::new(&s.params, &k, eps).unwrap();
        assert!((coupled.log_at(&path, u).unwrap() - (-0.1 * (minus - base) + lr)).abs() < 1e-12);
        let scan = coupled.log_scan(&path, &[0.0, u]).unwrap();
        assert_eq!(scan[1], coupled.log_at(&path, u).unwrap());
    }

    /// Mean of `a_{uk}` under the Edwards measure, by self-normalized weights `e^{−g L}`.
    #[test]
    fn density_is_normalized_under_the_edwards_measure() {
        let (s, k) = setup(65, 1.0, NamedShift::Linear);
        let eps = 0.02;
        let proc = DensityProcess::new(&s.params, &k, eps).unwrap();
        let paths: Vec<FbmPath<f64>> = (0..3000).map(|r| s.replica(r)).collect();
        let mean_raw = paths.iter().take(200).map(|p| silt_raw(p, eps).unwrap()).sum::<f64>() / 200.0;
        let (vals, ws): (Vec<f64>, Vec<f64>) = paths
            .iter()
            .map(|p| {
                let w = (-(silt_raw(p, eps).unwrap() - mean_raw)).exp();
                (proc.at(p, 0.5).unwrap(), w)
            })
            .unzip();
        let m = stats::weighted_mean_se(&vals, &ws);
        assert!(m.within(1.0, 5.0), "{} ± {}", m.mean, m.se);
    }

    #[test]
    fn halving_the_step_halves_the_jumps() {
        let (s, k) = setup(65, 0.1, NamedShift::Sine);
        let proc = DensityProcess::new(&s.params, &k, 0.01).unwrap();
        let paths: Vec<FbmPath<f64>> = (0..30).map(|r| s.replica(r)).collect();
        let scan = continuity_scan(&proc, 0.0, 1.0, 20, &paths).unwrap();
        assert_eq!(scan.us.len(), 21);
        assert!(scan.a_min.iter().zip(&scan.a_max).all(|(a, b)| a <= b && *a > 0.0));
        assert!(scan.passes(), "ratio {}", scan.ratio());
    }

    #[test]
    fn scan_rejects_odd_grids() {
        let (s, k) = setup(17, 0.1, NamedShift::Sine);
        let proc = DensityProcess::new(&s.params, &k, 0.01).unwrap();
        let paths = vec![s.replica(0)];
        assert!(continuity_scan(&proc, 0.0, 1.0, 5, &paths).is_err());
        assert!(continuity_scan(&proc, 1.0, 0.0, 4, &paths).is_err());
    }
}
