//! The fractional Edwards measure `ν_{H,g} ∝ e^{−g L_c} ν_H` at desk scale.
//!
//! Expectations under `ν_{H,g}` come from importance weights on fBm replicas
//! ([`edwards_ensemble`]) or from a path-space Langevin chain
//! ([`mala`]). Both work at a fixed regularization `ε`, the floor of the
//! ladder, since the `ε → 0` density cannot be evaluated pointwise.

pub mod cylinder;
pub mod form;
pub mod mala;

pub use cylinder::{gradient_cylinder, CylinderFunction, Functional, Profile};
pub use form::{covcol_basis, dirichlet_form, orthonormalize, FormEstimate};
pub use mala::{mala_chain, resume_chain, resume_chains, run_chains, ChainRun, ChainState, LogTarget, MalaConfig, MultiChain};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::{FbmPath, FbmSampler, ModelParams};
use crate::scalar::Real;
use crate::silt::{LadderConfig, SiltEstimator};
use crate::stats::{self, MeanSe};

/// Shape of the weight distribution, a proxy for finiteness of `E e^{−2g L_c}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTail {
    /// Largest normalized weight.
    pub max_normalized: f64,
    /// Share of the total weight carried by the top 1% of replicas.
    pub top_percentile_share: f64,
    /// `mean(w²) / mean(w)²`, the sample estimate of `E e^{−2gL} / (E e^{−gL})²`.
    pub second_moment_ratio: f64,
}

/// fBm replicas with their `L_c` estimates and Edwards weights `e^{−g L_c}`.
#[derive(Debug, Clone)]
pub struct WeightedEnsemble<T> {
    pub paths: Vec<FbmPath<T>>,
    /// Centered local time at the smallest ladder `ε`.
    pub lc: Vec<f64>,
    pub weights: Vec<f64>,
    pub ess: f64,
    pub epsilon: f64,
    pub coupling: f64,
    /// Fraction of replicas whose ladder met the convergence ratio.
    pub converged_fraction: f64,
    pub tail: WeightTail,
    pub warnings: Vec<String>,
}

impl<T: Real> WeightedEnsemble<T> {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Self-normalized `E_{ν_{H,g}}[f]` from per-replica values.
    pub fn mean(&self, values: &[f64]) -> MeanSe {
        stats::weighted_mean_se(values, &self.weights)
    }

    /// `E_{ν_{H,g}}[L_c]`.
    pub fn mean_lc(&self) -> MeanSe {
        self.mean(&self.lc)
    }

    /// The same replicas weighted for another coupling.
    pub fn reweighted(&self, coupling: f64) -> Result<Self> {
        let mut out = self.clone();
        out.coupling = coupling;
        out.weights = weights_for(&self.lc, coupling)?;
        out.ess = stats::effective_sample_size(&out.weights);
        out.tail = weight_tail(&out.weights);
        out.warnings = degeneracy_warning(out.ess, out.len()).into_iter().collect();
        Ok(out)
    }

    pub fn degenerate(&self) -> bool {
        self.ess < 0.01 * self.len() as f64
    }
}

fn weight_tail(weights: &[f64]) -> WeightTail {
    let n = weights.len() as f64;
    let total: f64 = weights.iter().sum();
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = ((0.01 * n).ceil() as usize).max(1);
    let mean = total / n;
    let mean_sq = weights.iter().map(|w| w * w).sum::<f64>() / n;
    WeightTail {
        max_normalized: sorted[0] / total,
        top_percentile_share: sorted[..top].iter().sum::<f64>() / total,
        second_moment_ratio: mean_sq / (mean * mean),
    }
}

fn weights_for(lc: &[f64], g: f64) -> Result<Vec<f64>> {
    let weights: Vec<f64> = lc.iter().map(|l| (-g * l).exp()).collect();
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::Range(format!("Edwards weight of replica {i} is {} (L_c = {})", weights[i], lc[i])));
    }
    Ok(weights)
}

fn degeneracy_warning(ess: f64, m: usize) -> Option<String> {
    (ess < 0.01 * m as f64).then(|| format!("weights degenerate: ess = {ess:.1} < 1% of M = {m}; coupling too large for this M"))
}

/// Samples `replicas` paths and weights them by `e^{−g L_c}`.
pub fn edwards_ensemble<T: Real>(params: &ModelParams<T>, replicas: usize, ladder: &LadderConfig<T>) -> Result<WeightedEnsemble<T>> {
    if replicas < 100 {
        return Err(Error::InvalidParameter { name: "M", reason: format!("need at least 100 replicas, got {replicas}") });
    }
    let sampler = FbmSampler::new(params)?;
    let estimator = SiltEstimator::new(params, sampler.grid.clone());
    let g = params.coupling.to_f64_lossy();
    let rows: Vec<(FbmPath<T>, f64, bool)> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let path = sampler.replica(r);
            let ladder = estimator.ladder(&path, ladder)?;
            Ok((path, ladder.limit.to_f64_lossy(), ladder.converged))
        })
        .collect::<Result<_>>()?;
    let mut paths = Vec::with_capacity(replicas);
    let mut lc = Vec::with_capacity(replicas);
    let mut converged = 0usize;
    for (p, l, c) in rows {
        paths.push(p);
        lc.push(l);
        converged += c as usize;
    }
    let weights = weights_for(&lc, g)?;
    let ess = stats::effective_sample_size(&weights);
    let warnings = degeneracy_warning(ess, replicas).into_iter().collect();
    Ok(WeightedEnsemble {
        paths,
        lc,
        tail: weight_tail(&weights),
        weights,
        ess,
        epsilon: ladder.smallest().to_f64_lossy(),
        coupling: g,
        converged_fraction: converged as f64 / replicas as f64,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder() -> LadderConfig<f64> {
        LadderConfig::new(0.04, 3).unwrap()
    }

    #[test]
    fn zero_coupling_has_unit_weights() {
        let p = ModelParams::new(0.5, 2, 1.0, 0.0, 33, 1).unwrap();
        let e = edwards_ensemble(&p, 200, &ladder()).unwrap();
        assert!(e.weights.iter().all(|&w| w == 1.0));
        assert_eq!(e.ess, 200.0);
        assert!(e.warnings.is_empty());
    }

    #[test]
    fn normalized_weights_sum_to_one() {
        let p = ModelParams::new(0.5, 2, 1.0, 0.1, 33, 2).unwrap();
        let e = edwards_ensemble(&p, 500, &ladder()).unwrap();
        let s: f64 = e.normalized_weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(e.ess > 0.0 && e.ess <= 500.0);
        assert!(e.tail.second_moment_ratio >= 1.0);
        assert!(e.tail.top_percentile_share >= 0.01);
    }

    /// Tilting by `e^{−gL}` lowers the mean of `L`.
    #[test]
    fn tilt_lowers_the_mean() {
        let p = ModelParams::new(0.5, 2, 1.0, 1.0, 33, 3).unwrap();
        let e = edwards_ensemble(&p, 2000, &ladder()).unwrap();
        let plain = stats::mean_se(&e.lc);
        let tilted = e.mean_lc();
        assert!(plain.mean - tilted.mean > 5.0 * tilted.se, "{} ± {} vs {}", tilted.mean, tilted.se, plain.mean);
    }

    #[test]
    fn reweighting_matches_a_fresh_ensemble() {
        let p = ModelParams::new(0.5, 2, 1.0, 0.0, 33, 7).unwrap();
        let e = edwards_ensemble(&p, 150, &ladder()).unwrap();
        let fresh = edwards_ensemble(&p.with_coupling(0.3), 150, &ladder()).unwrap();
        let re = e.reweighted(0.3).unwrap();
        assert_eq!(re.weights, fresh.weights);
        assert_eq!(re.ess, fresh.ess);
    }

    #[test]
    fn too_few_replicas_and_overflow_are_errors() {
        let p = ModelParams::new(0.5, 2, 1.0, 0.1, 17, 4).unwrap();
        assert!(edwards_ensemble(&p, 50, &ladder()).is_err());
        let huge = ModelParams::new(0.5, 2, 1.0, -1e6, 17, 4).unwrap();
        assert!(matches!(edwards_ensemble(&huge, 100, &ladder()), Err(Error::Range(_))));
    }

    #[test]
    fn strong_coupling_is_flagged() {
        let p = ModelParams::new(0.5, 2, 1.0, 400.0, 17, 5).unwrap();
        let e = edwards_ensemble(&p, 200, &ladder()).unwrap();
        assert!(e.degenerate() && !e.warnings.is_empty(), "ess {}", e.ess);
    }
}
