//! Metropolis-adjusted Langevin sampling of the discretized Edwards density
//!
//! ```text
//! log π(x) = −½ Σ_c x_cᵀ Σ⁻¹ x_c − g L_{ε,c}(x)
//! ```
//!
//! at a fixed `ε`. The chain runs in whitened coordinates `x_c = L z_c`
//! (`Σ = L Lᵀ`), where the Gaussian part is `−½|z|²`, so a single scalar step
//! size serves every grid resolution. The step is tuned by Robbins–Monro
//! during burn-in and frozen afterwards; detailed balance holds exactly for
//! the frozen kernel.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! "MALA" | u32 version | u32 N | u32 d | u64 iteration
//! u64 burn_accepted | u64 burn_proposed | u64 accepted | u64 proposed
//! f64 step | f64 eps | u64 seed | u64 stream | u128 word_pos
//! f64 × (N−1)·d   z, component-major
//! ```

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::{FbmSampler, GridCovariance, ModelParams, RawPath, TimeGrid};
use crate::rng::{self, Domain, StreamRng};
use crate::scalar::Real;
use crate::silt::{silt_expectation_grid, silt_raw, silt_raw_gradient};
use crate::stats::{self, MeanSe};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MALA";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MalaConfig<T> {
    /// Regularization of the target; the chain never sees `ε → 0`.
    pub eps: T,
    /// Initial step `τ` in whitened coordinates.
    pub step: T,
    pub burn_in: usize,
    /// Post burn-in iterations per chain.
    pub iterations: usize,
    pub thin: usize,
    pub chains: usize,
    pub target_accept: f64,
    /// Robbins–Monro step tuning during burn-in.
    pub adapt: bool,
}

impl<T: Real> Default for MalaConfig<T> {
    fn default() -> Self {
        Self {
            eps: T::lit(0.0125),
            step: T::lit(0.3),
            burn_in: 1000,
            iterations: 10_000,
            thin: 10,
            chains: 1,
            target_accept: 0.574,
            adapt: true,
        }
    }
}

impl<T: Real> MalaConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > T::zero()) {
            return Err(Error::InvalidParameter { name: "eps", reason: "must be positive".into() });
        }
        if !(self.step > T::zero()) {
            return Err(Error::InvalidParameter { name: "step", reason: "must be positive".into() });
        }
        if self.thin == 0 || self.chains == 0 {
            return Err(Error::InvalidParameter { name: "thin", reason: "thin and chains must be at least 1".into() });
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidParameter { name: "target_accept", reason: "must lie in (0, 1)".into() });
        }
        Ok(())
    }

    /// Burn-in plus sampling iterations.
    pub fn total(&self) -> u64 {
        (self.burn_in + self.iterations) as u64
    }
}

/// Value and gradient of the log-target at one whitened state.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEval<T> {
    pub log_target: T,
    /// `L_{ε,c}` of the colored path, when it was computed.
    pub silt: Option<T>,
    pub grad: Vec<T>,
}

/// The discretized Edwards log-density in whitened coordinates.
#[derive(Debug, Clone)]
pub struct LogTarget<T> {
    pub grid: Arc<TimeGrid<T>>,
    pub covariance: Arc<GridCovariance<T>>,
    pub dim: usize,
    pub coupling: T,
    pub eps: T,
    /// Grid expectation subtracted from the raw local time.
    pub expectation: T,
}

impl<T: Real> LogTarget<T> {
    pub fn new(params: &ModelParams<T>, eps: T) -> Result<Self> {
        let sampler = FbmSampler::new(params)?;
        let expectation = silt_expectation_grid(params.hurst, params.dim, &sampler.grid, eps)?;
        Ok(Self { grid: sampler.grid, covariance: sampler.covariance, dim: params.dim, coupling: params.coupling, eps, expectation })
    }

    pub fn size(&self) -> usize {
        (self.grid.len() - 1) * self.dim
    }

    /// `x = L z`, as an `N × d` path.
    pub fn color(&self, z: &[T]) -> RawPath<T> {
        let m = self.grid.len() - 1;
        let mut values = vec![T::zero(); (m + 1) * self.dim];
        for c in 0..self.dim {
            let x = self.covariance.factor.mul_lower(&z[c * m..(c + 1) * m]);
            for (i, v) in x.into_iter().enumerate() {
                values[(i + 1) * self.dim + c] = v;
            }
        }
        RawPath { grid: self.grid.clone(), dim: self.dim, values }
    }

    /// `z = L⁻¹ x` for an `N × d` path.
    pub fn whiten(&self, values: &[T]) -> Vec<T> {
        let m = self.grid.len() - 1;
        let mut z = Vec::with_capacity(m * self.dim);
        for c in 0..self.dim {
            let x: Vec<T> = (1..=m).map(|i| values[i * self.dim + c]).collect();
            z.extend(self.covariance.factor.solve_lower(&x));
        }
        z
    }

    /// `L_{ε,c}` of a colored path.
    pub fn silt_centered(&self, path: &RawPath<T>) -> Result<T> {
        Ok(silt_raw(path, self.eps)? - self.expectation)
    }

    /// `log π(z)` and `∇_z log π`; the local time is skipped when `g = 0`
    /// unless `need_silt`.
    pub fn evaluate(&self, z: &[T], need_silt: bool) -> Result<TargetEval<T>> {
        if z.len() != self.size() {
            return Err(Error::GridMismatch(format!("state has {} entries, expected {}", z.len(), self.size())));
        }
        let half = T::lit(0.5);
        let gauss = -half * z.iter().map(|v| *v * *v).sum::<T>();
        let mut grad: Vec<T> = z.iter().map(|v| -*v).collect();
        if self.coupling == T::zero() {
            let silt = if need_silt { Some(self.silt_centered(&self.color(z))?) } else { None };
            return Ok(TargetEval { log_target: gauss, silt, grad });
        }
        let path = self.color(z);
        let (raw, gx) = silt_raw_gradient(&path, self.eps)?;
        let silt = raw - self.expectation;
        let m = self.grid.len() - 1;
        for c in 0..self.dim {
            let gc: Vec<T> = (1..=m).map(|i| gx[i * self.dim + c]).collect();
            let back = self.covariance.factor.mul_lower_t(&gc);
            for (i, b) in back.into_iter().enumerate() {
                grad[c * m + i] -= self.coupling * b;
            }
        }
        Ok(TargetEval { log_target: gauss - self.coupling * silt, silt: Some(silt), grad })
    }
}

/// Current point of a chain plus everything needed to resume it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<T> {
    /// Whitened state, component-major `(N−1)·d`.
    pub z: Vec<T>,
    /// Colored path values `N × d`.
    pub values: Vec<T>,
    pub silt: Option<T>,
    pub log_target: T,
    pub grad: Vec<T>,
    pub step: T,
    pub iteration: u64,
    pub burn_accepted: u64,
    pub burn_proposed: u64,
    pub accepted: u64,
    pub proposed: u64,
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl<T: Real> ChainState<T> {
    /// A draw from the Gaussian reference measure, using the chain's own stream.
    pub fn initial(target: &LogTarget<T>, config: &MalaConfig<T>, seed: u64, chain: usize) -> Result<Self> {
        let mut rng = rng::domain_rng(seed, Domain::Chain, chain as u64);
        let mut z = vec![T::zero(); target.size()];
        rng::fill_standard_normal(&mut rng, &mut z);
        let (stream, word_pos) = rng::stream_position(&rng);
        Self::at(target, z, config.step, seed, stream, word_pos)
    }

    fn at(target: &LogTarget<T>, z: Vec<T>, step: T, seed: u64, stream: u64, word_pos: u128) -> Result<Self> {
        let eval = target.evaluate(&z, false)?;
        let values = target.color(&z).values;
        Ok(Self {
            z,
            values,
            silt: eval.silt,
            log_target: eval.log_target,
            grad: eval.grad,
            step,
            iteration: 0,
            burn_accepted: 0,
            burn_proposed: 0,
            accepted: 0,
            proposed: 0,
            seed,
            stream,
            word_pos,
        })
    }

    /// Acceptance rate after burn-in (burn-in rate while still burning in).
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed > 0 {
            self.accepted as f64 / self.proposed as f64
        } else if self.burn_proposed > 0 {
            self.burn_accepted as f64 / self.burn_proposed as f64
        } else {
            0.0
        }
    }

    pub fn write_checkpoint<W: Write>(&self, target: &LogTarget<T>, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(target.grid.len() as u32).to_le_bytes())?;
        out.write_all(&(target.dim as u32).to_le_bytes())?;
        for v in [self.iteration, self.burn_accepted, self.burn_proposed, self.accepted, self.proposed] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.step.to_f64_lossy().to_le_bytes())?;
        out.write_all(&target.eps.to_f64_lossy().to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&self.stream.to_le_bytes())?;
        out.write_all(&self.word_pos.to_le_bytes())?;
        for v in &self.z {
            out.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a checkpoint and recomputes the cached target values.
    pub fn read_checkpoint<R: Read>(target: &LogTarget<T>, mut input: R) -> Result<Self> {
        let mut head = [0u8; 4 + 4 + 4 + 4 + 5 * 8 + 8 + 8 + 8 + 8 + 16];
        input.read_exact(&mut head).map_err(|_| Error::Format("truncated checkpoint header".into()))?;
        if &head[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad magic, expected MALA".into()));
        }
        let u32_at = |k: usize| u32::from_le_bytes(head[k..k + 4].try_into().expect("4 bytes"));
        let u64_at = |k: usize| u64::from_le_bytes(head[k..k + 8].try_into().expect("8 bytes"));
        if u32_at(4) != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", u32_at(4))));
        }
        let (n, d) = (u32_at(8) as usize, u32_at(12) as usize);
        if n != target.grid.len() || d != target.dim {
            return Err(Error::GridMismatch(format!("checkpoint is {n}×{d}, target is {}×{}", target.grid.len(), target.dim)));
        }
        let counters: Vec<u64> = (0..5).map(|j| u64_at(16 + 8 * j)).collect();
        let step = f64::from_bits(u64_at(56));
        let eps = f64::from_bits(u64_at(64));
        if eps != target.eps.to_f64_lossy() {
            return Err(Error::Format(format!("checkpoint was taken at eps = {eps}, target uses {}", target.eps)));
        }
        let seed = u64_at(72);
        let stream = u64_at(80);
        let word_pos = u128::from_le_bytes(head[88..104].try_into().expect("16 bytes"));
        let mut body = vec![0u8; 8 * target.size()];
        input.read_exact(&mut body).map_err(|_| Error::Format("truncated checkpoint state".into()))?;
        let z: Vec<T> = body.chunks_exact(8).map(|b| T::lit(f64::from_le_bytes(b.try_into().expect("8 bytes")))).collect();
        let mut state = Self::at(target, z, T::lit(step), seed, stream, word_pos)?;
        state.iteration = counters[0];
        state.burn_accepted = counters[1];
        state.burn_proposed = counters[2];
        state.accepted = counters[3];
        state.proposed = counters[4];
        Ok(state)
    }
}

/// Thinned observables recorded after burn-in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainTrace {
    pub iteration: Vec<u64>,
    /// `L_{ε,c}` at the chain's `ε`.
    pub silt: Vec<f64>,
    /// First component at the middle grid point.
    pub x_mid: Vec<f64>,
    /// `|x(T)|²`.
    pub end_sq: Vec<f64>,
    pub log_target: Vec<f64>,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.iteration.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iteration.is_empty()
    }

    fn extend(&mut self, other: &ChainTrace) {
        self.iteration.extend(&other.iteration);
        self.silt.extend(&other.silt);
        self.x_mid.extend(&other.x_mid);
        self.end_sq.extend(&other.end_sq);
        self.log_target.extend(&other.log_target);
    }
}

fn log_proposal<T: Real>(to: &[T], from: &[T], grad_from: &[T], step: T) -> T {
    let half = T::lit(0.5);
    let s: T = to
        .iter()
        .zip(from)
        .zip(grad_from)
        .map(|((&a, &b), &g)| {
            let r = a - b - half * step * g;
            r * r
        })
        .sum();
    -s / (T::lit(2.0) * step)
}

/// Runs `state` forward until `until` total iterations, recording the thinned
/// trace for post burn-in iterations.
pub fn advance<T: Real>(target: &LogTarget<T>, config: &MalaConfig<T>, state: &mut ChainState<T>, until: u64) -> Result<ChainTrace> {
    config.validate()?;
    let mut rng: StreamRng = rng::restore_stream(state.seed, state.stream, state.word_pos);
    let mut trace = ChainTrace::default();
    let mid = target.grid.len() / 2;
    let last = target.grid.len() - 1;
    let d = target.dim;
    let burn_in = config.burn_in as u64;
    let mut xi = vec![T::zero(); target.size()];
    while state.iteration < until {
        let burning = state.iteration < burn_in;
        rng::fill_standard_normal(&mut rng, &mut xi);
        let root = state.step.sqrt();
        let half_step = T::lit(0.5) * state.step;
        let proposal: Vec<T> = state.z.iter().zip(&state.grad).zip(&xi).map(|((&z, &g), &e)| z + half_step * g + root * e).collect();
        let eval = target.evaluate(&proposal, false)?;
        let log_alpha = if eval.log_target.is_finite() && eval.grad.iter().all(|g| g.is_finite()) {
            eval.log_target - state.log_target + log_proposal(&state.z, &proposal, &eval.grad, state.step)
                - log_proposal(&proposal, &state.z, &state.grad, state.step)
        } else {
            T::neg_infinity()
        };
        let u: T = rng::uniform(&mut rng);
        let accept = u.ln() < log_alpha;
        if burning {
            state.burn_proposed += 1;
        } else {
            state.proposed += 1;
        }
        if accept {
            if burning {
                state.burn_accepted += 1;
            } else {
                state.accepted += 1;
            }
            state.z = proposal;
            state.log_target = eval.log_target;
            state.silt = eval.silt;
            state.grad = eval.grad;
            state.values.clear();
        }
        if burning && config.adapt {
            let alpha = log_alpha.min(T::zero()).exp().to_f64_lossy();
            let gain = (state.iteration as f64 + 1.0).powf(-0.6);
            state.step *= T::lit((gain * (alpha - config.target_accept)).exp());
        }
        state.iteration += 1;
        let recorded = state.iteration > burn_in && (state.iteration - burn_in).is_multiple_of(config.thin as u64);
        if recorded || state.iteration == until {
            let path = target.color(&state.z);
            if state.silt.is_none() || state.values.is_empty() {
                state.values = path.values.clone();
            }
            if recorded {
                let silt = match state.silt {
                    Some(s) => s,
                    None => target.silt_centered(&path)?,
                };
                state.silt = Some(silt);
                let end: f64 = (0..d).map(|c| path.values[last * d + c].to_f64_lossy().powi(2)).sum();
                trace.iteration.push(state.iteration);
                trace.silt.push(silt.to_f64_lossy());
                trace.x_mid.push(path.values[mid * d].to_f64_lossy());
                trace.end_sq.push(end);
                trace.log_target.push(state.log_target.to_f64_lossy());
            }
        }
    }
    if state.values.is_empty() {
        state.values = target.color(&state.z).values;
    }
    let (stream, word_pos) = rng::stream_position(&rng);
    state.stream = stream;
    state.word_pos = word_pos;
    Ok(trace)
}

/// One finished (or resumed) chain.
#[derive(Debug, Clone)]
pub struct ChainRun<T> {
    pub chain: usize,
    pub state: ChainState<T>,
    pub trace: ChainTrace,
    pub epsilon: f64,
    pub warnings: Vec<String>,
}

fn finish<T: Real>(chain: usize, config: &MalaConfig<T>, state: ChainState<T>, trace: ChainTrace) -> ChainRun<T> {
    let mut warnings = Vec::new();
    let rate = state.acceptance_rate();
    if config.adapt && state.proposed > 0 && !(0.1..=0.9).contains(&rate) {
        warnings.push(format!("chain {chain}: acceptance rate {rate:.3} outside [0.1, 0.9] after tuning"));
    }
    ChainRun { chain, epsilon: config.eps.to_f64_lossy(), state, trace, warnings }
}

/// Runs chain `chain` from a Gaussian draw through burn-in and sampling.
pub fn mala_chain<T: Real>(params: &ModelParams<T>, config: &MalaConfig<T>, chain: usize) -> Result<ChainRun<T>> {
    config.validate()?;
    let target = LogTarget::new(params, config.eps)?;
    let mut state = ChainState::initial(&target, config, params.seed, chain)?;
    let trace = advance(&target, config, &mut state, config.total())?;
    Ok(finish(chain, config, state, trace))
}

/// Continues a checkpointed chain to the configured length.
pub fn resume_chain<T: Real>(
    params: &ModelParams<T>,
    config: &MalaConfig<T>,
    chain: usize,
    mut state: ChainState<T>,
) -> Result<ChainRun<T>> {
    let target = LogTarget::new(params, config.eps)?;
    let trace = advance(&target, config, &mut state, config.total())?;
    Ok(finish(chain, config, state, trace))
}

/// Independent chains merged in chain order.
#[derive(Debug, Clone)]
pub struct MultiChain<T> {
    pub runs: Vec<ChainRun<T>>,
    pub merged: ChainTrace,
}

impl<T: Real> MultiChain<T> {
    /// Grand mean of an observable with a standard error from per-chain batch means.
    pub fn mean(&self, observable: impl Fn(&ChainTrace) -> &[f64]) -> MeanSe {
        self.mean_of(|t| observable(t).to_vec())
    }

    /// [`MultiChain::mean`] for observables derived from the trace.
    pub fn mean_of(&self, observable: impl Fn(&ChainTrace) -> Vec<f64>) -> MeanSe {
        let per: Vec<MeanSe> = self.runs.iter().map(|r| stats::batch_means(&observable(&r.trace), 20)).collect();
        let k = per.len() as f64;
        let mean = per.iter().map(|m| m.mean).sum::<f64>() / k;
        let se = per.iter().map(|m| m.se * m.se).sum::<f64>().sqrt() / k;
        MeanSe { mean, se, n: per.iter().map(|m| m.n).sum() }
    }

    pub fn acceptance(&self) -> f64 {
        self.runs.iter().map(|r| r.state.acceptance_rate()).sum::<f64>() / self.runs.len() as f64
    }

    pub fn warnings(&self) -> Vec<String> {
        self.runs.iter().flat_map(|r| r.warnings.iter().cloned()).collect()
    }
}

pub fn run_chains<T: Real>(params: &ModelParams<T>, config: &MalaConfig<T>) -> Result<MultiChain<T>> {
    config.validate()?;
    let target = LogTarget::new(params, config.eps)?;
    let states = (0..config.chains).map(|c| ChainState::initial(&target, config, params.seed, c)).collect::<Result<_>>()?;
    drive(&target, config, states)
}

/// Continues checkpointed chains, one state per chain in chain order.
pub fn resume_chains<T: Real>(params: &ModelParams<T>, config: &MalaConfig<T>, states: Vec<ChainState<T>>) -> Result<MultiChain<T>> {
    config.validate()?;
    if states.len() != config.chains {
        return Err(Error::InvalidParameter {
            name: "chains",
            reason: format!("{} checkpoints for {} chains", states.len(), config.chains),
        });
    }
    drive(&LogTarget::new(params, config.eps)?, config, states)
}

fn drive<T: Real>(target: &LogTarget<T>, config: &MalaConfig<T>, states: Vec<ChainState<T>>) -> Result<MultiChain<T>> {
    let runs: Vec<ChainRun<T>> = states
        .into_par_iter()
        .enumerate()
        .map(|(c, mut state)| {
            let trace = advance(target, config, &mut state, config.total())?;
            Ok(finish(c, config, state, trace))
        })
        .collect::<Result<_>>()?;
    let mut merged = ChainTrace::default();
    for r in &runs {
        merged.extend(&r.trace);
    }
    Ok(MultiChain { runs, merged })
}
