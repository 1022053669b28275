//! Reduced-scale invariant suite (N = 64, d = 2, H = ½). Each suite reports
//! pass or fail with a one-line detail; any failure makes the run fail.

use fracedwards::cameron_martin::{gaussian_rn_density, NamedShift, ShiftedPath};
use fracedwards::edwards::mala::advance;
use fracedwards::edwards::{
    covcol_basis, dirichlet_form, edwards_ensemble, gradient_cylinder, run_chains, ChainState, CylinderFunction, LogTarget, MalaConfig,
};
use fracedwards::fbm::{cov_h, FbmSampler, ModelParams, PathLike};
use fracedwards::moments::{
    continuity_scan, gaussian_moment_integral, holder_verify, sigma_matrix, DensityProcess, PairSchedule, SigmaMatrix,
};
use fracedwards::rng::{self, Domain};
use fracedwards::silt::{silt_expectation, silt_expectation_brownian_plane, silt_raw_multi, LadderConfig, SiltEstimator};
use fracedwards::stats;
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::{OutputDir, Table};
use crate::{CliError, Context};

const N: usize = 64;
const M: usize = 2000;

struct Bench {
    seed: u64,
    params: ModelParams<f64>,
    sampler: FbmSampler<f64>,
    ladder: LadderConfig<f64>,
}

type Outcome = fracedwards::Result<(bool, String)>;
type Suite = fn(&Bench) -> Outcome;

fn covariance(b: &Bench) -> Outcome {
    let ts = b.sampler.grid.points();
    let pairs = [(1, 1), (10, 40), (32, 32), (63, 63), (5, 60), (20, 21), (63, 1), (48, 16)];
    let paths: Vec<_> = (0..M as u64).map(|r| b.sampler.replica(r)).collect();
    let mut worst: f64 = 0.0;
    for &(i, j) in &pairs {
        for c in 0..2 {
            let prods: Vec<f64> = paths.iter().map(|p| p.point(i)[c] * p.point(j)[c]).collect();
            worst = worst.max(stats::mean_se(&prods).z(cov_h(0.5, ts[i], ts[j])?).abs());
        }
    }
    Ok((worst <= 5.0, format!("max |z| {worst:.2} over {} entries", 2 * pairs.len())))
}

fn centering(b: &Bench) -> Outcome {
    let eps = [0.1, 0.01];
    let est = SiltEstimator::new(&b.params, b.sampler.grid.clone());
    let mut cols = vec![Vec::with_capacity(M); eps.len()];
    for r in 0..M as u64 {
        for (k, v) in silt_raw_multi(&b.sampler.replica(r), &eps)?.into_iter().enumerate() {
            cols[k].push(v);
        }
    }
    let mut worst: f64 = 0.0;
    for (k, &e) in eps.iter().enumerate() {
        let c = est.expectation(e)?;
        let centered: Vec<f64> = cols[k].iter().map(|v| v - c).collect();
        worst = worst.max(stats::mean_se(&centered).z(0.0).abs());
    }
    let q = silt_expectation(&b.params, 0.01)?;
    let closed = silt_expectation_brownian_plane(1.0, 0.01);
    let rel = ((q - closed) / closed).abs();
    Ok((worst <= 5.0 && rel <= 1e-8, format!("max |z| {worst:.2}; closed form rel err {rel:.1e}")))
}

fn characteristic_function(b: &Bench) -> Outcome {
    let p = ModelParams::new(0.5, 1, 1.0, 0.0, N, b.seed)?;
    let s = FbmSampler::new(&p)?;
    let ts = s.grid.points();
    let quads = [[0, 32, 16, 48], [10, 50, 20, 30], [0, 63, 0, 20]];
    let ys = [(0.7, -1.1), (1.5, 0.4), (-0.6, 2.0)];
    let paths: Vec<Vec<f64>> = (0..20_000u64).map(|r| s.replica(r).values).collect();
    let mut worst: f64 = 0.0;
    for (q, &(y1, y2)) in quads.iter().zip(&ys) {
        let sigma = sigma_matrix(0.5, [ts[q[0]], ts[q[1]], ts[q[2]], ts[q[3]]])?;
        let c: Vec<f64> = paths.iter().map(|v| (y1 * (v[q[1]] - v[q[0]]) - y2 * (v[q[3]] - v[q[2]])).cos()).collect();
        worst = worst.max(stats::mean_se(&c).z(sigma.characteristic_function(y1, y2)).abs());
    }
    Ok((worst <= 5.0, format!("max |z| {worst:.2} at {} points", quads.len())))
}

fn moment_integral(_: &Bench) -> Outcome {
    let eps = 0.01;
    let mut worst: f64 = 0.0;
    for &alpha in &[0.5, 0.75] {
        for &(a, b) in &[(1.0, 1.0), (0.2, 1.5)] {
            let r = gaussian_moment_integral(&SigmaMatrix::from_entries(a - eps, b - eps, 0.0), eps, alpha, 1)?;
            worst = worst.max((r.ratio() - 1.0).abs());
        }
    }
    Ok((worst <= 1e-6, format!("diagonal rel err {worst:.1e}")))
}

fn rn_normalization(b: &Bench) -> Outcome {
    let shift = NamedShift::Linear.build(&b.sampler.covariance, &b.sampler.grid, 2)?;
    let rho: Vec<f64> =
        (0..M as u64).map(|r| gaussian_rn_density(&shift, 1.0, &b.sampler.replica(r))).collect::<fracedwards::Result<_>>()?;
    let z = stats::mean_se(&rho).z(1.0);
    Ok((z.abs() <= 5.0, format!("E ρ_1 z = {z:.2}")))
}

fn holder(b: &Bench) -> Outcome {
    let shift = NamedShift::Sine.build(&b.sampler.covariance, &b.sampler.grid, 2)?;
    let report = holder_verify(&b.sampler, &shift, &b.ladder, &PairSchedule::default(), M)?;
    let s = report.smallest();
    Ok((report.passes(), format!("slope {:.3} ± {:.3} at ε = {}", s.slope, s.slope_se, s.epsilon)))
}

fn continuity(b: &Bench) -> Outcome {
    let shift = NamedShift::Sine.build(&b.sampler.covariance, &b.sampler.grid, 2)?;
    let process = DensityProcess::new(&b.params, &shift, b.ladder.smallest())?;
    let paths: Vec<_> = (0..100u64).map(|r| b.sampler.replica(r)).collect();
    let scan = continuity_scan(&process, 0.0, 1.0, 20, &paths)?;
    Ok((scan.passes(), format!("jump ratio {:.3}", scan.ratio())))
}

fn weights_and_form(b: &Bench) -> Outcome {
    let ens = edwards_ensemble(&b.params, 500, &b.ladder)?;
    let total: f64 = ens.normalized_weights().iter().sum();
    let basis = covcol_basis(&b.sampler.covariance, &b.sampler.grid, 2, 4)?;
    let mut rng = rng::domain_rng(b.seed, Domain::Selftest, 8);
    let (mut symmetric, mut nonneg) = (true, true);
    for k in 0..10 {
        let f = CylinderFunction::random(&mut rng, N, 2, 1 + k % 3);
        let h = CylinderFunction::random(&mut rng, N, 2, 1 + (k + 1) % 3);
        symmetric &= dirichlet_form(&f, &h, &ens, &basis)?.value.to_bits() == dirichlet_form(&h, &f, &ens, &basis)?.value.to_bits();
        nonneg &= dirichlet_form(&f, &f, &ens, &basis)?.value >= 0.0;
    }
    let ok = (total - 1.0).abs() <= 1e-12 && symmetric && nonneg;
    Ok((ok, format!("Σ weights − 1 = {:.1e}; symmetric {symmetric}; nonnegative {nonneg}", total - 1.0)))
}

fn gradients(b: &Bench) -> Outcome {
    let mut rng = rng::domain_rng(b.seed, Domain::Selftest, 9);
    let shift = NamedShift::Sine.build(&b.sampler.covariance, &b.sampler.grid, 2)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for r in 0..5u64 {
        let f = CylinderFunction::random(&mut rng, N, 2, 2);
        let path = b.sampler.replica(r);
        let up = f.value(&ShiftedPath::new(&path, &shift, h)?)?;
        let dn = f.value(&ShiftedPath::new(&path, &shift, -h)?)?;
        let an = gradient_cylinder(&f, &shift, &path)?;
        worst = worst.max((an - (up - dn) / (2.0 * h)).abs() / an.abs().max(1e-300));
    }
    let target = LogTarget::new(&b.params, b.ladder.smallest())?;
    let mut z = vec![0.0; target.size()];
    rng::fill_standard_normal(&mut rng, &mut z);
    let grad = target.evaluate(&z, false)?.grad;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for j in (0..target.size()).step_by(9) {
        let mut zp = z.clone();
        zp[j] += h;
        let mut zm = z.clone();
        zm[j] -= h;
        let fd = (target.evaluate(&zp, false)?.log_target - target.evaluate(&zm, false)?.log_target) / (2.0 * h);
        num += (fd - grad[j]).powi(2);
        den += grad[j].powi(2);
    }
    worst = worst.max((num / den).sqrt());
    Ok((worst < 1e-5, format!("max rel err {worst:.1e}")))
}

fn gaussian_chain(b: &Bench) -> Outcome {
    let params = b.params.with_coupling(0.0);
    let config = MalaConfig { eps: b.ladder.smallest(), burn_in: 500, iterations: 40_000, thin: 20, ..MalaConfig::default() };
    let mc = run_chains(&params, &config)?;
    let sd = b.sampler.grid.points()[N / 2].sqrt();
    let ks = stats::ks_test(&mc.merged.x_mid, |x| stats::normal_cdf(x / sd));
    Ok((ks.p_value > 0.01, format!("KS p = {:.3} on {} samples, acceptance {:.3}", ks.p_value, ks.n, mc.acceptance())))
}

fn checkpoint_resume(b: &Bench) -> Outcome {
    let config = MalaConfig { eps: b.ladder.smallest(), burn_in: 100, iterations: 200, thin: 5, ..MalaConfig::default() };
    let target = LogTarget::new(&b.params, config.eps)?;
    let mut straight = ChainState::initial(&target, &config, b.seed, 0)?;
    let full = advance(&target, &config, &mut straight, 300)?;
    let mut first = ChainState::initial(&target, &config, b.seed, 0)?;
    let head = advance(&target, &config, &mut first, 150)?;
    let mut buf = Vec::new();
    first.write_checkpoint(&target, &mut buf)?;
    let mut resumed = ChainState::read_checkpoint(&target, &buf[..])?;
    let tail = advance(&target, &config, &mut resumed, 300)?;
    let joined: Vec<f64> = head.silt.iter().chain(&tail.silt).copied().collect();
    let ok = resumed == straight && joined == full.silt;
    Ok((ok, format!("state and trace identical after resume: {ok}")))
}

const SUITES: [(&str, Suite); 11] = [
    ("covariance", covariance),
    ("centering", centering),
    ("characteristic-function", characteristic_function),
    ("moment-integral", moment_integral),
    ("rn-normalization", rn_normalization),
    ("holder", holder),
    ("continuity", continuity),
    ("weights-and-form", weights_and_form),
    ("gradients", gradients),
    ("gaussian-chain", gaussian_chain),
    ("checkpoint-resume", checkpoint_resume),
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|(n, _)| *n).collect()
}

pub fn run(config: &RunConfig, out: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let seed = config.run.seed;
    let params = ModelParams::new(0.5, 2, 1.0, 0.1, N, seed).ctx("selftest")?;
    let bench = Bench {
        seed,
        sampler: FbmSampler::new(&params).ctx("selftest")?,
        params,
        ladder: LadderConfig::new(0.1, 3).expect("valid ladder"),
    };
    let mut table = Table::new(&["suite", "status", "detail"]);
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for (name, suite) in SUITES {
        let (pass, detail) = suite(&bench).unwrap_or_else(|e| (false, format!("error: {e}")));
        eprintln!("selftest {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
        table.row([name, if pass { "pass" } else { "fail" }, &detail]);
        results.push(json!({ "suite": name, "pass": pass, "detail": detail }));
        if !pass {
            failed.push(name.to_string());
        }
    }
    out.write("selftest.csv", &table.into_bytes())?;
    out.write_json(
        "summary.json",
        &json!({ "subcommand": "selftest", "seed": seed, "grid_points": N, "suites": results, "passed": failed.is_empty() }),
    )?;
    if failed.is_empty() {
        Ok(Vec::new())
    } else {
        Err(CliError::Selftest(failed))
    }
}
