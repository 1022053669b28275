//! The six computational subcommands. Each writes its CSV tables and a
//! `summary.json` into the run directory and returns warnings for the manifest.

use std::fs;

use fracedwards::edwards::{
    covcol_basis, dirichlet_form, edwards_ensemble, resume_chains, run_chains, ChainState, CylinderFunction, LogTarget,
};
use fracedwards::fbm::{FbmPath, FbmSampler, PathLike};
use fracedwards::moments::{continuity_scan, holder_verify, DensityProcess};
use fracedwards::silt::{EpsLadder, SiltEstimator};
use fracedwards::stats::{self, MeanSe};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::manifest::{OutputDir, Table};
use crate::{CliError, Context, RunOptions};

/// Shortest text that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x}")
}

fn mean_json(m: &MeanSe) -> Value {
    json!({ "mean": m.mean, "stderr": m.se, "n": m.n })
}

/// `null` when there are too few samples for a standard error.
fn sample_mean_json(xs: &[f64]) -> Value {
    if xs.len() < 2 {
        return Value::Null;
    }
    mean_json(&stats::mean_se(xs))
}

fn model_json(config: &RunConfig) -> Value {
    let m = &config.model;
    json!({
        "H": m.hurst, "d": m.d, "T": m.horizon, "g": m.g, "N": m.grid_points,
        "seed": config.run.seed, "hd_critical": config.critical(),
    })
}

fn sampler(config: &RunConfig, context: &str) -> Result<FbmSampler<f64>, CliError> {
    FbmSampler::new(&config.params()?).ctx(context)
}

fn end_sq<P: PathLike<f64>>(p: &P) -> f64 {
    let n = p.grid().len();
    p.values()[(n - 1) * p.dim()..].iter().map(|x| x * x).sum()
}

fn mid_sq<P: PathLike<f64>>(p: &P) -> f64 {
    let i = p.grid().len() / 2;
    p.values()[i * p.dim()].powi(2)
}

pub fn sample_fbm(config: &RunConfig, options: &RunOptions, out: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let mut s = sampler(config, "sample-fbm")?;
    if options.circulant {
        s = s.circulant().ctx("sample-fbm: circulant backend")?;
    }
    let d = config.model.d;
    let paths: Vec<FbmPath<f64>> = (0..config.run.replicas as u64).into_par_iter().map(|r| s.replica(r)).collect();

    let xs: Vec<String> = (1..=d).map(|c| format!("x_{c}")).collect();
    let mut header = vec!["path_id", "t"];
    header.extend(xs.iter().map(String::as_str));
    let mut table = Table::new(&header);
    for (r, p) in paths.iter().enumerate() {
        for (i, t) in p.grid.points().iter().enumerate() {
            let mut row = vec![r.to_string(), num(*t)];
            row.extend(p.point(i).iter().map(|&x| num(x)));
            table.row(row);
        }
    }
    out.write("paths.csv", &table.into_bytes())?;

    let per_comp: Vec<f64> = paths.iter().map(|p| end_sq(p) / d as f64).collect();
    let summary = json!({
        "subcommand": "sample-fbm",
        "model": model_json(config),
        "backend": if options.circulant { "circulant" } else { "cholesky" },
        "replicas": paths.len(),
        "terminal_variance": { "estimate": sample_mean_json(&per_comp), "exact": config.model.horizon.powf(2.0 * config.model.hurst) },
    });
    out.write_json("summary.json", &summary)?;
    Ok(Vec::new())
}

pub fn silt(config: &RunConfig, out: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let s = sampler(config, "silt")?;
    let ladder = config.ladder()?;
    let est = SiltEstimator::new(&s.params, s.grid.clone()).with_centering(config.centering());
    let ladders: Vec<EpsLadder<f64>> = (0..config.run.replicas as u64)
        .into_par_iter()
        .map(|r| est.ladder(&s.replica(r), &ladder))
        .collect::<fracedwards::Result<_>>()
        .ctx("silt")?;

    let mut table = Table::new(&["path_id", "eps", "raw", "expectation", "centered"]);
    for (r, l) in ladders.iter().enumerate() {
        for e in &l.estimates {
            table.row([r.to_string(), num(e.epsilon), num(e.raw), num(e.expectation), num(e.centered)]);
        }
    }
    out.write("ladder.csv", &table.into_bytes())?;

    let levels: Vec<Value> = ladder
        .epsilons()
        .iter()
        .enumerate()
        .map(|(j, &eps)| {
            let c: Vec<f64> = ladders.iter().map(|l| l.estimates[j].centered).collect();
            json!({ "eps": eps, "expectation": ladders[0].estimates[j].expectation, "centered": sample_mean_json(&c) })
        })
        .collect();
    let converged = ladders.iter().filter(|l| l.converged).count() as f64 / ladders.len() as f64;
    let under_resolved = ladders[0].under_resolved;
    let mut warnings = Vec::new();
    if under_resolved {
        warnings.push(format!("smallest ε = {} is below the grid resolution floor {}", ladder.smallest(), est.resolution_floor()));
    }
    if converged < 0.5 {
        warnings.push(format!("only {:.0}% of ladders show shrinking differences", 100.0 * converged));
    }
    let summary = json!({
        "subcommand": "silt",
        "model": model_json(config),
        "centering": config.silt.centering,
        "replicas": ladders.len(),
        "levels": levels,
        "converged_fraction": converged,
        "under_resolved": under_resolved,
    });
    out.write_json("summary.json", &summary)?;
    Ok(warnings)
}

pub fn holder_check(config: &RunConfig, out: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let s = sampler(config, "holder-check")?;
    let shift = config.shift()?.build(&s.covariance, &s.grid, config.model.d).ctx("holder-check: shift")?;
    let report = holder_verify(&s, &shift, &config.ladder()?, &config.schedule(), config.run.replicas).ctx("holder-check")?;

    let mut table = Table::new(&["u", "v", "eps", "sq_diff", "stderr", "slope", "slope_stderr"]);
    for level in &report.levels {
        for (&(u, v), m) in report.pairs.iter().zip(&level.sq_diff) {
            table.row([num(u), num(v), num(level.epsilon), num(m.mean), num(m.se), num(level.slope), num(level.slope_se)]);
        }
    }
    out.write("holder.csv", &table.into_bytes())?;

    let levels: Vec<Value> = report
        .levels
        .iter()
        .map(|l| {
            let (lo, hi) = l.slope_interval(1.96);
            json!({ "eps": l.epsilon, "slope": l.slope, "slope_stderr": l.slope_se, "ci95": [lo, hi] })
        })
        .collect();
    let mut warnings = Vec::new();
    if !report.passes() {
        warnings.push(format!("slope interval at the smallest ε does not clear {}", report.target_exponent));
    }
    let summary = json!({
        "subcommand": "holder-check",
        "model": model_json(config),
        "shift": config.scan.shift,
        "replicas": report.replicas,
        "target_exponent": report.target_exponent,
        "levels": levels,
        "passes": report.passes(),
    });
    out.write_json("summary.json", &summary)?;
    Ok(warnings)
}

pub fn density_scan(config: &RunConfig, out: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let s = sampler(config, "density-scan")?;
    let shift = config.shift()?.build(&s.covariance, &s.grid, config.model.d).ctx("density-scan: shift")?;
    let eps = config.ladder()?.smallest();
    let process = DensityProcess::new(&s.params, &shift, eps).ctx("density-scan")?.with_mode(config.mode());
    let paths: Vec<FbmPath<f64>> = (0..config.scan.paths as u64).into_par_iter().map(|r| s.replica(r)).collect();
    let sc = &config.scan;
    let scan = continuity_scan(&process, sc.u_lo, sc.u_hi, sc.steps, &paths).ctx("density-scan")?;

    let mut table = Table::new(&["u", "a_min", "a_max", "max_jump"]);
    for i in 0..scan.us.len() {
        table.row([num(scan.us[i]), num(scan.a_min[i]), num(scan.a_max[i]), num(scan.max_jump[i])]);
    }
    out.write("density.csv", &table.into_bytes())?;

    let mut warnings = Vec::new();
    if !scan.passes() {
        warnings.push(format!("halving the u step shrank the 95th-percentile jump only by {:.3}", scan.ratio()));
    }
    let summary = json!({
        "subcommand": "density-scan",
        "model": model_json(config),
        "shift": sc.shift,
        "mode": sc.mode,
        "eps": eps,
        "paths": paths.len(),
        "p95_jump_coarse": scan.p95_coarse,
        "p95_jump_fine": scan.p95_fine,
        "ratio": scan.ratio(),
        "passes": scan.passes(),
    });
    out.write_json("summary.json", &summary)?;
    Ok(warnings)
}

fn fixed_eps_note(eps: f64) -> String {
    format!("discretized Edwards density at fixed ε = {eps}, not the ε → 0 limit")
}

pub fn edwards_estimate(config: &RunConfig, out: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let params = config.params()?;
    let ens = edwards_ensemble(&params, config.run.replicas, &config.ladder()?).ctx("edwards-estimate")?;
    let normalized = ens.normalized_weights();

    let mut table = Table::new(&["path_id", "lc", "weight", "normalized_weight"]);
    for (i, ((l, w), nw)) in ens.lc.iter().zip(&ens.weights).zip(&normalized).enumerate() {
        table.row([i.to_string(), num(*l), num(*w), num(*nw)]);
    }
    out.write("weights.csv", &table.into_bytes())?;

    let first = &ens.paths[0];
    let basis = covcol_basis(&first.covariance, &first.grid, params.dim, config.form.n_trunc).ctx("edwards-estimate: basis")?;
    let f = CylinderFunction::coordinate(params.grid_points / 2, 0);
    let form = dirichlet_form(&f, &f, &ens, &basis).ctx("edwards-estimate: form")?;
    let end: Vec<f64> = ens.paths.iter().map(end_sq).collect();
    let mid: Vec<f64> = ens.paths.iter().map(mid_sq).collect();

    let mut warnings = ens.warnings.clone();
    warnings.extend(form.warnings.iter().cloned());
    let summary = json!({
        "subcommand": "edwards-estimate",
        "model": model_json(config),
        "target": fixed_eps_note(ens.epsilon),
        "replicas": ens.len(),
        "ess": ens.ess,
        "ess_fraction": ens.ess / ens.len() as f64,
        "converged_fraction": ens.converged_fraction,
        "weight_tail": {
            "max_normalized": ens.tail.max_normalized,
            "top_percentile_share": ens.tail.top_percentile_share,
            "second_moment_ratio": ens.tail.second_moment_ratio,
        },
        "means": {
            "lc": mean_json(&ens.mean_lc()),
            "end_sq": mean_json(&ens.mean(&end)),
            "x_mid_sq": mean_json(&ens.mean(&mid)),
        },
        "dirichlet_form_coordinate_mid": { "value": form.value, "stderr": form.se, "basis_size": form.basis_size },
    });
    out.write_json("summary.json", &summary)?;
    Ok(warnings)
}

pub fn quantize_run(config: &RunConfig, options: &RunOptions, out: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let params = config.params()?;
    let mala = config.mala()?;
    let target = LogTarget::new(&params, mala.eps).ctx("quantize-run")?;
    let mc = match &options.resume {
        None => run_chains(&params, &mala).ctx("quantize-run")?,
        Some(dir) => {
            let states = (0..mala.chains)
                .map(|c| {
                    let file = dir.join(checkpoint_name(c));
                    let bytes = fs::read(&file).map_err(|e| CliError::Io(format!("cannot read {}: {e}", file.display())))?;
                    ChainState::read_checkpoint(&target, &bytes[..]).ctx(&format!("quantize-run: {}", file.display()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            resume_chains(&params, &mala, states).ctx("quantize-run: resume")?
        }
    };

    let mut table = Table::new(&["chain", "iteration", "silt", "x_mid", "end_sq", "log_target"]);
    for run in &mc.runs {
        let t = &run.trace;
        for i in 0..t.len() {
            table.row([
                run.chain.to_string(),
                t.iteration[i].to_string(),
                num(t.silt[i]),
                num(t.x_mid[i]),
                num(t.end_sq[i]),
                num(t.log_target[i]),
            ]);
        }
    }
    out.write("trace.csv", &table.into_bytes())?;
    for run in &mc.runs {
        let mut buf = Vec::new();
        run.state.write_checkpoint(&target, &mut buf).ctx("quantize-run: checkpoint")?;
        out.write(&checkpoint_name(run.chain), &buf)?;
    }

    let chains: Vec<Value> = mc
        .runs
        .iter()
        .map(|r| json!({ "chain": r.chain, "acceptance": r.state.acceptance_rate(), "step": r.state.step, "iterations": r.state.iteration, "samples": r.trace.len() }))
        .collect();
    // batch means need at least two batches of two per chain
    let enough = mc.runs.iter().all(|r| r.trace.len() >= 4);
    let summary = json!({
        "subcommand": "quantize-run",
        "model": model_json(config),
        "target": fixed_eps_note(mala.eps),
        "resumed": options.resume.is_some(),
        "acceptance": mc.acceptance(),
        "chains": chains,
        "means": {
            "silt": enough.then(|| mean_json(&mc.mean(|t| &t.silt))),
            "end_sq": enough.then(|| mean_json(&mc.mean(|t| &t.end_sq))),
            "x_mid_sq": enough.then(|| mean_json(&mc.mean_of(|t| t.x_mid.iter().map(|x| x * x).collect()))),
        },
    });
    out.write_json("summary.json", &summary)?;
    Ok(mc.warnings())
}

pub fn checkpoint_name(chain: usize) -> String {
    format!("checkpoint_{chain}.bin")
}
