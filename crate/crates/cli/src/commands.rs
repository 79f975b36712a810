use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dirichlet_reg_core::characteristics::{bk_bracket, decompose, verify_corollary};
use dirichlet_reg_core::itoverify::EnsembleTest;
use dirichlet_reg_core::levyexponent::{recover_triplet_with, ExponentGrid};
use dirichlet_reg_core::paths::CadlagPath;
use dirichlet_reg_core::regularize::{
    covariation_eps, covariation_limit, forward_integral_eps, forward_integral_limit, jump_covariation,
    qv_decompose, CovariationEstimate, EpsilonSchedule, VerificationReport,
};
use dirichlet_reg_core::simulate::{known_characteristics, SeedSpec, SimulatedPath, Simulator};
use dirichlet_reg_core::stats::{mean_and_se, median};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{read_path, ExperimentConfig, Overrides, SCHEMA};
use crate::manifest::{hash_outputs, sha256_file, RunManifest, MANIFEST_FILE};
use crate::{
    CliError, Command, ReplayArgs, RunArgs, EXIT_FAILURE, EXIT_NONCONVERGENCE, EXIT_PASS,
    EXIT_STATISTICAL, OUT_ENV,
};

/// What a command reports back to the manifest.
pub struct Outcome {
    pub exit_code: i32,
    pub verdict: Value,
    pub inputs: Vec<PathBuf>,
}

impl Outcome {
    fn new(exit_code: i32, verdict: Value) -> Self {
        Self { exit_code, verdict, inputs: Vec::new() }
    }
}

pub fn dispatch(command: &Command) -> Result<i32, CliError> {
    let (name, args) = match command {
        Command::Schema => {
            println!("{SCHEMA}");
            return Ok(EXIT_PASS);
        }
        Command::Replay(a) => return replay(a),
        Command::Simulate(a) => ("simulate", a),
        Command::Qv(a) => ("qv", a),
        Command::Fwdint(a) => ("fwdint", a),
        Command::Residual(a) => ("residual", a),
        Command::Decompose(a) => ("decompose", a),
        Command::Recover(a) => ("recover", a),
        Command::Sweep(a) => ("sweep", a),
    };
    let raw = ExperimentConfig::load(&args.config)?;
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = output_dir(args, &raw, &base);
    let cfg = raw.resolve(&base, &overrides(args))?;
    let manifest = execute(name, &cfg, &out)?;
    println!("{name}: exit {} -> {}", manifest.exit_code, out.display());
    Ok(manifest.exit_code)
}

fn overrides(a: &RunArgs) -> Overrides {
    Overrides {
        seed: a.seed,
        paths: a.paths,
        steps: a.steps,
        horizon: a.horizon,
        function: a.function.clone(),
        alpha_se: a.alpha_se,
        inject_drift: a.inject_drift,
    }
}

fn output_dir(a: &RunArgs, cfg: &ExperimentConfig, base: &Path) -> PathBuf {
    if let Some(o) = &a.out {
        return o.clone();
    }
    if let Some(o) = &cfg.output_dir {
        return if o.is_relative() { base.join(o) } else { o.clone() };
    }
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("dirichlet-reg-out"))
}

/// Refuse to mix outputs with foreign files; clear the files of a previous run.
fn prepare_output(out: &Path) -> Result<(), CliError> {
    if !out.exists() {
        fs::create_dir_all(out)?;
        return Ok(());
    }
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let previous = RunManifest::read(&manifest_path)?;
        for rel in previous.output_hashes.keys() {
            let p = out.join(rel);
            if p.is_file() {
                fs::remove_file(p)?;
            }
        }
        fs::remove_file(manifest_path)?;
    }
    if !hash_outputs(out)?.is_empty() {
        return Err(CliError::Config(format!("output directory {} contains unrelated files", out.display())));
    }
    Ok(())
}

/// Run a resolved config and write its manifest.
pub fn execute(name: &str, cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, CliError> {
    let started_at = chrono::Utc::now().to_rfc3339();
    prepare_output(out)?;
    let outcome = match name {
        "simulate" => cmd_simulate(cfg, out),
        "qv" => cmd_qv(cfg, out),
        "fwdint" => cmd_fwdint(cfg, out),
        "residual" => cmd_residual(cfg, out),
        "decompose" => cmd_decompose(cfg, out),
        "recover" => cmd_recover(cfg, out),
        "sweep" => cmd_sweep(cfg, out),
        other => Err(CliError::Config(format!("unknown command {other}"))),
    }?;
    let mut input_hashes = BTreeMap::new();
    for p in &outcome.inputs {
        input_hashes.insert(p.display().to_string(), sha256_file(p)?);
    }
    let manifest = RunManifest {
        tool: "dirichlet-reg".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        config: cfg.clone(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        input_hashes,
        output_hashes: hash_outputs(out)?,
        exit_code: outcome.exit_code,
        verdict: outcome.verdict,
    };
    manifest.write(out)?;
    Ok(manifest)
}

fn replay(a: &ReplayArgs) -> Result<i32, CliError> {
    let recorded = RunManifest::read(&a.manifest)?;
    for (path, hash) in &recorded.input_hashes {
        if &sha256_file(Path::new(path))? != hash {
            return Err(CliError::Config(format!("input {path} changed since the recorded run")));
        }
    }
    let out = match &a.out {
        Some(o) => o.clone(),
        None => a.manifest.parent().map(Path::to_path_buf).unwrap_or_default().join("replay"),
    };
    let fresh = execute(&recorded.command, &recorded.config, &out)?;
    let mut differing: Vec<&String> = recorded
        .output_hashes
        .iter()
        .filter(|(k, v)| fresh.output_hashes.get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    differing.extend(fresh.output_hashes.keys().filter(|k| !recorded.output_hashes.contains_key(*k)));
    if differing.is_empty() && fresh.exit_code == recorded.exit_code {
        println!("replay: {} outputs bit-identical -> {}", fresh.output_hashes.len(), out.display());
        Ok(EXIT_PASS)
    } else {
        println!("replay: outputs differ: {differing:?} (exit {} vs {})", fresh.exit_code, recorded.exit_code);
        Ok(EXIT_FAILURE)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Failed(e.to_string()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn simulate_one(cfg: &ExperimentConfig, index: u64) -> Result<SimulatedPath, CliError> {
    let sim = Simulator::new(cfg.model()?, cfg.time_grid()?)?;
    Ok(sim.path(SeedSpec::new(cfg.seed, index)))
}

/// `input.path` when given, otherwise path 0 of the configured model (also written out).
fn primary_path(cfg: &ExperimentConfig, out: &Path, inputs: &mut Vec<PathBuf>) -> Result<CadlagPath, CliError> {
    match &cfg.input.path {
        Some(p) => {
            inputs.push(p.clone());
            read_path(p)
        }
        None => {
            let x = simulate_one(cfg, 0)?.path;
            x.write_csv(create(&out.join("path.csv"))?)?;
            Ok(x)
        }
    }
}

fn estimate_summary(est: &CovariationEstimate) -> Value {
    json!({
        "eps": est.eps,
        "successive": est.successive,
        "limit_at_end": est.at_end(),
        "limit_sup_error": est.error,
        "converged": est.converged,
    })
}

fn convergence_code(converged: bool) -> i32 {
    if converged {
        EXIT_PASS
    } else {
        EXIT_NONCONVERGENCE
    }
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let sim = Simulator::new(cfg.model()?, cfg.time_grid()?)?;
    let terminal: Vec<f64> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = sim.path(SeedSpec::new(cfg.seed, i));
            p.path.write_csv(create(&out.join(format!("paths/path_{i:06}.csv")))?)?;
            Ok(*p.path.values().last().unwrap())
        })
        .collect::<Result<_, CliError>>()?;
    let (mean, _) = mean_and_se(&terminal);
    let variance = if terminal.len() > 1 {
        terminal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (terminal.len() - 1) as f64
    } else {
        0.0
    };
    let verdict = json!({ "n_paths": cfg.paths, "terminal_mean": mean, "terminal_variance": variance });
    write_json(&out.join("summary.json"), &verdict)?;
    Ok(Outcome::new(EXIT_PASS, verdict))
}

fn cmd_qv(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let x = primary_path(cfg, out, &mut inputs)?;
    let schedule = cfg.epsilon_schedule()?;
    let verdict = match &cfg.input.other {
        Some(p) => {
            inputs.push(p.clone());
            let y = read_path(p)?;
            let est = covariation_limit(&x, &y, &schedule)?;
            est.write_csv(create(&out.join("qv.csv"))?)?;
            let mut v = estimate_summary(&est);
            v["kind"] = json!("covariation");
            v["jump_part_at_end"] = json!(jump_covariation(&x, &y)?.last().copied().unwrap_or(0.0));
            v
        }
        None => {
            let q = qv_decompose(&x, &schedule)?;
            q.total.write_csv(create(&out.join("qv.csv"))?)?;
            let mut w = create(&out.join("qv_split.csv"))?;
            writeln!(w, "t,total,continuous,jump")?;
            for i in 0..x.grid().len() {
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e}",
                    x.grid().time(i),
                    q.total.limit[i],
                    q.continuous[i],
                    q.jump_part[i]
                )?;
            }
            w.flush()?;
            let mut v = estimate_summary(&q.total);
            v["kind"] = json!("quadratic_variation");
            v["continuous_at_end"] = json!(q.continuous.last());
            v["jump_part_at_end"] = json!(q.jump_part.last());
            v
        }
    };
    write_json(&out.join("qv.json"), &verdict)?;
    let code = convergence_code(verdict["converged"].as_bool().unwrap_or(false));
    Ok(Outcome { exit_code: code, verdict, inputs })
}

fn cmd_fwdint(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut inputs = Vec::new();
    let x = primary_path(cfg, out, &mut inputs)?;
    let y = match &cfg.input.other {
        Some(p) => {
            inputs.push(p.clone());
            read_path(p)?
        }
        None => x.clone(),
    };
    let est = forward_integral_limit(&y, &x, &cfg.epsilon_schedule()?)?;
    est.write_csv(create(&out.join("fwdint.csv"))?)?;
    let mut verdict = estimate_summary(&est);
    verdict["kind"] = json!("forward_integral");
    write_json(&out.join("fwdint.json"), &verdict)?;
    Ok(Outcome { exit_code: convergence_code(est.converged), verdict, inputs })
}

fn cmd_residual(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    if cfg.paths < 100 {
        return Err(CliError::Config(format!("the residual test needs at least 100 paths, got {}", cfg.paths)));
    }
    let test = EnsembleTest {
        model: cfg.model()?.clone(),
        grid: cfg.time_grid()?,
        truncation: cfg.truncation,
        function: cfg.function.clone(),
        schedule: cfg.epsilon_schedule()?,
        plan: cfg.test_plan(),
        kind: cfg.residual.kind,
        injected_drift: cfg.residual.injected_drift,
    };
    let report = test.run(cfg.seed, cfg.paths)?;
    write_json(&out.join("residual_report.json"), &report)?;
    let flagged = report.nonconverged_paths as f64 / report.n_paths as f64;
    let code = if flagged > cfg.residual.nonconvergence_tolerance {
        EXIT_NONCONVERGENCE
    } else if !report.pass {
        EXIT_STATISTICAL
    } else {
        EXIT_PASS
    };
    let verdict = json!({
        "pass": report.pass,
        "max_abs_z": report.max_abs_z(),
        "nonconverged_paths": report.nonconverged_paths,
    });
    Ok(Outcome::new(code, verdict))
}

#[derive(Serialize)]
struct IdentityPair {
    path: u64,
    bk_bracket: VerificationReport,
    corollary: VerificationReport,
}

fn cmd_decompose(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let model = cfg.model()?;
    let ch = known_characteristics(model, cfg.truncation)?;
    let schedule = cfg.epsilon_schedule()?;
    let reports: Vec<IdentityPair> = (0..cfg.paths as u64)
        .map(|i| {
            let sim = simulate_one(cfg, i)?;
            let dec = decompose(&sim, model, cfg.truncation)?;
            dec.write_csv(&sim.path, create(&out.join(format!("decomposition/path_{i:06}.csv")))?)?;
            let b = bk_bracket(&sim.path, &dec, &ch, &schedule)?;
            let c = verify_corollary(&sim.path, &dec, &schedule)?;
            // both sides agree within twice the recorded error estimates
            Ok(IdentityPair {
                path: i,
                bk_bracket: b.report(2.0 * b.error() + 1e-12),
                corollary: c.report(2.0 * c.error() + 1e-12),
            })
        })
        .collect::<Result<_, CliError>>()?;
    write_json(&out.join("identities.json"), &reports)?;
    let flagged = reports.iter().filter(|r| !(r.bk_bracket.converged && r.corollary.converged)).count();
    // per-path checks carry O(√ε) jump/diffusion cross terms; judge the ensemble by its median
    let ratios: Vec<f64> = reports
        .iter()
        .map(|r| (r.bk_bracket.distance / r.bk_bracket.tolerance).max(r.corollary.distance / r.corollary.tolerance))
        .collect();
    let median_ratio = median(&ratios);
    let pass = median_ratio <= 1.0;
    let code = if flagged as f64 / reports.len() as f64 > cfg.residual.nonconvergence_tolerance {
        EXIT_NONCONVERGENCE
    } else if !pass {
        EXIT_STATISTICAL
    } else {
        EXIT_PASS
    };
    Ok(Outcome::new(code, json!({ "pass": pass, "median_distance_over_tolerance": median_ratio, "nonconverged_paths": flagged, "n_paths": reports.len() })))
}

fn cmd_recover(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let r = &cfg.recover;
    let mut inputs = Vec::new();
    let psi = match (&r.psi, &r.triplet) {
        (Some(p), _) => {
            inputs.push(p.clone());
            let f = File::open(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            ExponentGrid::read_csv(f)?
        }
        (None, Some(t)) => {
            let g = ExponentGrid::from_triplet(t, r.u_max, r.points)?;
            g.write_csv(create(&out.join("psi.csv"))?)?;
            g
        }
        (None, None) => return Err(CliError::Config("recover needs recover.psi or recover.triplet".into())),
    };
    let rec = recover_triplet_with(&psi, r.w, cfg.truncation, &r.options)?;
    write_json(&out.join("recovered.json"), &rec)?;
    let verdict = json!({
        "b": rec.b,
        "c": rec.c,
        "residual": rec.residual,
        "unrecovered_cells": rec.unrecovered_cells.len(),
    });
    Ok(Outcome { exit_code: EXIT_PASS, verdict, inputs })
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, CliError> {
    let base = cfg.time_grid()?;
    let coarsest = *cfg.sweep.coarsening.iter().max().expect("validated non-empty");
    let eps = match &cfg.sweep.eps {
        Some(e) => e.clone(),
        None => EpsilonSchedule::default_for(&base.coarsen(coarsest)?)?.eps(&base.coarsen(coarsest)?),
    };
    let rows: Vec<Vec<String>> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|i| {
            let fine = simulate_one(cfg, i)?.path;
            let mut rows = Vec::new();
            for &f in &cfg.sweep.coarsening {
                let x = fine.coarsen(f)?;
                let jumps = x.jumps().iter().map(|j| j.size * j.size).sum::<f64>();
                let dt = x.grid().dt();
                for &e in &eps {
                    let qv = *covariation_eps(&x, &x, e)?.last().unwrap();
                    let fwd = *forward_integral_eps(&x, &x, e)?.last().unwrap();
                    for (q, v) in [("qv_total_T", qv), ("qv_continuous_T", qv - jumps), ("fwd_self_T", fwd)] {
                        rows.push(format!("{i},{dt:.16e},{e:.16e},{q},{v:.16e}"));
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<_, CliError>>()?;
    let mut w = create(&out.join("sweep.csv"))?;
    writeln!(w, "path,dt,eps,quantity,value")?;
    for r in rows.iter().flatten() {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    let verdict = json!({ "rows": rows.iter().map(Vec::len).sum::<usize>(), "eps": eps });
    Ok(Outcome::new(EXIT_PASS, verdict))
}

