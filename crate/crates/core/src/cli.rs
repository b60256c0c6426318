//! Batch front end. Each run writes its artifacts and a `manifest.json` into
//! a fresh directory under `--out`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{steps_for, ModelSource, RunConfig};
use crate::diagnostics::{
    admissibility_integral, energy_balance, hs_domain_check, ito_isometry_check, moment_check,
    standard_members, wellposedness_ratio, yosida_ladder,
};
use crate::error::{Error, Result};
use crate::model::{generation_check, validate_model};
use crate::moments::{covariance_exact, energy_rate, mc_moments, mean_trajectory};
use crate::noise::uniform_times;
use crate::solver::{simulate_ensemble, EnsembleConfig, Forcing, MildPlan, SimContext};
use crate::string::string_oracle;

/// Largest accepted deviation of the boundary lift from `[I; 0]`.
pub const LIFT_TOL: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(
    name = "sphs",
    version,
    about = "Stochastic port-Hamiltonian systems on an interval"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration, or the manifest of an earlier run.
    #[arg(long, global = true, env = "SPHS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long, global = true, env = "SPHS_OUT", default_value = "runs")]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true, env = "SPHS_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "SPHS_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Structural checks, generation test, basis health and noise series.
    Validate,
    /// Retained eigenvalues with gap, biorthogonality and oracle columns.
    Spectrum,
    /// Monte Carlo trajectories.
    Simulate,
    /// Exact mean and covariance against the ensemble.
    Moments,
    /// Expected energy balance over a window.
    Energy,
    /// Itô isometry and stochastic convolution second moment.
    Ito,
    /// Empirical well-posedness constants.
    Wellposed,
    /// Yosida approximation ladder.
    Yosida,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Spectrum => "spectrum",
            Command::Simulate => "simulate",
            Command::Moments => "moments",
            Command::Energy => "energy",
            Command::Ito => "ito",
            Command::Wellposed => "wellposed",
            Command::Yosida => "yosida",
        }
    }
}

/// Parses the process arguments, runs and returns the exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("sphs: {e}");
            e.exit_code()
        }
    }
}

/// Artifacts of one run, keyed by file name.
type Artifacts = BTreeMap<String, Vec<u8>>;

pub fn run(cli: &Cli) -> Result<i32> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("no config given (--config or SPHS_CONFIG)"))?;
    let mut cfg = RunConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    cfg.check()?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::config("--workers must be positive"));
        }
        // a pool installed by an earlier call in the same process stays in place
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global();
    }
    let mut artifacts = Artifacts::new();
    let passed = match cli.command {
        Command::Validate => validate(&cfg, &mut artifacts)?,
        Command::Spectrum => spectrum(&cfg, &mut artifacts)?,
        Command::Simulate => simulate(&cfg, &mut artifacts)?,
        Command::Moments => moments(&cfg, &mut artifacts)?,
        Command::Energy => energy(&cfg, &mut artifacts)?,
        Command::Ito => ito(&cfg, &mut artifacts)?,
        Command::Wellposed => wellposed(&cfg, &mut artifacts)?,
        Command::Yosida => yosida(&cfg, &mut artifacts)?,
    };
    let dir = write_run(&cli.out, cli.command, &cfg, &artifacts)?;
    println!("{}", dir.display());
    Ok(if passed { 0 } else { 1 })
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Creates `<out>/<command>-<hash prefix>`, suffixed when it already exists.
fn fresh_dir(out: &Path, command: Command, hash: &str) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let stem = format!("{}-{}", command.name(), &hash[..12]);
    for n in 0.. {
        let dir = if n == 0 {
            out.join(&stem)
        } else {
            out.join(format!("{stem}-{n}"))
        };
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!("run directory suffixes are unbounded")
}

fn write_run(
    out: &Path,
    command: Command,
    cfg: &RunConfig,
    artifacts: &Artifacts,
) -> Result<PathBuf> {
    let hash = cfg.sha256();
    let dir = fresh_dir(out, command, &hash)?;
    let mut digests = serde_json::Map::new();
    for (name, bytes) in artifacts {
        fs::write(dir.join(name), bytes)?;
        digests.insert(name.clone(), Value::String(sha256_hex(bytes)));
    }
    let manifest = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": hash,
        "seed": cfg.sim.seed,
        "config": serde_json::to_value(cfg)?,
        "artifacts": digests,
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(dir)
}

fn put_json(artifacts: &mut Artifacts, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    artifacts.insert(name.to_string(), text.into_bytes());
    Ok(())
}

/// Fixed-width scientific notation with 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_row(out: &mut String, fields: impl IntoIterator<Item = String>) {
    let row: Vec<String> = fields.into_iter().collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

fn context(cfg: &RunConfig) -> Result<SimContext> {
    let model = cfg.build_model()?;
    SimContext::build(&model, cfg.sim.cells, cfg.sim.modes, cfg.noise.clone())
}

fn sim_times(cfg: &RunConfig) -> Result<Vec<f64>> {
    Ok(uniform_times(
        cfg.sim.dt,
        steps_for(cfg.sim.t_final, cfg.sim.dt)?,
    ))
}

fn ensemble_config(cfg: &RunConfig) -> EnsembleConfig {
    EnsembleConfig::new(cfg.sim.paths, cfg.sim.seed).with_stride(cfg.sim.stride)
}

fn validate(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<bool> {
    let model = cfg.build_model()?;
    let validation = validate_model(&model)?;
    let generation = generation_check(&model);
    let mut report = json!({ "validation": validation, "generation": generation });
    let mut failures: Vec<String> = validation
        .items
        .iter()
        .filter(|i| !i.passed)
        .map(|i| i.name.clone())
        .collect();
    if !generation.psd {
        failures.push("generation_psd".into());
    }
    // the spectral checks assume the structural ones
    if failures.is_empty() {
        let ctx = SimContext::build(&model, cfg.sim.cells, cfg.sim.modes, cfg.noise.clone())?;
        let lift_defect = ctx.lift.port_defect(&model)?;
        if lift_defect > LIFT_TOL {
            failures.push("boundary_lift".into());
        }
        if !ctx.basis.report.nice {
            failures.push("riesz_basis_nice".into());
        }
        report["lift_port_defect"] = json!(lift_defect);
        report["basis"] = serde_json::to_value(&ctx.basis.report)?;
        report["modes"] = json!(ctx.modes());
        report["noise"] = json!({
            "trace": cfg.noise.trace()?,
            "tail_ratio": cfg.noise.tail_ratio()?,
            "tail_ok": cfg.noise.tail_ok()?,
        });
        report["hs_domain"] = serde_json::to_value(hs_domain_check(&ctx))?;
        if let Some(adm) = &cfg.admissibility {
            let series = admissibility_integral(&ctx, adm.t)?;
            if !series.cauchy {
                failures.push("admissibility".into());
            }
            report["admissibility"] =
                json!({ "t": adm.t, "divergent": series.divergent(), "series": series });
        }
    }
    let passed = failures.is_empty();
    report["failures"] = json!(failures);
    report["passed"] = json!(passed);
    put_json(artifacts, "report.json", &report)?;
    Ok(passed)
}

fn spectrum(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<bool> {
    let ctx = context(cfg)?;
    let basis = &ctx.basis;
    let space = &basis.space;
    let oracle = match &cfg.model {
        ModelSource::String(p) => string_oracle(p, cfg.sim.modes + 2).ok(),
        _ => None,
    };
    let mut csv = String::new();
    let mut header = vec![
        "k",
        "re_lambda",
        "im_lambda",
        "gap",
        "biorthogonality_defect",
        "condition",
    ];
    if oracle.is_some() {
        header.extend(["oracle_re", "oracle_im", "oracle_error"]);
    }
    csv_row(&mut csv, header.into_iter().map(String::from));
    for (k, lk) in basis.lambdas.iter().enumerate() {
        let gap = basis
            .lambdas
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, lj)| (lk - lj).norm())
            .fold(f64::INFINITY, f64::min);
        let defect = (0..basis.len())
            .map(|l| {
                let target = if l == k { 1.0 } else { 0.0 };
                (space.inner_c(&basis.phis[k], &basis.psis[l]) - Complex64::new(target, 0.0)).norm()
            })
            .fold(0.0, f64::max);
        let norm = |v: &[Complex64]| space.inner_c(v, v).re.max(0.0).sqrt();
        let condition = norm(&basis.phis[k]) * norm(&basis.psis[k]);
        let mut row = vec![
            k.to_string(),
            num(lk.re),
            num(lk.im),
            num(gap),
            num(defect),
            num(condition),
        ];
        if let Some(o) = &oracle {
            let nearest = o
                .roots
                .iter()
                .min_by(|a, b| (*a - lk).norm().total_cmp(&(*b - lk).norm()))
                .copied()
                .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
            row.extend([num(nearest.re), num(nearest.im), num((nearest - lk).norm())]);
        }
        csv_row(&mut csv, row);
    }
    artifacts.insert("spectrum.csv".into(), csv.into_bytes());
    put_json(artifacts, "spectrum.json", &basis.report)?;
    Ok(true)
}

fn simulate(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<bool> {
    let ctx = context(cfg)?;
    let times = sim_times(cfg)?;
    let x0 = cfg.initial_state(&ctx.basis.partner);
    let plan = MildPlan::new(
        &ctx,
        &Forcing::mild(&ctx.inputs),
        &cfg.input,
        &times,
        cfg.sim.scheme,
    )?;
    let ens = simulate_ensemble(&plan, &x0, &ensemble_config(cfg))?;
    let k = ctx.modes();
    let p = ctx.model.outputs();
    let mut csv = String::new();
    let mut header = vec!["t".to_string(), "path".to_string(), "energy".to_string()];
    header.extend((0..p).map(|j| format!("y{j}")));
    for j in 0..k {
        header.push(format!("re_x{j}"));
        header.push(format!("im_x{j}"));
    }
    csv_row(&mut csv, header);
    let written = cfg.sim.write_paths.unwrap_or(ens.len()).min(ens.len());
    for traj in &ens.paths[..written] {
        for ((t, x), u) in traj.times.iter().zip(&traj.states).zip(&traj.inputs) {
            let mut row = vec![
                num(*t),
                traj.path_index.to_string(),
                num(ctx.maps.energy(x, u)),
            ];
            row.extend(ctx.maps.output(&ctx.model, x, u).iter().map(|v| num(*v)));
            for v in x {
                row.push(num(v.re));
                row.push(num(v.im));
            }
            csv_row(&mut csv, row);
        }
    }
    artifacts.insert("trajectory.csv".into(), csv.into_bytes());
    let energies: Vec<Vec<f64>> = ens
        .paths
        .iter()
        .map(|tr| {
            tr.states
                .iter()
                .zip(&tr.inputs)
                .map(|(x, u)| ctx.maps.energy(x, u))
                .collect()
        })
        .collect();
    let mean_energy: Vec<(f64, f64)> = (0..ens.times().len())
        .map(|s| crate::diagnostics::mean_se(&energies.iter().map(|e| e[s]).collect::<Vec<_>>()))
        .collect();
    put_json(
        artifacts,
        "summary.json",
        &json!({
            "paths": ens.len(),
            "paths_written": written,
            "times": ens.times(),
            "mean_energy": mean_energy.iter().map(|m| m.0).collect::<Vec<_>>(),
            "mean_energy_se": mean_energy.iter().map(|m| m.1).collect::<Vec<_>>(),
        }),
    )?;
    Ok(true)
}

fn moments(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<bool> {
    let ctx = context(cfg)?;
    let times = sim_times(cfg)?;
    let x0 = cfg.initial_state(&ctx.basis.partner);
    let plan = MildPlan::new(
        &ctx,
        &Forcing::mild(&ctx.inputs),
        &cfg.input,
        &times,
        cfg.sim.scheme,
    )?;
    let ens = simulate_ensemble(&plan, &x0, &ensemble_config(cfg))?;
    let recorded = ens.times().to_vec();
    let mean = mean_trajectory(&ctx, &cfg.input, &x0, &recorded)?;
    let rate = energy_rate(&ctx.model, &ctx.spec, &ctx.basis.space)?;
    let k = ctx.modes();
    let q0 = DMatrix::zeros(k, k);
    let mut csv = String::new();
    csv_row(
        &mut csv,
        [
            "t",
            "k",
            "re_mean",
            "im_mean",
            "p_kk",
            "trace_p",
            "energy_rate",
        ]
        .into_iter()
        .map(String::from),
    );
    for (s, &t) in recorded.iter().enumerate() {
        let p = covariance_exact(&ctx, &q0, t)?;
        let trace: f64 = p.diagonal().iter().map(|v| v.re).sum();
        for j in 0..k {
            csv_row(
                &mut csv,
                [
                    num(t),
                    j.to_string(),
                    num(mean[s][j].re),
                    num(mean[s][j].im),
                    num(p[(j, j)].re),
                    num(trace),
                    num(rate),
                ],
            );
        }
    }
    artifacts.insert("moments.csv".into(), csv.into_bytes());
    let mc = if ens.len() >= 2 {
        let sample = mc_moments(&ens)?;
        let checks = moment_check(&ctx, &cfg.input, &x0, &ens)?;
        let pass = checks
            .iter()
            .all(|c| c.mean_projection.pass && c.trace.pass);
        json!({ "paths": ens.len(), "times": sample.times, "trace": sample.trace, "trace_se": sample.trace_se, "checks": checks, "pass": pass })
    } else {
        json!({ "paths": ens.len() })
    };
    put_json(artifacts, "moments_mc.json", &mc)?;
    Ok(true)
}

fn energy(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<bool> {
    let block = cfg
        .energy
        .as_ref()
        .ok_or_else(|| Error::config("energy command needs an \"energy\" block"))?;
    let mut ctx = context(cfg)?;
    if let Some(noise) = &block.noise {
        noise.check(&ctx.model)?;
        ctx = ctx.with_noise(noise.clone())?;
    }
    let x0 = cfg.initial_state(&ctx.basis.partner);
    let report = energy_balance(
        &ctx,
        &cfg.input,
        &x0,
        block.window,
        cfg.sim.dt,
        &EnsembleConfig::new(cfg.sim.paths, cfg.sim.seed),
    )?;
    put_json(artifacts, "energy.json", &report)?;
    Ok(true)
}

fn ito(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<bool> {
    let block = cfg
        .ito
        .as_ref()
        .ok_or_else(|| Error::config("ito command needs an \"ito\" block"))?;
    let ctx = context(cfg)?;
    let report = ito_isometry_check(&ctx, block.t, cfg.sim.dt, cfg.sim.paths, cfg.sim.seed)?;
    put_json(artifacts, "ito.json", &report)?;
    Ok(true)
}

fn wellposed(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<bool> {
    let block = cfg
        .wellposed
        .as_ref()
        .ok_or_else(|| Error::config("wellposed command needs a \"wellposed\" block"))?;
    let ctx = context(cfg)?;
    let members = standard_members(&ctx, block.members, cfg.sim.seed);
    let ens = EnsembleConfig::new(block.paths, cfg.sim.seed);
    let report = wellposedness_ratio(&ctx, &members, &block.tf_grid, block.dt, Some(&ens))?;
    put_json(artifacts, "wellposed.json", &report)?;
    Ok(true)
}

fn yosida(cfg: &RunConfig, artifacts: &mut Artifacts) -> Result<bool> {
    let block = cfg
        .yosida
        .as_ref()
        .ok_or_else(|| Error::config("yosida command needs a \"yosida\" block"))?;
    let ctx = context(cfg)?;
    let times = sim_times(cfg)?;
    let x0 = cfg.initial_state(&ctx.basis.partner);
    let report = yosida_ladder(
        &ctx,
        &cfg.input,
        &x0,
        &block.scales,
        &times,
        &EnsembleConfig::new(block.paths, cfg.sim.seed),
    )?;
    let mut csv = String::new();
    csv_row(
        &mut csv,
        ["scale", "sup_error", "standard_error"]
            .into_iter()
            .map(String::from),
    );
    for ((s, e), se) in report
        .scales
        .iter()
        .zip(&report.sup_error)
        .zip(&report.standard_error)
    {
        csv_row(&mut csv, [num(*s), num(*e), num(*se)]);
    }
    artifacts.insert("yosida.csv".into(), csv.into_bytes());
    put_json(artifacts, "yosida.json", &report)?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
        let mut s = String::new();
        csv_row(&mut s, [num(1.0), "3".to_string()]);
        assert_eq!(s, "1.0000000000000000e0,3\n");
    }

    #[test]
    fn run_directories_are_never_reused() {
        let tmp = tempfile::tempdir().unwrap();
        let hash = "0123456789abcdef";
        let a = fresh_dir(tmp.path(), Command::Spectrum, hash).unwrap();
        let b = fresh_dir(tmp.path(), Command::Spectrum, hash).unwrap();
        assert_ne!(a, b);
        assert!(b.to_string_lossy().ends_with("spectrum-0123456789ab-1"));
    }
}
