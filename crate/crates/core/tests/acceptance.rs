//! Acceptance criteria on the string benchmark. Every criterion prints one
//! `criterion N: PASS|FAIL` line to stderr; the test fails if any fails.
//!
//! Criteria 2, 3, 4, 6, 8 and 9 are read from the artifacts of the CLI
//! suite, which runs twice (one and three workers) for criterion 11.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use num_complex::Complex64;
use serde_json::Value;
use sphs::diagnostics::{loglog_slope, SE_MULTIPLE};
use sphs::model::generation_check;
use sphs::noise::{sample_path, uniform_times};
use sphs::solver::{
    convolution_series, weak_residual, Forcing, InputSignal, MildPlan, NoiseDrive, Scheme,
    SimContext,
};
use sphs::spectral::{discretize_operator, resolved_eigenvalues, Stencil};
use sphs::string::{build_string_model, default_noise, string_oracle, StringParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn line(n: usize, name: &str, outcome: &Outcome, secs: f64) {
    let verdict = if outcome.pass { "PASS" } else { "FAIL" };
    // direct writes bypass the test harness capture
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n:>2}: {verdict} {name}: {} ({secs:.1} s)",
        outcome.detail
    );
}

/// (command, benchmark, expected exit code) of the CLI suite.
const SUITE: [(&str, &str, i32); 10] = [
    ("validate", "damped-string-mc", 0),
    ("spectrum", "damped-string-mc", 0),
    ("simulate", "damped-string-mc", 0),
    ("energy", "damped-string-mc", 0),
    ("ito", "damped-string-mc", 0),
    ("wellposed", "damped-string-mc", 0),
    ("moments", "moments-vs-mc", 0),
    ("yosida", "yosida-ladder", 0),
    ("validate", "admissibility-pass", 0),
    ("validate", "admissibility-fail", 1),
];

fn benchmarks() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks")
}

/// Runs the suite and maps `command/benchmark` to its run directory.
fn run_suite(out: &Path, workers: usize) -> BTreeMap<String, PathBuf> {
    let mut dirs = BTreeMap::new();
    for (command, bench, code) in SUITE {
        let output = Command::new(env!("CARGO_BIN_EXE_sphs"))
            .arg(command)
            .arg("--config")
            .arg(benchmarks().join(format!("{bench}.json")))
            .arg("--out")
            .arg(out)
            .arg("--workers")
            .arg(workers.to_string())
            .env_remove("SPHS_SEED")
            .output()
            .expect("sphs runs");
        assert_eq!(
            output.status.code(),
            Some(code),
            "{command} {bench}: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        let dir = String::from_utf8(output.stdout).unwrap().trim().to_string();
        dirs.insert(format!("{command}/{bench}"), PathBuf::from(dir));
    }
    dirs
}

fn read_json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn comparison(v: &Value) -> (bool, String) {
    let z = f(&v["z_score"]);
    (
        z <= SE_MULTIPLE,
        format!(
            "estimate {:.5e} exact {:.5e} se {:.2e} z {z:.2}",
            f(&v["estimate"]),
            f(&v["exact"]),
            f(&v["standard_error"])
        ),
    )
}

fn sci(v: &[f64]) -> String {
    format!(
        "[{}]",
        v.iter()
            .map(|x| format!("{x:.3e}"))
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn fixed(v: &[f64]) -> String {
    format!(
        "[{}]",
        v.iter()
            .map(|x| format!("{x:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn criterion_1() -> Outcome {
    let model = build_string_model(&StringParams::default()).unwrap();
    let g = generation_check(&model);
    let want = [[0.0, 0.0], [0.0, 2.0]];
    let product_ok = (0..2).all(|i| (0..2).all(|j| (g.product[i][j] - want[i][j]).abs() < 1e-12));
    // anti-damper at the right end: T z_z(b) - z_t(b) = 0
    let mut bad = model.clone();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    bad.wb2 = nalgebra::DMatrix::from_row_slice(1, 4, &[s, -s, -s, s]);
    let neg = generation_check(&bad);
    Outcome {
        pass: product_ok && g.psd && !neg.psd,
        detail: format!(
            "W_B Sigma W_B^T = {:?}, psd {}; anti-damper min eigenvalue {:.4}, psd {}",
            g.product, g.psd, neg.eigenvalues[0], neg.psd
        ),
    }
}

fn criterion_2(dirs: &BTreeMap<String, PathBuf>) -> Outcome {
    let r = read_json(&dirs["ito/damped-string-mc"], "ito.json");
    let (pass, detail) = comparison(&r["isometry"]);
    Outcome {
        pass,
        detail: format!("{} paths, t = {}: {detail}", r["paths"], r["t"]),
    }
}

fn criterion_3(dirs: &BTreeMap<String, PathBuf>) -> Outcome {
    let r = read_json(&dirs["moments/moments-vs-mc"], "moments_mc.json");
    let last = r["checks"]
        .as_array()
        .and_then(|c| c.last())
        .cloned()
        .unwrap_or(Value::Null);
    let (mp, md) = comparison(&last["mean_projection"]);
    let (tp, td) = comparison(&last["trace"]);
    Outcome {
        pass: mp && tp,
        detail: format!("t = {}: mean projection {md}; trace {td}", last["t"]),
    }
}

fn criterion_4(dirs: &BTreeMap<String, PathBuf>) -> Outcome {
    let r = read_json(&dirs["energy/damped-string-mc"], "energy.json");
    let (pass, detail) = comparison(&r["full_power"]);
    let (_, mean_detail) = comparison(&r["mean_power"]);
    Outcome {
        pass,
        detail: format!(
            "window {}: {detail} (mean-power variant {mean_detail})",
            r["window"]
        ),
    }
}

/// Step ladder shared by criteria 5 and 7.
const FACTORS: [usize; 3] = [4, 2, 1];
const FINE_DT: f64 = 1e-3;
const LADDER_PATHS: u64 = 200;

fn ladder_context() -> SimContext {
    let model = build_string_model(&StringParams::default()).unwrap();
    SimContext::build(&model, 256, 32, default_noise()).unwrap()
}

fn ladder_order(errors: &[f64]) -> f64 {
    let dts: Vec<f64> = FACTORS.iter().map(|f| *f as f64 * FINE_DT).collect();
    loglog_slope(&dts, errors).unwrap_or(f64::NAN)
}

fn criterion_5(ctx: &SimContext) -> Outcome {
    let zeros = vec![Complex64::new(0.0, 0.0); ctx.modes()];
    let fine = uniform_times(FINE_DT, 1000);
    let mut sq = [0.0; 3];
    for p in 0..LADDER_PATHS {
        let base = sample_path(&ctx.spec, &fine, 51, p).unwrap();
        for (j, &factor) in FACTORS.iter().enumerate() {
            let path = base.coarsen(factor).unwrap();
            let steps = path.steps();
            let plan = MildPlan::new(
                ctx,
                &Forcing::mild(&ctx.inputs),
                &InputSignal::Zero,
                &path.times,
                Scheme::Increment,
            )
            .unwrap();
            let x = plan.run(&zeros, NoiseDrive::Path(&path), steps).unwrap();
            let w = convolution_series(ctx, &path, steps).unwrap();
            let d: Vec<Complex64> = x.last().iter().zip(&w).map(|(a, b)| a - b).collect();
            sq[j] += ctx.maps.modal_energy(&d);
        }
    }
    let errors: Vec<f64> = sq
        .iter()
        .map(|s| (s / LADDER_PATHS as f64).sqrt())
        .collect();
    let order = ladder_order(&errors);
    Outcome {
        pass: order >= 0.9,
        detail: format!("rms X-distance at t = 1 {}, order {order:.3}", sci(&errors)),
    }
}

fn criterion_7(ctx: &SimContext) -> Outcome {
    let k = ctx.modes();
    let input = InputSignal::Sinusoid {
        offset: vec![0.2],
        amplitude: vec![0.5],
        omega: 3.0,
        phase: 0.0,
    };
    let fine = uniform_times(FINE_DT, 1000);
    let tests = [1usize, 5];
    let mut sq = [[0.0; 3]; 2];
    for p in 0..LADDER_PATHS {
        let base = sample_path(&ctx.spec, &fine, 71, p).unwrap();
        for (j, &factor) in FACTORS.iter().enumerate() {
            let path = base.coarsen(factor).unwrap();
            let plan = MildPlan::new(
                ctx,
                &Forcing::mild(&ctx.inputs),
                &input,
                &path.times,
                Scheme::Increment,
            )
            .unwrap();
            let traj = plan
                .run(
                    &vec![Complex64::new(0.0, 0.0); k],
                    NoiseDrive::Path(&path),
                    1,
                )
                .unwrap();
            for (i, &zk) in tests.iter().enumerate() {
                let mut z = vec![Complex64::new(0.0, 0.0); k];
                z[zk] = Complex64::new(1.0, 0.0);
                let r = weak_residual(ctx, &input, &traj, &z, Some(&path)).unwrap();
                sq[i][j] += r.iter().cloned().fold(0.0, f64::max).powi(2);
            }
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &zk) in tests.iter().enumerate() {
        let errors: Vec<f64> = sq[i]
            .iter()
            .map(|s| (s / LADDER_PATHS as f64).sqrt())
            .collect();
        let order = ladder_order(&errors);
        pass &= order >= 0.9;
        parts.push(format!("psi_{zk} {} order {order:.3}", sci(&errors)));
    }
    Outcome {
        pass,
        detail: format!("rms sup residual: {}", parts.join("; ")),
    }
}

fn criterion_6(dirs: &BTreeMap<String, PathBuf>) -> Outcome {
    let r = read_json(&dirs["yosida/yosida-ladder"], "yosida.json");
    let errors: Vec<f64> = r["sup_error"].as_array().unwrap().iter().map(f).collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    Outcome {
        pass: monotone && r["monotone"] == Value::Bool(true),
        detail: format!("{} paths, sup error {}", r["paths"], sci(&errors)),
    }
}

fn criterion_8(dirs: &BTreeMap<String, PathBuf>) -> Outcome {
    let pass_cfg = read_json(&dirs["validate/admissibility-pass"], "report.json");
    let fail_cfg = read_json(&dirs["validate/admissibility-fail"], "report.json");
    let tail = f(&pass_cfg["admissibility"]["series"]["tail_ratio"]);
    let growth = f(&fail_cfg["admissibility"]["series"]["growth_exponent"]);
    let divergent = fail_cfg["admissibility"]["divergent"] == Value::Bool(true);
    let cauchy = tail < 1e-6;
    let cubic = (growth - 3.0).abs() <= 0.2 * 3.0;
    Outcome {
        pass: cauchy && divergent && cubic,
        detail: format!("decaying q tail {tail:.3e}; white noise divergent {divergent}, partial sums ~ K^{growth:.3}"),
    }
}

fn criterion_9(dirs: &BTreeMap<String, PathBuf>) -> Outcome {
    let r = read_json(&dirs["wellposed/damped-string-mc"], "wellposed.json");
    let ratios: Vec<f64> = r["ratios"].as_array().unwrap().iter().map(f).collect();
    let growth = f(&r["growth_exponent"]);
    Outcome {
        pass: ratios.iter().all(|v| v.is_finite()) && growth < 0.1,
        detail: format!(
            "t_f {} max ratios {}, growth exponent {growth:.3}",
            r["tf_grid"],
            fixed(&ratios)
        ),
    }
}

fn criterion_10() -> Outcome {
    let params = StringParams::constant(1.0, 4.0);
    let model = build_string_model(&params).unwrap();
    let roots = string_oracle(&params, 16).unwrap().roots;
    let cells = [256usize, 512, 1024];
    let errors: Vec<f64> = cells
        .iter()
        .map(|&n| {
            let disc = discretize_operator(&model, n, Stencil::Box).unwrap();
            let lambdas = resolved_eigenvalues(&disc, 16).unwrap();
            lambdas
                .iter()
                .zip(&roots)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Outcome {
        pass: orders.iter().all(|p| *p >= 1.9),
        detail: format!(
            "max error on 16 modes at N = {cells:?}: {}, orders {}",
            sci(&errors),
            fixed(&orders)
        ),
    }
}

fn criterion_11(a: &BTreeMap<String, PathBuf>, b: &BTreeMap<String, PathBuf>) -> Outcome {
    let mut files = 0;
    let mut mismatches = Vec::new();
    let list = |d: &Path| {
        let mut names: Vec<_> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        names
    };
    for (key, dir) in a {
        let names = list(dir);
        if names != list(&b[key]) {
            mismatches.push(format!("{key}: file sets differ"));
        }
        for name in names {
            files += 1;
            let x = std::fs::read(dir.join(&name)).unwrap();
            let y = std::fs::read(b[key].join(&name)).unwrap_or_default();
            if x != y {
                mismatches.push(format!("{key}/{}", name.to_string_lossy()));
            }
        }
    }
    Outcome {
        pass: mismatches.is_empty() && files > 0,
        detail: format!(
            "{files} artifacts compared across 1 and 3 workers, mismatches {mismatches:?}"
        ),
    }
}

#[test]
fn acceptance_criteria() {
    let tmp = tempfile::tempdir().unwrap();
    let clock = Instant::now();
    let one = run_suite(&tmp.path().join("w1"), 1);
    let suite_secs = clock.elapsed().as_secs_f64();
    let three = run_suite(&tmp.path().join("w3"), 3);

    let mut results = Vec::new();
    let mut check = |n: usize, name: &str, secs: f64, outcome: Outcome| {
        line(n, name, &outcome, secs);
        results.push((n, outcome.pass));
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (o, t.elapsed().as_secs_f64())
    };

    let (o, s) = timed(&criterion_1);
    check(1, "generation condition", s, o);
    let (o, s) = timed(&|| criterion_2(&one));
    check(2, "Ito isometry", s, o);
    let (o, s) = timed(&|| criterion_3(&one));
    check(3, "moment correctness", s, o);
    let (o, s) = timed(&|| criterion_4(&one));
    check(4, "energy balance", s, o);
    let ctx = ladder_context();
    let (o, s) = timed(&|| criterion_5(&ctx));
    check(5, "convolution series equivalence", s, o);
    let (o, s) = timed(&|| criterion_6(&one));
    check(6, "Yosida convergence", s, o);
    let (o, s) = timed(&|| criterion_7(&ctx));
    check(7, "weak-solution residual", s, o);
    let (o, s) = timed(&|| criterion_8(&one));
    check(8, "admissibility regime split", s, o);
    let (o, s) = timed(&|| criterion_9(&one));
    check(9, "well-posedness invariance", s, o);
    let (o, s) = timed(&criterion_10);
    check(10, "spectral oracle agreement", s, o);
    let (o, s) = timed(&|| criterion_11(&one, &three));
    check(11, "determinism", s + suite_secs, o);

    let failed: Vec<usize> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
