use num_complex::Complex64;

use super::*;
use crate::model::energy;
use crate::noise::{
    sample_path, uniform_times, NoiseBasis, QWienerSpec, Variances, Window, DEFAULT_TAIL_TOL,
};
use crate::string::{build_string_model, StringParams};

fn noise(modes: usize) -> QWienerSpec {
    QWienerSpec {
        modes,
        q: Variances::Power { q0: 1.0, r: 2.0 },
        basis: NoiseBasis::Sine,
        channel: 0,
        window: Window::One,
        tail_tol: DEFAULT_TAIL_TOL,
    }
}

fn context(k: usize, spec: QWienerSpec) -> SimContext {
    let model = build_string_model(&StringParams::default()).unwrap();
    SimContext::build(&model, 128, k, spec).unwrap()
}

fn zeros(k: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); k]
}

fn unit(k: usize, j: usize) -> Vec<Complex64> {
    let mut x = zeros(k);
    x[j] = Complex64::new(1.0, 0.0);
    x
}

#[test]
fn phi_functions_match_closed_form_near_switch() {
    for z in [
        Complex64::new(9.9e-4, 0.0),
        Complex64::new(0.0, 1.1e-3),
        Complex64::new(-0.3, 2.0),
    ] {
        let (p1, p2) = phi12(z);
        let e = z.exp();
        assert!((p1 - (e - 1.0) / z).norm() < 1e-12);
        assert!((p2 - (e - 1.0 - z) / (z * z)).norm() < 1e-9);
    }
    let (p1, p2) = phi12(Complex64::new(0.0, 0.0));
    assert_eq!((p1.re, p2.re), (1.0, 0.5));
}

#[test]
fn deterministic_eigen_decay() {
    let ctx = context(9, QWienerSpec::zero(0));
    let times = uniform_times(1e-2, 100);
    let traj = simulate_mild(
        &ctx,
        &InputSignal::Zero,
        &unit(9, 0),
        &times,
        Scheme::ExactGaussian,
        1,
        0,
        10,
    )
    .unwrap();
    let l0 = ctx.basis.lambdas[0];
    for (t, x) in traj.times.iter().zip(&traj.states) {
        assert!((x[0] - (l0 * t).exp()).norm() < 1e-12);
        assert!(x[1..].iter().all(|v| v.norm() == 0.0));
    }
    assert_eq!(traj.times.len(), 11);
}

#[test]
fn increment_scheme_decouples_modes() {
    let ctx = context(9, noise(4));
    let times = uniform_times(1e-3, 200);
    let path = sample_path(&ctx.spec, &times, 9, 3).unwrap();
    let plan = MildPlan::new(
        &ctx,
        &Forcing::mild(&ctx.inputs),
        &InputSignal::Zero,
        &times,
        Scheme::Increment,
    )
    .unwrap();
    let traj = plan.run(&zeros(9), NoiseDrive::Path(&path), 1).unwrap();
    for j in 0..9 {
        let e = (ctx.basis.lambdas[j] * 1e-3).exp();
        let mut x = Complex64::new(0.0, 0.0);
        for s in 0..200 {
            let mut kick = Complex64::new(0.0, 0.0);
            for (i, d) in path.increment(s).iter().enumerate() {
                kick += e * ctx.inputs.h[(j, i)] * d;
            }
            x = x * e + kick;
            let got = traj.states[s + 1][j];
            let want = if ctx.basis.partner[j] < j {
                traj.states[s + 1][ctx.basis.partner[j]].conj()
            } else {
                x
            };
            assert_eq!(got, want);
        }
    }
}

#[test]
fn conjugate_pairs_stay_real() {
    let ctx = context(9, noise(4));
    let times = uniform_times(1e-2, 50);
    let traj = simulate_mild(
        &ctx,
        &InputSignal::Zero,
        &zeros(9),
        &times,
        Scheme::ExactGaussian,
        4,
        1,
        50,
    )
    .unwrap();
    let x = traj.last();
    for j in 0..9 {
        assert_eq!(x[ctx.basis.partner[j]], x[j].conj());
    }
}

#[test]
fn exact_scheme_matches_one_step_variance() {
    let ctx = context(5, noise(3));
    let dt = 0.05;
    let times = uniform_times(dt, 1);
    let plan = MildPlan::new(
        &ctx,
        &Forcing::mild(&ctx.inputs),
        &InputSignal::Zero,
        &times,
        Scheme::ExactGaussian,
    )
    .unwrap();
    let paths = 4000;
    let j = 1;
    let samples: Vec<f64> = (0..paths)
        .map(|p| {
            plan.run(
                &zeros(5),
                NoiseDrive::Seeded {
                    seed: 17,
                    path_index: p,
                },
                1,
            )
            .unwrap()
            .last()[j]
                .norm_sqr()
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / paths as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
    let l = ctx.basis.lambdas[j];
    let g: f64 = (0..3)
        .map(|i| ctx.inputs.q[i] * ctx.inputs.h[(j, i)].norm_sqr())
        .sum();
    let want = g * ((2.0 * l.re * dt).exp() - 1.0) / (2.0 * l.re);
    assert!(
        (mean - want).abs() < 4.0 * (var / paths as f64).sqrt(),
        "{mean} vs {want}"
    );
}

#[test]
fn exact_scheme_rejects_external_path() {
    let ctx = context(5, noise(2));
    let times = uniform_times(0.1, 4);
    let path = sample_path(&ctx.spec, &times, 0, 0).unwrap();
    let plan = MildPlan::new(
        &ctx,
        &Forcing::mild(&ctx.inputs),
        &InputSignal::Zero,
        &times,
        Scheme::ExactGaussian,
    )
    .unwrap();
    assert!(plan.run(&zeros(5), NoiseDrive::Path(&path), 1).is_err());
    assert!(MildPlan::new(
        &ctx,
        &Forcing::mild(&ctx.inputs),
        &InputSignal::Zero,
        &[0.0, 0.1, 0.3],
        Scheme::Increment
    )
    .is_err());
}

#[test]
fn constant_input_mean_has_closed_form() {
    let ctx = context(9, QWienerSpec::zero(0));
    let input = InputSignal::Constant { value: vec![0.5] };
    let times = uniform_times(1e-2, 100);
    let traj = simulate_mild(
        &ctx,
        &input,
        &zeros(9),
        &times,
        Scheme::Increment,
        0,
        0,
        100,
    )
    .unwrap();
    for j in 0..9 {
        let l = ctx.basis.lambdas[j];
        let want = ((l * 1.0).exp() - 1.0) / l * ctx.inputs.a[(j, 0)] * 0.5;
        assert!((traj.last()[j] - want).norm() < 1e-12 * (1.0 + want.norm()));
    }
}

#[test]
fn state_maps_agree_with_grid() {
    let ctx = context(9, QWienerSpec::zero(0));
    let mut x: Vec<Complex64> = (0..9)
        .map(|j| Complex64::new(0.3 / (j + 1) as f64, 0.1 * j as f64))
        .collect();
    ctx.basis.symmetrize(&mut x);
    let u = [0.7];
    let traj = Trajectory {
        path_index: 0,
        times: vec![0.0],
        states: vec![x.clone()],
        inputs: vec![u.to_vec()],
        numeric_derivative: false,
    };
    let eps = &reconstruct_epsilon(&ctx, &traj)[0];
    let space = &ctx.basis.space;
    assert!((ctx.maps.energy(&x, &u) - energy(eps, space).unwrap()).abs() < 1e-10);
    let ports = space.ports(eps, &ctx.model).unwrap();
    let mapped = ctx.maps.ports(&ctx.model, &x, &u);
    assert!((ports.stacked() - mapped.stacked()).norm() < 1e-10);
    // y = W_C ports is the velocity eps_1 / rho at the left end
    let y = ctx.maps.output(&ctx.model, &x, &u);
    assert!((y[0] - eps[0]).abs() < 1e-10);
    // the lift supplies the boundary input
    assert!((ctx.maps.input_ports(&ctx.model, &x, &u)[0] - 0.7).abs() < 1e-10);
}

#[test]
fn reconstruction_limits() {
    let ctx = context(5, QWienerSpec::zero(0));
    let space = &ctx.basis.space;
    let traj = Trajectory {
        path_index: 0,
        times: vec![0.0],
        states: vec![zeros(5)],
        inputs: vec![vec![1.0]],
        numeric_derivative: false,
    };
    assert_eq!(
        reconstruct_epsilon(&ctx, &traj)[0],
        ctx.lift.sample(space, &[1.0])
    );
    let x = unit(5, 0);
    let traj = Trajectory {
        path_index: 0,
        times: vec![0.0],
        states: vec![x.clone()],
        inputs: vec![vec![0.0]],
        numeric_derivative: false,
    };
    assert_eq!(
        reconstruct_epsilon(&ctx, &traj)[0],
        ctx.basis.reconstruct(&x)
    );
}

#[test]
fn unforced_energy_is_non_increasing() {
    let ctx = context(17, QWienerSpec::zero(0));
    let mut x0: Vec<Complex64> = (0..17)
        .map(|j| Complex64::new(1.0 / (1 + j) as f64, 0.5))
        .collect();
    ctx.basis.symmetrize(&mut x0);
    let times = uniform_times(1e-2, 200);
    let traj = simulate_mild(
        &ctx,
        &InputSignal::Zero,
        &x0,
        &times,
        Scheme::ExactGaussian,
        0,
        0,
        1,
    )
    .unwrap();
    let e: Vec<f64> = traj
        .states
        .iter()
        .map(|x| ctx.maps.energy(x, &[0.0]))
        .collect();
    assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(e[200] < 0.5 * e[0]);
}

#[test]
fn weak_residual_deterministic_and_orthogonal() {
    let ctx = context(9, QWienerSpec::zero(0));
    let times = uniform_times(1e-3, 1000);
    let traj = simulate_mild(
        &ctx,
        &InputSignal::Zero,
        &unit(9, 0),
        &times,
        Scheme::Increment,
        0,
        0,
        1,
    )
    .unwrap();
    let r = weak_residual(&ctx, &InputSignal::Zero, &traj, &unit(9, 0), None).unwrap();
    assert!(r.iter().cloned().fold(0.0, f64::max) < 1e-8);
    let r = weak_residual(&ctx, &InputSignal::Zero, &traj, &unit(9, 3), None).unwrap();
    assert!(r.iter().all(|v| *v == 0.0));
}

#[test]
fn weak_residual_shrinks_with_step() {
    let ctx = context(9, noise(4));
    let input = InputSignal::Sinusoid {
        offset: vec![0.0],
        amplitude: vec![0.3],
        omega: 2.0,
        phase: 0.0,
    };
    let fine = uniform_times(5e-4, 1600);
    let mut errs = Vec::new();
    for factor in [4usize, 2, 1] {
        let mut acc = 0.0;
        for p in 0..16 {
            let path = sample_path(&ctx.spec, &fine, 5, p)
                .unwrap()
                .coarsen(factor)
                .unwrap();
            let plan = MildPlan::new(
                &ctx,
                &Forcing::mild(&ctx.inputs),
                &input,
                &path.times,
                Scheme::Increment,
            )
            .unwrap();
            let traj = plan.run(&zeros(9), NoiseDrive::Path(&path), 1).unwrap();
            let r = weak_residual(&ctx, &input, &traj, &unit(9, 1), Some(&path)).unwrap();
            acc += r.last().unwrap().powi(2);
        }
        errs.push(acc.sqrt());
    }
    let order = (errs[0] / errs[2]).ln() / 4f64.ln();
    assert!(order > 0.8, "{errs:?}");
}

#[test]
fn convolution_series_trivial_cases() {
    let ctx = context(7, noise(3));
    let times = uniform_times(1e-2, 50);
    let path = sample_path(&ctx.spec, &times, 2, 0).unwrap();
    assert!(convolution_series(&ctx, &path, 0)
        .unwrap()
        .iter()
        .all(|v| v.norm() == 0.0));
    let quiet = ctx.with_noise(QWienerSpec::zero(0)).unwrap();
    let still = sample_path(&quiet.spec, &times, 2, 0).unwrap();
    assert!(convolution_series(&quiet, &still, 50)
        .unwrap()
        .iter()
        .all(|v| v.norm() == 0.0));
    assert!(convolution_series(&ctx, &path, 51).is_err());
}

#[test]
fn convolution_series_tracks_increment_scheme() {
    let ctx = context(7, noise(3));
    let fine = uniform_times(2.5e-4, 4000);
    let mut errs = Vec::new();
    for factor in [4usize, 2, 1] {
        let path = sample_path(&ctx.spec, &fine, 8, 0)
            .unwrap()
            .coarsen(factor)
            .unwrap();
        let steps = path.steps();
        let plan = MildPlan::new(
            &ctx,
            &Forcing::mild(&ctx.inputs),
            &InputSignal::Zero,
            &path.times,
            Scheme::Increment,
        )
        .unwrap();
        let x = plan.run(&zeros(7), NoiseDrive::Path(&path), steps).unwrap();
        let w = convolution_series(&ctx, &path, steps).unwrap();
        errs.push(
            x.last()
                .iter()
                .zip(&w)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt(),
        );
    }
    assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
}

#[test]
fn yosida_without_input_rate_is_mild() {
    let ctx = context(9, noise(3));
    let input = InputSignal::Constant { value: vec![0.4] };
    let times = uniform_times(1e-2, 100);
    let mild = simulate_mild(
        &ctx,
        &input,
        &zeros(9),
        &times,
        Scheme::ExactGaussian,
        3,
        2,
        10,
    )
    .unwrap();
    let ext = yosida_simulate(
        &ctx,
        &input,
        100.0,
        &zeros(9),
        &times,
        Scheme::ExactGaussian,
        NoiseDrive::Seeded {
            seed: 3,
            path_index: 2,
        },
        10,
    )
    .unwrap();
    assert_eq!(ext.x.states, mild.states);
    assert!(ext.u.iter().all(|u| u[0] == 0.4));
}

#[test]
fn yosida_gap_converges_with_scale() {
    let ctx = context(9, QWienerSpec::zero(0));
    let input = InputSignal::Sinusoid {
        offset: vec![0.0],
        amplitude: vec![1.0],
        omega: 3.0,
        phase: 0.0,
    };
    let times = uniform_times(1e-2, 100);
    let drive = NoiseDrive::Seeded {
        seed: 0,
        path_index: 0,
    };
    let mild = simulate_mild(
        &ctx,
        &input,
        &zeros(9),
        &times,
        Scheme::ExactGaussian,
        0,
        0,
        1,
    )
    .unwrap();
    let mut sup = Vec::new();
    for s in [10.0, 100.0, 1000.0, 10000.0] {
        let ext = yosida_simulate(
            &ctx,
            &input,
            s,
            &zeros(9),
            &times,
            Scheme::ExactGaussian,
            drive,
            1,
        )
        .unwrap();
        let d = ext
            .x
            .states
            .iter()
            .zip(&mild.states)
            .map(|(a, b)| {
                let diff: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                ctx.maps.modal_energy(&diff)
            })
            .fold(0.0, f64::max);
        sup.push(d);
    }
    assert!(sup.windows(2).all(|w| w[1] < w[0]), "{sup:?}");
}

#[test]
fn yosida_rejects_points_near_spectrum() {
    let ctx = context(9, QWienerSpec::zero(0));
    assert!(yosida_forcing(&ctx.inputs, &ctx.basis, -1.0).is_err());
    assert!(yosida_forcing(&ctx.inputs, &ctx.basis, 0.0).is_err());
    assert!(yosida_forcing(&ctx.inputs, &ctx.basis, 10.0).is_ok());
}

#[test]
fn ensemble_independent_of_pool_size() {
    let ctx = context(7, noise(3));
    let times = uniform_times(1e-2, 20);
    let plan = MildPlan::new(
        &ctx,
        &Forcing::mild(&ctx.inputs),
        &InputSignal::Zero,
        &times,
        Scheme::ExactGaussian,
    )
    .unwrap();
    let cfg = EnsembleConfig::new(12, 99).with_stride(5);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_ensemble(&plan, &zeros(7), &cfg).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(a, b);
    assert_eq!(a.paths[7].path_index, 7);
    assert_eq!(a.times().len(), 5);
}
