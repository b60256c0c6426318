use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use sphs::diagnostics::{admissibility_integral, standard_members, wellposedness_ratio};
use sphs::lift::build_boundary_lift;
use sphs::model::{boundary_ports, energy, validate_model, EnergySpace};
use sphs::moments::{covariance_exact, is_psd};
use sphs::noise::{sample_path, uniform_times};
use sphs::solver::SimContext;
use sphs::spectral::semigroup_apply;
use sphs::string::{build_string_model, default_noise, StringParams};

fn context() -> &'static SimContext {
    static CTX: OnceLock<SimContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let model = build_string_model(&StringParams::default()).unwrap();
        SimContext::build(&model, 128, 9, default_noise()).unwrap()
    })
}

fn grid_function(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, len)
}

fn coefficients(k: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), k).prop_map(|v| {
        v.into_iter()
            .map(|(re, im)| Complex64::new(re, im))
            .collect()
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ports_are_linear_in_traces(
        xa in grid_function(2), xb in grid_function(2), ya in grid_function(2), yb in grid_function(2),
        alpha in -5.0..5.0f64,
    ) {
        let m = build_string_model(&StringParams::default()).unwrap();
        let v = |x: &[f64]| DVector::from_column_slice(x);
        let p = boundary_ports(&v(&xa), &v(&xb), &m).unwrap();
        let q = boundary_ports(&v(&ya), &v(&yb), &m).unwrap();
        let combo = |a: &[f64], b: &[f64]| v(&a.iter().zip(b).map(|(s, t)| alpha * s + t).collect::<Vec<_>>());
        let r = boundary_ports(&combo(&xa, &ya), &combo(&xb, &yb), &m).unwrap();
        let want = alpha * p.stacked() + q.stacked();
        let scale = 1.0 + want.amax();
        prop_assert!((r.stacked() - want).amax() <= 1e-12 * scale);
    }

    #[test]
    fn energy_is_quadratic_and_bounded(
        rho in 0.2..5.0f64, t in 0.2..5.0f64, alpha in -4.0..4.0f64, state in grid_function(2 * 17),
    ) {
        let m = build_string_model(&StringParams::constant(rho, t)).unwrap();
        let space = EnergySpace::new(&m, 16).unwrap();
        let e = energy(&state, &space).unwrap();
        let scaled: Vec<f64> = state.iter().map(|v| alpha * v).collect();
        prop_assert!(close(energy(&scaled, &space).unwrap(), alpha * alpha * e, 1e-12));
        let r = validate_model(&m).unwrap();
        let l2 = space.l2_sq(&state);
        prop_assert!(0.5 * r.m_lower * l2 <= e * (1.0 + 1e-12));
        prop_assert!(e <= 0.5 * r.m_upper * l2 * (1.0 + 1e-12));
    }

    #[test]
    fn lift_satisfies_port_identities(rho in 0.2..5.0f64, t in 0.2..5.0f64, a in -1.0..0.5f64, len in 0.5..3.0f64) {
        let p = StringParams { a, b: a + len, ..StringParams::constant(rho, t) };
        let m = build_string_model(&p).unwrap();
        let lift = build_boundary_lift(&m).unwrap();
        prop_assert!(lift.port_defect(&m).unwrap() <= 1e-12);
    }

    #[test]
    fn path_bytes_depend_only_on_seed_and_index(seed in any::<u64>(), index in 0..1000u64) {
        let spec = default_noise();
        let times = uniform_times(0.1, 5);
        let a = sample_path(&spec, &times, seed, index).unwrap();
        let b = sample_path(&spec, &times, seed, index).unwrap();
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
        let c = sample_path(&spec, &times, seed, index + 1).unwrap();
        prop_assert_ne!(a.to_bytes(), c.to_bytes());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn semigroup_law_on_modal_span(c in coefficients(9), t in 0.0..0.5f64, s in 0.0..0.5f64) {
        let ctx = context();
        let mut c = c;
        ctx.basis.symmetrize(&mut c);
        let x = ctx.basis.reconstruct(&c);
        let ts = semigroup_apply(&ctx.basis, t, &semigroup_apply(&ctx.basis, s, &x).unwrap()).unwrap();
        let direct = semigroup_apply(&ctx.basis, t + s, &x).unwrap();
        let norm = direct.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = ts.iter().zip(&direct).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-10 * norm.max(1e-12));
    }

    #[test]
    fn covariance_stays_psd(c in coefficients(9), t in 0.0..3.0f64) {
        let ctx = context();
        let k = ctx.modes();
        let mut v = c;
        ctx.basis.symmetrize(&mut v);
        let vv = DVector::from_vec(v);
        let q0: DMatrix<Complex64> = &vv * vv.adjoint();
        prop_assert!(is_psd(&covariance_exact(ctx, &q0, t).unwrap()));
        prop_assert!(is_psd(&covariance_exact(ctx, &DMatrix::zeros(k, k), t).unwrap()));
    }

    #[test]
    fn admissibility_grows_with_time(t1 in 0.0..2.0f64, dt in 0.0..2.0f64) {
        let ctx = context();
        let a = admissibility_integral(ctx, t1).unwrap();
        let b = admissibility_integral(ctx, t1 + dt).unwrap();
        prop_assert!(a.partial_sums.iter().zip(&b.partial_sums).all(|(x, y)| x <= y));
        prop_assert!(b.partial_sums.windows(2).all(|w| w[0] <= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn wellposedness_terms_ignore_member_order(seed in any::<u64>(), shift in 1..4usize) {
        let ctx = context();
        let members = standard_members(ctx, 4, seed);
        let mut rotated = members.clone();
        rotated.rotate_left(shift);
        let tf = [0.2, 0.4];
        let a = wellposedness_ratio(ctx, &members, &tf, 1e-2, None).unwrap();
        let b = wellposedness_ratio(ctx, &rotated, &tf, 1e-2, None).unwrap();
        prop_assert_eq!(&a.ratios, &b.ratios);
        for (i, m) in a.members.iter().enumerate() {
            let r = &b.members[(i + 4 - shift) % 4];
            prop_assert_eq!(&m.numerator, &r.numerator);
            prop_assert_eq!(&m.denominator, &r.denominator);
        }
    }
}
