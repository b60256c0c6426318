use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::*;
use crate::lift::build_boundary_lift;
use crate::model::{Hamiltonian, PhsModel};
use crate::string::{build_string_model, string_oracle, StringParams};

fn default_string() -> PhsModel {
    build_string_model(&StringParams::default()).unwrap()
}

/// `lambda = (gamma / 2L) (ln|r| + i arg-lattice)` with `r = (Z - 1) / (Z + 1)`.
fn closed_form(rho: f64, t: f64, k: i64) -> Complex64 {
    let gamma = (t / rho).sqrt();
    let z = (t * rho).sqrt();
    let r = (z - 1.0) / (z + 1.0);
    let phase = if r > 0.0 {
        2.0 * k as f64
    } else {
        2.0 * k as f64 + 1.0
    } * std::f64::consts::PI;
    Complex64::new(r.abs().ln(), phase) * (gamma / 2.0)
}

#[test]
fn periodic_transport_is_central_stencil() {
    let m = PhsModel::new(
        1,
        0.0,
        1.0,
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::zeros(1, 1),
        Hamiltonian::Constant(DMatrix::from_element(1, 1, 1.0)),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::zeros(0, 2),
        DMatrix::zeros(0, 2),
    )
    .unwrap();
    let d = discretize_operator(&m, 16, Stencil::CentralPeriodic).unwrap();
    let h = 1.0 / 16.0;
    for i in 0..16 {
        for j in 0..16 {
            let want = if j == (i + 1) % 16 {
                0.5 / h
            } else if j == (i + 15) % 16 {
                -0.5 / h
            } else {
                0.0
            };
            assert!((d.a[(i, j)] - want).abs() < 1e-12);
        }
    }
    assert!(discretize_operator(&m, 7, Stencil::Box).is_err());
}

#[test]
fn oracle_matches_closed_form_both_regimes() {
    for (t, first) in [(4.0, 0i64), (0.25, 0)] {
        let o = string_oracle(&StringParams::constant(1.0, t), 9).unwrap();
        assert!(o.residuals.iter().all(|r| *r <= 1e-10));
        for root in &o.roots {
            assert!(root.re < 0.0);
            let found = (-6..=6).any(|k| (closed_form(1.0, t, k + first) - root).norm() < 1e-10);
            assert!(found, "T={t}: {root}");
        }
    }
    // spacing 2 pi gamma / L with a real mode, against an offset half lattice
    let hi = string_oracle(&StringParams::constant(1.0, 4.0), 3).unwrap();
    assert_eq!(hi.roots[0].im, 0.0);
    assert!((hi.roots[1].im - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    let lo = string_oracle(&StringParams::constant(1.0, 0.25), 2).unwrap();
    assert!((lo.roots[0].im - 0.25 * std::f64::consts::PI).abs() < 1e-10);
    assert!(string_oracle(&StringParams::constant(1.0, 1.0), 8)
        .unwrap()
        .roots
        .is_empty());
}

#[test]
fn basis_is_biorthogonal_and_dissipative() {
    let d = discretize_operator(&default_string(), 128, Stencil::Box).unwrap();
    let b = eigensystem(&d, 12).unwrap();
    assert!(b.report.gram_defect <= 1e-8);
    assert!(b.report.max_real_part <= 1e-10);
    assert!(b.report.nice);
    for k in 0..b.len() {
        assert_eq!(b.lambdas[b.partner[k]], b.lambdas[k].conj());
    }
}

#[test]
fn split_pair_is_dropped() {
    let d = discretize_operator(&default_string(), 64, Stencil::Box).unwrap();
    // real mode plus pairs: an even count splits the last pair
    assert_eq!(eigensystem(&d, 4).unwrap().len(), 3);
    assert_eq!(eigensystem(&d, 5).unwrap().len(), 5);
    assert!(eigensystem(&d, 17).is_err());
}

#[test]
fn low_modes_within_second_order_bound() {
    let n = 256;
    let d = discretize_operator(&default_string(), n, Stencil::Box).unwrap();
    let computed = resolved_eigenvalues(&d, 4).unwrap();
    let oracle = string_oracle(&StringParams::default(), 4).unwrap().roots;
    for (c, o) in computed.iter().zip(&oracle).take(2) {
        assert!(
            (c - o).norm() <= 2.0 * o.norm() / (n * n) as f64,
            "{c} vs {o}"
        );
    }
}

#[test]
fn matched_impedance_is_not_nice() {
    let m = build_string_model(&StringParams::constant(1.0, 1.0)).unwrap();
    let d = discretize_operator(&m, 128, Stencil::Box).unwrap();
    let b = eigensystem(&d, 16).unwrap();
    assert!(!b.report.nice);
    assert!(!b.report.condition_ok);
    // the discrete gap stays open; the eigenvector condition is what fails
    assert!(b.report.gap_ok);
}

#[test]
fn gap_is_stable_for_damped_string() {
    let g = gap_stability(&default_string(), &[128, 256], 8).unwrap();
    assert!(g.stable, "{g:?}");
    assert!(g.gaps.iter().all(|&x| x > 1.0));
}

#[test]
fn semigroup_identities() {
    let d = discretize_operator(&default_string(), 128, Stencil::Box).unwrap();
    let b = eigensystem(&d, 9).unwrap();
    let space = &b.space;
    let x = space.sample(|z| DVector::from_vec(vec![(3.0 * z).sin() + z, z * z - 0.3]));
    let p0 = semigroup_apply(&b, 0.0, &x).unwrap();
    let p1 = semigroup_apply(&b, 0.0, &p0).unwrap();
    let scale = space.inner(&p0, &p0).sqrt();
    let diff: Vec<f64> = p0.iter().zip(&p1).map(|(a, c)| a - c).collect();
    assert!(space.inner(&diff, &diff).sqrt() <= 1e-10 * scale);

    let phi: Vec<f64> = b.phis[0].iter().map(|z| z.re).collect();
    let out = semigroup_apply(&b, 0.7, &phi).unwrap();
    let decay = (b.lambdas[0].re * 0.7).exp();
    assert!(out
        .iter()
        .zip(&phi)
        .all(|(o, p)| (o - decay * p).abs() < 1e-10));

    for t in [0.1, 1.0, 10.0] {
        let y = semigroup_apply(&b, t, &x).unwrap();
        assert!(space.inner(&y, &y) <= space.inner(&p0, &p0) * (1.0 + 1e-12));
    }
    let ts = semigroup_apply(&b, 0.3, &semigroup_apply(&b, 0.2, &x).unwrap()).unwrap();
    let direct = semigroup_apply(&b, 0.5, &x).unwrap();
    let diff: Vec<f64> = ts.iter().zip(&direct).map(|(a, c)| a - c).collect();
    assert!(space.inner(&diff, &diff).sqrt() <= 1e-10 * scale);
    assert!(semigroup_apply(&b, -1.0, &x).is_err());
}

#[test]
fn lift_generator_matches_stencil() {
    let m = default_string();
    let lift = build_boundary_lift(&m).unwrap();
    let mut errs = Vec::new();
    for cells in [32, 64] {
        let space = crate::model::EnergySpace::new(&m, cells).unwrap();
        let exact = &lift.generator_profiles(&m, &space)[0];
        let stencil = apply_operator(&m, &space, &lift.unit_profiles(&space)[0]);
        errs.push(
            exact
                .iter()
                .zip(&stencil)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    // affine profile: differences are exact up to rounding
    assert!(errs.iter().all(|e| *e < 1e-10));
}

#[test]
fn flux_factorization() {
    let f = factorize_flux(&default_string(), 16).unwrap();
    for d in &f.delta {
        assert!((d[0] - 2.0).abs() < 1e-12 && (d[1] + 2.0).abs() < 1e-12);
    }
    assert!(f.residual <= 1e-10);

    let mut m = default_string();
    m.hamiltonian = Hamiltonian::Constant(DMatrix::identity(2, 2));
    let f = factorize_flux(&m, 4).unwrap();
    let s = &f.s[0];
    assert!((s * s.transpose() - DMatrix::identity(2, 2)).amax() < 1e-12);
    assert!(f.s.iter().all(|x| (x - s).amax() == 0.0));
    assert_eq!(f.delta[0], vec![1.0, -1.0]);

    m.hamiltonian = Hamiltonian::Grid {
        zeta: vec![0.0, 0.4, 1.0],
        values: vec![
            DMatrix::from_row_slice(2, 2, &[3.0, 0.4, 0.4, 2.0]),
            DMatrix::from_row_slice(2, 2, &[2.5, -0.3, -0.3, 4.0]),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 1.2]),
        ],
    };
    assert!(factorize_flux(&m, 40).unwrap().residual <= 1e-10);

    m.p1 = DMatrix::identity(2, 2);
    m.hamiltonian = Hamiltonian::Constant(DMatrix::identity(2, 2));
    assert!(factorize_flux(&m, 4).is_err());
}
