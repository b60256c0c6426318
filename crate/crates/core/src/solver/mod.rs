//! Modal simulation of mild solutions, the extended (Yosida) system and
//! the weak/integral residual checks.
//!
//! Every mode obeys `dx_k = (lambda_k x_k + g_k(t)) dt + sum_i h_ki dbeta_i`
//! with `g_k = sum_j a_kj u_j + d_kj w_j`. The mild solution uses
//! `w = u'` and `d = -<B e_j, psi_k>`; the Yosida system replaces `d` by the
//! resolvent coefficient. Linear parts are propagated exactly.

mod ensemble;
mod input;
mod maps;
mod mild;
mod residual;
mod series;
mod yosida;

pub use ensemble::{map_paths, simulate_ensemble, EnsembleConfig, PathEnsemble};
pub use input::InputSignal;
pub use maps::StateMaps;
pub use mild::{
    reconstruct_epsilon, simulate_mild, simulate_with_forcing, MildPlan, NoiseDrive, Scheme,
    Trajectory, COVARIANCE_JITTER,
};
pub use residual::{integral_residual, modal_residuals, weak_residual};
pub use series::convolution_series;
pub use yosida::{yosida_forcing, yosida_simulate, ExtendedTrajectory};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::Result;
use crate::lift::{build_boundary_lift, BoundaryLift};
use crate::model::PhsModel;
use crate::noise::QWienerSpec;
use crate::spectral::{discretize_operator, eigensystem, ModalBasis, Stencil};

/// Modal input coefficients of the forcing and noise.
#[derive(Debug, Clone)]
pub struct ModalInputs {
    /// `a_kj = <A B e_j, psi_k>`.
    pub a: DMatrix<Complex64>,
    /// `b_kj = <B e_j, psi_k>`.
    pub b: DMatrix<Complex64>,
    /// `h_ki = <H f_i, psi_k>`.
    pub h: DMatrix<Complex64>,
    pub q: Vec<f64>,
}

pub fn modal_inputs(
    model: &PhsModel,
    basis: &ModalBasis,
    lift: &BoundaryLift,
    spec: &QWienerSpec,
) -> Result<ModalInputs> {
    let space = &basis.space;
    let k = basis.len();
    let m = lift.inputs();
    let gen = lift.generator_profiles(model, space);
    let unit = lift.unit_profiles(space);
    let mut a = DMatrix::zeros(k, m);
    let mut b = DMatrix::zeros(k, m);
    for j in 0..m {
        let ca = basis.coefficients(&gen[j]);
        let cb = basis.coefficients(&unit[j]);
        for r in 0..k {
            a[(r, j)] = ca[r];
            b[(r, j)] = cb[r];
        }
    }
    let q = spec.variances()?;
    let profiles = spec.profiles(model, space)?;
    let mut h = DMatrix::zeros(k, q.len());
    for (i, f) in profiles.iter().enumerate() {
        let c = basis.coefficients(f);
        for r in 0..k {
            h[(r, i)] = c[r];
        }
    }
    Ok(ModalInputs { a, b, h, q })
}

/// Coefficients of the deterministic forcing `g = A u + D w`.
#[derive(Debug, Clone)]
pub struct Forcing {
    pub a: DMatrix<Complex64>,
    pub d: DMatrix<Complex64>,
}

impl Forcing {
    /// Mild-solution forcing `A B u - B u'`.
    pub fn mild(inputs: &ModalInputs) -> Self {
        Forcing {
            a: inputs.a.clone(),
            d: -inputs.b.clone(),
        }
    }

    pub fn eval(&self, u: &[f64], w: &[f64], out: &mut [Complex64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..u.len() {
                acc += self.a[(k, j)] * u[j];
                acc += self.d[(k, j)] * w[j];
            }
            *o = acc;
        }
    }
}

/// Everything a simulation needs, computed once per model and noise.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub model: PhsModel,
    pub basis: ModalBasis,
    pub lift: BoundaryLift,
    pub spec: QWienerSpec,
    pub inputs: ModalInputs,
    pub maps: StateMaps,
}

impl SimContext {
    pub fn new(
        model: PhsModel,
        basis: ModalBasis,
        lift: BoundaryLift,
        spec: QWienerSpec,
    ) -> Result<Self> {
        let inputs = modal_inputs(&model, &basis, &lift, &spec)?;
        let maps = StateMaps::new(&model, &basis, &lift);
        Ok(SimContext {
            model,
            basis,
            lift,
            spec,
            inputs,
            maps,
        })
    }

    /// Box-scheme basis with `k` modes on `cells` cells and the minimum-norm lift.
    pub fn build(model: &PhsModel, cells: usize, k: usize, spec: QWienerSpec) -> Result<Self> {
        spec.check(model)?;
        let disc = discretize_operator(model, cells, Stencil::Box)?;
        let basis = eigensystem(&disc, k)?;
        let lift = build_boundary_lift(model)?;
        SimContext::new(model.clone(), basis, lift, spec)
    }

    /// Same model and basis with another noise model.
    pub fn with_noise(&self, spec: QWienerSpec) -> Result<Self> {
        SimContext::new(
            self.model.clone(),
            self.basis.clone(),
            self.lift.clone(),
            spec,
        )
    }

    pub fn modes(&self) -> usize {
        self.basis.len()
    }
}

/// `phi_1(z) = (e^z - 1)/z` and `phi_2(z) = (e^z - 1 - z)/z^2`.
pub(crate) fn phi12(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 1e-3 {
        // Taylor to 1e-18 relative at |z| = 1e-3
        let mut p1 = Complex64::new(0.0, 0.0);
        let mut p2 = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for n in 0..8 {
            // term = z^n
            p1 += term / (fact * (n + 1) as f64);
            p2 += term / (fact * ((n + 1) * (n + 2)) as f64);
            term *= z;
            fact *= (n + 1) as f64;
        }
        (p1, p2)
    } else {
        let e = z.exp();
        ((e - 1.0) / z, (e - 1.0 - z) / (z * z))
    }
}

/// `(e^{s t} - 1) / s`, with the limit `t` near `s = 0`.
pub(crate) fn expm1_over(s: Complex64, t: f64) -> Complex64 {
    let (p1, _) = phi12(s * t);
    p1 * t
}

#[cfg(test)]
mod tests;
