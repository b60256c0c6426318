use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::lift::BoundaryLift;
use crate::model::{boundary_ports_from_state, BoundaryPorts, PhsModel};
use crate::spectral::ModalBasis;

/// Linear and quadratic maps from `(x, u)` to quantities of
/// `eps = sum_k x_k phi_k + B u` without touching the grid.
#[derive(Debug, Clone)]
pub struct StateMaps {
    /// `gram[(l, k)] = <phi_k, phi_l>_X`.
    pub gram: DMatrix<Complex64>,
    /// `cross[(k, j)] = <phi_k, B e_j>_X`.
    pub cross: DMatrix<Complex64>,
    /// `lift_gram[(i, j)] = <B e_j, B e_i>_X`.
    pub lift_gram: DMatrix<f64>,
    /// `phi_k(a)` and `phi_k(b)` as `n x K` matrices.
    pub trace_a: DMatrix<Complex64>,
    pub trace_b: DMatrix<Complex64>,
    pub lift_a: DMatrix<f64>,
    pub lift_b: DMatrix<f64>,
}

impl StateMaps {
    pub fn new(model: &PhsModel, basis: &ModalBasis, lift: &BoundaryLift) -> Self {
        let space = &basis.space;
        let k = basis.len();
        let n = model.n;
        let m = lift.inputs();
        let gram = basis.energy_gram();
        let unit = lift.unit_profiles(space);
        let unit_c: Vec<Vec<Complex64>> = unit
            .iter()
            .map(|f| f.iter().map(|&v| Complex64::new(v, 0.0)).collect())
            .collect();
        let cross = DMatrix::from_fn(k, m, |r, j| space.inner_c(&basis.phis[r], &unit_c[j]));
        let lift_gram = DMatrix::from_fn(m, m, |i, j| space.inner(&unit[j], &unit[i]));
        let last = space.grid.cells;
        let trace_a = DMatrix::from_fn(n, k, |r, c| basis.phis[c][r]);
        let trace_b = DMatrix::from_fn(n, k, |r, c| basis.phis[c][last * n + r]);
        StateMaps {
            gram,
            cross,
            lift_gram,
            trace_a,
            trace_b,
            lift_a: lift.at_a.clone(),
            lift_b: lift.at_b.clone(),
        }
    }

    /// `||sum_k x_k phi_k||_X^2`.
    pub fn modal_energy(&self, x: &[Complex64]) -> f64 {
        let k = x.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for l in 0..k {
            let xl = x[l].conj();
            let mut row = Complex64::new(0.0, 0.0);
            for (kk, xk) in x.iter().enumerate() {
                row += self.gram[(l, kk)] * xk;
            }
            acc += xl * row;
        }
        acc.re
    }

    /// `||eps||_X^2` for `eps = sum x_k phi_k + B u`.
    pub fn energy(&self, x: &[Complex64], u: &[f64]) -> f64 {
        let mut e = self.modal_energy(x);
        for (j, uj) in u.iter().enumerate() {
            if *uj == 0.0 {
                continue;
            }
            let mut c = Complex64::new(0.0, 0.0);
            for (kk, xk) in x.iter().enumerate() {
                c += xk * self.cross[(kk, j)];
            }
            e += 2.0 * c.re * uj;
            for (i, ui) in u.iter().enumerate() {
                e += ui * self.lift_gram[(i, j)] * uj;
            }
        }
        e
    }

    fn traces(&self, x: &[Complex64], u: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let n = self.trace_a.nrows();
        let mut ea = DVector::zeros(n);
        let mut eb = DVector::zeros(n);
        for r in 0..n {
            let mut sa = Complex64::new(0.0, 0.0);
            let mut sb = Complex64::new(0.0, 0.0);
            for (kk, xk) in x.iter().enumerate() {
                sa += self.trace_a[(r, kk)] * xk;
                sb += self.trace_b[(r, kk)] * xk;
            }
            ea[r] = sa.re;
            eb[r] = sb.re;
            for (j, uj) in u.iter().enumerate() {
                ea[r] += self.lift_a[(r, j)] * uj;
                eb[r] += self.lift_b[(r, j)] * uj;
            }
        }
        (ea, eb)
    }

    pub fn ports(&self, model: &PhsModel, x: &[Complex64], u: &[f64]) -> BoundaryPorts {
        let (ea, eb) = self.traces(x, u);
        boundary_ports_from_state(&ea, &eb, model).expect("trace dimensions match the model")
    }

    /// Output `y = W_C [f; e]`.
    pub fn output(&self, model: &PhsModel, x: &[Complex64], u: &[f64]) -> DVector<f64> {
        &model.wc * self.ports(model, x, u).stacked()
    }

    /// Input ports `W_B1 [f; e]`, equal to `u` for compatible states.
    pub fn input_ports(&self, model: &PhsModel, x: &[Complex64], u: &[f64]) -> DVector<f64> {
        &model.wb1 * self.ports(model, x, u).stacked()
    }

    /// Boundary power `f^T e`.
    pub fn power(&self, model: &PhsModel, x: &[Complex64], u: &[f64]) -> f64 {
        self.ports(model, x, u).power()
    }
}
