//! Affine boundary lift `B`: maps an input `u` to a state profile whose
//! input ports equal `u` and whose homogeneous ports vanish.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{EnergySpace, PhsModel};

/// Residual allowed on the lift port identities, relative to the
/// constraint scale.
const LIFT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLift {
    pub a: f64,
    pub b: f64,
    /// Profile values at `a`, one column per input channel.
    pub at_a: DMatrix<f64>,
    /// Profile values at `b`, one column per input channel.
    pub at_b: DMatrix<f64>,
}

/// Finds the minimum-norm affine lift of every input channel.
pub fn build_boundary_lift(model: &PhsModel) -> Result<BoundaryLift> {
    model.check_dimensions()?;
    let n = model.n;
    let m = model.inputs();
    // ports of an affine profile as a linear map of [eps(a); eps(b)]
    let ha = model.hamiltonian.at(model.a);
    let hb = model.hamiltonian.at(model.b);
    let mut trace = DMatrix::<f64>::zeros(2 * n, 2 * n);
    trace.view_mut((0, n), (n, n)).copy_from(&hb);
    trace.view_mut((n, 0), (n, n)).copy_from(&ha);
    let ports = model.port_map() * trace;
    let c = model.wb() * ports;
    let scale = linalg::norm2(&c).max(1.0);

    let mut at_a = DMatrix::<f64>::zeros(n, m);
    let mut at_b = DMatrix::<f64>::zeros(n, m);
    for j in 0..m {
        let mut d = DVector::<f64>::zeros(n);
        d[j] = 1.0;
        let (x, resid) = linalg::min_norm_solve(&c, &d);
        if resid > LIFT_TOL * scale * 10.0 {
            return Err(Error::validation(format!(
                "no affine lift for input channel {j}: port residual {resid:.3e}"
            )));
        }
        at_a.column_mut(j).copy_from(&x.rows(0, n));
        at_b.column_mut(j).copy_from(&x.rows(n, n));
    }
    Ok(BoundaryLift {
        a: model.a,
        b: model.b,
        at_a,
        at_b,
    })
}

impl BoundaryLift {
    pub fn inputs(&self) -> usize {
        self.at_a.ncols()
    }

    pub fn n(&self) -> usize {
        self.at_a.nrows()
    }

    /// `n x m` matrix of profile values at `zeta`.
    pub fn profile(&self, zeta: f64) -> DMatrix<f64> {
        let t = (zeta - self.a) / (self.b - self.a);
        &self.at_a * (1.0 - t) + &self.at_b * t
    }

    /// Slope of the profile, constant along the interval.
    pub fn slope(&self) -> DMatrix<f64> {
        (&self.at_b - &self.at_a) / (self.b - self.a)
    }

    /// `(B u)(zeta)`.
    pub fn apply(&self, zeta: f64, u: &[f64]) -> DVector<f64> {
        self.profile(zeta) * DVector::from_column_slice(u)
    }

    /// `B u` on the grid of `space`.
    pub fn sample(&self, space: &EnergySpace, u: &[f64]) -> Vec<f64> {
        space.sample(|z| self.apply(z, u))
    }

    /// `B e_j` on the grid, one grid function per input channel.
    pub fn unit_profiles(&self, space: &EnergySpace) -> Vec<Vec<f64>> {
        (0..self.inputs())
            .map(|j| {
                let mut e = vec![0.0; self.inputs()];
                e[j] = 1.0;
                self.sample(space, &e)
            })
            .collect()
    }

    /// `A B e_j = P1 (H B e_j)' + P0 H B e_j` on the grid. The derivative of
    /// `H(zeta) g(zeta)` is taken analytically for constant densities and by
    /// second-order differences of the sampled product otherwise.
    pub fn generator_profiles(&self, model: &PhsModel, space: &EnergySpace) -> Vec<Vec<f64>> {
        let n = model.n;
        let pts = space.grid.points();
        let h = space.grid.h();
        let last = pts.len() - 1;
        let constant = matches!(model.hamiltonian, crate::model::Hamiltonian::Constant(_));
        (0..self.inputs())
            .map(|j| {
                let x: Vec<DVector<f64>> = pts
                    .iter()
                    .zip(&space.h_nodes)
                    .map(|(&z, hm)| hm * self.profile(z).column(j))
                    .collect();
                let slope = self.slope().column(j).into_owned();
                let mut out = Vec::with_capacity(space.dim());
                for (i, hm) in space.h_nodes.iter().enumerate() {
                    let dx = if constant {
                        hm * &slope
                    } else if i == 0 {
                        (&x[1] * 4.0 - &x[0] * 3.0 - &x[2]) / (2.0 * h)
                    } else if i == last {
                        (&x[last] * 3.0 - &x[last - 1] * 4.0 + &x[last - 2]) / (2.0 * h)
                    } else {
                        (&x[i + 1] - &x[i - 1]) / (2.0 * h)
                    };
                    let v = &model.p1 * dx + &model.p0 * &x[i];
                    out.extend((0..n).map(|r| v[r]));
                }
                out
            })
            .collect()
    }

    /// `W_B [f; e]` of `B e_j`, as an `n x m` matrix. The first `m` rows
    /// form the identity and the rest vanish for a valid lift.
    pub fn port_matrix(&self, model: &PhsModel) -> Result<DMatrix<f64>> {
        let m = self.inputs();
        let wb = model.wb();
        let mut out = DMatrix::<f64>::zeros(model.n, m);
        for j in 0..m {
            let ea = self.at_a.column(j).into_owned();
            let eb = self.at_b.column(j).into_owned();
            let p = crate::model::boundary_ports_from_state(&ea, &eb, model)?;
            out.column_mut(j).copy_from(&(&wb * p.stacked()));
        }
        Ok(out)
    }

    /// Largest deviation of the port matrix from `[I; 0]`.
    pub fn port_defect(&self, model: &PhsModel) -> Result<f64> {
        let p = self.port_matrix(model)?;
        let m = self.inputs();
        let mut defect = 0.0f64;
        for i in 0..p.nrows() {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((p[(i, j)] - target).abs());
            }
        }
        Ok(defect)
    }
}
