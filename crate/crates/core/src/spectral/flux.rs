//! Diagonalization `P1 H(zeta) = S^{-1} Delta S` along the interval.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::PhsModel;

/// Relative eigenvalue separation below which characteristics collide.
const COLLISION_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct FluxFactorization {
    pub zeta: Vec<f64>,
    pub s: Vec<DMatrix<f64>>,
    /// Diagonal entries of `Delta`, in decreasing order.
    pub delta: Vec<Vec<f64>>,
    /// `max_zeta ||S^{-1} Delta S - P1 H||_max`.
    pub residual: f64,
}

/// Factorizes on `cells + 1` uniform points, keeping eigenvector signs
/// continuous from one point to the next.
pub fn factorize_flux(model: &PhsModel, cells: usize) -> Result<FluxFactorization> {
    let n = model.n;
    let grid = crate::grid::Grid::new(model.a, model.b, cells)?;
    let mut out = FluxFactorization {
        zeta: grid.points(),
        s: Vec::new(),
        delta: Vec::new(),
        residual: 0.0,
    };
    let mut prev: Option<DMatrix<f64>> = None;
    for &z in &out.zeta {
        let f = &model.p1 * model.hamiltonian.at(z);
        let e = linalg::eig_real(&f, false, true)?;
        let scale = e
            .values
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        if e.values.iter().any(|l| l.im.abs() > COLLISION_TOL * scale) {
            return Err(Error::validation(format!(
                "P1 H has complex eigenvalues at zeta = {z}"
            )));
        }
        let right = e.right.expect("requested");
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| e.values[j].re.total_cmp(&e.values[i].re));
        let d: Vec<f64> = order.iter().map(|&i| e.values[i].re).collect();
        if d.windows(2).any(|w| w[0] - w[1] <= COLLISION_TOL * scale) {
            return Err(Error::validation(format!(
                "characteristic speeds collide at zeta = {z}"
            )));
        }
        let mut v = DMatrix::from_fn(n, n, |r, c| right[(r, order[c])].re);
        for c in 0..n {
            let norm = v.column(c).norm();
            let mut col = v.column(c) / norm;
            let flip = match &prev {
                Some(p) => col.dot(&p.column(c)) < 0.0,
                None => {
                    col.iter()
                        .cloned()
                        .fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m })
                        < 0.0
                }
            };
            if flip {
                col = -col;
            }
            v.set_column(c, &col);
        }
        let s = v
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::numerical("singular eigenvector matrix"))?;
        let recon = &v * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone())) * &s;
        out.residual = out.residual.max((recon - &f).amax());
        out.s.push(s);
        out.delta.push(d);
        prev = Some(v);
    }
    Ok(out)
}
