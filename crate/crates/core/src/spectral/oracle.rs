//! Characteristic-equation roots for the constant-coefficient string.
//!
//! With `v = p / rho`, `sigma = T s`, `gamma = sqrt(T / rho)` and
//! `Z = sqrt(T rho)`, the eigenfunctions are combinations of the travelling
//! waves `(v, sigma) = (1, +-Z) e^{+-mu zeta}`, `mu = lambda / gamma`. The
//! boundary rows turn this into a 2x2 system whose determinant is
//! `C+ e^{mu L} + C0 + C- e^{-mu L}`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::PhsModel;

use super::basis::mode_order;

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 60;
/// Roots closer than this are merged.
const DEDUP_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OracleRoots {
    pub roots: Vec<Complex64>,
    /// `|det M(lambda)| / ||M(lambda)||_F` at each root.
    pub residuals: Vec<f64>,
}

/// Boundary matrix `M(lambda)` for the string boundary rows of `model`.
fn boundary_matrix(model: &PhsModel, gamma: f64, z: f64, lambda: Complex64) -> [[Complex64; 2]; 2] {
    let cx = model.wb() * model.port_map();
    let mu = lambda / gamma;
    let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (col, sign) in [1.0, -1.0].iter().enumerate() {
        let eb = (mu * sign * model.b).exp();
        let ea = (mu * sign * model.a).exp();
        // x(b) and x(a) of the travelling wave
        let xb = [eb, eb * (z * sign)];
        let xa = [ea, ea * (z * sign)];
        for (row, m_row) in m.iter_mut().enumerate() {
            m_row[col] = cx[(row, 0)] * xb[0]
                + cx[(row, 1)] * xb[1]
                + cx[(row, 2)] * xa[0]
                + cx[(row, 3)] * xa[1];
        }
    }
    m
}

fn det2(m: &[[Complex64; 2]; 2]) -> Complex64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn frob(m: &[[Complex64; 2]; 2]) -> f64 {
    m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Coefficients `(C+, C0, C-)` of the reduced determinant in `X = e^{mu L}`.
fn det_coefficients(model: &PhsModel, z: f64) -> (Complex64, Complex64, Complex64) {
    let cx = model.wb() * model.port_map();
    let col = |r: usize, c: usize, v: [f64; 2]| cx[(r, c)] * v[0] + cx[(r, c + 1)] * v[1];
    let wp = [1.0, z];
    let wm = [1.0, -z];
    // p X + q is the e^{+mu} column, r / X + s the e^{-mu} column
    let p = [col(0, 0, wp), col(1, 0, wp)];
    let q = [col(0, 2, wp), col(1, 2, wp)];
    let r = [col(0, 0, wm), col(1, 0, wm)];
    let s = [col(0, 2, wm), col(1, 2, wm)];
    let d = |x: [f64; 2], y: [f64; 2]| Complex64::new(x[0] * y[1] - x[1] * y[0], 0.0);
    (d(p, s), d(p, r) + d(q, s), d(q, r))
}

/// First `k` roots in mode order. Returns an empty set when the boundary
/// rows admit no eigenvalues (impedance-matched end).
pub fn string_spectrum_oracle(
    model: &PhsModel,
    rho: f64,
    t_modulus: f64,
    k: usize,
) -> Result<OracleRoots> {
    if model.n != 2 || !(rho > 0.0) || !(t_modulus > 0.0) {
        return Err(Error::config(
            "oracle needs a two-channel string with positive rho and T",
        ));
    }
    let gamma = (t_modulus / rho).sqrt();
    let z = (t_modulus * rho).sqrt();
    let len = model.length();
    let (cp, c0, cm) = det_coefficients(model, z);
    let scale = cp.norm().max(c0.norm()).max(cm.norm());
    let tiny = 1e-14 * scale.max(f64::MIN_POSITIVE);

    // seeds from the roots X of C+ X^2 + C0 X + C- = 0
    let mut xs = Vec::new();
    if cp.norm() > tiny {
        let disc = (c0 * c0 - cp * cm * 4.0).sqrt();
        xs.push((-c0 + disc) / (cp * 2.0));
        xs.push((-c0 - disc) / (cp * 2.0));
    } else if c0.norm() > tiny {
        xs.push(-cm / c0);
    }
    xs.retain(|x| x.norm() > 1e-300 && x.norm().is_finite());

    let f = |mu: Complex64| cp * (mu * len).exp() + c0 + cm * (-mu * len).exp();
    let df = |mu: Complex64| (cp * (mu * len).exp() - cm * (-mu * len).exp()) * len;

    let span = k as i64 / 2 + 2;
    let mut roots: Vec<Complex64> = Vec::new();
    let mut residuals = Vec::new();
    for x in &xs {
        for m in -span..=span {
            let mut mu =
                (x.ln() + Complex64::new(0.0, 2.0 * std::f64::consts::PI * m as f64)) / len;
            let mut converged = false;
            for _ in 0..NEWTON_MAX_ITER {
                let fv = f(mu);
                let d = df(mu);
                if d.norm() == 0.0 {
                    break;
                }
                let step = fv / d;
                let mut damp = 1.0;
                while damp > 1e-4 && f(mu - step * damp).norm() > fv.norm() {
                    damp *= 0.5;
                }
                mu -= step * damp;
                if (step * damp).norm() <= NEWTON_TOL * mu.norm().max(1.0) {
                    converged = true;
                    break;
                }
            }
            let lambda = mu * gamma;
            let mat = boundary_matrix(model, gamma, z, lambda);
            let resid = det2(&mat).norm() / frob(&mat).max(f64::MIN_POSITIVE);
            if !converged || resid > 1e-10 {
                log::warn!("oracle root near {lambda} did not converge (residual {resid:.2e})");
                continue;
            }
            if roots
                .iter()
                .any(|r: &Complex64| (r - lambda).norm() < DEDUP_TOL)
            {
                continue;
            }
            let lambda = if lambda.im.abs() < 1e-12 * lambda.norm().max(1.0) {
                Complex64::new(lambda.re, 0.0)
            } else {
                lambda
            };
            roots.push(lambda);
            residuals.push(resid);
        }
    }
    let mut idx: Vec<usize> = (0..roots.len()).collect();
    idx.sort_by(|&i, &j| mode_order(&roots[i], &roots[j]));
    idx.truncate(k);
    Ok(OracleRoots {
        roots: idx.iter().map(|&i| roots[i]).collect(),
        residuals: idx.iter().map(|&i| residuals[i]).collect(),
    })
}
