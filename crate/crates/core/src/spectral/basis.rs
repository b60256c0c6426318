//! Biorthogonal modal basis from the discrete generator.

use std::cmp::Ordering;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::EnergySpace;

use super::discretize::Discretization;

/// Distance below which two eigenvalues count as colliding.
pub const GAP_TOL: f64 = 1e-8;
/// Largest `||phi_k|| ||psi_k||` accepted for a Riesz-type basis.
pub const CONDITION_TOL: f64 = 1e6;

/// Health of a computed basis.
#[derive(Debug, Clone, Serialize)]
pub struct NiceReport {
    pub gap: f64,
    pub gap_ok: bool,
    /// `max_k ||phi_k||_X ||psi_k||_X`.
    pub max_condition: f64,
    pub condition_ok: bool,
    /// `max |<phi_k, psi_l> - delta_kl|`, re-measured by quadrature.
    pub gram_defect: f64,
    pub max_real_part: f64,
    pub nice: bool,
}

#[derive(Debug, Clone)]
pub struct ModalBasis {
    pub lambdas: Vec<Complex64>,
    /// Eigenfunctions on the full grid, `||phi_k||_X = 1`.
    pub phis: Vec<Vec<Complex64>>,
    /// Adjoint family with `<phi_k, psi_l>_X = delta_kl`.
    pub psis: Vec<Vec<Complex64>>,
    /// Index of the complex-conjugate partner; equal to `k` for real modes.
    pub partner: Vec<usize>,
    pub space: EnergySpace,
    pub report: NiceReport,
}

/// Mode order: `|Im|` ascending, upper half-plane first, then least damped.
pub fn mode_order(x: &Complex64, y: &Complex64) -> Ordering {
    x.im.abs()
        .total_cmp(&y.im.abs())
        .then(y.im.total_cmp(&x.im))
        .then(y.re.total_cmp(&x.re))
}

/// Indices of the first `k` resolved eigenvalues in mode order, without
/// split conjugate pairs.
fn resolved_indices(disc: &Discretization, values: &[Complex64], k: usize) -> Vec<usize> {
    // modes beyond one wavelength per cell are grid artefacts
    let cutoff = disc.max_speed * disc.space.grid.cells as f64 / disc.space.grid.len();
    let mut order: Vec<usize> = (0..values.len())
        .filter(|&i| values[i].norm() <= cutoff)
        .collect();
    order.sort_by(|&i, &j| mode_order(&values[i], &values[j]).then(i.cmp(&j)));
    order.truncate(k);
    let kept = order.clone();
    order.retain(|&i| values[i].im == 0.0 || kept.iter().any(|&j| values[j] == values[i].conj()));
    order
}

/// Eigenvalues only, selected as in [`eigensystem`] but without the
/// pair-completion step, so exactly `k` values are returned when available.
pub fn resolved_eigenvalues(disc: &Discretization, k: usize) -> Result<Vec<Complex64>> {
    let eig = linalg::eig_real(&disc.a, false, false)?;
    let cutoff = disc.max_speed * disc.space.grid.cells as f64 / disc.space.grid.len();
    let mut v: Vec<Complex64> = eig
        .values
        .into_iter()
        .filter(|l| l.norm() <= cutoff)
        .collect();
    v.sort_by(mode_order);
    v.truncate(k);
    Ok(v)
}

/// Minimal eigenvalue distance of the first `k` modes on several grids.
#[derive(Debug, Clone, Serialize)]
pub struct GapStability {
    pub cells: Vec<usize>,
    pub gaps: Vec<f64>,
    /// `(max - min) / max` over the grids.
    pub spread: f64,
    pub stable: bool,
}

/// Relative spread allowed for a stable gap.
pub const GAP_SPREAD_TOL: f64 = 0.05;

pub fn gap_stability(
    model: &crate::model::PhsModel,
    cells: &[usize],
    k: usize,
) -> Result<GapStability> {
    let mut gaps = Vec::with_capacity(cells.len());
    for &c in cells {
        let disc = super::discretize_operator(model, c, super::Stencil::Box)?;
        let v = resolved_eigenvalues(&disc, k)?;
        let mut gap = f64::INFINITY;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                gap = gap.min((v[i] - v[j]).norm());
            }
        }
        gaps.push(gap);
    }
    let max = gaps.iter().cloned().fold(0.0, f64::max);
    let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if max > 0.0 && max.is_finite() {
        (max - min) / max
    } else {
        f64::INFINITY
    };
    Ok(GapStability {
        cells: cells.to_vec(),
        gaps,
        spread,
        stable: spread <= GAP_SPREAD_TOL && min >= GAP_TOL,
    })
}

/// Computes up to `k` resolved modes. A conjugate pair split by the
/// truncation is dropped whole, so the result can hold `k - 1` modes.
pub fn eigensystem(disc: &Discretization, k: usize) -> Result<ModalBasis> {
    let cells = disc.space.grid.cells;
    if k == 0 || k > cells / 4 {
        return Err(Error::config(format!(
            "mode count K = {k} must lie in 1..={}",
            cells / 4
        )));
    }
    let eig = linalg::eig_real(&disc.a, true, true)?;
    let left = eig.left.expect("requested");
    let right = eig.right.expect("requested");
    let order = resolved_indices(disc, &eig.values, k);
    if order.is_empty() {
        return Err(Error::numerical(
            "no resolved eigenvalues below the grid cutoff",
        ));
    }

    let space = &disc.space;
    let gram = disc.gram();
    let mut lambdas = Vec::with_capacity(order.len());
    let mut phis: Vec<Vec<Complex64>> = Vec::with_capacity(order.len());
    let mut partner = Vec::with_capacity(order.len());
    let mut left_cols = nalgebra::DMatrix::<Complex64>::zeros(disc.reduced_dim(), order.len());
    for (slot, &i) in order.iter().enumerate() {
        let lambda = eig.values[i];
        let is_lower_member = lambda.im < 0.0;
        lambdas.push(if lambda.im == 0.0 {
            Complex64::new(lambda.re, 0.0)
        } else {
            lambda
        });
        left_cols.set_column(slot, &left.column(i));
        if is_lower_member {
            let up = (0..slot)
                .find(|&u| lambdas[u] == lambda.conj() && partner[u] == u)
                .ok_or_else(|| Error::numerical("unpaired complex eigenvalue"))?;
            partner.push(up);
            partner[up] = slot;
            let conj: Vec<Complex64> = phis[up].iter().map(|z| z.conj()).collect();
            phis.push(conj);
            continue;
        }
        partner.push(slot);
        let v: Vec<Complex64> = right.column(i).iter().cloned().collect();
        let mut phi = disc.expand_c(&v);
        let norm = space.inner_c(&phi, &phi).re.sqrt();
        let pivot = phi
            .iter()
            .cloned()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or_default();
        let scale = pivot.conj() / (pivot.norm() * norm);
        if lambda.im == 0.0 {
            // real mode: real eigenvector up to sign
            for z in phi.iter_mut() {
                *z = Complex64::new((*z * scale).re, 0.0);
            }
        } else {
            for z in phi.iter_mut() {
                *z *= scale;
            }
        }
        phis.push(phi);
    }

    // psi_k = E G^{-1} u_k, scaled to <phi_k, psi_k> = 1
    let y = linalg::solve_real_complex(&gram, &left_cols)?;
    let mut psis: Vec<Vec<Complex64>> = Vec::with_capacity(order.len());
    for slot in 0..order.len() {
        if partner[slot] < slot {
            let conj = psis[partner[slot]].iter().map(|z| z.conj()).collect();
            psis.push(conj);
            continue;
        }
        let col: Vec<Complex64> = y.column(slot).iter().cloned().collect();
        let mut psi = disc.expand_c(&col);
        let c = space.inner_c(&phis[slot], &psi);
        if c.norm() == 0.0 {
            return Err(Error::numerical(format!(
                "mode {slot}: left and right eigenvectors are orthogonal"
            )));
        }
        let s = Complex64::new(1.0, 0.0) / c.conj();
        for z in psi.iter_mut() {
            *z *= s;
        }
        if lambdas[slot].im == 0.0 {
            for z in psi.iter_mut() {
                *z = Complex64::new(z.re, 0.0);
            }
        }
        psis.push(psi);
    }

    let report = nice_report(space, &lambdas, &phis, &psis);
    Ok(ModalBasis {
        lambdas,
        phis,
        psis,
        partner,
        space: space.clone(),
        report,
    })
}

fn nice_report(
    space: &EnergySpace,
    lambdas: &[Complex64],
    phis: &[Vec<Complex64>],
    psis: &[Vec<Complex64>],
) -> NiceReport {
    let k = lambdas.len();
    let mut gap = f64::INFINITY;
    for i in 0..k {
        for j in i + 1..k {
            gap = gap.min((lambdas[i] - lambdas[j]).norm());
        }
    }
    let mut gram_defect = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            gram_defect = gram_defect.max((space.inner_c(&phis[i], &psis[j]) - target).norm());
        }
    }
    let max_condition = (0..k)
        .map(|i| {
            space.inner_c(&phis[i], &phis[i]).re.sqrt()
                * space.inner_c(&psis[i], &psis[i]).re.sqrt()
        })
        .fold(0.0, f64::max);
    let max_real_part = lambdas
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap_ok = gap >= GAP_TOL;
    let condition_ok = max_condition <= CONDITION_TOL;
    NiceReport {
        gap,
        gap_ok,
        max_condition,
        condition_ok,
        gram_defect,
        max_real_part,
        nice: gap_ok && condition_ok,
    }
}

impl ModalBasis {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `<x, psi_k>_X` for a real grid function.
    pub fn coefficients(&self, x: &[f64]) -> Vec<Complex64> {
        let xc: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.psis
            .iter()
            .map(|psi| self.space.inner_c(&xc, psi))
            .collect()
    }

    /// `Re sum_k c_k phi_k`; real whenever `c` respects the conjugate pairing.
    pub fn reconstruct(&self, c: &[Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.space.dim()];
        for (ck, phi) in c.iter().zip(&self.phis) {
            for (o, p) in out.iter_mut().zip(phi) {
                *o += (ck * p).re;
            }
        }
        out
    }

    /// Energy `||sum_k c_k phi_k||^2_X` computed from the modal Gram matrix.
    pub fn energy_gram(&self) -> nalgebra::DMatrix<Complex64> {
        let k = self.len();
        nalgebra::DMatrix::from_fn(k, k, |i, j| {
            self.space.inner_c(&self.phis[j], &self.phis[i])
        })
    }

    /// Enforces `c_{partner(k)} = conj(c_k)`, using the upper member.
    pub fn symmetrize(&self, c: &mut [Complex64]) {
        for k in 0..self.len() {
            let p = self.partner[k];
            if p == k {
                c[k] = Complex64::new(c[k].re, 0.0);
            } else if p > k {
                c[p] = c[k].conj();
            }
        }
    }
}

/// `T(t) x = sum_k e^{lambda_k t} <x, psi_k> phi_k`.
pub fn semigroup_apply(basis: &ModalBasis, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    if t < 0.0 {
        return Err(Error::config("semigroup time must be non-negative"));
    }
    let c: Vec<Complex64> = basis
        .coefficients(x)
        .iter()
        .zip(&basis.lambdas)
        .map(|(c, l)| c * (l * t).exp())
        .collect();
    Ok(basis.reconstruct(&c))
}
