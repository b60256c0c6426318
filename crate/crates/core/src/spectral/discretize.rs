//! Finite-difference realization of the generator.
//!
//! The default stencil is the box scheme: on every cell `[z_j, z_{j+1}]`
//!
//! ```text
//! (eps_j + eps_{j+1})' / 2 = P1 (x_{j+1} - x_j) / h + P0 (x_j + x_{j+1}) / 2,   x = H eps
//! ```
//!
//! and the `n` homogeneous boundary rows `W_B [f; e] = 0` eliminate `n` end
//! values. The remaining `nN` node values are the discrete state `v`, with
//! `eps = E v` on the full grid and `A_N = (M E)^{-1} (K E)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{EnergySpace, PhsModel};

/// Smallest accepted number of cells.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    /// Cell-centred box scheme with boundary rows eliminated.
    Box,
    /// Periodic central differences, ignoring the boundary rows. Only
    /// meaningful for diagnostics on transport-type operators.
    CentralPeriodic,
}

/// Sparse row: `(column, coefficient)` pairs.
type SparseRow = Vec<(usize, f64)>;

/// The discrete generator together with the map from reduced to full
/// grid coordinates.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub stencil: Stencil,
    pub space: EnergySpace,
    /// `A_N` acting on reduced coordinates.
    pub a: DMatrix<f64>,
    /// Largest characteristic speed `max |eig(P1 H)|` over the grid.
    pub max_speed: f64,
    /// Row `r` of `E`: full-grid entry `r` as a combination of reduced
    /// coordinates.
    expand_rows: Vec<SparseRow>,
    reduced: usize,
}

impl Discretization {
    pub fn reduced_dim(&self) -> usize {
        self.reduced
    }

    pub fn full_dim(&self) -> usize {
        self.expand_rows.len()
    }

    /// `E v` for real coordinates.
    pub fn expand(&self, v: &[f64]) -> Vec<f64> {
        self.expand_rows
            .iter()
            .map(|row| row.iter().map(|&(c, w)| w * v[c]).sum())
            .collect()
    }

    /// `E v` for complex coordinates.
    pub fn expand_c(&self, v: &[num_complex::Complex64]) -> Vec<num_complex::Complex64> {
        self.expand_rows
            .iter()
            .map(|row| row.iter().map(|&(c, w)| v[c] * w).sum())
            .collect()
    }

    /// Gram matrix `E^T W E` of the reduced coordinates in the energy inner
    /// product, with `W` the trapezoid-weighted `H / 2`.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.space.n;
        let mut g = DMatrix::<f64>::zeros(self.reduced, self.reduced);
        for (j, (h, w)) in self
            .space
            .h_nodes
            .iter()
            .zip(&self.space.weights)
            .enumerate()
        {
            for r in 0..n {
                for c in 0..n {
                    let wrc = 0.5 * w * h[(r, c)];
                    if wrc == 0.0 {
                        continue;
                    }
                    for &(ci, ei) in &self.expand_rows[j * n + r] {
                        for &(cj, ej) in &self.expand_rows[j * n + c] {
                            g[(ci, cj)] += wrc * ei * ej;
                        }
                    }
                }
            }
        }
        g
    }
}

/// Builds `A_N` on a grid of `cells` cells.
pub fn discretize_operator(
    model: &PhsModel,
    cells: usize,
    stencil: Stencil,
) -> Result<Discretization> {
    if cells < MIN_CELLS {
        return Err(Error::config(format!(
            "need at least {MIN_CELLS} cells, got {cells}"
        )));
    }
    let space = EnergySpace::new(model, cells)?;
    let mut max_speed = 0.0f64;
    for h in &space.h_nodes {
        let e = linalg::eig_real(&(&model.p1 * h), false, false)?;
        max_speed = e.values.iter().fold(max_speed, |m, l| m.max(l.norm()));
    }
    match stencil {
        Stencil::Box => box_scheme(model, space, max_speed),
        Stencil::CentralPeriodic => central_periodic(model, space, max_speed),
    }
}

fn box_scheme(model: &PhsModel, space: EnergySpace, max_speed: f64) -> Result<Discretization> {
    let n = model.n;
    let cells = space.grid.cells;
    let full = n * (cells + 1);
    let h = space.grid.h();

    // boundary constraint on [eps_N; eps_0]
    let hn = &space.h_nodes[cells];
    let h0 = &space.h_nodes[0];
    let mut trace = DMatrix::<f64>::zeros(2 * n, 2 * n);
    trace.view_mut((0, 0), (n, n)).copy_from(hn);
    trace.view_mut((n, n), (n, n)).copy_from(h0);
    let cb = model.wb() * model.port_map() * trace;
    let end_index = |i: usize| if i < n { cells * n + i } else { i - n };

    let pivots = complete_pivot_columns(&cb);
    if pivots.len() < n {
        return Err(Error::validation(
            "boundary rows do not determine n end values",
        ));
    }
    let free_ends: Vec<usize> = (0..2 * n).filter(|i| !pivots.contains(i)).collect();
    let cp = DMatrix::from_fn(n, n, |r, c| cb[(r, pivots[c])]);
    let cf = DMatrix::from_fn(n, n, |r, c| cb[(r, free_ends[c])]);
    // eps_piv = -Cp^{-1} Cf eps_free
    let elim = -linalg::solve_real(&cp, &cf)?;

    let eliminated: Vec<usize> = pivots.iter().map(|&i| end_index(i)).collect();
    let mut reduced_of = vec![usize::MAX; full];
    let mut next = 0;
    for (r, slot) in reduced_of.iter_mut().enumerate() {
        if !eliminated.contains(&r) {
            *slot = next;
            next += 1;
        }
    }
    let reduced = next;
    let mut expand_rows: Vec<SparseRow> = (0..full).map(|r| vec![(reduced_of[r], 1.0)]).collect();
    for (k, &r) in eliminated.iter().enumerate() {
        expand_rows[r] = free_ends
            .iter()
            .enumerate()
            .map(|(c, &fe)| (reduced_of[end_index(fe)], elim[(k, c)]))
            .filter(|&(_, w)| w != 0.0)
            .collect();
    }

    let mut mass = DMatrix::<f64>::zeros(reduced, reduced);
    let mut stiff = DMatrix::<f64>::zeros(reduced, reduced);
    for j in 0..cells {
        let left = &space.h_nodes[j];
        let right = &space.h_nodes[j + 1];
        let kl = -(&model.p1 * left) / h + (&model.p0 * left) * 0.5;
        let kr = (&model.p1 * right) / h + (&model.p0 * right) * 0.5;
        for r in 0..n {
            let row = j * n + r;
            for &(c, w) in expand_rows[j * n + r]
                .iter()
                .chain(&expand_rows[(j + 1) * n + r])
            {
                mass[(row, c)] += 0.5 * w;
            }
            for col in 0..n {
                for &(c, w) in &expand_rows[j * n + col] {
                    stiff[(row, c)] += kl[(r, col)] * w;
                }
                for &(c, w) in &expand_rows[(j + 1) * n + col] {
                    stiff[(row, c)] += kr[(r, col)] * w;
                }
            }
        }
    }
    let a = linalg::solve_real(&mass, &stiff)?;
    Ok(Discretization {
        stencil: Stencil::Box,
        space,
        a,
        max_speed,
        expand_rows,
        reduced,
    })
}

fn central_periodic(
    model: &PhsModel,
    space: EnergySpace,
    max_speed: f64,
) -> Result<Discretization> {
    let n = model.n;
    let cells = space.grid.cells;
    let h = space.grid.h();
    // node N is identified with node 0
    let reduced = n * cells;
    let mut expand_rows: Vec<SparseRow> = (0..reduced).map(|r| vec![(r, 1.0)]).collect();
    expand_rows.extend((0..n).map(|r| vec![(r, 1.0)]));
    let mut a = DMatrix::<f64>::zeros(reduced, reduced);
    for j in 0..cells {
        let jp = (j + 1) % cells;
        let jm = (j + cells - 1) % cells;
        let dp = (&model.p1 * &space.h_nodes[jp]) / (2.0 * h);
        let dm = (&model.p1 * &space.h_nodes[jm]) / (2.0 * h);
        let p0 = &model.p0 * &space.h_nodes[j];
        for r in 0..n {
            for c in 0..n {
                a[(j * n + r, jp * n + c)] += dp[(r, c)];
                a[(j * n + r, jm * n + c)] -= dm[(r, c)];
                a[(j * n + r, j * n + c)] += p0[(r, c)];
            }
        }
    }
    Ok(Discretization {
        stencil: Stencil::CentralPeriodic,
        space,
        a,
        max_speed,
        expand_rows,
        reduced,
    })
}

/// Column indices picked by Gaussian elimination with complete pivoting.
fn complete_pivot_columns(m: &DMatrix<f64>) -> Vec<usize> {
    let mut w = m.clone();
    let (rows, cols) = w.shape();
    let mut used_rows = vec![false; rows];
    let mut used_cols = vec![false; cols];
    let mut picked = Vec::new();
    let scale = w.amax().max(f64::MIN_POSITIVE);
    for _ in 0..rows {
        let mut best = (0.0, 0, 0);
        for r in (0..rows).filter(|&r| !used_rows[r]) {
            for c in (0..cols).filter(|&c| !used_cols[c]) {
                if w[(r, c)].abs() > best.0 {
                    best = (w[(r, c)].abs(), r, c);
                }
            }
        }
        let (val, pr, pc) = best;
        if val <= 1e-12 * scale {
            break;
        }
        used_rows[pr] = true;
        used_cols[pc] = true;
        picked.push(pc);
        for r in (0..rows).filter(|&r| !used_rows[r]) {
            let f = w[(r, pc)] / w[(pr, pc)];
            for c in 0..cols {
                w[(r, c)] -= f * w[(pr, c)];
            }
        }
    }
    picked
}

/// Applies the continuous operator `P1 (H eps)' + P0 H eps` to a grid
/// function with second-order differences (one-sided at the ends).
pub fn apply_operator(model: &PhsModel, space: &EnergySpace, eps: &[f64]) -> Vec<f64> {
    let n = model.n;
    let h = space.grid.h();
    let last = space.grid.cells;
    let x: Vec<nalgebra::DVector<f64>> = (0..=last)
        .map(|j| &space.h_nodes[j] * space.node_value(eps, j))
        .collect();
    let mut out = Vec::with_capacity(eps.len());
    for j in 0..=last {
        let dx = if j == 0 {
            (&x[1] * 4.0 - &x[0] * 3.0 - &x[2]) / (2.0 * h)
        } else if j == last {
            (&x[last] * 3.0 - &x[last - 1] * 4.0 + &x[last - 2]) / (2.0 * h)
        } else {
            (&x[j + 1] - &x[j - 1]) / (2.0 * h)
        };
        let v = &model.p1 * dx + &model.p0 * &x[j];
        out.extend((0..n).map(|r| v[r]));
    }
    out
}
