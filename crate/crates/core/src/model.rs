//! Port-Hamiltonian model definition, validation and boundary quantities.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;

/// Relative tolerance for the symmetry checks on `P1`, `P0` and `H`.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Relative slack on the smallest eigenvalue of `W_B Sigma W_B^T`.
pub const PSD_TOL: f64 = 1e-10;

/// Matrix-valued energy density `zeta -> H(zeta)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Hamiltonian {
    Constant(DMatrix<f64>),
    /// Samples at increasing `zeta`, interpolated piecewise-linearly and
    /// held constant outside the sampled range.
    Grid {
        zeta: Vec<f64>,
        values: Vec<DMatrix<f64>>,
    },
}

impl Hamiltonian {
    pub fn at(&self, zeta: f64) -> DMatrix<f64> {
        match self {
            Hamiltonian::Constant(h) => h.clone(),
            Hamiltonian::Grid { zeta: zs, values } => {
                if zeta <= zs[0] {
                    return values[0].clone();
                }
                let last = zs.len() - 1;
                if zeta >= zs[last] {
                    return values[last].clone();
                }
                let i = zs.partition_point(|&z| z <= zeta) - 1;
                let t = (zeta - zs[i]) / (zs[i + 1] - zs[i]);
                &values[i] * (1.0 - t) + &values[i + 1] * t
            }
        }
    }

    /// The points at which the density must be checked for `mI <= H <= MI`.
    /// Piecewise-linear interpolation of symmetric matrices keeps the bounds
    /// between samples (smallest eigenvalue is concave, largest convex).
    fn sample_points(&self, a: f64, b: f64) -> Vec<f64> {
        match self {
            Hamiltonian::Constant(_) => vec![a],
            Hamiltonian::Grid { zeta, .. } => {
                let mut pts: Vec<f64> = zeta.iter().cloned().filter(|z| *z > a && *z < b).collect();
                pts.push(a);
                pts.push(b);
                pts
            }
        }
    }

    fn dim_ok(&self, n: usize) -> bool {
        match self {
            Hamiltonian::Constant(h) => h.shape() == (n, n),
            Hamiltonian::Grid { zeta, values } => {
                !zeta.is_empty()
                    && zeta.len() == values.len()
                    && zeta.windows(2).all(|w| w[1] > w[0])
                    && values.iter().all(|v| v.shape() == (n, n))
            }
        }
    }

    /// `c * H`, used for scaling experiments.
    pub fn scaled(&self, c: f64) -> Hamiltonian {
        match self {
            Hamiltonian::Constant(h) => Hamiltonian::Constant(h * c),
            Hamiltonian::Grid { zeta, values } => Hamiltonian::Grid {
                zeta: zeta.clone(),
                values: values.iter().map(|v| v * c).collect(),
            },
        }
    }
}

/// Linear first-order port-Hamiltonian system on `[a, b]` with boundary
/// input rows `WB1`, homogeneous rows `WB2` and output rows `WC`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhsModel {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub p1: DMatrix<f64>,
    pub p0: DMatrix<f64>,
    pub hamiltonian: Hamiltonian,
    pub wb1: DMatrix<f64>,
    pub wb2: DMatrix<f64>,
    pub wc: DMatrix<f64>,
}

impl PhsModel {
    /// Builds a model after checking that all dimensions agree.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        a: f64,
        b: f64,
        p1: DMatrix<f64>,
        p0: DMatrix<f64>,
        hamiltonian: Hamiltonian,
        wb1: DMatrix<f64>,
        wb2: DMatrix<f64>,
        wc: DMatrix<f64>,
    ) -> Result<Self> {
        let model = PhsModel {
            n,
            a,
            b,
            p1,
            p0,
            hamiltonian,
            wb1,
            wb2,
            wc,
        };
        model.check_dimensions()?;
        Ok(model)
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::config("state dimension n must be positive"));
        }
        if !(self.b > self.a) {
            return Err(Error::config(format!(
                "invalid interval [{}, {}]",
                self.a, self.b
            )));
        }
        if self.p1.shape() != (n, n) || self.p0.shape() != (n, n) {
            return Err(Error::config("P0 and P1 must be n x n"));
        }
        if !self.hamiltonian.dim_ok(n) {
            return Err(Error::config(
                "hamiltonian density must be n x n on an increasing grid",
            ));
        }
        if self.wb1.ncols() != 2 * n || self.wb2.ncols() != 2 * n || self.wc.ncols() != 2 * n {
            return Err(Error::config("WB1, WB2 and WC must have 2n columns"));
        }
        if self.wb1.nrows() + self.wb2.nrows() != n {
            return Err(Error::config(format!(
                "WB1 and WB2 must stack to n = {n} rows, got {} + {}",
                self.wb1.nrows(),
                self.wb2.nrows()
            )));
        }
        Ok(())
    }

    /// Number of inputs.
    pub fn inputs(&self) -> usize {
        self.wb1.nrows()
    }

    /// Number of outputs.
    pub fn outputs(&self) -> usize {
        self.wc.nrows()
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn wb(&self) -> DMatrix<f64> {
        stack_rows(&self.wb1, &self.wb2)
    }

    /// Map from `[(H eps)(b); (H eps)(a)]` to `[f; e]`.
    pub fn port_map(&self) -> DMatrix<f64> {
        let n = self.n;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut r = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] = s * self.p1[(i, j)];
                r[(i, n + j)] = -s * self.p1[(i, j)];
            }
            r[(n + i, i)] = s;
            r[(n + i, n + i)] = s;
        }
        r
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
            Error::config(format!(
                "cannot read model {}: {e}",
                path.as_ref().display()
            ))
        })?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| Error::config(format!("model json: {e}")))?;
        file.into_model()
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile::from_model(self)
    }
}

pub(crate) fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = top.ncols().max(bottom.ncols());
    let mut out = DMatrix::<f64>::zeros(top.nrows() + bottom.nrows(), cols);
    out.view_mut((0, 0), top.shape()).copy_from(top);
    out.view_mut((top.nrows(), 0), bottom.shape())
        .copy_from(bottom);
    out
}

/// JSON layout of a model file. Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "P0")]
    pub p0: Vec<Vec<f64>>,
    #[serde(rename = "P1")]
    pub p1: Vec<Vec<f64>>,
    pub hamiltonian: HamiltonianFile,
    #[serde(rename = "WB1")]
    pub wb1: Vec<Vec<f64>>,
    #[serde(rename = "WB2")]
    pub wb2: Vec<Vec<f64>>,
    #[serde(rename = "WC")]
    pub wc: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "lowercase")]
pub enum HamiltonianFile {
    Constant(Vec<Vec<f64>>),
    Grid {
        zeta: Vec<f64>,
        values: Vec<Vec<Vec<f64>>>,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::config(format!(
            "{what}: every row needs {ncols} entries"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

impl ModelFile {
    pub fn into_model(self) -> Result<PhsModel> {
        let n = self.n;
        let hamiltonian = match self.hamiltonian {
            HamiltonianFile::Constant(rows) => {
                Hamiltonian::Constant(matrix_from_rows(&rows, n, "hamiltonian")?)
            }
            HamiltonianFile::Grid { zeta, values } => Hamiltonian::Grid {
                zeta,
                values: values
                    .iter()
                    .map(|v| matrix_from_rows(v, n, "hamiltonian sample"))
                    .collect::<Result<_>>()?,
            },
        };
        PhsModel::new(
            n,
            self.a,
            self.b,
            matrix_from_rows(&self.p1, n, "P1")?,
            matrix_from_rows(&self.p0, n, "P0")?,
            hamiltonian,
            matrix_from_rows(&self.wb1, 2 * n, "WB1")?,
            matrix_from_rows(&self.wb2, 2 * n, "WB2")?,
            matrix_from_rows(&self.wc, 2 * n, "WC")?,
        )
    }

    pub fn from_model(m: &PhsModel) -> Self {
        ModelFile {
            n: m.n,
            a: m.a,
            b: m.b,
            p0: rows_of(&m.p0),
            p1: rows_of(&m.p1),
            hamiltonian: match &m.hamiltonian {
                Hamiltonian::Constant(h) => HamiltonianFile::Constant(rows_of(h)),
                Hamiltonian::Grid { zeta, values } => HamiltonianFile::Grid {
                    zeta: zeta.clone(),
                    values: values.iter().map(rows_of).collect(),
                },
            },
            wb1: rows_of(&m.wb1),
            wb2: rows_of(&m.wb2),
            wc: rows_of(&m.wc),
        }
    }
}

/// One line of a validation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

impl CheckItem {
    fn new(name: &str, passed: bool, value: f64, detail: impl Into<String>) -> Self {
        CheckItem {
            name: name.to_string(),
            passed,
            value,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub items: Vec<CheckItem>,
    /// Lower energy bound `m` of the density.
    pub m_lower: f64,
    /// Upper energy bound `M` of the density.
    pub m_upper: f64,
    pub all_passed: bool,
}

impl ValidationReport {
    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

/// Checks the structural assumptions of the model. Dimension problems are
/// configuration errors; everything else is reported item by item.
pub fn validate_model(model: &PhsModel) -> Result<ValidationReport> {
    model.check_dimensions()?;
    let n = model.n;
    let mut items = Vec::new();

    let p1_norm = linalg::norm2(&model.p1);
    let p1_asym = linalg::norm2(&(&model.p1 - model.p1.transpose()));
    items.push(CheckItem::new(
        "p1_self_adjoint",
        p1_asym <= STRUCTURE_TOL * p1_norm.max(f64::MIN_POSITIVE),
        p1_asym,
        "||P1 - P1^T||",
    ));
    let p1_rank = linalg::rank(&model.p1);
    items.push(CheckItem::new(
        "p1_invertible",
        p1_rank == n,
        p1_rank as f64,
        format!("rank(P1), need {n}"),
    ));

    let p0_norm = linalg::norm2(&model.p0);
    let p0_sym = linalg::norm2(&(&model.p0 + model.p0.transpose()));
    items.push(CheckItem::new(
        "p0_skew_adjoint",
        p0_sym <= STRUCTURE_TOL * p0_norm,
        p0_sym,
        "||P0 + P0^T||",
    ));

    let mut m_lower = f64::INFINITY;
    let mut m_upper = 0.0f64;
    let mut h_asym = 0.0f64;
    for z in model.hamiltonian.sample_points(model.a, model.b) {
        let h = model.hamiltonian.at(z);
        h_asym = h_asym
            .max(linalg::norm2(&(&h - h.transpose())) / linalg::norm2(&h).max(f64::MIN_POSITIVE));
        let ev = linalg::sym_eigenvalues(&h);
        m_lower = m_lower.min(ev[0]);
        m_upper = m_upper.max(ev[n - 1]);
    }
    items.push(CheckItem::new(
        "hamiltonian_self_adjoint",
        h_asym <= STRUCTURE_TOL,
        h_asym,
        "max relative asymmetry",
    ));
    items.push(CheckItem::new(
        "hamiltonian_lower_bound",
        m_lower > 0.0,
        m_lower,
        "m in mI <= H",
    ));
    items.push(CheckItem::new(
        "hamiltonian_upper_bound",
        m_upper.is_finite() && m_upper >= m_lower,
        m_upper,
        "M in H <= MI",
    ));

    let wb_rank = linalg::rank(&model.wb());
    items.push(CheckItem::new(
        "wb_full_rank",
        wb_rank == n,
        wb_rank as f64,
        format!("rank(W_B), need {n}"),
    ));
    let p = model.outputs();
    let wc_rank = linalg::rank(&model.wc);
    items.push(CheckItem::new(
        "wc_full_rank",
        wc_rank == p,
        wc_rank as f64,
        format!("rank(W_C), need {p}"),
    ));
    let mp = model.inputs() + p;
    let io_rank = linalg::rank(&stack_rows(&model.wb1, &model.wc));
    items.push(CheckItem::new(
        "wb1_wc_rank",
        io_rank == mp,
        io_rank as f64,
        format!("rank([WB1; WC]), need {mp}"),
    ));

    let all_passed = items.iter().all(|i| i.passed);
    Ok(ValidationReport {
        items,
        m_lower,
        m_upper,
        all_passed,
    })
}

/// Boundary flow and effort.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPorts {
    pub flow: DVector<f64>,
    pub effort: DVector<f64>,
}

impl BoundaryPorts {
    /// Boundary power `f^T e`.
    pub fn power(&self) -> f64 {
        self.flow.dot(&self.effort)
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.flow.len();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.flow[i]
            } else {
                self.effort[i - n]
            }
        })
    }
}

/// Ports from co-energy traces `(H eps)(a)` and `(H eps)(b)`.
pub fn boundary_ports(
    x_a: &DVector<f64>,
    x_b: &DVector<f64>,
    model: &PhsModel,
) -> Result<BoundaryPorts> {
    if x_a.len() != model.n || x_b.len() != model.n {
        return Err(Error::config("boundary traces must have n entries"));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Ok(BoundaryPorts {
        flow: (&model.p1 * (x_b - x_a)) * s,
        effort: (x_b + x_a) * s,
    })
}

/// Ports from raw state traces `eps(a)`, `eps(b)`; applies `H` first.
pub fn boundary_ports_from_state(
    eps_a: &DVector<f64>,
    eps_b: &DVector<f64>,
    model: &PhsModel,
) -> Result<BoundaryPorts> {
    if eps_a.len() != model.n || eps_b.len() != model.n {
        return Err(Error::config("boundary traces must have n entries"));
    }
    let x_a = model.hamiltonian.at(model.a) * eps_a;
    let x_b = model.hamiltonian.at(model.b) * eps_b;
    boundary_ports(&x_a, &x_b, model)
}

/// The model sampled on a quadrature grid: `H` at each node plus the
/// trapezoid weights. Grid functions are stored node-major, `n` entries
/// per node.
#[derive(Debug, Clone)]
pub struct EnergySpace {
    pub grid: Grid,
    pub n: usize,
    pub h_nodes: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
}

impl EnergySpace {
    pub fn new(model: &PhsModel, cells: usize) -> Result<Self> {
        let grid = Grid::new(model.a, model.b, cells)?;
        let h_nodes = grid
            .points()
            .iter()
            .map(|&z| model.hamiltonian.at(z))
            .collect();
        Ok(EnergySpace {
            grid,
            n: model.n,
            h_nodes,
            weights: grid.weights(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n * self.grid.nodes()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::config(format!(
                "grid function has {len} entries, expected {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// `<x, y>_X = 1/2 int y^* H x`, conjugate-linear in `y`.
    pub fn inner_c(
        &self,
        x: &[num_complex::Complex64],
        y: &[num_complex::Complex64],
    ) -> num_complex::Complex64 {
        let n = self.n;
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        for (j, (h, w)) in self.h_nodes.iter().zip(&self.weights).enumerate() {
            let mut node = num_complex::Complex64::new(0.0, 0.0);
            for r in 0..n {
                let yr = y[j * n + r].conj();
                for c in 0..n {
                    node += yr * h[(r, c)] * x[j * n + c];
                }
            }
            acc += node * *w;
        }
        acc * 0.5
    }

    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for (j, (h, w)) in self.h_nodes.iter().zip(&self.weights).enumerate() {
            let mut node = 0.0;
            for r in 0..n {
                for c in 0..n {
                    node += y[j * n + r] * h[(r, c)] * x[j * n + c];
                }
            }
            acc += w * node;
        }
        0.5 * acc
    }

    /// `int y^T W x` for an arbitrary node-wise weight.
    pub fn weighted_l2(&self, x: &[f64], y: &[f64], weight: &[DMatrix<f64>]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for (j, (wm, w)) in weight.iter().zip(&self.weights).enumerate() {
            let mut node = 0.0;
            for r in 0..n {
                for c in 0..n {
                    node += y[j * n + r] * wm[(r, c)] * x[j * n + c];
                }
            }
            acc += w * node;
        }
        acc
    }

    /// Plain `L^2` norm squared.
    pub fn l2_sq(&self, x: &[f64]) -> f64 {
        let n = self.n;
        self.weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * (0..n).map(|c| x[j * n + c] * x[j * n + c]).sum::<f64>())
            .sum()
    }

    /// Value of the grid function at node `j`.
    pub fn node_value(&self, x: &[f64], j: usize) -> DVector<f64> {
        DVector::from_column_slice(&x[j * self.n..(j + 1) * self.n])
    }

    /// Ports of a grid function from its end-node values.
    pub fn ports(&self, x: &[f64], model: &PhsModel) -> Result<BoundaryPorts> {
        self.check(x.len())?;
        let last = self.grid.cells;
        let xa = &self.h_nodes[0] * self.node_value(x, 0);
        let xb = &self.h_nodes[last] * self.node_value(x, last);
        boundary_ports(&xa, &xb, model)
    }

    /// Samples `f(zeta) -> n-vector` on the grid.
    pub fn sample(&self, f: impl Fn(f64) -> DVector<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for z in self.grid.points() {
            out.extend(f(z).iter());
        }
        out
    }
}

/// Hamiltonian `E(eps) = 1/2 int eps^T H eps` by the trapezoid rule.
pub fn energy(state: &[f64], space: &EnergySpace) -> Result<f64> {
    space.check(state.len())?;
    Ok(space.inner(state, state))
}

/// Generation test `W_B Sigma W_B^T >= 0`.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationReport {
    pub product: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub psd: bool,
}

pub fn generation_check(model: &PhsModel) -> GenerationReport {
    let n = model.n;
    let wb = model.wb();
    let mut sigma = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        sigma[(i, n + i)] = 1.0;
        sigma[(n + i, i)] = 1.0;
    }
    let prod = &wb * sigma * wb.transpose();
    let eigenvalues = linalg::sym_eigenvalues(&prod);
    let scale = linalg::norm2(&prod);
    let psd = eigenvalues.first().is_none_or(|&l| l >= -PSD_TOL * scale);
    GenerationReport {
        product: rows_of(&prod),
        eigenvalues,
        psd,
    }
}
