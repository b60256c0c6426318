//! Q-Wiener noise: covariance eigenpairs, intensity profiles and
//! reproducible Brownian increments.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EnergySpace, PhsModel};

/// Default bound on `q_I / sum q_i`.
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

/// Stream tags separating independent uses of one `(seed, path)` pair.
pub const TAG_BROWNIAN: u64 = 0;
pub const TAG_EXACT_GAUSSIAN: u64 = 1;
pub const TAG_MEMBERS: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "lowercase")]
pub enum Variances {
    Explicit(Vec<f64>),
    /// `q_i = q0 i^{-r}`, `i = 1..I`.
    Power {
        q0: f64,
        r: f64,
    },
}

/// Orthonormal family `v_i` on `[a, b]` in `L^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseBasis {
    /// `sqrt(2/L) sin(i pi (zeta - a) / L)`, `i = 1..`.
    Sine,
    /// `1/sqrt(L)`, then `sqrt(2/L) cos((i - 1) pi (zeta - a) / L)`.
    Cosine,
    /// Profiles sampled at uniform points on `[a, b]`, one row per mode.
    Grid(Vec<Vec<f64>>),
}

/// Spatial multiplier applied to every basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Window {
    #[default]
    One,
    /// The channel's own density entry `H_cc(zeta)`; `1/rho` on the string.
    InverseDensity,
    /// `exp(1 - 1/(1 - s^2))` for `|s| < 1`, `s = (zeta - center)/width`.
    Bump { center: f64, width: f64 },
}

impl Window {
    fn value(&self, model: &PhsModel, channel: usize, z: f64) -> f64 {
        match self {
            Window::One => 1.0,
            Window::InverseDensity => model.hamiltonian.at(z)[(channel, channel)],
            Window::Bump { center, width } => {
                let s = (z - center) / width;
                if s.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

fn default_tail_tol() -> f64 {
    DEFAULT_TAIL_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QWienerSpec {
    /// Truncation order.
    #[serde(rename = "I")]
    pub modes: usize,
    pub q: Variances,
    pub basis: NoiseBasis,
    /// State component receiving the noise.
    pub channel: usize,
    #[serde(default)]
    pub window: Window,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

impl QWienerSpec {
    /// No noise at all.
    pub fn zero(channel: usize) -> Self {
        QWienerSpec {
            modes: 1,
            q: Variances::Explicit(vec![0.0]),
            basis: NoiseBasis::Sine,
            channel,
            window: Window::One,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }

    pub fn variances(&self) -> Result<Vec<f64>> {
        let q = match &self.q {
            Variances::Explicit(v) => {
                if v.len() != self.modes {
                    return Err(Error::config(format!(
                        "{} variances given for I = {}",
                        v.len(),
                        self.modes
                    )));
                }
                v.clone()
            }
            Variances::Power { q0, r } => {
                (1..=self.modes).map(|i| q0 * (i as f64).powf(-r)).collect()
            }
        };
        if q.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::config("variances must be finite and non-negative"));
        }
        Ok(q)
    }

    pub fn trace(&self) -> Result<f64> {
        Ok(self.variances()?.iter().sum())
    }

    /// `q_I / sum q_i`; zero for the zero process.
    pub fn tail_ratio(&self) -> Result<f64> {
        let q = self.variances()?;
        let total: f64 = q.iter().sum();
        Ok(if total > 0.0 {
            q[q.len() - 1] / total
        } else {
            0.0
        })
    }

    pub fn tail_ok(&self) -> Result<bool> {
        Ok(self.tail_ratio()? <= self.tail_tol)
    }

    pub fn check(&self, model: &PhsModel) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::config("noise needs at least one mode"));
        }
        if self.channel >= model.n {
            return Err(Error::config(format!(
                "noise channel {} out of range for n = {}",
                self.channel, model.n
            )));
        }
        if let NoiseBasis::Grid(rows) = &self.basis {
            if rows.len() != self.modes || rows.iter().any(|r| r.len() < 2) {
                return Err(Error::config(
                    "grid basis needs I rows with at least two samples",
                ));
            }
        }
        if let Window::Bump { width, .. } = self.window {
            if !(width > 0.0) {
                return Err(Error::config("bump width must be positive"));
            }
        }
        self.variances().map(|_| ())
    }

    fn basis_value(&self, i: usize, z: f64, a: f64, b: f64) -> f64 {
        let len = b - a;
        let x = (z - a) / len;
        match &self.basis {
            NoiseBasis::Sine => {
                (2.0 / len).sqrt() * ((i + 1) as f64 * std::f64::consts::PI * x).sin()
            }
            NoiseBasis::Cosine => {
                if i == 0 {
                    1.0 / len.sqrt()
                } else {
                    (2.0 / len).sqrt() * (i as f64 * std::f64::consts::PI * x).cos()
                }
            }
            NoiseBasis::Grid(rows) => {
                let r = &rows[i];
                let pos = x.clamp(0.0, 1.0) * (r.len() - 1) as f64;
                let j = (pos.floor() as usize).min(r.len() - 2);
                let t = pos - j as f64;
                r[j] * (1.0 - t) + r[j + 1] * t
            }
        }
    }

    /// `H f_i` on the grid of `space`, one grid function per noise mode.
    pub fn profiles(&self, model: &PhsModel, space: &EnergySpace) -> Result<Vec<Vec<f64>>> {
        self.check(model)?;
        let n = model.n;
        let pts = space.grid.points();
        Ok((0..self.modes)
            .map(|i| {
                let mut f = vec![0.0; space.dim()];
                for (j, &z) in pts.iter().enumerate() {
                    f[j * n + self.channel] = self.window.value(model, self.channel, z)
                        * self.basis_value(i, z, model.a, model.b);
                }
                f
            })
            .collect())
    }
}

/// `Tr[H Q H^*] = sum_i q_i ||H f_i||_X^2`.
pub fn hs_norm_sq(spec: &QWienerSpec, model: &PhsModel, space: &EnergySpace) -> Result<f64> {
    let q = spec.variances()?;
    let profiles = spec.profiles(model, space)?;
    Ok(q.iter()
        .zip(&profiles)
        .map(|(qi, f)| qi * space.inner(f, f))
        .sum())
}

/// `sum_i q_i int (H f_i)^T W (H f_i)` for a node-wise weight `W`.
pub fn weighted_trace(
    spec: &QWienerSpec,
    model: &PhsModel,
    space: &EnergySpace,
    weight: &[DMatrix<f64>],
) -> Result<f64> {
    if weight.len() != space.grid.nodes() {
        return Err(Error::config("weight must be given at every grid node"));
    }
    let q = spec.variances()?;
    let profiles = spec.profiles(model, space)?;
    Ok(q.iter()
        .zip(&profiles)
        .map(|(qi, f)| qi * space.weighted_l2(f, f, weight))
        .sum())
}

/// Random stream for one `(seed, path, tag)` triple.
pub fn stream_rng(seed: u64, path_index: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(path_index);
    rng
}

/// Increments of `beta_i` on a time grid, stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub times: Vec<f64>,
    pub channels: usize,
    /// `dw[s * channels + i]` is the increment of `beta_i` over step `s`.
    pub dw: Vec<f64>,
}

pub fn check_time_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::config("time grid needs at least two points"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Uniform grid `0, dt, ..., steps*dt`.
pub fn uniform_times(dt: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|s| s as f64 * dt).collect()
}

pub fn sample_path(
    spec: &QWienerSpec,
    times: &[f64],
    seed: u64,
    path_index: u64,
) -> Result<BrownianPath> {
    check_time_grid(times)?;
    let q = spec.variances()?;
    let mut rng = stream_rng(seed, path_index, TAG_BROWNIAN);
    let steps = times.len() - 1;
    let mut dw = Vec::with_capacity(steps * q.len());
    for s in 0..steps {
        let dt = times[s + 1] - times[s];
        for qi in &q {
            let z: f64 = StandardNormal.sample(&mut rng);
            dw.push((qi * dt).sqrt() * z);
        }
    }
    Ok(BrownianPath {
        times: times.to_vec(),
        channels: q.len(),
        dw,
    })
}

impl BrownianPath {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn increment(&self, step: usize) -> &[f64] {
        &self.dw[step * self.channels..(step + 1) * self.channels]
    }

    /// `beta_i(t_s)` at every grid time.
    pub fn values(&self, channel: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.times.len());
        let mut acc = 0.0;
        out.push(0.0);
        for s in 0..self.steps() {
            acc += self.dw[s * self.channels + channel];
            out.push(acc);
        }
        out
    }

    /// Sums increments over blocks of `factor` steps.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::config(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps()
            )));
        }
        let coarse = self.steps() / factor;
        let mut dw = vec![0.0; coarse * self.channels];
        for s in 0..self.steps() {
            let c = s / factor;
            for i in 0..self.channels {
                dw[c * self.channels + i] += self.dw[s * self.channels + i];
            }
        }
        let times = (0..=coarse).map(|c| self.times[c * factor]).collect();
        Ok(BrownianPath {
            times,
            channels: self.channels,
            dw,
        })
    }

    /// Little-endian bytes of the increments, for reproducibility checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.dw.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}
