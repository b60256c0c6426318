use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{expm1_over, phi12, Forcing, InputSignal, SimContext};
use crate::error::{Error, Result};
use crate::linalg::cholesky_with_jitter;
use crate::noise::{check_time_grid, sample_path, stream_rng, BrownianPath, TAG_EXACT_GAUSSIAN};

/// Largest jitter, relative to the covariance diagonal, tolerated when
/// factorizing the one-step noise covariance.
pub const COVARIANCE_JITTER: f64 = 1e-12;

/// Time grids are uniform to this relative tolerance.
const UNIFORM_TOL: f64 = 1e-9;

/// Sampling of the stochastic convolution over one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact Gaussian law of `int e^{lambda_k (Delta - s)} h_k dbeta` with
    /// cross-mode correlation.
    #[default]
    ExactGaussian,
    /// `e^{lambda_k Delta} h_k Delta beta`, driven by a stored Brownian path.
    Increment,
}

/// Modal coefficients recorded on a subset of the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path_index: u64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
    /// `u` at the recorded times.
    pub inputs: Vec<Vec<f64>>,
    /// `u'` came from finite differences of samples.
    pub numeric_derivative: bool,
}

impl Trajectory {
    pub fn last(&self) -> &[Complex64] {
        self.states
            .last()
            .expect("trajectory records the initial state")
    }
}

/// Where the stochastic term comes from.
#[derive(Debug, Clone, Copy)]
pub enum NoiseDrive<'p> {
    /// Given increments; only valid for the increment scheme.
    Path(&'p BrownianPath),
    /// Fresh draws from the `(seed, path_index)` stream.
    Seeded { seed: u64, path_index: u64 },
    /// No stochastic term.
    Quiet,
}

/// Everything path-independent about a run: step factors, deterministic
/// drift contributions and the noise factorization.
#[derive(Debug, Clone)]
pub struct MildPlan<'c> {
    ctx: &'c SimContext,
    times: Vec<f64>,
    scheme: Scheme,
    growth: Vec<Complex64>,
    /// `drift[s][k]`: forcing contribution of step `s` to mode `k`.
    drift: Vec<Vec<Complex64>>,
    inputs: Vec<Vec<f64>>,
    numeric_derivative: bool,
    /// Real modes and the first member of each conjugate pair.
    upper: Vec<usize>,
    /// `growth_k h_ki` for the increment scheme.
    step_h: DMatrix<Complex64>,
    /// Real coordinates `(mode, imaginary part)` and their Cholesky factor.
    coords: Vec<(usize, bool)>,
    chol: Option<DMatrix<f64>>,
}

impl<'c> MildPlan<'c> {
    pub fn new(
        ctx: &'c SimContext,
        forcing: &Forcing,
        input: &InputSignal,
        times: &[f64],
        scheme: Scheme,
    ) -> Result<Self> {
        check_time_grid(times)?;
        let dt = times[1] - times[0];
        if times
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > UNIFORM_TOL * dt)
        {
            return Err(Error::config("modal propagation needs a uniform time grid"));
        }
        let m = ctx.lift.inputs();
        input.check(m)?;
        let k = ctx.modes();
        let lambdas = &ctx.basis.lambdas;
        let growth: Vec<Complex64> = lambdas.iter().map(|l| (l * dt).exp()).collect();
        let factors: Vec<(Complex64, Complex64)> = lambdas
            .iter()
            .map(|l| {
                let (p1, p2) = phi12(l * dt);
                (p1 * dt, p2 * dt)
            })
            .collect();

        let inputs: Vec<Vec<f64>> = times.iter().map(|&t| input.value(t, m)).collect();
        let forced = !matches!(input, InputSignal::Zero);
        let mut drift = Vec::new();
        if forced {
            let mut g: Vec<Vec<Complex64>> = Vec::with_capacity(times.len());
            for (t, u) in times.iter().zip(&inputs) {
                let w = input.derivative(*t, m);
                let mut gk = vec![Complex64::new(0.0, 0.0); k];
                forcing.eval(u, &w, &mut gk);
                g.push(gk);
            }
            drift = g
                .windows(2)
                .map(|w| {
                    (0..k)
                        .map(|j| factors[j].0 * w[0][j] + factors[j].1 * (w[1][j] - w[0][j]))
                        .collect()
                })
                .collect();
        }

        let upper: Vec<usize> = (0..k).filter(|&j| ctx.basis.partner[j] >= j).collect();
        let h = &ctx.inputs.h;
        let step_h = DMatrix::from_fn(k, h.ncols(), |r, i| growth[r] * h[(r, i)]);
        let (coords, chol) = if scheme == Scheme::ExactGaussian {
            exact_factor(ctx, &upper, dt)?
        } else {
            (Vec::new(), None)
        };
        Ok(MildPlan {
            ctx,
            times: times.to_vec(),
            scheme,
            growth,
            drift,
            inputs,
            numeric_derivative: input.derivative_is_numeric(),
            upper,
            step_h,
            coords,
            chol,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Propagates `x0`, recording every `stride` steps and the final time.
    pub fn run(
        &self,
        x0: &[Complex64],
        drive: NoiseDrive<'_>,
        stride: usize,
    ) -> Result<Trajectory> {
        let k = self.ctx.modes();
        if x0.len() != k {
            return Err(Error::config(format!(
                "initial state has {} coefficients, basis has {k}",
                x0.len()
            )));
        }
        if stride == 0 {
            return Err(Error::config("record stride must be positive"));
        }
        let steps = self.times.len() - 1;
        let owned;
        let (path, mut rng, path_index) = match (self.scheme, drive) {
            (Scheme::Increment, NoiseDrive::Path(p)) => {
                if p.times.len() != self.times.len() || p.channels != self.ctx.inputs.h.ncols() {
                    return Err(Error::config(
                        "Brownian path does not match the time grid or channels",
                    ));
                }
                (Some(p), None, 0)
            }
            (Scheme::Increment, NoiseDrive::Seeded { seed, path_index }) => {
                owned = sample_path(&self.ctx.spec, &self.times, seed, path_index)?;
                (Some(&owned), None, path_index)
            }
            (Scheme::ExactGaussian, NoiseDrive::Seeded { seed, path_index }) => (
                None,
                Some(stream_rng(seed, path_index, TAG_EXACT_GAUSSIAN)),
                path_index,
            ),
            (_, NoiseDrive::Quiet) => (None, None, 0),
            (Scheme::ExactGaussian, NoiseDrive::Path(_)) => {
                return Err(Error::config(
                    "the exact-gaussian scheme draws its own increments",
                ));
            }
        };

        let mut x = x0.to_vec();
        let mut traj = Trajectory {
            path_index,
            times: vec![self.times[0]],
            states: vec![x.clone()],
            inputs: vec![self.inputs[0].clone()],
            numeric_derivative: self.numeric_derivative,
        };
        let mut noise = vec![Complex64::new(0.0, 0.0); k];
        let mut xi = vec![0.0; self.coords.len()];
        for s in 0..steps {
            for (xj, e) in x.iter_mut().zip(&self.growth) {
                *xj *= e;
            }
            if let Some(d) = self.drift.get(s) {
                for (xj, dj) in x.iter_mut().zip(d) {
                    *xj += dj;
                }
            }
            let noisy = if let Some(p) = path {
                self.increment_noise(p.increment(s), &mut noise);
                true
            } else if let (Some(r), Some(l)) = (rng.as_mut(), self.chol.as_ref()) {
                for z in xi.iter_mut() {
                    *z = StandardNormal.sample(r);
                }
                self.exact_noise(l, &xi, &mut noise);
                true
            } else {
                false
            };
            if noisy {
                for (xj, nj) in x.iter_mut().zip(&noise) {
                    *xj += nj;
                }
            }
            if (s + 1) % stride == 0 || s + 1 == steps {
                traj.times.push(self.times[s + 1]);
                traj.states.push(x.clone());
                traj.inputs.push(self.inputs[s + 1].clone());
            }
        }
        Ok(traj)
    }

    fn increment_noise(&self, dw: &[f64], out: &mut [Complex64]) {
        for &j in &self.upper {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, d) in dw.iter().enumerate() {
                acc += self.step_h[(j, i)] * d;
            }
            out[j] = acc;
            let p = self.ctx.basis.partner[j];
            if p != j {
                out[p] = acc.conj();
            }
        }
    }

    fn exact_noise(&self, l: &DMatrix<f64>, xi: &[f64], out: &mut [Complex64]) {
        for o in out.iter_mut() {
            *o = Complex64::new(0.0, 0.0);
        }
        for (r, &(mode, imag)) in self.coords.iter().enumerate() {
            let mut v = 0.0;
            for (c, z) in xi.iter().enumerate().take(r + 1) {
                v += l[(r, c)] * z;
            }
            if imag {
                out[mode].im = v;
            } else {
                out[mode].re = v;
            }
        }
        for &j in &self.upper {
            let p = self.ctx.basis.partner[j];
            if p != j {
                out[p] = out[j].conj();
            }
        }
    }
}

/// Real coordinates `(mode, imaginary part)` and the Cholesky factor.
type ExactFactor = (Vec<(usize, bool)>, Option<DMatrix<f64>>);

/// Real-coordinate covariance of the one-step convolution and its factor.
/// `None` when the noise vanishes.
fn exact_factor(ctx: &SimContext, upper: &[usize], dt: f64) -> Result<ExactFactor> {
    let basis = &ctx.basis;
    let h = &ctx.inputs.h;
    let q = &ctx.inputs.q;
    let mut coords = Vec::new();
    for &j in upper {
        coords.push((j, false));
        if basis.partner[j] != j {
            coords.push((j, true));
        }
    }
    let n = coords.len();
    // E[z_k conj(z_l)] and E[z_k z_l] for the convolution over one step
    let pair = |k: usize, l: usize, conj_l: bool| -> Complex64 {
        let ll = if conj_l {
            basis.lambdas[l].conj()
        } else {
            basis.lambdas[l]
        };
        let mut g = Complex64::new(0.0, 0.0);
        for (i, qi) in q.iter().enumerate() {
            let hl = if conj_l { h[(l, i)].conj() } else { h[(l, i)] };
            g += h[(k, i)] * hl * *qi;
        }
        g * expm1_over(basis.lambdas[k] + ll, dt)
    };
    let mut cov = DMatrix::zeros(n, n);
    for (r, &(k, ik)) in coords.iter().enumerate() {
        for (c, &(l, il)) in coords.iter().enumerate().take(r + 1) {
            let cc = pair(k, l, true);
            let pp = pair(k, l, false);
            let v = match (ik, il) {
                (false, false) => 0.5 * (cc + pp).re,
                (true, true) => 0.5 * (cc - pp).re,
                (false, true) => 0.5 * (pp.im - cc.im),
                (true, false) => 0.5 * (pp.im + cc.im),
            };
            cov[(r, c)] = v;
            cov[(c, r)] = v;
        }
    }
    if cov.iter().all(|v| *v == 0.0) {
        return Ok((coords, None));
    }
    let l = cholesky_with_jitter(&cov, COVARIANCE_JITTER)?;
    Ok((coords, Some(l)))
}

/// Runs a single path with the given forcing.
#[allow(clippy::too_many_arguments)]
pub fn simulate_with_forcing(
    ctx: &SimContext,
    forcing: &Forcing,
    input: &InputSignal,
    x0: &[Complex64],
    times: &[f64],
    scheme: Scheme,
    drive: NoiseDrive<'_>,
    stride: usize,
) -> Result<Trajectory> {
    MildPlan::new(ctx, forcing, input, times, scheme)?.run(x0, drive, stride)
}

/// Mild solution `X(t) = T(t)X0 + int T(t-s)(A B u - B u') ds + W_A(t)` in
/// modal coordinates.
#[allow(clippy::too_many_arguments)]
pub fn simulate_mild(
    ctx: &SimContext,
    input: &InputSignal,
    x0: &[Complex64],
    times: &[f64],
    scheme: Scheme,
    seed: u64,
    path_index: u64,
    stride: usize,
) -> Result<Trajectory> {
    let forcing = Forcing::mild(&ctx.inputs);
    simulate_with_forcing(
        ctx,
        &forcing,
        input,
        x0,
        times,
        scheme,
        NoiseDrive::Seeded { seed, path_index },
        stride,
    )
}

/// `eps(t) = sum_k x_k phi_k + B u(t)` on the grid at every recorded time.
pub fn reconstruct_epsilon(ctx: &SimContext, traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.states
        .iter()
        .zip(&traj.inputs)
        .map(|(x, u)| {
            let mut eps = ctx.basis.reconstruct(x);
            for (e, b) in eps.iter_mut().zip(ctx.lift.sample(&ctx.basis.space, u)) {
                *e += b;
            }
            eps
        })
        .collect()
}
