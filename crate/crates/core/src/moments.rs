//! First and second moments of the modal state, exact and Monte Carlo.
//!
//! Exact moments follow from the diagonal semigroup: the mean obeys the
//! deterministic mild formula and the covariance
//! `P(t) = e^{Lt} Q0 e^{L^* t} + int_0^t e^{Ls} G e^{L^* s} ds`, `G = h Q h^*`,
//! which is entrywise explicit.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::min_eig_hermitian;
use crate::model::{EnergySpace, PhsModel, PSD_TOL};
use crate::noise::{weighted_trace, QWienerSpec};
use crate::solver::{
    expm1_over, Forcing, InputSignal, MildPlan, NoiseDrive, PathEnsemble, Scheme, SimContext,
};

/// `G_kl = sum_i q_i h_ki conj(h_li)`.
pub fn noise_gram(ctx: &SimContext) -> DMatrix<Complex64> {
    let h = &ctx.inputs.h;
    let k = h.nrows();
    DMatrix::from_fn(k, k, |r, c| {
        ctx.inputs
            .q
            .iter()
            .enumerate()
            .map(|(i, q)| h[(r, i)] * h[(c, i)].conj() * *q)
            .sum()
    })
}

/// `m_k(t) = e^{lambda_k t} m_k(0) + int_0^t e^{lambda_k (t-s)} g_k(s) ds` on `times`.
///
/// The forcing is interpolated linearly between grid times and integrated
/// against the exponential exactly, which is the trapezoid rule made exact
/// for the linear part.
pub fn mean_trajectory(
    ctx: &SimContext,
    input: &InputSignal,
    m0: &[Complex64],
    times: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    let plan = MildPlan::new(
        ctx,
        &Forcing::mild(&ctx.inputs),
        input,
        times,
        Scheme::Increment,
    )?;
    Ok(plan.run(m0, NoiseDrive::Quiet, 1)?.states)
}

/// Checks that `q0` is Hermitian and positive semidefinite.
pub fn check_covariance(q0: &DMatrix<Complex64>) -> Result<()> {
    if !q0.is_square() {
        return Err(Error::config("initial covariance must be square"));
    }
    let scale = q0.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if (q0 - q0.adjoint())
        .iter()
        .any(|v| v.norm() > 1e-12 * scale.max(1.0))
    {
        return Err(Error::validation("initial covariance is not Hermitian"));
    }
    if !is_psd(q0) {
        return Err(Error::validation(
            "initial covariance is not positive semidefinite",
        ));
    }
    Ok(())
}

/// `min eig(P) >= -PSD_TOL * Tr P`.
pub fn is_psd(p: &DMatrix<Complex64>) -> bool {
    let trace: f64 = p.diagonal().iter().map(|v| v.re).sum();
    p.nrows() == 0 || min_eig_hermitian(p) >= -PSD_TOL * trace.abs().max(f64::MIN_POSITIVE)
}

/// Modal covariance of `X(t)` from `Cov X(0) = q0`.
pub fn covariance_exact(
    ctx: &SimContext,
    q0: &DMatrix<Complex64>,
    t: f64,
) -> Result<DMatrix<Complex64>> {
    let k = ctx.modes();
    if q0.nrows() != k {
        return Err(Error::config(format!(
            "initial covariance is {}x{}, basis has {k} modes",
            q0.nrows(),
            q0.ncols()
        )));
    }
    if t < 0.0 {
        return Err(Error::config("covariance time must be non-negative"));
    }
    check_covariance(q0)?;
    let g = noise_gram(ctx);
    let l = &ctx.basis.lambdas;
    Ok(DMatrix::from_fn(k, k, |r, c| {
        let s = l[r] + l[c].conj();
        (s * t).exp() * q0[(r, c)] + g[(r, c)] * expm1_over(s, t)
    }))
}

/// Largest entrywise mismatch between a central difference of
/// `covariance_exact` at `t` and `L P + P L^* + G`.
pub fn lyapunov_residual(
    ctx: &SimContext,
    q0: &DMatrix<Complex64>,
    t: f64,
    dt: f64,
) -> Result<f64> {
    if dt <= 0.0 || t < dt {
        return Err(Error::config("Lyapunov check needs 0 < dt <= t"));
    }
    let p = covariance_exact(ctx, q0, t)?;
    let dp = (covariance_exact(ctx, q0, t + dt)? - covariance_exact(ctx, q0, t - dt)?)
        / Complex64::new(2.0 * dt, 0.0);
    let g = noise_gram(ctx);
    let l = &ctx.basis.lambdas;
    let mut worst: f64 = 0.0;
    for r in 0..p.nrows() {
        for c in 0..p.ncols() {
            let rhs = l[r] * p[(r, c)] + p[(r, c)] * l[c].conj() + g[(r, c)];
            worst = worst.max((dp[(r, c)] - rhs).norm());
        }
    }
    Ok(worst)
}

/// Sample moments of an ensemble at every recorded time.
#[derive(Debug, Clone)]
pub struct McMoments {
    pub paths: usize,
    pub times: Vec<f64>,
    pub mean: Vec<Vec<Complex64>>,
    /// Standard errors of `Re m_k` and `Im m_k`.
    pub mean_se: Vec<Vec<(f64, f64)>>,
    /// Unbiased sample covariance `E[(x - m)(x - m)^*]`.
    pub cov: Vec<DMatrix<Complex64>>,
    /// `Tr P` and the standard error of its estimator.
    pub trace: Vec<f64>,
    pub trace_se: Vec<f64>,
}

/// Unbiased sample mean and covariance per time; reductions run in path
/// order.
pub fn mc_moments(ensemble: &PathEnsemble) -> Result<McMoments> {
    let n = ensemble.len();
    if n < 2 {
        return Err(Error::config("moment estimates need at least two paths"));
    }
    let times = ensemble.times().to_vec();
    let k = ensemble.paths[0].states[0].len();
    let nf = n as f64;
    let mut out = McMoments {
        paths: n,
        times: times.clone(),
        mean: Vec::new(),
        mean_se: Vec::new(),
        cov: Vec::new(),
        trace: Vec::new(),
        trace_se: Vec::new(),
    };
    for s in 0..times.len() {
        // deviations from the first path keep identical paths exactly degenerate
        let shift = &ensemble.paths[0].states[s];
        let devs: Vec<Vec<Complex64>> = ensemble
            .paths
            .iter()
            .map(|p| p.states[s].iter().zip(shift).map(|(x, o)| x - o).collect())
            .collect();
        let mut centre = vec![Complex64::new(0.0, 0.0); k];
        for d in &devs {
            for (m, x) in centre.iter_mut().zip(d) {
                *m += x;
            }
        }
        for m in centre.iter_mut() {
            *m /= nf;
        }
        let mean: Vec<Complex64> = shift.iter().zip(&centre).map(|(o, c)| o + c).collect();
        let mut cov = DMatrix::zeros(k, k);
        let mut sq = vec![(0.0, 0.0); k];
        let mut dev_norm = Vec::with_capacity(n);
        for dp in &devs {
            let d: Vec<Complex64> = dp.iter().zip(&centre).map(|(x, m)| x - m).collect();
            for r in 0..k {
                for c in 0..k {
                    cov[(r, c)] += d[r] * d[c].conj();
                }
                sq[r].0 += d[r].re * d[r].re;
                sq[r].1 += d[r].im * d[r].im;
            }
            dev_norm.push(d.iter().map(|v| v.norm_sqr()).sum::<f64>());
        }
        cov /= Complex64::new(nf - 1.0, 0.0);
        let trace: f64 = cov.diagonal().iter().map(|v| v.re).sum();
        let mean_dev = dev_norm.iter().sum::<f64>() / nf;
        let var = dev_norm.iter().map(|v| (v - mean_dev).powi(2)).sum::<f64>() / (nf - 1.0);
        out.mean_se.push(
            sq.iter()
                .map(|(a, b)| ((a / (nf - 1.0) / nf).sqrt(), (b / (nf - 1.0) / nf).sqrt()))
                .collect(),
        );
        out.mean.push(mean);
        out.cov.push(cov);
        out.trace.push(trace);
        out.trace_se.push((var / nf).sqrt());
    }
    Ok(out)
}

/// Expected energy injected per unit time by the noise,
/// `(1/2) sum_i q_i int (H f_i)^T H (H f_i)`.
pub fn energy_rate(model: &PhsModel, spec: &QWienerSpec, space: &EnergySpace) -> Result<f64> {
    Ok(0.5 * weighted_trace(spec, model, space, &space.h_nodes)?)
}
