use num_complex::Complex64;

use super::mild::Trajectory;
use super::{Forcing, InputSignal, SimContext};
use crate::error::{Error, Result};
use crate::grid::cumulative_simpson;
use crate::noise::BrownianPath;

/// `r_k(t) = x_k(t) - x_k(0) - int_0^t (lambda_k x_k + g_k) ds - sum_i h_ki beta_i(t)`
/// at every time of a full-resolution trajectory. Integrals use Simpson's
/// rule on the recorded samples.
pub fn modal_residuals(
    ctx: &SimContext,
    forcing: &Forcing,
    input: &InputSignal,
    traj: &Trajectory,
    path: Option<&BrownianPath>,
) -> Result<Vec<Vec<Complex64>>> {
    let times = &traj.times;
    if times.len() < 2 {
        return Err(Error::config("residual needs at least two recorded times"));
    }
    let dt = times[1] - times[0];
    if let Some(p) = path {
        if p.times.len() != times.len()
            || p.times
                .iter()
                .zip(times)
                .any(|(a, b)| (a - b).abs() > 1e-12 * dt.max(1.0))
        {
            return Err(Error::config(
                "residual needs the trajectory at the Brownian path resolution",
            ));
        }
    } else if ctx.inputs.q.iter().any(|q| *q != 0.0) {
        return Err(Error::config(
            "residual with noise needs the driving Brownian path",
        ));
    }
    let k = ctx.modes();
    let m = ctx.lift.inputs();
    let betas: Vec<Vec<f64>> = path
        .map(|p| (0..p.channels).map(|i| p.values(i)).collect())
        .unwrap_or_default();
    let mut integrand: Vec<Vec<Complex64>> = vec![Vec::with_capacity(times.len()); k];
    let mut g = vec![Complex64::new(0.0, 0.0); k];
    for (n, &t) in times.iter().enumerate() {
        let u = input.value(t, m);
        let w = input.derivative(t, m);
        forcing.eval(&u, &w, &mut g);
        for j in 0..k {
            integrand[j].push(ctx.basis.lambdas[j] * traj.states[n][j] + g[j]);
        }
    }
    let integrals: Vec<Vec<Complex64>> = integrand
        .iter()
        .map(|f| cumulative_simpson(f, dt))
        .collect();
    let h = &ctx.inputs.h;
    let out = (0..times.len())
        .map(|n| {
            (0..k)
                .map(|j| {
                    let mut r = traj.states[n][j] - traj.states[0][j] - integrals[j][n];
                    for (i, beta) in betas.iter().enumerate() {
                        r -= h[(j, i)] * beta[n];
                    }
                    r
                })
                .collect()
        })
        .collect();
    Ok(out)
}

/// Residual of `<X(t), z> = <X0, z> + int <X, A* z> + <g, z> ds + <H w(t), z>`
/// for `z = sum_k z_k psi_k`, at every time.
pub fn weak_residual(
    ctx: &SimContext,
    input: &InputSignal,
    traj: &Trajectory,
    z: &[Complex64],
    path: Option<&BrownianPath>,
) -> Result<Vec<f64>> {
    if z.len() != ctx.modes() {
        return Err(Error::config(
            "test function must have one coefficient per mode",
        ));
    }
    let r = modal_residuals(ctx, &Forcing::mild(&ctx.inputs), input, traj, path)?;
    Ok(r.iter()
        .map(|rk| {
            rk.iter()
                .zip(z)
                .map(|(a, b)| a * b.conj())
                .sum::<Complex64>()
                .norm()
        })
        .collect())
}

/// `||X(t) - X0 - int (A X + g) ds - H w(t)||_X` for the given forcing, at
/// every time.
pub fn integral_residual(
    ctx: &SimContext,
    forcing: &Forcing,
    input: &InputSignal,
    traj: &Trajectory,
    path: Option<&BrownianPath>,
) -> Result<Vec<f64>> {
    let r = modal_residuals(ctx, forcing, input, traj, path)?;
    Ok(r.iter()
        .map(|rk| ctx.maps.modal_energy(rk).max(0.0).sqrt())
        .collect())
}
