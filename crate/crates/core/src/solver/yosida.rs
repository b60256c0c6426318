use num_complex::Complex64;

use super::mild::{MildPlan, NoiseDrive, Scheme, Trajectory};
use super::{Forcing, InputSignal, ModalInputs, SimContext};
use crate::error::{Error, Result};
use crate::spectral::ModalBasis;

/// Extended state `(u, X)` on the recorded times.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTrajectory {
    pub lambda_scale: f64,
    /// Input part; equals `u(t)` since it integrates `u~ = u'` from `u(0)`.
    pub u: Vec<Vec<f64>>,
    pub x: Trajectory,
}

/// Forcing of the extended system with `B^e` replaced by
/// `s R(s, A^e) B^e`. Blockwise this gives the modal coefficient
/// `c_k = (a_k - s b_k) / (s - lambda_k)` on `u~`, which tends to `-b_k`.
pub fn yosida_forcing(
    inputs: &ModalInputs,
    basis: &ModalBasis,
    lambda_scale: f64,
) -> Result<Forcing> {
    check_resolvent(basis, lambda_scale)?;
    let s = Complex64::new(lambda_scale, 0.0);
    let d = nalgebra::DMatrix::from_fn(inputs.a.nrows(), inputs.a.ncols(), |k, j| {
        (inputs.a[(k, j)] - s * inputs.b[(k, j)]) / (s - basis.lambdas[k])
    });
    Ok(Forcing {
        a: inputs.a.clone(),
        d,
    })
}

/// `s` must be real, positive and at distance more than half the spectral
/// gap from every retained eigenvalue.
fn check_resolvent(basis: &ModalBasis, s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::config(format!(
            "Yosida parameter {s} must be real and positive"
        )));
    }
    let dist = basis
        .lambdas
        .iter()
        .map(|l| (Complex64::new(s, 0.0) - l).norm())
        .fold(f64::INFINITY, f64::min);
    if dist <= 0.5 * basis.report.gap {
        return Err(Error::config(format!(
            "Yosida parameter {s} is within half the spectral gap of the spectrum (distance {dist:.3e})"
        )));
    }
    Ok(())
}

/// Simulates the Yosida-approximate extended system driven by `u~ = u'`.
#[allow(clippy::too_many_arguments)]
pub fn yosida_simulate(
    ctx: &SimContext,
    input: &InputSignal,
    lambda_scale: f64,
    x0: &[Complex64],
    times: &[f64],
    scheme: Scheme,
    drive: NoiseDrive<'_>,
    stride: usize,
) -> Result<ExtendedTrajectory> {
    let forcing = yosida_forcing(&ctx.inputs, &ctx.basis, lambda_scale)?;
    let x = MildPlan::new(ctx, &forcing, input, times, scheme)?.run(x0, drive, stride)?;
    Ok(ExtendedTrajectory {
        lambda_scale,
        u: x.inputs.clone(),
        x,
    })
}
