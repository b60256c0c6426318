use num_complex::Complex64;

use super::SimContext;
use crate::error::{Error, Result};
use crate::noise::BrownianPath;

/// Modal coefficients of
/// `W_A(t) = H w(t) + sum_k sum_i lambda_k int_0^t e^{lambda_k (t-s)} beta_i(s) ds h_ki phi_k`
/// at grid time `path.times[step]`, with trapezoid quadrature.
pub fn convolution_series(
    ctx: &SimContext,
    path: &BrownianPath,
    step: usize,
) -> Result<Vec<Complex64>> {
    if step >= path.times.len() {
        return Err(Error::config(format!(
            "step {step} is beyond the Brownian path"
        )));
    }
    if path.channels != ctx.inputs.h.ncols() {
        return Err(Error::config(
            "Brownian path channels do not match the noise model",
        ));
    }
    let k = ctx.modes();
    let basis = &ctx.basis;
    let h = &ctx.inputs.h;
    let t = path.times[step];
    let betas: Vec<Vec<f64>> = (0..path.channels).map(|i| path.values(i)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); k];
    for j in (0..k).filter(|&j| basis.partner[j] >= j) {
        let lambda = basis.lambdas[j];
        let kernel: Vec<Complex64> = path.times[..=step]
            .iter()
            .map(|s| (lambda * (t - s)).exp())
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, beta) in betas.iter().enumerate() {
            let mut integral = Complex64::new(0.0, 0.0);
            for n in 0..step {
                let dt = path.times[n + 1] - path.times[n];
                integral += (kernel[n] * beta[n] + kernel[n + 1] * beta[n + 1]) * (0.5 * dt);
            }
            acc += h[(j, i)] * (beta[step] + lambda * integral);
        }
        out[j] = acc;
        let p = basis.partner[j];
        if p != j {
            out[p] = acc.conj();
        }
    }
    Ok(out)
}
