//! Numerical certificates: Itô isometry, admissibility and Hilbert-Schmidt
//! sums, empirical well-posedness constants, mean-square continuity and the
//! expected energy balance.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::simpson;
use crate::model::{energy, generation_check};
use crate::moments::{covariance_exact, energy_rate, mean_trajectory};
use crate::noise::{hs_norm_sq, sample_path, stream_rng, uniform_times, TAG_MEMBERS};
use crate::solver::{
    map_paths, yosida_forcing, EnsembleConfig, Forcing, InputSignal, MildPlan, NoiseDrive,
    PathEnsemble, Scheme, SimContext,
};

/// Standard-error multiple used for Monte Carlo verdicts.
pub const SE_MULTIPLE: f64 = 3.0;

/// Largest growth exponent of the empirical well-posedness constant that
/// still counts as bounded.
pub const GROWTH_TOL: f64 = 0.1;

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::config(
            "slope fit needs matching samples, at least two",
        ));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::numerical("slope fit needs positive finite samples"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::config("slope fit needs distinct abscissae"));
    }
    Ok(sxy / sxx)
}

/// Sample mean and its standard error. Values are centred on the first
/// sample so identical samples reproduce it exactly.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let o = values[0];
    let c = values.iter().map(|v| v - o).sum::<f64>() / n;
    if values.len() < 2 {
        return (o + c, f64::NAN);
    }
    let var = values.iter().map(|v| (v - o - c).powi(2)).sum::<f64>() / (n - 1.0);
    (o + c, (var / n).sqrt())
}

/// An estimate compared with its exact value.
#[derive(Debug, Clone, Serialize)]
pub struct McComparison {
    pub estimate: f64,
    pub standard_error: f64,
    pub exact: f64,
    /// `|estimate - exact| / standard_error`.
    pub z_score: f64,
    pub pass: bool,
}

impl McComparison {
    pub fn new(samples: &[f64], exact: f64) -> Self {
        let (estimate, standard_error) = mean_se(samples);
        let diff = (estimate - exact).abs();
        let z_score = if standard_error > 0.0 {
            diff / standard_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        McComparison {
            estimate,
            standard_error,
            exact,
            z_score,
            pass: z_score <= SE_MULTIPLE,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ItoReport {
    pub t: f64,
    pub paths: usize,
    /// `Tr[H Q H^*]` on the grid.
    pub hs_trace: f64,
    /// `E||int_0^t H dw||^2` against `t Tr[H Q H^*]`.
    pub isometry: McComparison,
    /// `E||W_A(t)||^2` against the energy-weighted trace of the exact
    /// covariance.
    pub convolution: McComparison,
}

/// Monte Carlo check of the Itô isometry and of the stochastic convolution's
/// second moment. `dt` is the step used for the convolution.
pub fn ito_isometry_check(
    ctx: &SimContext,
    t: f64,
    dt: f64,
    paths: usize,
    seed: u64,
) -> Result<ItoReport> {
    if paths < 2 || t < 0.0 {
        return Err(Error::config(
            "Itô check needs at least two paths and t >= 0",
        ));
    }
    let space = &ctx.basis.space;
    let profiles = ctx.spec.profiles(&ctx.model, space)?;
    let i = profiles.len();
    let gram = DMatrix::from_fn(i, i, |r, c| space.inner(&profiles[c], &profiles[r]));
    let hs_trace = hs_norm_sq(&ctx.spec, &ctx.model, space)?;
    let k = ctx.modes();
    if t == 0.0 {
        let zero = McComparison {
            estimate: 0.0,
            standard_error: 0.0,
            exact: 0.0,
            z_score: 0.0,
            pass: true,
        };
        return Ok(ItoReport {
            t,
            paths,
            hs_trace,
            isometry: zero.clone(),
            convolution: zero,
        });
    }

    let end = [0.0, t];
    let samples: Vec<f64> = (0..paths as u64)
        .map(|p| {
            let path = sample_path(&ctx.spec, &end, seed, p)?;
            let beta = path.increment(0);
            let mut s = 0.0;
            for r in 0..i {
                for c in 0..i {
                    s += beta[r] * gram[(r, c)] * beta[c];
                }
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let isometry = McComparison::new(&samples, t * hs_trace);

    let steps = (t / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - t).abs() > 1e-9 * t {
        return Err(Error::config(format!(
            "t = {t} is not a multiple of dt = {dt}"
        )));
    }
    let times = uniform_times(dt, steps);
    let plan = MildPlan::new(
        ctx,
        &Forcing::mild(&ctx.inputs),
        &InputSignal::Zero,
        &times,
        Scheme::ExactGaussian,
    )?;
    let zero = vec![Complex64::new(0.0, 0.0); k];
    let cfg = EnsembleConfig::new(paths, seed).with_stride(steps);
    let norms = map_paths(&plan, &zero, &cfg, |traj| {
        Ok(ctx.maps.modal_energy(traj.last()))
    })?;
    let p = covariance_exact(ctx, &DMatrix::zeros(k, k), t)?;
    let exact: f64 = (0..k)
        .flat_map(|r| (0..k).map(move |c| (r, c)))
        .map(|(r, c)| (p[(r, c)] * ctx.maps.gram[(c, r)]).re)
        .sum();
    let convolution = McComparison::new(&norms, exact);
    Ok(ItoReport {
        t,
        paths,
        hs_trace,
        isometry,
        convolution,
    })
}

/// Partial sums of a per-mode series, in mode order, and their convergence.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub total: f64,
    /// `(S_K - S_{K/2}) / S_K`, zero for a vanishing series.
    pub tail_ratio: f64,
    pub tail_tol: f64,
    pub cauchy: bool,
    /// Fitted exponent of `S_K` against `K` over the upper half of the modes.
    pub growth_exponent: Option<f64>,
}

impl SeriesReport {
    fn new(terms: Vec<f64>, tail_tol: f64) -> Self {
        let mut partial_sums = Vec::with_capacity(terms.len());
        let mut acc = 0.0;
        for t in &terms {
            acc += t;
            partial_sums.push(acc);
        }
        let total = acc;
        let k = terms.len();
        let half = (k / 2).checked_sub(1).map_or(0.0, |j| partial_sums[j]);
        let tail_ratio = if total > 0.0 {
            (total - half) / total
        } else {
            0.0
        };
        let lo = k / 2;
        let growth_exponent = if k >= 4 {
            let xs: Vec<f64> = (lo..=k).map(|j| j as f64).collect();
            let ys: Vec<f64> = (lo..=k).map(|j| partial_sums[j - 1]).collect();
            loglog_slope(&xs, &ys).ok()
        } else {
            None
        };
        SeriesReport {
            terms,
            partial_sums,
            total,
            tail_ratio,
            tail_tol,
            cauchy: tail_ratio <= tail_tol,
            growth_exponent,
        }
    }

    /// The series grows like `K^p` for `p` within `rel` of `expected`.
    pub fn grows_like(&self, expected: f64, rel: f64) -> bool {
        self.growth_exponent
            .is_some_and(|p| (p - expected).abs() <= rel * expected)
    }

    pub fn divergent(&self) -> bool {
        !self.cauchy && self.growth_exponent.is_some_and(|p| p > 1.0)
    }
}

/// `sum_i q_i |h_ki|^2` per mode.
fn channel_weights(ctx: &SimContext) -> Vec<f64> {
    let h = &ctx.inputs.h;
    (0..ctx.modes())
        .map(|k| {
            ctx.inputs
                .q
                .iter()
                .enumerate()
                .map(|(i, q)| q * h[(k, i)].norm_sqr())
                .sum()
        })
        .collect()
}

/// `int_0^t ||A T(s) H||^2 ds` evaluated mode by mode:
/// `sum_i q_i |h_ki|^2 |lambda_k|^2 (e^{2 Re lambda_k t} - 1) / (2 Re lambda_k)`.
pub fn admissibility_integral(ctx: &SimContext, t: f64) -> Result<SeriesReport> {
    if t < 0.0 {
        return Err(Error::config("admissibility time must be non-negative"));
    }
    let w = channel_weights(ctx);
    let terms = ctx
        .basis
        .lambdas
        .iter()
        .zip(&w)
        .map(|(l, wk)| {
            wk * l.norm_sqr() * crate::solver::expm1_over(Complex64::new(2.0 * l.re, 0.0), t).re
        })
        .collect();
    Ok(SeriesReport::new(terms, ctx.spec.tail_tol))
}

/// `sum_i q_i sum_k |lambda_k|^2 |h_ki|^2`, the modal surrogate of
/// `||A H Q^{1/2}||^2_{L_2}`.
pub fn hs_domain_check(ctx: &SimContext) -> SeriesReport {
    let w = channel_weights(ctx);
    let terms = ctx
        .basis
        .lambdas
        .iter()
        .zip(&w)
        .map(|(l, wk)| wk * l.norm_sqr())
        .collect();
    SeriesReport::new(terms, ctx.spec.tail_tol)
}

/// One initial state and input of the well-posedness ensemble.
#[derive(Debug, Clone)]
pub struct Member {
    /// `eps0` on the grid.
    pub eps0: Vec<f64>,
    pub input: InputSignal,
}

impl Member {
    /// `eps0 = sum_k x0_k phi_k + B u(0)`, compatible by construction.
    pub fn from_modal(ctx: &SimContext, x0: &[Complex64], input: InputSignal) -> Self {
        let u0 = input.value(0.0, ctx.lift.inputs());
        let mut eps0 = ctx.basis.reconstruct(x0);
        for (e, b) in eps0.iter_mut().zip(ctx.lift.sample(&ctx.basis.space, &u0)) {
            *e += b;
        }
        Member { eps0, input }
    }

    /// Modal coefficients of `eps0 - B u(0)`.
    fn x0(&self, ctx: &SimContext) -> Vec<Complex64> {
        let u0 = self.input.value(0.0, ctx.lift.inputs());
        let x: Vec<f64> = self
            .eps0
            .iter()
            .zip(ctx.lift.sample(&ctx.basis.space, &u0))
            .map(|(e, b)| e - b)
            .collect();
        ctx.basis.coefficients(&x)
    }
}

/// Number of leading modes excited in generated members.
pub const MEMBER_MODES: usize = 6;

/// `count` compatible members with Gaussian coefficients on the leading
/// modes and sinusoidal inputs with random offset, amplitude and phase.
/// Member `i` depends only on `(seed, i)`.
pub fn standard_members(ctx: &SimContext, count: usize, seed: u64) -> Vec<Member> {
    let k = ctx.modes();
    let m = ctx.lift.inputs();
    (0..count)
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64, TAG_MEMBERS);
            let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
            let mut x0 = vec![Complex64::new(0.0, 0.0); k];
            for slot in x0.iter_mut().take(MEMBER_MODES) {
                *slot = 0.5 * Complex64::new(gauss(), gauss());
            }
            ctx.basis.symmetrize(&mut x0);
            let offset = (0..m).map(|_| gauss()).collect();
            let amplitude = (0..m).map(|_| gauss()).collect();
            let omega = 1.0 + gauss().abs() * 4.0;
            let phase = gauss();
            Member::from_modal(
                ctx,
                &x0,
                InputSignal::Sinusoid {
                    offset,
                    amplitude,
                    omega,
                    phase,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberRatios {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub ratio: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WellposednessReport {
    pub conditions: Vec<(String, bool)>,
    pub tf_grid: Vec<f64>,
    /// Largest member ratio per `t_f`: the empirical `m_{t_f}`.
    pub ratios: Vec<f64>,
    pub members: Vec<MemberRatios>,
    pub growth_exponent: f64,
    pub verdict: String,
    pub consistent: bool,
    pub ensemble: String,
}

/// `E||eps(t_f)||^2 + E int_0^{t_f} ||y||^2` and `int_0^{t_f} ||u||^2` for
/// one member, by averaging `paths` noise realisations (a single quiet run
/// when `paths` is `None`).
fn member_terms(
    ctx: &SimContext,
    member: &Member,
    times: &[f64],
    tf_index: &[usize],
    paths: Option<&EnsembleConfig>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = ctx.lift.inputs();
    let plan = MildPlan::new(
        ctx,
        &Forcing::mild(&ctx.inputs),
        &member.input,
        times,
        Scheme::ExactGaussian,
    )?;
    let dt = times[1] - times[0];
    let x0 = member.x0(ctx);
    let per_path = |traj: crate::solver::Trajectory| -> Result<Vec<f64>> {
        let y2: Vec<f64> = traj
            .states
            .iter()
            .zip(&traj.inputs)
            .map(|(x, u)| ctx.maps.output(&ctx.model, x, u).norm_squared())
            .collect();
        Ok(tf_index
            .iter()
            .map(|&n| ctx.maps.energy(&traj.states[n], &traj.inputs[n]) + simpson(&y2[..=n], dt))
            .collect())
    };
    let values: Vec<Vec<f64>> = match paths {
        Some(cfg) => map_paths(
            &plan,
            &x0,
            &EnsembleConfig {
                stride: 1,
                ..cfg.clone()
            },
            per_path,
        )?,
        None => vec![per_path(plan.run(&x0, NoiseDrive::Quiet, 1)?)?],
    };
    let numer = (0..tf_index.len())
        .map(|j| mean_se(&values.iter().map(|v| v[j]).collect::<Vec<_>>()).0)
        .collect();
    let u2: Vec<f64> = times
        .iter()
        .map(|&t| member.input.value(t, m).iter().map(|v| v * v).sum())
        .collect();
    let denom_u = tf_index.iter().map(|&n| simpson(&u2[..=n], dt)).collect();
    Ok((numer, denom_u))
}

/// Rejects members whose initial state does not satisfy `W_B1 ports = u(0)`
/// and `W_B2 ports = 0`.
fn check_member(ctx: &SimContext, member: &Member) -> Result<()> {
    let m = ctx.lift.inputs();
    member.input.check(m)?;
    let space = &ctx.basis.space;
    if member.eps0.len() != space.dim() {
        return Err(Error::config(
            "member initial state does not match the grid",
        ));
    }
    let u0 = member.input.value(0.0, m);
    let ports = space.ports(&member.eps0, &ctx.model)?.stacked();
    let b1 = &ctx.model.wb1 * &ports;
    let b2 = &ctx.model.wb2 * &ports;
    let scale = 1.0
        + member
            .eps0
            .iter()
            .chain(&u0)
            .map(|v| v.abs())
            .fold(0.0, f64::max);
    let bad = b1
        .iter()
        .zip(&u0)
        .map(|(p, u)| (p - u).abs())
        .chain(b2.iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    if bad > 1e-8 * scale {
        return Err(Error::validation(format!(
            "member violates u(0) = B eps0 (mismatch {bad:.3e})"
        )));
    }
    Ok(())
}

/// Empirical well-posedness constants over `members` at every `t_f`.
/// With `config = None` every member is run once without noise.
pub fn wellposedness_ratio(
    ctx: &SimContext,
    members: &[Member],
    tf_grid: &[f64],
    dt: f64,
    config: Option<&EnsembleConfig>,
) -> Result<WellposednessReport> {
    if members.is_empty() || tf_grid.len() < 2 {
        return Err(Error::config(
            "well-posedness needs members and at least two final times",
        ));
    }
    if dt <= 0.0 || tf_grid.iter().any(|t| *t <= 0.0) {
        return Err(Error::config("final times and dt must be positive"));
    }
    let t_max = tf_grid.iter().cloned().fold(0.0, f64::max);
    let steps = (t_max / dt).round() as usize;
    let times = uniform_times(dt, steps);
    let tf_index: Vec<usize> = tf_grid
        .iter()
        .map(|t| {
            let n = (t / dt).round() as usize;
            if ((n as f64) * dt - t).abs() > 1e-9 * t {
                Err(Error::config(format!(
                    "t_f = {t} is not a multiple of dt = {dt}"
                )))
            } else {
                Ok(n)
            }
        })
        .collect::<Result<_>>()?;
    let trace_q = if config.is_some() {
        ctx.spec.trace()?
    } else {
        0.0
    };
    let mut reports = Vec::with_capacity(members.len());
    for member in members {
        check_member(ctx, member)?;
        let (numerator, denom_u) = member_terms(ctx, member, &times, &tf_index, config)?;
        let e0 = energy(&member.eps0, &ctx.basis.space)?;
        let denominator: Vec<f64> = denom_u.iter().map(|d| e0 + d + trace_q).collect();
        let ratio = numerator
            .iter()
            .zip(&denominator)
            .map(|(a, b)| a / b)
            .collect();
        reports.push(MemberRatios {
            numerator,
            denominator,
            ratio,
        });
    }
    let ratios: Vec<f64> = (0..tf_grid.len())
        .map(|j| {
            reports
                .iter()
                .map(|r| r.ratio[j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    if ratios.iter().any(|r| !r.is_finite()) {
        return Err(Error::numerical("well-posedness ratio is not finite"));
    }
    let growth_exponent = loglog_slope(tf_grid, &ratios)?;
    let consistent = growth_exponent < GROWTH_TOL;
    let gen = generation_check(&ctx.model);
    let hs = hs_domain_check(ctx);
    let adm = admissibility_integral(ctx, t_max)?;
    let conditions = vec![
        ("generation_psd".to_string(), gen.psd),
        ("riesz_basis_nice".to_string(), ctx.basis.report.nice),
        ("noise_trace_class".to_string(), ctx.spec.tail_ok()?),
        ("hs_domain".to_string(), hs.cauchy),
        ("admissibility".to_string(), adm.cauchy),
    ];
    let verdict = if consistent {
        "consistent with well-posedness"
    } else {
        "growth beyond tolerance"
    }
    .to_string();
    let ensemble = format!(
        "{} members, {} noise paths each, dt = {dt}; the constants are maxima over this finite family, not suprema over all compatible data",
        members.len(),
        config.map_or(0, |c| c.paths)
    );
    Ok(WellposednessReport {
        conditions,
        tf_grid: tf_grid.to_vec(),
        ratios,
        members: reports,
        growth_exponent,
        verdict,
        consistent,
        ensemble,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub h: Vec<f64>,
    pub mean_square: Vec<f64>,
    pub slope: f64,
    pub pass: bool,
}

/// Fits `ln E||X(t+h) - X(t)||^2` against `ln h` for lags given in steps of
/// the recorded grid, averaging over paths and base times.
pub fn ms_continuity_check(
    ctx: &SimContext,
    ensemble: &PathEnsemble,
    lags: &[usize],
) -> Result<ContinuityReport> {
    if lags.len() < 3 {
        return Err(Error::config("continuity fit needs at least three lags"));
    }
    if ensemble.is_empty() {
        return Err(Error::config("continuity check needs a non-empty ensemble"));
    }
    let times = ensemble.times();
    let dt = times[1] - times[0];
    let max_lag = lags.iter().cloned().max().unwrap_or(0);
    if lags.contains(&0) || max_lag >= times.len() {
        return Err(Error::config(
            "lags must be positive and shorter than the trajectory",
        ));
    }
    let bases = times.len() - max_lag;
    let mut h = Vec::with_capacity(lags.len());
    let mut mean_square = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut acc = 0.0;
        for traj in &ensemble.paths {
            for b in 0..bases {
                let diff: Vec<Complex64> = traj.states[b + lag]
                    .iter()
                    .zip(&traj.states[b])
                    .map(|(x, y)| x - y)
                    .collect();
                acc += ctx.maps.modal_energy(&diff);
            }
        }
        h.push(lag as f64 * dt);
        mean_square.push(acc / (bases * ensemble.len()) as f64);
    }
    let slope = loglog_slope(&h, &mean_square)?;
    Ok(ContinuityReport {
        h,
        mean_square,
        slope,
        pass: slope > 0.0,
    })
}

/// Ensemble moments at one recorded time against the exact mean and
/// covariance.
#[derive(Debug, Clone, Serialize)]
pub struct MomentCheck {
    pub t: f64,
    /// Per-path `Re <x, m/|m|>` against `|m|`.
    pub mean_projection: McComparison,
    /// Per-path `|x - m|^2` against `Tr P`.
    pub trace: McComparison,
}

/// Checks every recorded time after the first. The mean is probed along
/// the exact mean direction (mode 0 when the mean vanishes).
pub fn moment_check(
    ctx: &SimContext,
    input: &InputSignal,
    x0: &[Complex64],
    ensemble: &PathEnsemble,
) -> Result<Vec<MomentCheck>> {
    if ensemble.len() < 2 {
        return Err(Error::config("moment check needs at least two paths"));
    }
    let times = ensemble.times().to_vec();
    let mean = mean_trajectory(ctx, input, x0, &times)?;
    let k = ctx.modes();
    let q0 = DMatrix::zeros(k, k);
    let mut out = Vec::with_capacity(times.len().saturating_sub(1));
    for (s, &t) in times.iter().enumerate().skip(1) {
        let m = &mean[s];
        let norm = m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let dir: Vec<Complex64> = if norm > 0.0 {
            m.iter().map(|v| v / norm).collect()
        } else {
            (0..k)
                .map(|j| Complex64::new(if j == 0 { 1.0 } else { 0.0 }, 0.0))
                .collect()
        };
        let proj: Vec<f64> = ensemble
            .paths
            .iter()
            .map(|p| {
                p.states[s]
                    .iter()
                    .zip(&dir)
                    .map(|(x, d)| (x * d.conj()).re)
                    .sum()
            })
            .collect();
        let spread: Vec<f64> = ensemble
            .paths
            .iter()
            .map(|p| {
                p.states[s]
                    .iter()
                    .zip(m)
                    .map(|(x, mk)| (x - mk).norm_sqr())
                    .sum()
            })
            .collect();
        let p = covariance_exact(ctx, &q0, t)?;
        let trace: f64 = p.diagonal().iter().map(|v| v.re).sum();
        out.push(MomentCheck {
            t,
            mean_projection: McComparison::new(&proj, norm),
            trace: McComparison::new(&spread, trace),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct YosidaReport {
    pub scales: Vec<f64>,
    pub paths: usize,
    /// Path average of `sup_t ||X_s(t) - X(t)||_X` per scale.
    pub sup_error: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub monotone: bool,
}

/// Sup-in-time distance between the Yosida-approximate and the mild
/// extended trajectories driven by the same noise path.
pub fn yosida_ladder(
    ctx: &SimContext,
    input: &InputSignal,
    x0: &[Complex64],
    scales: &[f64],
    times: &[f64],
    config: &EnsembleConfig,
) -> Result<YosidaReport> {
    if scales.is_empty() || config.paths == 0 {
        return Err(Error::config("Yosida ladder needs scales and paths"));
    }
    let mild = MildPlan::new(
        ctx,
        &Forcing::mild(&ctx.inputs),
        input,
        times,
        Scheme::ExactGaussian,
    )?;
    let plans: Vec<MildPlan> = scales
        .iter()
        .map(|&s| {
            MildPlan::new(
                ctx,
                &yosida_forcing(&ctx.inputs, &ctx.basis, s)?,
                input,
                times,
                Scheme::ExactGaussian,
            )
        })
        .collect::<Result<_>>()?;
    let errors: Vec<Vec<f64>> = (config.first_path..config.first_path + config.paths as u64)
        .into_par_iter()
        .map(|path_index| {
            let drive = NoiseDrive::Seeded {
                seed: config.seed,
                path_index,
            };
            let reference = mild.run(x0, drive, config.stride)?;
            plans
                .iter()
                .map(|plan| {
                    let approx = plan.run(x0, drive, config.stride)?;
                    Ok(approx
                        .states
                        .iter()
                        .zip(&reference.states)
                        .map(|(a, b)| {
                            let diff: Vec<Complex64> =
                                a.iter().zip(b).map(|(x, y)| x - y).collect();
                            ctx.maps.modal_energy(&diff).max(0.0).sqrt()
                        })
                        .fold(0.0, f64::max))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let (sup_error, standard_error): (Vec<f64>, Vec<f64>) = (0..scales.len())
        .map(|j| mean_se(&errors.iter().map(|e| e[j]).collect::<Vec<_>>()))
        .unzip();
    let monotone = sup_error.windows(2).all(|w| w[1] < w[0]);
    Ok(YosidaReport {
        scales: scales.to_vec(),
        paths: config.paths,
        sup_error,
        standard_error,
        monotone,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyBalanceReport {
    pub window: (f64, f64),
    pub paths: usize,
    /// `(1/2) Tr[H H Q H^*]` on the grid.
    pub energy_rate: f64,
    /// Injection rate of the truncated modal noise.
    pub modal_rate: f64,
    /// Per-path `(E(t2) - E(t1) - int f.e) / (t2 - t1)` with the full power.
    pub full_power: McComparison,
    /// Same with the power of the mean trajectory.
    pub mean_power: McComparison,
}

/// Expected energy balance over `[t1, t2]` with the exact-Gaussian scheme.
pub fn energy_balance(
    ctx: &SimContext,
    input: &InputSignal,
    x0: &[Complex64],
    window: (f64, f64),
    dt: f64,
    config: &EnsembleConfig,
) -> Result<EnergyBalanceReport> {
    let (t1, t2) = window;
    if !(0.0 <= t1 && t1 < t2) {
        return Err(Error::config("energy window must satisfy 0 <= t1 < t2"));
    }
    let i1 = (t1 / dt).round() as usize;
    let i2 = (t2 / dt).round() as usize;
    if ((i2 as f64) * dt - t2).abs() > 1e-9 * t2
        || ((i1 as f64) * dt - t1).abs() > 1e-9 * t2.max(1.0)
    {
        return Err(Error::config("energy window must lie on the time grid"));
    }
    let times = uniform_times(dt, i2);
    let plan = MildPlan::new(
        ctx,
        &Forcing::mild(&ctx.inputs),
        input,
        &times,
        Scheme::ExactGaussian,
    )?;
    let mean = plan.run(x0, NoiseDrive::Quiet, 1)?;
    let mean_power: Vec<f64> = mean
        .states
        .iter()
        .zip(&mean.inputs)
        .map(|(x, u)| ctx.maps.power(&ctx.model, x, u))
        .collect();
    let mean_work = simpson(&mean_power[i1..=i2], dt);
    let span = t2 - t1;
    let stats: Vec<(f64, f64)> = map_paths(
        &plan,
        x0,
        &EnsembleConfig {
            stride: 1,
            ..config.clone()
        },
        |traj| {
            let power: Vec<f64> = traj.states[i1..=i2]
                .iter()
                .zip(&traj.inputs[i1..=i2])
                .map(|(x, u)| ctx.maps.power(&ctx.model, x, u))
                .collect();
            let de = ctx.maps.energy(&traj.states[i2], &traj.inputs[i2])
                - ctx.maps.energy(&traj.states[i1], &traj.inputs[i1]);
            Ok(((de - simpson(&power, dt)) / span, (de - mean_work) / span))
        },
    )?;
    let rate = energy_rate(&ctx.model, &ctx.spec, &ctx.basis.space)?;
    let h = &ctx.inputs.h;
    let modal_rate = (0..h.ncols())
        .map(|i| {
            let col: Vec<Complex64> = h.column(i).iter().cloned().collect();
            ctx.inputs.q[i] * ctx.maps.modal_energy(&col)
        })
        .sum();
    let full: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let meanp: Vec<f64> = stats.iter().map(|s| s.1).collect();
    Ok(EnergyBalanceReport {
        window,
        paths: config.paths,
        energy_rate: rate,
        modal_rate,
        full_power: McComparison::new(&full, rate),
        mean_power: McComparison::new(&meanp, rate),
    })
}
