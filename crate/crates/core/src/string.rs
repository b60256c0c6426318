//! Vibrating string with a free left end driven by a force input and a
//! damper at the right end: `rho z_tt = (T z_z)_z` on `[a, b]`.
//!
//! State `eps = (rho z_t, z_z)`, input `u = T z_z(a)`, output `y = z_t(a)`,
//! and the right end obeys `T z_z(b) + z_t(b) = 0`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{
    AdmissibilityConfig, EnergyConfig, ItoConfig, ModeValue, ModelSource, RunConfig, SimConfig,
    WellposedConfig, YosidaConfig,
};
use crate::error::{Error, Result};
use crate::model::{Hamiltonian, PhsModel};
use crate::noise::{NoiseBasis, QWienerSpec, Variances, Window, DEFAULT_TAIL_TOL};
use crate::solver::{InputSignal, Scheme};
use crate::spectral::{string_spectrum_oracle, OracleRoots};

/// Constant or sampled positive coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Grid { zeta: Vec<f64>, values: Vec<f64> },
}

impl Coefficient {
    pub fn at(&self, z: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Grid { zeta, values } => {
                if z <= zeta[0] {
                    return values[0];
                }
                let last = zeta.len() - 1;
                if z >= zeta[last] {
                    return values[last];
                }
                let i = zeta.partition_point(|&x| x <= z) - 1;
                let t = (z - zeta[i]) / (zeta[i + 1] - zeta[i]);
                values[i] * (1.0 - t) + values[i + 1] * t
            }
        }
    }

    fn valid(&self) -> bool {
        match self {
            Coefficient::Constant(c) => *c > 0.0 && c.is_finite(),
            Coefficient::Grid { zeta, values } => {
                !zeta.is_empty()
                    && zeta.len() == values.len()
                    && zeta.windows(2).all(|w| w[1] > w[0])
                    && values.iter().all(|v| *v > 0.0 && v.is_finite())
            }
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self {
            Coefficient::Constant(_) => Vec::new(),
            Coefficient::Grid { zeta, .. } => zeta.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringParams {
    pub rho: Coefficient,
    pub t_modulus: Coefficient,
    pub a: f64,
    pub b: f64,
}

impl Default for StringParams {
    fn default() -> Self {
        StringParams {
            rho: Coefficient::Constant(1.0),
            t_modulus: Coefficient::Constant(4.0),
            a: 0.0,
            b: 1.0,
        }
    }
}

impl StringParams {
    pub fn constant(rho: f64, t_modulus: f64) -> Self {
        StringParams {
            rho: Coefficient::Constant(rho),
            t_modulus: Coefficient::Constant(t_modulus),
            a: 0.0,
            b: 1.0,
        }
    }

    /// Impedance `sqrt(T rho)` at the damped end.
    pub fn end_impedance(&self) -> f64 {
        (self.t_modulus.at(self.b) * self.rho.at(self.b)).sqrt()
    }

    /// The damper absorbs every outgoing wave and no eigenvalues exist.
    pub fn impedance_matched(&self) -> bool {
        (self.end_impedance() - 1.0).abs() < 1e-12
    }

    fn validate(&self) -> Result<()> {
        if !self.rho.valid() || !self.t_modulus.valid() {
            return Err(Error::config(
                "rho and T must be positive, finite and sampled on increasing points",
            ));
        }
        if !(self.b > self.a) {
            return Err(Error::config(format!(
                "invalid interval [{}, {}]",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

/// Boundary input, homogeneous and output rows.
pub fn string_rows() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (
        DMatrix::from_row_slice(1, 4, &[-s, 0.0, 0.0, s]),
        DMatrix::from_row_slice(1, 4, &[s, s, s, s]),
        DMatrix::from_row_slice(1, 4, &[0.0, -s, s, 0.0]),
    )
}

pub fn build_string_model(params: &StringParams) -> Result<PhsModel> {
    params.validate()?;
    let density = |z: f64| {
        DMatrix::from_row_slice(
            2,
            2,
            &[1.0 / params.rho.at(z), 0.0, 0.0, params.t_modulus.at(z)],
        )
    };
    let mut knots: Vec<f64> = params.rho.knots();
    knots.extend(params.t_modulus.knots());
    let hamiltonian = if knots.is_empty() {
        Hamiltonian::Constant(density(params.a))
    } else {
        knots.push(params.a);
        knots.push(params.b);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let values = knots.iter().map(|&z| density(z)).collect();
        Hamiltonian::Grid {
            zeta: knots,
            values,
        }
    };
    let (wb1, wb2, wc) = string_rows();
    PhsModel::new(
        2,
        params.a,
        params.b,
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
        DMatrix::zeros(2, 2),
        hamiltonian,
        wb1,
        wb2,
        wc,
    )
}

/// Closed-form spectrum for constant coefficients.
pub fn string_oracle(params: &StringParams, k: usize) -> Result<OracleRoots> {
    let (Coefficient::Constant(rho), Coefficient::Constant(t)) = (&params.rho, &params.t_modulus)
    else {
        return Err(Error::config(
            "the spectral oracle needs constant rho and T",
        ));
    };
    string_spectrum_oracle(&build_string_model(params)?, *rho, *t, k)
}

/// Momentum-channel sine noise, `q_i = i^{-2}`, `i = 1..8`.
pub fn default_noise() -> QWienerSpec {
    QWienerSpec {
        modes: 8,
        q: Variances::Power { q0: 1.0, r: 2.0 },
        basis: NoiseBasis::Sine,
        channel: 0,
        window: Window::One,
        tail_tol: DEFAULT_TAIL_TOL,
    }
}

/// The same noise scaled by `1/rho`, the alternative reading of how the
/// forcing enters the momentum equation.
pub fn inverse_density_noise() -> QWienerSpec {
    QWienerSpec {
        window: Window::InverseDensity,
        ..default_noise()
    }
}

/// Smooth noise supported in the interior, away from both ends.
pub fn interior_noise(width: f64) -> QWienerSpec {
    QWienerSpec {
        window: Window::Bump { center: 0.5, width },
        ..default_noise()
    }
}

/// White-in-space noise: `q_i = 1` on `I` sine modes.
pub fn white_noise(modes: usize) -> QWienerSpec {
    QWienerSpec {
        modes,
        q: Variances::Power { q0: 1.0, r: 0.0 },
        ..default_noise()
    }
}

pub const ACCEPTANCE_CONFIGS: [&str; 5] = [
    "damped-string-mc",
    "moments-vs-mc",
    "yosida-ladder",
    "admissibility-pass",
    "admissibility-fail",
];

fn benchmark_sim(modes: usize, cells: usize, paths: usize, seed: u64) -> SimConfig {
    SimConfig {
        modes,
        cells,
        dt: 1e-3,
        t_final: 1.0,
        paths,
        seed,
        scheme: Scheme::ExactGaussian,
        stride: 100,
        write_paths: Some(100),
    }
}

fn base_config(noise: QWienerSpec, sim: SimConfig) -> RunConfig {
    RunConfig {
        model: ModelSource::String(StringParams::default()),
        noise,
        sim,
        input: InputSignal::Zero,
        x0: Vec::new(),
        energy: None,
        ito: None,
        wellposed: None,
        yosida: None,
        admissibility: None,
    }
}

/// The benchmark configurations with pinned seeds.
pub fn string_acceptance_configs() -> Vec<(&'static str, RunConfig)> {
    let damped = RunConfig {
        x0: vec![ModeValue {
            mode: 1,
            re: 0.5,
            im: 0.0,
        }],
        energy: Some(EnergyConfig {
            window: (0.0, 0.1),
            noise: Some(interior_noise(0.2)),
        }),
        ito: Some(ItoConfig { t: 1.0 }),
        wellposed: Some(WellposedConfig {
            tf_grid: vec![0.5, 1.0, 2.0, 4.0],
            members: 20,
            paths: 100,
            dt: 1e-2,
        }),
        ..base_config(default_noise(), benchmark_sim(32, 256, 10_000, 1001))
    };
    let moments = RunConfig {
        input: InputSignal::Sinusoid {
            offset: vec![0.2],
            amplitude: vec![0.5],
            omega: 3.0,
            phase: 0.0,
        },
        x0: vec![
            ModeValue {
                mode: 0,
                re: 0.3,
                im: 0.0,
            },
            ModeValue {
                mode: 1,
                re: 0.5,
                im: 0.2,
            },
        ],
        ..base_config(default_noise(), benchmark_sim(32, 256, 10_000, 1002))
    };
    let yosida = RunConfig {
        input: InputSignal::Sinusoid {
            offset: vec![0.0],
            amplitude: vec![1.0],
            omega: 3.0,
            phase: 0.0,
        },
        yosida: Some(YosidaConfig {
            scales: vec![10.0, 100.0, 1000.0, 10000.0],
            paths: 1000,
        }),
        ..base_config(default_noise(), benchmark_sim(32, 256, 1000, 1003))
    };
    let pass = RunConfig {
        admissibility: Some(AdmissibilityConfig { t: 1.0 }),
        ..base_config(interior_noise(0.45), benchmark_sim(256, 1024, 1, 1004))
    };
    let fail = RunConfig {
        admissibility: Some(AdmissibilityConfig { t: 1.0 }),
        ..base_config(white_noise(400), benchmark_sim(256, 1024, 1, 1005))
    };
    let configs = vec![damped, moments, yosida, pass, fail];
    ACCEPTANCE_CONFIGS.iter().copied().zip(configs).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::model::{generation_check, validate_model};

    #[test]
    fn acceptance_configs_validate() {
        for (name, cfg) in string_acceptance_configs() {
            cfg.check().unwrap_or_else(|e| panic!("{name}: {e}"));
            let m = cfg.build_model().unwrap();
            assert!(validate_model(&m).unwrap().all_passed, "{name}");
            cfg.noise.check(&m).unwrap();
            let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn default_string_passes_validation() {
        let m = build_string_model(&StringParams::default()).unwrap();
        let r = validate_model(&m).unwrap();
        assert!(r.all_passed, "{:?}", r.items);
        assert_eq!(r.m_lower, 1.0);
        assert_eq!(r.m_upper, 4.0);
        assert_eq!(linalg::rank(&crate::model::stack_rows(&m.wb1, &m.wc)), 2);
    }

    #[test]
    fn string_rows_are_exact() {
        let m = build_string_model(&StringParams::default()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(
            m.wb().as_slice(),
            DMatrix::from_row_slice(2, 4, &[-s, 0.0, 0.0, s, s, s, s, s]).as_slice()
        );
        assert_eq!(m.wc.as_slice(), &[0.0, -s, s, 0.0]);
    }

    #[test]
    fn generation_product() {
        let g = generation_check(&build_string_model(&StringParams::default()).unwrap());
        assert!(g.psd);
        let want = [[0.0, 0.0], [0.0, 2.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((g.product[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn port_formula_for_string_traces() {
        let m = build_string_model(&StringParams::default()).unwrap();
        let (va, sa, vb, sb) = (0.3, -1.1, 2.0, 0.7);
        let p = crate::model::boundary_ports(
            &nalgebra::DVector::from_vec(vec![va, sa]),
            &nalgebra::DVector::from_vec(vec![vb, sb]),
            &m,
        )
        .unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.flow[0] - s * (sb - sa)).abs() < 1e-15);
        assert!((p.flow[1] - s * (vb - va)).abs() < 1e-15);
        assert!((p.effort[0] - s * (vb + va)).abs() < 1e-15);
        assert!((p.effort[1] - s * (sb + sa)).abs() < 1e-15);
    }

    #[test]
    fn sampled_coefficients_build_grid_density() {
        let p = StringParams {
            rho: Coefficient::Grid {
                zeta: vec![0.0, 0.5, 1.0],
                values: vec![1.0, 2.0, 1.0],
            },
            t_modulus: Coefficient::Constant(3.0),
            a: 0.0,
            b: 1.0,
        };
        let m = build_string_model(&p).unwrap();
        let h = m.hamiltonian.at(0.25);
        // H is interpolated between knots, not 1 / rho
        assert!((h[(0, 0)] - 0.75).abs() < 1e-15);
        assert_eq!(h[(1, 1)], 3.0);
        assert!(validate_model(&m).unwrap().all_passed);
        assert!(string_oracle(&p, 4).is_err());
    }

    #[test]
    fn matched_impedance_is_detected() {
        assert!(StringParams::constant(1.0, 1.0).impedance_matched());
        assert!(!StringParams::default().impedance_matched());
    }
}
