//! Run configuration shared by the command line and the benchmark set.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelFile, PhsModel};
use crate::noise::QWienerSpec;
use crate::solver::{InputSignal, Scheme};
use crate::string::{build_string_model, StringParams};

/// Where the model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    String(StringParams),
    /// Model file, relative paths resolved against the config file.
    File(PathBuf),
    Matrices(ModelFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "K")]
    pub modes: usize,
    #[serde(rename = "N")]
    pub cells: usize,
    pub dt: f64,
    pub t_final: f64,
    pub paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Trajectory recording stride in steps.
    #[serde(default = "one")]
    pub stride: usize,
    /// Paths written to `trajectory.csv`; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_paths: Option<usize>,
}

fn one() -> usize {
    1
}

/// One nonzero modal coefficient of the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeValue {
    pub mode: usize,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub window: (f64, f64),
    /// Replaces the run's noise for this check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<QWienerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItoConfig {
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellposedConfig {
    pub tf_grid: Vec<f64>,
    pub members: usize,
    pub paths: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YosidaConfig {
    pub scales: Vec<f64>,
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibilityConfig {
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSource,
    pub noise: QWienerSpec,
    pub sim: SimConfig,
    #[serde(default = "zero_input", skip_serializing_if = "is_zero_input")]
    pub input: InputSignal,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x0: Vec<ModeValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ito: Option<ItoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wellposed: Option<WellposedConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yosida: Option<YosidaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<AdmissibilityConfig>,
}

fn zero_input() -> InputSignal {
    InputSignal::Zero
}

fn is_zero_input(u: &InputSignal) -> bool {
    *u == InputSignal::Zero
}

/// Number of steps `t / dt` when it is an integer.
pub fn steps_for(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!("time step {dt} must be positive")));
    }
    let n = (t / dt).round();
    if n < 1.0 || (n * dt - t).abs() > 1e-9 * t.abs().max(dt) {
        return Err(Error::config(format!(
            "time {t} is not a positive multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

impl RunConfig {
    /// Reads a config, or the config embedded in a run manifest.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let inner = match value.get("config") {
            Some(c) if value.get("config_sha256").is_some() => c.clone(),
            _ => value,
        };
        let mut cfg: RunConfig = serde_json::from_value(inner)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        if let ModelSource::File(p) = &cfg.model {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.model = ModelSource::File(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let s = &self.sim;
        steps_for(s.t_final, s.dt)?;
        if s.modes == 0 || s.modes > s.cells / 4 {
            return Err(Error::config(format!(
                "K = {} must lie in 1..=N/4 = {}",
                s.modes,
                s.cells / 4
            )));
        }
        if s.stride == 0 {
            return Err(Error::config("stride must be positive"));
        }
        if self.x0.iter().any(|v| v.mode >= s.modes) {
            return Err(Error::config("initial state refers to a mode beyond K"));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<PhsModel> {
        match &self.model {
            ModelSource::String(p) => build_string_model(p),
            ModelSource::File(p) => PhsModel::from_file(p),
            ModelSource::Matrices(m) => m.clone().into_model(),
        }
    }

    /// Modal initial coefficients, completed to a real state.
    pub fn initial_state(&self, partner: &[usize]) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(0.0, 0.0); partner.len()];
        for v in &self.x0 {
            if v.mode < x.len() {
                x[v.mode] = Complex64::new(v.re, v.im);
                let p = partner[v.mode];
                if p == v.mode {
                    x[p].im = 0.0;
                } else {
                    x[p] = Complex64::new(v.re, -v.im);
                }
            }
        }
        x
    }

    /// Canonical JSON, two-space indented with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
