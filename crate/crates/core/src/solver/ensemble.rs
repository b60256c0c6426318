use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mild::{MildPlan, NoiseDrive, Trajectory};
use crate::error::{Error, Result};

/// Path indices `first_path..first_path + paths` of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub first_path: u64,
    /// Record every `stride` steps; the final time is always recorded.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_stride() -> usize {
    1
}

impl EnsembleConfig {
    pub fn new(paths: usize, seed: u64) -> Self {
        EnsembleConfig {
            paths,
            seed,
            first_path: 0,
            stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    fn indices(&self) -> std::ops::Range<u64> {
        self.first_path..self.first_path + self.paths as u64
    }
}

/// Trajectories ordered by path index.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub seed: u64,
    pub paths: Vec<Trajectory>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.paths[0].times
    }
}

/// Simulates every path of `config` in parallel. The result depends only on
/// `(plan, x0, config)`, never on scheduling.
pub fn simulate_ensemble(
    plan: &MildPlan<'_>,
    x0: &[Complex64],
    config: &EnsembleConfig,
) -> Result<PathEnsemble> {
    let paths = map_paths(plan, x0, config, Ok)?;
    Ok(PathEnsemble {
        seed: config.seed,
        paths,
    })
}

/// Simulates every path and keeps only `f(trajectory)`, in path order.
pub fn map_paths<T, F>(
    plan: &MildPlan<'_>,
    x0: &[Complex64],
    config: &EnsembleConfig,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Trajectory) -> Result<T> + Sync,
{
    if config.paths == 0 {
        return Err(Error::config("ensemble needs at least one path"));
    }
    config
        .indices()
        .into_par_iter()
        .map(|path_index| {
            let traj = plan.run(
                x0,
                NoiseDrive::Seeded {
                    seed: config.seed,
                    path_index,
                },
                config.stride,
            )?;
            f(traj)
        })
        .collect()
}
