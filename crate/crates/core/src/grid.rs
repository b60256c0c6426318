//! Uniform spatial grid and the quadrature rules used across the crate.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of grid cells.
pub const DEFAULT_CELLS: usize = 512;

/// Uniform grid of `cells + 1` nodes on `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub cells: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, cells: usize) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::config(format!("invalid interval [{a}, {b}]")));
        }
        if cells < 1 {
            return Err(Error::config("grid needs at least one cell"));
        }
        Ok(Grid { a, b, cells })
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.cells as f64
    }

    pub fn nodes(&self) -> usize {
        self.cells + 1
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.cells {
            self.b
        } else {
            self.a + j as f64 * self.h()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nodes()).map(|j| self.node(j)).collect()
    }

    /// Composite trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.nodes()];
        w[0] = 0.5 * h;
        w[self.cells] = 0.5 * h;
        w
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights().iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Composite Simpson rule on equally spaced samples; an odd number of
/// intervals closes with the 3/8 rule, a single interval uses the trapezoid.
pub fn simpson<T>(values: &[T], dt: f64) -> T
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    cumulative_simpson(values, dt)
        .last()
        .copied()
        .unwrap_or_default()
}

/// Running integral `int_0^{t_j}` at every sample index `j`.
pub fn cumulative_simpson<T>(values: &[T], dt: f64) -> Vec<T>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    let n = values.len();
    let mut out = vec![T::default(); n];
    if n < 2 {
        return out;
    }
    // even-index prefix sums of the Simpson rule
    let mut even = vec![T::default(); n];
    let mut j = 2;
    while j < n {
        let seg = (values[j - 2] + values[j - 1] * 4.0 + values[j]) * (dt / 3.0);
        even[j] = even[j - 2] + seg;
        j += 2;
    }
    for j in 1..n {
        out[j] = if j % 2 == 0 {
            even[j]
        } else if j == 1 {
            (values[0] + values[1]) * (0.5 * dt)
        } else {
            let k = j - 3;
            let tail = (values[k] + values[k + 1] * 3.0 + values[k + 2] * 3.0 + values[k + 3])
                * (3.0 * dt / 8.0);
            even[k] + tail
        };
    }
    out
}
