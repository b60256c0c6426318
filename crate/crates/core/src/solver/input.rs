use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deterministic boundary input `u(t)` with its derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputSignal {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `offset + amplitude sin(omega t + phase)` per channel.
    Sinusoid {
        offset: Vec<f64>,
        amplitude: Vec<f64>,
        omega: f64,
        phase: f64,
    },
    /// Samples at `t = s dt`, linearly interpolated; the derivative comes
    /// from central differences of the samples.
    Samples {
        dt: f64,
        values: Vec<Vec<f64>>,
    },
}

impl InputSignal {
    pub fn check(&self, m: usize) -> Result<()> {
        let ok = match self {
            InputSignal::Zero => true,
            InputSignal::Constant { value } => value.len() == m,
            InputSignal::Sinusoid {
                offset, amplitude, ..
            } => offset.len() == m && amplitude.len() == m,
            InputSignal::Samples { dt, values } => {
                *dt > 0.0 && values.len() >= 2 && values.iter().all(|v| v.len() == m)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "input signal does not match {m} input channels"
            )))
        }
    }

    /// True when `u'` is estimated from samples rather than known exactly.
    pub fn derivative_is_numeric(&self) -> bool {
        matches!(self, InputSignal::Samples { .. })
    }

    pub fn value(&self, t: f64, m: usize) -> Vec<f64> {
        match self {
            InputSignal::Zero => vec![0.0; m],
            InputSignal::Constant { value } => value.clone(),
            InputSignal::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => {
                let s = (omega * t + phase).sin();
                offset
                    .iter()
                    .zip(amplitude)
                    .map(|(o, a)| o + a * s)
                    .collect()
            }
            InputSignal::Samples { dt, values } => {
                let pos = (t / dt).clamp(0.0, (values.len() - 1) as f64);
                let i = (pos.floor() as usize).min(values.len() - 2);
                let w = pos - i as f64;
                values[i]
                    .iter()
                    .zip(&values[i + 1])
                    .map(|(x, y)| x * (1.0 - w) + y * w)
                    .collect()
            }
        }
    }

    pub fn derivative(&self, t: f64, m: usize) -> Vec<f64> {
        match self {
            InputSignal::Zero | InputSignal::Constant { .. } => vec![0.0; m],
            InputSignal::Sinusoid {
                amplitude,
                omega,
                phase,
                ..
            } => {
                let c = omega * (omega * t + phase).cos();
                amplitude.iter().map(|a| a * c).collect()
            }
            InputSignal::Samples { dt, values } => {
                let last = values.len() - 1;
                let at = |s: usize| -> Vec<f64> {
                    let (lo, hi, span) = if s == 0 {
                        (0, 1, *dt)
                    } else if s >= last {
                        (last - 1, last, *dt)
                    } else {
                        (s - 1, s + 1, 2.0 * dt)
                    };
                    values[hi]
                        .iter()
                        .zip(&values[lo])
                        .map(|(x, y)| (x - y) / span)
                        .collect()
                };
                let pos = (t / dt).clamp(0.0, last as f64);
                let i = (pos.floor() as usize).min(last - 1);
                let w = pos - i as f64;
                at(i)
                    .iter()
                    .zip(at(i + 1))
                    .map(|(x, y)| x * (1.0 - w) + y * w)
                    .collect()
            }
        }
    }

    /// `u -> c u`.
    pub fn scaled(&self, c: f64) -> InputSignal {
        let s = |v: &Vec<f64>| v.iter().map(|x| c * x).collect::<Vec<_>>();
        match self {
            InputSignal::Zero => InputSignal::Zero,
            InputSignal::Constant { value } => InputSignal::Constant { value: s(value) },
            InputSignal::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => InputSignal::Sinusoid {
                offset: s(offset),
                amplitude: s(amplitude),
                omega: *omega,
                phase: *phase,
            },
            InputSignal::Samples { dt, values } => InputSignal::Samples {
                dt: *dt,
                values: values.iter().map(s).collect(),
            },
        }
    }
}
