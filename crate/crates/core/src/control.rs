//! Time-dependent and state-dependent controls.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// How a sampled signal is evaluated between samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interp {
    /// Hold the left sample until the next sample time.
    PiecewiseConstant,
    Linear,
}

/// An open-loop control `t -> alpha(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControlSignal {
    Constant {
        value: f64,
    },
    /// `values[k]` is the sample at `k * period / n`.
    Periodic {
        period: f64,
        values: Vec<f64>,
        interp: Interp,
    },
    /// Samples at increasing `times`; held constant outside the sampled range.
    Sampled {
        times: Vec<f64>,
        values: Vec<f64>,
        interp: Interp,
    },
}

/// Piece of a signal on `[t0, t1]` with `alpha(t) = v0 + slope (t - t0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub v0: f64,
    pub slope: f64,
}

impl Segment {
    pub fn value(&self, t: f64) -> f64 {
        self.v0 + self.slope * (t - self.t0)
    }
}

/// Fewest samples per period accepted for a periodic signal.
pub const MIN_PERIODIC_SAMPLES: usize = 8;

impl ControlSignal {
    pub fn constant(value: f64) -> Self {
        ControlSignal::Constant { value }
    }

    pub fn periodic(period: f64, values: Vec<f64>, interp: Interp) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(validation(format!("period must be positive, got {period}")));
        }
        if values.len() < MIN_PERIODIC_SAMPLES {
            return Err(validation(format!(
                "a periodic signal needs at least {MIN_PERIODIC_SAMPLES} samples per period"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(validation("periodic signal has non-finite samples"));
        }
        Ok(ControlSignal::Periodic {
            period,
            values,
            interp,
        })
    }

    pub fn sampled(times: Vec<f64>, values: Vec<f64>, interp: Interp) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(validation(
                "sampled signal needs matching, non-empty times and values",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(validation("sample times must be strictly increasing"));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(validation("sampled signal has non-finite entries"));
        }
        Ok(ControlSignal::Sampled {
            times,
            values,
            interp,
        })
    }

    /// `cos(2 pi t / period)` sampled on `n` points, linearly interpolated.
    pub fn cosine(period: f64, n: usize) -> Result<Self> {
        let values = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        Self::periodic(period, values, Interp::Linear)
    }

    /// `sin(2 pi t / period)` sampled on `n` points, linearly interpolated.
    pub fn sine(period: f64, n: usize) -> Result<Self> {
        let values = (0..n)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin())
            .collect();
        Self::periodic(period, values, Interp::Linear)
    }

    /// `+1` on the first half-period, `-1` on the second.
    pub fn square(period: f64) -> Result<Self> {
        let half = MIN_PERIODIC_SAMPLES / 2;
        let values = (0..MIN_PERIODIC_SAMPLES)
            .map(|k| if k < half { 1.0 } else { -1.0 })
            .collect();
        Self::periodic(period, values, Interp::PiecewiseConstant)
    }

    /// The signal `base + eps * self`.
    pub fn perturb(&self, base: f64, eps: f64) -> Self {
        let map = |v: &f64| base + eps * v;
        match self {
            ControlSignal::Constant { value } => ControlSignal::Constant { value: map(value) },
            ControlSignal::Periodic {
                period,
                values,
                interp,
            } => ControlSignal::Periodic {
                period: *period,
                values: values.iter().map(map).collect(),
                interp: *interp,
            },
            ControlSignal::Sampled {
                times,
                values,
                interp,
            } => ControlSignal::Sampled {
                times: times.clone(),
                values: values.iter().map(map).collect(),
                interp: *interp,
            },
        }
    }

    /// Period of a periodic signal; constants are treated as 1-periodic.
    pub fn period(&self) -> Option<f64> {
        match self {
            ControlSignal::Constant { .. } => Some(1.0),
            ControlSignal::Periodic { period, .. } => Some(*period),
            ControlSignal::Sampled { .. } => None,
        }
    }

    /// Segments covering one period (periodic and constant signals only).
    pub fn period_segments(&self) -> Option<Vec<Segment>> {
        match self {
            ControlSignal::Constant { value } => Some(vec![Segment {
                t0: 0.0,
                t1: 1.0,
                v0: *value,
                slope: 0.0,
            }]),
            ControlSignal::Periodic {
                period,
                values,
                interp,
            } => {
                let n = values.len();
                let h = period / n as f64;
                Some(
                    (0..n)
                        .map(|k| {
                            let t0 = k as f64 * h;
                            let t1 = if k + 1 == n {
                                *period
                            } else {
                                (k + 1) as f64 * h
                            };
                            let slope = match interp {
                                Interp::PiecewiseConstant => 0.0,
                                Interp::Linear => (values[(k + 1) % n] - values[k]) / h,
                            };
                            Segment {
                                t0,
                                t1,
                                v0: values[k],
                                slope,
                            }
                        })
                        .collect(),
                )
            }
            ControlSignal::Sampled { .. } => None,
        }
    }

    /// Time average over one period.
    pub fn mean(&self) -> Option<f64> {
        let segs = self.period_segments()?;
        let period = self.period()?;
        let total: f64 = segs
            .iter()
            .map(|s| {
                let len = s.t1 - s.t0;
                len * (s.v0 + 0.5 * s.slope * len)
            })
            .sum();
        Some(total / period)
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ControlSignal::Constant { value } => *value,
            ControlSignal::Periodic {
                period,
                values,
                interp,
            } => {
                let n = values.len();
                let x = (t / period).rem_euclid(1.0) * n as f64;
                let k = (x.floor() as usize).min(n - 1);
                match interp {
                    Interp::PiecewiseConstant => values[k],
                    Interp::Linear => {
                        let w = x - k as f64;
                        (1.0 - w) * values[k] + w * values[(k + 1) % n]
                    }
                }
            }
            ControlSignal::Sampled {
                times,
                values,
                interp,
            } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    return values[0];
                }
                if k == times.len() {
                    return values[k - 1];
                }
                match interp {
                    Interp::PiecewiseConstant => values[k - 1],
                    Interp::Linear => {
                        let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                        (1.0 - w) * values[k - 1] + w * values[k]
                    }
                }
            }
        }
    }

    /// Smallest and largest value the signal takes.
    pub fn range(&self) -> (f64, f64) {
        let vals: &[f64] = match self {
            ControlSignal::Constant { value } => std::slice::from_ref(value),
            ControlSignal::Periodic { values, .. } | ControlSignal::Sampled { values, .. } => {
                values
            }
        };
        vals.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// A control law, possibly depending on the current state `y`.
pub trait ControlLaw: Sync {
    fn control(&self, t: f64, y: &Vector3<f64>) -> f64;

    /// Whether integrators should evaluate the law once per step and hold it
    /// across the step's stages (feedback laws with discontinuous switching).
    fn hold_per_step(&self) -> bool {
        false
    }
}

impl ControlLaw for ControlSignal {
    fn control(&self, t: f64, _y: &Vector3<f64>) -> f64 {
        self.eval(t)
    }
}

impl ControlLaw for f64 {
    fn control(&self, _t: f64, _y: &Vector3<f64>) -> f64 {
        *self
    }
}
