use std::path::{Path, PathBuf};

use clap::ValueEnum;
use ergodic_core::{ModelParams, RunningRates};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Experiment description; every field has a default, so `{}` is the
/// reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub bounds: Bounds,
    pub numerics: Numerics,
    pub outputs: Outputs,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelSpec::RunningExample(RunningRates::REFERENCE),
            bounds: Bounds::default(),
            numerics: Numerics::default(),
            outputs: Outputs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    RunningExample(RunningRates),
    /// Row-major `G`, `F` and the weights `m`.
    Matrices {
        g: [[f64; 3]; 3],
        f: [[f64; 3]; 3],
        m: [f64; 3],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            lower: 1.0,
            upper: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub dy: f64,
    pub dt: f64,
    pub horizon: f64,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
    /// HJB read-out point in chart coordinates `(y1, y2)`.
    pub probe: [f64; 2],
    /// Split HJB time steps that would break monotonicity instead of failing.
    pub allow_substeps: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            dy: 1e-2,
            dt: 1e-3,
            horizon: 10.0,
            epsilons: vec![0.1, 0.05, 0.01],
            delta: 0.05,
            seed: 0,
            probe: [0.3, 0.2],
            allow_substeps: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            dir: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let Bounds { lower, upper } = self.bounds;
        let params = match &self.model {
            ModelSpec::RunningExample(rates) => {
                ModelParams::running_example(*rates).and_then(|p| p.with_bounds(lower, upper))
            }
            ModelSpec::Matrices { g, f, m } => {
                let mat = |r: &[[f64; 3]; 3]| Matrix3::from_fn(|i, j| r[i][j]);
                let w = Vector3::from_column_slice(m);
                ModelParams::new(mat(g), mat(f), w, lower, upper)
            }
        };
        params.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        let n = &self.numerics;
        let positive = [("dy", n.dy), ("dt", n.dt), ("horizon", n.horizon)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!(
                    "numerics.{name} must be positive, got {v}"
                )));
            }
        }
        if !(n.delta >= 0.0) {
            return Err(CliError::Config(format!(
                "numerics.delta must be nonnegative, got {}",
                n.delta
            )));
        }
        if n.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(CliError::Config(
                "numerics.epsilons must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn rates(&self) -> Option<RunningRates> {
        match self.model {
            ModelSpec::RunningExample(r) => Some(r),
            ModelSpec::Matrices { .. } => None,
        }
    }
}
