use serde::Serialize;

use super::banded::BandMatrix;
use super::{GridField, SimplexGrid, UpwindOperator};
use crate::error::{validation, Error, Result};
use crate::spectral::ModelParams;

/// One explicit Euler step `u + dt * H_num(u)`. Fails unless the step is
/// monotone, i.e. `dt * rate <= 1`.
pub fn step_time_dependent(op: &UpwindOperator, field: &GridField, dt: f64) -> Result<GridField> {
    let ratio = dt * op.rate();
    if ratio > 1.0 {
        return Err(Error::Cfl { ratio });
    }
    let mut h = vec![0.0; field.values.len()];
    op.hamiltonian(&field.values, &mut h);
    let values: Vec<f64> = field
        .values
        .iter()
        .zip(&h)
        .map(|(u, h)| u + dt * h)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("time step"));
    }
    Ok(GridField {
        values,
        time: field.time.map(|t| t + dt),
        epsilon: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbConfig {
    pub dy: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Chart coordinates of the read-out point `y0`.
    pub probe: [f64; 2],
    /// Further read-out points for the ergodic collapse check.
    pub extra_probes: Vec<[f64; 2]>,
    pub snapshot_times: Vec<f64>,
    /// Split `dt` into equal substeps when a single step would not be
    /// monotone; otherwise such a `dt` is an error.
    pub allow_substeps: bool,
}

impl Default for HjbConfig {
    fn default() -> Self {
        HjbConfig {
            dy: 1e-2,
            dt: 1e-3,
            horizon: 10.0,
            probe: [0.3, 0.2],
            extra_probes: vec![[0.1, 0.1], [0.6, 0.1], [0.1, 0.4], [0.8, 0.05]],
            snapshot_times: vec![1.0, 2.0, 5.0],
            allow_substeps: true,
        }
    }
}

/// Result of a time-dependent solve from `u(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbRun {
    pub dy: f64,
    pub dt: f64,
    pub horizon: f64,
    pub substeps: usize,
    /// Largest total stencil weight `max sum w`, in 1/time.
    pub rate: f64,
    /// `substep * rate`; at most 1.
    pub cfl_ratio: f64,
    pub probe: [f64; 2],
    /// `u(T, y0) / T`.
    pub lambda_ratio: f64,
    /// `(u(T, y0) - u(T - lag, y0)) / lag` with `lag = min(1, T/2)`.
    pub lambda_slope: f64,
    pub lag: f64,
    /// `u(T, p) / T` at the probe and every extra probe.
    pub probe_ratios: Vec<([f64; 2], f64)>,
    /// `(t, u(t, y0))` every 0.1 time units.
    pub history: Vec<(f64, f64)>,
    #[serde(skip)]
    pub field: GridField,
    #[serde(skip)]
    pub lagged: GridField,
    #[serde(skip)]
    pub snapshots: Vec<GridField>,
}

impl HjbRun {
    /// Largest gap between probe ratios.
    pub fn probe_spread(&self) -> f64 {
        let (lo, hi) = self
            .probe_ratios
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, r)| {
                (lo.min(r), hi.max(r))
            });
        hi - lo
    }
}

fn check_chart_point(params: &ModelParams, c: [f64; 2]) -> Result<()> {
    let m = params.m();
    if c[0] < 0.0 || c[1] < 0.0 || m[0] * c[0] + m[1] * c[1] > 1.0 {
        return Err(validation(format!(
            "chart point {c:?} is outside the simplex"
        )));
    }
    Ok(())
}

pub fn run_time_dependent(params: &ModelParams, cfg: &HjbConfig) -> Result<HjbRun> {
    if !(cfg.dt > 0.0) || !(cfg.horizon > 0.0) {
        return Err(validation("time step and horizon must be positive"));
    }
    check_chart_point(params, cfg.probe)?;
    for &p in &cfg.extra_probes {
        check_chart_point(params, p)?;
    }
    let grid = SimplexGrid::new(params, cfg.dy)?;
    let op = UpwindOperator::new(params, &grid)?;
    let ratio = cfg.dt * op.rate();
    let substeps = if ratio <= 1.0 {
        1
    } else if cfg.allow_substeps {
        ratio.ceil() as usize
    } else {
        return Err(Error::Cfl { ratio });
    };
    let h = cfg.dt / substeps as f64;
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    if steps == 0 {
        return Err(validation("horizon shorter than one time step"));
    }
    let horizon = steps as f64 * cfg.dt;
    let lag = horizon.min(2.0) / 2.0;
    let lag_step = steps - (lag / cfg.dt).round() as usize;
    let every = ((0.1 / cfg.dt).round() as usize).max(1);
    let probe = grid.nearest(cfg.probe);
    let snap_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|&t| (t / cfg.dt).round() as usize)
        .collect();

    let mut field = GridField::zeros(&grid);
    let mut lagged = field.clone();
    let mut snapshots = Vec::new();
    let mut history = vec![(0.0, 0.0)];
    for k in 1..=steps {
        for _ in 0..substeps {
            field = step_time_dependent(&op, &field, h)?;
        }
        let t = k as f64 * cfg.dt;
        field.time = Some(t);
        if k == lag_step {
            lagged = field.clone();
        }
        if snap_steps.contains(&k) {
            snapshots.push(field.clone());
        }
        if k % every == 0 {
            history.push((t, field.values[probe]));
        }
    }
    let u0 = field.values[probe];
    let probe_ratios = std::iter::once(cfg.probe)
        .chain(cfg.extra_probes.iter().copied())
        .map(|p| (p, field.values[grid.nearest(p)] / horizon))
        .collect();
    Ok(HjbRun {
        dy: cfg.dy,
        dt: cfg.dt,
        horizon,
        substeps,
        rate: op.rate(),
        cfl_ratio: h * op.rate(),
        probe: cfg.probe,
        lambda_ratio: u0 / horizon,
        lambda_slope: (u0 - lagged.values[probe]) / lag,
        lag,
        probe_ratios,
        history,
        field,
        lagged,
        snapshots,
    })
}

/// Stationary discounted solve `-eps u + H_num(u) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscountedRun {
    pub dy: f64,
    pub epsilon: f64,
    /// Statistics of `eps * u_eps` over the grid.
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `max_y |L(y)|` on the grid.
    pub reward_bound: f64,
    /// `max |-eps u + H_num(u)|` at the returned field.
    pub residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub field: GridField,
}

impl DiscountedRun {
    pub fn spread(&self) -> f64 {
        self.max - self.min
    }

    pub fn within_reward_bound(&self) -> bool {
        self.min.abs().max(self.max.abs()) <= self.reward_bound * (1.0 + 1e-12)
    }
}

const POLICY_ITER_CAP: usize = 200;

/// Howard policy iteration: each policy is evaluated exactly with a band LU
/// solve, then improved nodewise (ties to `A`) until it stops changing.
pub fn run_discounted(params: &ModelParams, dy: f64, epsilon: f64) -> Result<DiscountedRun> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(validation(format!(
            "discount rate must be positive, got {epsilon}"
        )));
    }
    let grid = SimplexGrid::new(params, dy)?;
    let op = UpwindOperator::new(params, &grid)?;
    let n = grid.len();
    let bw = op.bandwidth();
    let mut policy = vec![1usize; n];
    let mut u = vec![0.0; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut mat = BandMatrix::zeros(n, bw);
        let mut rhs = op.reward().to_vec();
        for (node, &c) in policy.iter().enumerate() {
            let st = op.stencils[c][node];
            mat.add(node, node, epsilon + st.total());
            for k in 0..2 {
                if st.w[k] != 0.0 {
                    mat.add(node, st.nbr[k] as usize, -st.w[k]);
                }
            }
        }
        mat.solve(&mut rhs)?;
        u = rhs;
        let next = op.policy(&u);
        if next == policy {
            break;
        }
        if iterations >= POLICY_ITER_CAP {
            return Err(Error::NoConvergence(format!(
                "policy iteration still changing after {POLICY_ITER_CAP} sweeps"
            )));
        }
        policy = next;
    }
    let mut h = vec![0.0; n];
    op.hamiltonian(&u, &mut h);
    let residual = u
        .iter()
        .zip(&h)
        .map(|(u, h)| (h - epsilon * u).abs())
        .fold(0.0, f64::max);
    let scaled: Vec<f64> = u.iter().map(|v| epsilon * v).collect();
    let (min, max) = scaled
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    Ok(DiscountedRun {
        dy,
        epsilon,
        mean: scaled.iter().sum::<f64>() / n as f64,
        min,
        max,
        reward_bound: op.reward().iter().fold(0.0, |m: f64, l| m.max(l.abs())),
        residual,
        iterations,
        field: GridField {
            values: u,
            time: None,
            epsilon: Some(epsilon),
        },
    })
}
