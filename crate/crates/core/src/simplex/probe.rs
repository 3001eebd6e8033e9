//! Falsification probe for the attractiveness of `Z_{+2 delta}`.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use super::ergodic::{build_region, Region};
use super::{rk4_step, DEFAULT_DT};
use crate::control::{ControlSignal, Interp};
use crate::error::{validation, Result};
use crate::spectral::ModelParams;

/// Longest time a probe trajectory is followed.
pub const PROBE_T_MAX: f64 = 100.0;

/// Draws random open-loop controls on `[0, horizon]`.
pub trait ControlSampler: Sync {
    fn sample(&self, rng: &mut ChaCha8Rng, horizon: f64) -> ControlSignal;
}

/// Piecewise-constant controls with exponential dwell times and values
/// uniform in `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomBangSampler {
    pub lower: f64,
    pub upper: f64,
    pub mean_dwell: f64,
}

impl RandomBangSampler {
    /// Values in the model's control bounds, unit mean dwell time.
    pub fn for_model(params: &ModelParams) -> Self {
        RandomBangSampler {
            lower: params.lower(),
            upper: params.upper(),
            mean_dwell: 1.0,
        }
    }
}

impl ControlSampler for RandomBangSampler {
    fn sample(&self, rng: &mut ChaCha8Rng, horizon: f64) -> ControlSignal {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut t = 0.0;
        while t <= horizon {
            times.push(t);
            values.push(rng.gen_range(self.lower..=self.upper));
            let dwell: f64 = Exp1.sample(rng);
            t += self.mean_dwell * dwell.max(1e-9);
        }
        ControlSignal::sampled(times, values, Interp::PiecewiseConstant)
            .expect("strictly increasing sample times")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub trials: usize,
    pub horizon: f64,
    /// First entry time per trial; `None` if the trajectory never entered.
    pub entry_times: Vec<Option<f64>>,
    /// Whether the trajectory was seen outside after its first entry.
    pub exited: Vec<bool>,
    pub max_entry: f64,
    pub mean_entry: f64,
    pub all_entered: bool,
    pub none_exited: bool,
}

fn uniform_simplex_point(params: &ModelParams, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let w: [f64; 3] = std::array::from_fn(|_| Exp1.sample(rng));
    let total: f64 = w.iter().sum();
    let m = params.m();
    Vector3::new(
        w[0] / total / m[0],
        w[1] / total / m[1],
        w[2] / total / m[2],
    )
}

/// Runs `n_trials` random-control trajectories from uniform random starts
/// and records when each first enters `region` and whether it leaves again.
/// Trial `k` draws from ChaCha stream `k` of `seed`, so results do not depend
/// on scheduling.
pub fn probe_region(
    params: &ModelParams,
    region: &Region,
    n_trials: usize,
    sampler: &dyn ControlSampler,
    seed: u64,
    horizon: f64,
) -> ProbeReport {
    let outcomes: Vec<(Option<f64>, bool)> = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut y = uniform_simplex_point(params, &mut rng);
            let control = sampler.sample(&mut rng, horizon);
            let n = (horizon / DEFAULT_DT).ceil() as usize;
            let dt = horizon / n as f64;
            let mut entry = region.contains(&y).then_some(0.0);
            let mut exited = false;
            for step in 0..n {
                let t = step as f64 * dt;
                y = rk4_step(params, &control, t, &y, dt, 1.0).0;
                y /= params.m().dot(&y);
                let inside = region.contains(&y);
                match entry {
                    None if inside => entry = Some(t + dt),
                    Some(_) if !inside => exited = true,
                    _ => {}
                }
            }
            (entry, exited)
        })
        .collect();
    let entered: Vec<f64> = outcomes.iter().filter_map(|(e, _)| *e).collect();
    ProbeReport {
        trials: n_trials,
        horizon,
        max_entry: entered.iter().copied().fold(0.0, f64::max),
        mean_entry: if entered.is_empty() {
            f64::NAN
        } else {
            entered.iter().sum::<f64>() / entered.len() as f64
        },
        all_entered: entered.len() == n_trials,
        none_exited: outcomes.iter().all(|(_, x)| !x),
        entry_times: outcomes.iter().map(|(e, _)| *e).collect(),
        exited: outcomes.iter().map(|(_, x)| *x).collect(),
    }
}

/// [`probe_region`] on `Z_{+2 delta}` with horizon [`PROBE_T_MAX`].
pub fn attractiveness_probe(
    params: &ModelParams,
    delta: f64,
    n_trials: usize,
    sampler: &dyn ControlSampler,
    seed: u64,
) -> Result<ProbeReport> {
    if !(delta > 0.0) || !(params.lower() - 2.0 * delta > 0.0) {
        return Err(validation(format!(
            "probe offset must satisfy 0 < 2 delta < a, got {delta}"
        )));
    }
    let region = build_region(
        params,
        params.lower() - 2.0 * delta,
        params.upper() + 2.0 * delta,
    )?;
    Ok(probe_region(
        params,
        &region,
        n_trials,
        sampler,
        seed,
        PROBE_T_MAX,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_respects_bounds_and_is_seeded() {
        let s = RandomBangSampler {
            lower: 1.0,
            upper: 6.0,
            mean_dwell: 1.0,
        };
        let draw = |seed| s.sample(&mut ChaCha8Rng::seed_from_u64(seed), 50.0);
        let a = draw(3);
        assert_eq!(a, draw(3));
        assert_ne!(a, draw(4));
        let (lo, hi) = a.range();
        assert!(lo >= 1.0 && hi <= 6.0);
    }

    #[test]
    fn uniform_points_lie_on_simplex() {
        let p = ModelParams::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let y = uniform_simplex_point(&p, &mut rng);
            assert!((p.m().dot(&y) - 1.0).abs() < 1e-14 && y.min() >= 0.0);
        }
    }

    #[test]
    fn small_probe_is_reproducible() {
        let p = ModelParams::reference();
        let region = build_region(&p, 0.8, 6.2).unwrap();
        let s = RandomBangSampler::for_model(&p);
        let r1 = probe_region(&p, &region, 4, &s, 11, 20.0);
        let r2 = probe_region(&p, &region, 4, &s, 11, 20.0);
        assert_eq!(r1, r2);
        assert!(r1.all_entered && r1.none_exited, "{r1:?}");
    }
}
