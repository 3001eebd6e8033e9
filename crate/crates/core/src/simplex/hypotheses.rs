//! Checkers for the structural hypotheses on `(G, F)` and the normal-velocity
//! identity behind the monotonicity of chart parameters.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::probe::{ControlSampler, RandomBangSampler};
use super::{field_b, flow_until, phi_cubic, rk4_step, DEFAULT_DT};
use crate::control::ControlLaw;
use crate::error::{Error, Result};
use crate::perron::{optimize_perron, PerronOptimum};
use crate::spectral::{irreducible, rotate_tangent, ModelParams};

use super::e_infinity;

/// `<d e_alpha / d alpha, Theta F e_alpha>` by the closed formula
/// `(l2 - l3) / ((l1 - l2)(l1 - l3)) (phi_2 F e_1)(phi_3 F e_1) <e_2 - e_1, Theta (e_3 - e_1)>`.
pub fn h4_criterion(params: &ModelParams, alpha: f64) -> Result<f64> {
    let s = params.spectrum(alpha)?;
    let [p1, p2, p3] = s.real_basis().ok_or_else(|| {
        Error::UnsupportedSpectrum("criterion needs three real eigenvalues".into())
    })?;
    let fe1 = params.f() * p1.right;
    let (l1, l2, l3) = (p1.value, p2.value, p3.value);
    let coef = (l2 - l3) / ((l1 - l2) * (l1 - l3)) * p2.left.dot(&fe1) * p3.left.dot(&fe1);
    let geom = (p2.right - p1.right).dot(&rotate_tangent(&(p3.right - p1.right), params.m()));
    Ok(coef * geom)
}

/// The same quantity with `d e_alpha / d alpha` from a Richardson-extrapolated
/// central difference.
pub fn h4_finite_difference(params: &ModelParams, alpha: f64) -> Result<f64> {
    let h = 1e-3 * alpha.max(1e-2);
    let e = |x: f64| params.spectrum(x).map(|s| s.dominant.right);
    let central =
        |h: f64| -> Result<Vector3<f64>> { Ok((e(alpha + h)? - e(alpha - h)?) / (2.0 * h)) };
    let de = (central(0.5 * h)? * 4.0 - central(h)?) / 3.0;
    let base = e(alpha)?;
    Ok(de.dot(&rotate_tangent(&(params.f() * base), params.m())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H1Report {
    pub g_irreducible: bool,
    pub f_irreducible: bool,
    /// `G + alpha F` irreducible at every grid value.
    pub combined_irreducible: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H2Report {
    pub optimum: PerronOptimum,
    pub lower: f64,
    pub upper: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H3Report {
    pub e0: [f64; 3],
    pub e_inf: Option<[f64; 3]>,
    /// 1-based indices of vanishing coordinates.
    pub e0_zero_coords: Vec<usize>,
    pub e_inf_zero_coords: Vec<usize>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H4Report {
    /// `(alpha, criterion)` on a log grid.
    pub grid: Vec<(f64, f64)>,
    /// Common sign of the criterion on the grid, 0 if it changes.
    pub sign: f64,
    /// `(alpha, formula, finite difference)` at the check points.
    pub checks: Vec<(f64, f64, f64)>,
    pub max_relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H5Run {
    pub start: &'static str,
    pub beta: f64,
    pub phi_sign: f64,
    pub final_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H5Report {
    pub runs: Vec<H5Run>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub h1: H1Report,
    pub h2: H2Report,
    pub h3: H3Report,
    pub h4: H4Report,
    pub h5: H5Report,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.h1.passed && self.h2.passed && self.h3.passed && self.h4.passed && self.h5.passed
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn zero_coords(y: &Vector3<f64>) -> Vec<usize> {
    let scale = y.abs().max();
    (0..3)
        .filter(|&i| y[i].abs() <= 1e-12 * scale)
        .map(|i| i + 1)
        .collect()
}

fn sign_of(values: impl Iterator<Item = f64>, floor: f64) -> f64 {
    let mut sign = 0.0;
    for v in values.filter(|v| v.abs() > floor) {
        if sign == 0.0 {
            sign = v.signum();
        } else if v.signum() != sign {
            return 0.0;
        }
    }
    sign
}

fn check_h4(params: &ModelParams) -> Result<H4Report> {
    let grid = log_grid(1e-2, 1e2, 81)
        .into_iter()
        .map(|a| Ok((a, h4_criterion(params, a)?)))
        .collect::<Result<Vec<_>>>()?;
    let all_nonzero = grid.iter().all(|(_, v)| *v != 0.0);
    let sign = if all_nonzero {
        sign_of(grid.iter().map(|g| g.1), 0.0)
    } else {
        0.0
    };
    let checks = log_grid(1e-2, 1e2, 10)
        .into_iter()
        .map(|a| {
            Ok((
                a,
                h4_criterion(params, a)?,
                h4_finite_difference(params, a)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_relative_error = checks
        .iter()
        .map(|(_, f, d)| (f - d).abs() / f.abs())
        .fold(0.0, f64::max);
    Ok(H4Report {
        passed: sign != 0.0 && max_relative_error <= 1e-5,
        grid,
        sign,
        checks,
        max_relative_error,
    })
}

fn h5_run(
    params: &ModelParams,
    label: &'static str,
    start: &Vector3<f64>,
    beta: f64,
) -> Result<H5Run> {
    let target = params.spectrum(beta)?.dominant.right;
    // One RK4 step of arc length about 1e-6; a straight step along b would
    // miss the curvature of paths that leave the start tangentially.
    let b = field_b(params, start, beta);
    let seeded = rk4_step(params, &beta, 0.0, start, 1e-6 / b.norm(), 1.0).0;
    let seeded = seeded / params.m().dot(&seeded);
    let (pts, _, _) = flow_until(params, &seeded, beta, 1.0, DEFAULT_DT, 100.0, |y| {
        (y - target).norm() <= 1e-6
    });
    Ok(H5Run {
        start: label,
        beta,
        phi_sign: sign_of(pts.iter().map(|y| phi_cubic(params, y)), 1e-13),
        final_distance: (pts.last().expect("non-empty") - target).norm(),
    })
}

/// Evaluates H1 to H5 for `params`; `delta0` sets the spread of the constant
/// controls used for H5 around `A` (from `e_0`) and around `a` (from `e_inf`).
pub fn h_checks(params: &ModelParams, delta0: f64) -> Result<HypothesisReport> {
    let (a, big_a) = (params.lower(), params.upper());
    let combined = log_grid(1e-3, 1e3, 25)
        .into_iter()
        .all(|x| irreducible(&params.matrix(x)));
    let g_irr = irreducible(params.g());
    let f_irr = irreducible(params.f());
    let h1 = H1Report {
        g_irreducible: g_irr,
        f_irreducible: f_irr,
        combined_irreducible: combined,
        passed: !g_irr && !f_irr && combined,
    };

    let optimum = optimize_perron(params)?;
    let h2 = H2Report {
        optimum,
        lower: a,
        upper: big_a,
        passed: optimum.is_interior() && a < optimum.alpha() && optimum.alpha() < big_a,
    };

    let e0 = params.spectrum(0.0)?.dominant.right;
    let e_inf = e_infinity(params);
    let e0_zero_coords = zero_coords(&e0);
    let e_inf_zero_coords = e_inf.as_ref().map(zero_coords).unwrap_or_default();
    let h3 = H3Report {
        e0: [e0[0], e0[1], e0[2]],
        e_inf: e_inf.map(|e| [e[0], e[1], e[2]]),
        passed: !e0_zero_coords.is_empty() && !e_inf_zero_coords.is_empty(),
        e0_zero_coords,
        e_inf_zero_coords,
    };

    let h4 = check_h4(params)?;

    let mut runs = Vec::new();
    for beta in [big_a - 0.5 * delta0, big_a, big_a + 0.5 * delta0] {
        runs.push(h5_run(params, "e0", &e0, beta)?);
    }
    if let Some(einf) = e_inf {
        for beta in [a - 0.5 * delta0, a, a + 0.5 * delta0] {
            runs.push(h5_run(params, "e_inf", &einf, beta)?);
        }
    }
    let h5 = H5Report {
        passed: e_inf.is_some()
            && runs
                .iter()
                .all(|r| r.phi_sign != 0.0 && r.final_distance <= 1e-6),
        runs,
    };
    Ok(HypothesisReport { h1, h2, h3, h4, h5 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub trajectories: usize,
    pub samples: usize,
    pub mismatches: usize,
    pub passed: bool,
}

/// Along random trajectories, compares the sign of the finite-difference
/// normal velocity `<y', Theta b(y, c)>` with the sign of
/// `(c - alpha(t)) phi(y)`, for the reference controls `c = A + delta` and
/// `c = a - delta`. Samples where the predicted value is below `1e-5` or the
/// control switches inside the five-point difference stencil are skipped.
pub fn monotonicity_probe(
    params: &ModelParams,
    delta: f64,
    trajectories: usize,
    horizon: f64,
    seed: u64,
) -> MonotonicityReport {
    let sampler = RandomBangSampler::for_model(params);
    let dt = DEFAULT_DT;
    let mut samples = 0;
    let mut mismatches = 0;
    for k in 0..trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let w: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        let x = Vector3::from(w);
        let mut y = x / params.m().dot(&x);
        let control = sampler.sample(&mut rng, horizon);
        let n = (horizon / dt) as usize;
        let mut path = Vec::with_capacity(n + 1);
        let mut ctrl = Vec::with_capacity(n + 1);
        path.push(y);
        ctrl.push(control.eval(0.0));
        for s in 0..n {
            y = rk4_step(params, &control, s as f64 * dt, &y, dt, 1.0).0;
            y /= params.m().dot(&y);
            path.push(y);
            ctrl.push(control.control((s + 1) as f64 * dt, &y));
        }
        for s in 2..n - 1 {
            let alpha = ctrl[s];
            // The control must be constant over [t - 2 dt, t + 2 dt].
            let steady = (s - 2..=s + 1).all(|j| ctrl[j] == alpha)
                && control.eval((s as f64 + 1.999) * dt) == alpha;
            if !steady {
                continue;
            }
            let velocity =
                (path[s - 2] - path[s + 2] + (path[s + 1] - path[s - 1]) * 8.0) / (12.0 * dt);
            for c in [params.upper() + delta, params.lower() - delta] {
                let bc = field_b(params, &path[s], c);
                let predicted = (c - alpha) * phi_cubic(params, &path[s]);
                if predicted.abs() < 1e-5 {
                    continue;
                }
                let observed = velocity.dot(&rotate_tangent(&bc, params.m()));
                samples += 1;
                if observed.signum() != predicted.signum() {
                    mismatches += 1;
                }
            }
        }
    }
    MonotonicityReport {
        trajectories,
        samples,
        mismatches,
        passed: samples > 0 && mismatches == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h4_formula_matches_finite_difference() {
        let p = ModelParams::reference();
        let f = h4_criterion(&p, 1.0).unwrap();
        let d = h4_finite_difference(&p, 1.0).unwrap();
        assert!(f < 0.0);
        assert!((f - d).abs() <= 1e-5 * f.abs(), "{f} vs {d}");
    }

    #[test]
    fn running_example_hypotheses() {
        let p = ModelParams::reference();
        let r = h_checks(&p, 0.1).unwrap();
        assert!(r.h1.passed && r.h2.passed && r.h3.passed, "{r:?}");
        assert_eq!(r.h3.e0_zero_coords, vec![1, 2]);
        assert_eq!(r.h3.e_inf_zero_coords, vec![2, 3]);
        assert_eq!(r.h4.sign, -1.0);
        assert!(r.h4.passed, "{:?}", r.h4.checks);
        assert!(r.h5.passed, "{:?}", r.h5);
    }

    #[test]
    fn monotonicity_identity() {
        let p = ModelParams::reference();
        let r = monotonicity_probe(&p, 0.1, 3, 5.0, 5);
        assert!(r.passed, "{r:?}");
    }
}
