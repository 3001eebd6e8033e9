//! Dynamics projected on the simplex `S = { y >= 0 : <m, y> = 1 }`.
//!
//! Points of `S` are plain `Vector3<f64>` values; [`project`] and
//! [`check_on_simplex`] are the entry points that establish the invariant.
//! Planar geometry (polygons, winding numbers) works in the chart `(y1, y2)`,
//! whose orientation agrees with the rotation `Theta` about `m`.

mod ergodic;
mod hypotheses;
mod polygon;
mod probe;

use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;

use crate::control::ControlLaw;
use crate::error::{validation, Error, Result};
use crate::spectral::{rotate_tangent, ModelParams};

pub use ergodic::{
    build_ergodic_set, build_region, connect, stability_check, BoundaryCurve, ConnectPlan,
    ErgodicSet, Region, StabilityReport,
};
pub use hypotheses::{
    h4_criterion, h4_finite_difference, h_checks, monotonicity_probe, HypothesisReport,
    MonotonicityReport,
};
pub use polygon::Polygon;
pub use probe::{attractiveness_probe, ControlSampler, ProbeReport, RandomBangSampler};

/// Default RK4 step on the simplex.
pub const DEFAULT_DT: f64 = 1e-3;

/// `x / <m, x>`.
pub fn project(params: &ModelParams, x: &Vector3<f64>) -> Result<Vector3<f64>> {
    if x.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(validation("projection needs a nonnegative finite vector"));
    }
    let mass = params.m().dot(x);
    if mass == 0.0 {
        return Err(validation("cannot project the zero vector"));
    }
    Ok(x / mass)
}

pub fn check_on_simplex(params: &ModelParams, y: &Vector3<f64>) -> Result<()> {
    let mass = params.m().dot(y);
    if (mass - 1.0).abs() > 1e-9 || y.iter().any(|&v| v < -1e-12) {
        return Err(validation(format!(
            "point ({}, {}, {}) is not on the simplex (<m, y> = {mass})",
            y[0], y[1], y[2]
        )));
    }
    Ok(())
}

/// Running reward `L(y) = <m, G y>`.
pub fn reward(params: &ModelParams, y: &Vector3<f64>) -> f64 {
    params.m().dot(&(params.g() * y))
}

/// `b(y, alpha) = (G + alpha F) y - <m, G y> y`.
pub fn field_b(params: &ModelParams, y: &Vector3<f64>, alpha: f64) -> Vector3<f64> {
    params.g() * y + params.f() * y * alpha - y * reward(params, y)
}

/// `phi(y) = <G y - <m, G y> y, Theta F y>`; independent of the control.
pub fn phi_cubic(params: &ModelParams, y: &Vector3<f64>) -> f64 {
    let drift = field_b(params, y, 0.0);
    drift.dot(&rotate_tangent(&(params.f() * y), params.m()))
}

/// Chart coordinates `(y1, y2)`.
pub fn to_chart(y: &Vector3<f64>) -> [f64; 2] {
    [y[0], y[1]]
}

/// Inverse of [`to_chart`]: `y3 = (1 - m1 y1 - m2 y2) / m3`.
pub fn from_chart(params: &ModelParams, c: [f64; 2]) -> Vector3<f64> {
    let m = params.m();
    Vector3::new(c[0], c[1], (1.0 - m[0] * c[0] - m[1] * c[1]) / m[2])
}

/// One classical RK4 step of `y' = sign * b(y, alpha(t, y))`. Returns the new
/// point and the control applied at the start of the step.
pub fn rk4_step<L: ControlLaw + ?Sized>(
    params: &ModelParams,
    law: &L,
    t: f64,
    y: &Vector3<f64>,
    dt: f64,
    sign: f64,
) -> (Vector3<f64>, f64) {
    let a0 = law.control(t, y);
    let held = law.hold_per_step();
    let ctrl = |s: f64, z: &Vector3<f64>| if held { a0 } else { law.control(s, z) };
    let h = 0.5 * dt;
    let k1 = field_b(params, y, a0) * sign;
    let y2 = y + k1 * h;
    let k2 = field_b(params, &y2, ctrl(t + h, &y2)) * sign;
    let y3 = y + k2 * h;
    let k3 = field_b(params, &y3, ctrl(t + h, &y3)) * sign;
    let y4 = y + k3 * dt;
    let k4 = field_b(params, &y4, ctrl(t + dt, &y4)) * sign;
    (y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0), a0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrateOptions {
    pub dt: f64,
    /// Rescale to `<m, y> = 1` after every step.
    pub renormalize: bool,
    /// Keep every `record_every`-th step (the final point is always kept).
    pub record_every: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            dt: DEFAULT_DT,
            renormalize: true,
            record_every: 1,
        }
    }
}

/// A sampled path on the simplex with its control trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub points: Vec<Vector3<f64>>,
    pub controls: Vec<f64>,
    pub phi: Vec<f64>,
    /// `int_0^T L(y(t)) dt` by the trapezoid rule on every step.
    pub reward_integral: f64,
    /// Largest `|<m, y> - 1|` produced by a single step, before renormalization.
    pub max_step_drift: f64,
    /// Accumulated `|<m, y> - 1|` divided by the horizon.
    pub drift_per_unit_time: f64,
    pub renormalized: bool,
    pub min_coordinate: f64,
}

impl TrajectoryRecord {
    pub fn final_point(&self) -> Vector3<f64> {
        *self.points.last().expect("non-empty trajectory")
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("non-empty trajectory")
    }

    /// `(1/T) int_0^T L(y(t)) dt`.
    pub fn average_reward(&self) -> f64 {
        self.reward_integral / self.horizon()
    }

    /// CSV with columns `t,y1,y2,y3,alpha,phi`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_path_csv(&self.times, &self.points, &self.controls, &self.phi, out)
    }
}

pub(crate) fn write_path_csv<W: Write>(
    times: &[f64],
    points: &[Vector3<f64>],
    controls: &[f64],
    phi: &[f64],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "t,y1,y2,y3,alpha,phi")?;
    for k in 0..points.len() {
        let y = points[k];
        writeln!(
            out,
            "{},{},{},{},{},{}",
            times[k], y[0], y[1], y[2], controls[k], phi[k]
        )?;
    }
    Ok(())
}

/// RK4 integration of `y' = b(y, alpha)` on `[0, t_end]`.
pub fn integrate<L: ControlLaw + ?Sized>(
    params: &ModelParams,
    y0: &Vector3<f64>,
    law: &L,
    t_end: f64,
    opts: IntegrateOptions,
) -> Result<TrajectoryRecord> {
    check_on_simplex(params, y0)?;
    if !(opts.dt > 0.0) || !(t_end >= 0.0) || opts.record_every == 0 {
        return Err(validation(
            "integration needs dt > 0, t_end >= 0 and record_every >= 1",
        ));
    }
    let n = (t_end / opts.dt).ceil() as usize;
    let dt = if n == 0 { 0.0 } else { t_end / n as f64 };
    let m = *params.m();
    let mut y = *y0;
    let mut rec = TrajectoryRecord {
        times: vec![0.0],
        points: vec![y],
        controls: vec![law.control(0.0, &y)],
        phi: vec![phi_cubic(params, &y)],
        reward_integral: 0.0,
        max_step_drift: 0.0,
        drift_per_unit_time: 0.0,
        renormalized: opts.renormalize,
        min_coordinate: y.min(),
    };
    let mut total_drift = 0.0;
    for k in 0..n {
        let t = k as f64 * dt;
        let (next, alpha) = rk4_step(params, law, t, &y, dt, 1.0);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("simplex trajectory"));
        }
        let drift = (m.dot(&next) - 1.0).abs();
        rec.max_step_drift = rec.max_step_drift.max(drift);
        total_drift += drift;
        let next = if opts.renormalize {
            next / m.dot(&next)
        } else {
            next
        };
        rec.min_coordinate = rec.min_coordinate.min(next.min());
        if next.min() < -1e-6 {
            return Err(Error::LeftSimplex {
                t: t + dt,
                min_coord: next.min(),
            });
        }
        rec.reward_integral += 0.5 * dt * (reward(params, &y) + reward(params, &next));
        y = next;
        if (k + 1) % opts.record_every == 0 || k + 1 == n {
            let t1 = (k + 1) as f64 * dt;
            rec.times.push(t1);
            rec.points.push(y);
            // Control in force over the step that ended here.
            rec.controls.push(alpha);
            rec.phi.push(phi_cubic(params, &y));
        }
    }
    if t_end > 0.0 {
        rec.drift_per_unit_time = total_drift / t_end;
    }
    Ok(rec)
}

/// Flow with a constant control (forward for `sign = 1`, backward for
/// `sign = -1`) until `stop` holds, the point leaves the simplex, or `t_max`.
/// Returns the visited points and times; the last entry is where it stopped.
pub(crate) fn flow_until(
    params: &ModelParams,
    y0: &Vector3<f64>,
    alpha: f64,
    sign: f64,
    dt: f64,
    t_max: f64,
    stop: impl Fn(&Vector3<f64>) -> bool,
) -> (Vec<Vector3<f64>>, Vec<f64>, bool) {
    let m = *params.m();
    let mut y = *y0;
    let mut pts = vec![y];
    let mut times = vec![0.0];
    let mut t = 0.0;
    while t < t_max {
        if stop(&y) {
            return (pts, times, true);
        }
        let (next, _) = rk4_step(params, &alpha, t, &y, dt, sign);
        let next = next / m.dot(&next);
        if next.min() < 0.0 || next.iter().any(|v| !v.is_finite()) {
            return (pts, times, false);
        }
        y = next;
        t += dt;
        pts.push(y);
        times.push(t);
    }
    let done = stop(&y);
    (pts, times, done)
}

/// Perron eigenvector curve `Phi_0`: `(alpha, e_alpha)` at `alpha = 0` and on
/// `n` log-spaced values up to `alpha_max`, followed by `e_inf` (with
/// `alpha = inf`) when `F` has a nonnegative kernel vector.
pub fn trace_phi0(
    params: &ModelParams,
    alpha_max: f64,
    n: usize,
) -> Result<Vec<(f64, Vector3<f64>)>> {
    if n < 2 || !(alpha_max > 0.0) {
        return Err(validation("trace_phi0 needs n >= 2 and alpha_max > 0"));
    }
    let lo = (alpha_max * 1e-6).min(1e-3);
    let mut alphas = vec![0.0];
    alphas.extend((0..n).map(|k| lo * (alpha_max / lo).powf(k as f64 / (n - 1) as f64)));
    let mut out = alphas
        .into_iter()
        .map(|a| Ok((a, params.spectrum(a)?.dominant.right)))
        .collect::<Result<Vec<_>>>()?;
    if let Some(e) = e_infinity(params) {
        out.push((f64::INFINITY, e));
    }
    Ok(out)
}

/// Normalized nonnegative kernel vector of `F`, when `F` has one.
pub fn e_infinity(params: &ModelParams) -> Option<Vector3<f64>> {
    let f = params.f();
    let rows = [0, 1, 2].map(|i| f.row(i).transpose());
    let cands = [
        rows[0].cross(&rows[1]),
        rows[0].cross(&rows[2]),
        rows[1].cross(&rows[2]),
    ];
    let k = cands
        .into_iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))?;
    if k.norm() <= 1e-12 * f.norm().powi(2) {
        return None;
    }
    let e = k / params.m().dot(&k);
    let tol = 1e-12 * e.abs().max();
    if e.iter().all(|&v| v >= -tol) {
        Some(e.map(|v| v.max(0.0)))
    } else {
        None
    }
}

/// CSV with columns `alpha,y1,y2,y3,phi` for a traced `Phi_0`.
pub fn write_phi0_csv<W: Write>(
    params: &ModelParams,
    curve: &[(f64, Vector3<f64>)],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "alpha,y1,y2,y3,phi")?;
    for (a, y) in curve {
        writeln!(
            out,
            "{a},{},{},{},{}",
            y[0],
            y[1],
            y[2],
            phi_cubic(params, y)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlSignal;
    use crate::perron::lambda_p;

    #[test]
    fn projection_examples() {
        let p = ModelParams::reference();
        assert_eq!(
            project(&p, &Vector3::new(1.0, 0.0, 0.0)).unwrap(),
            Vector3::new(1.0, 0.0, 0.0)
        );
        let e0 = project(&p, &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((e0 - Vector3::new(0.0, 0.0, 1.0 / 3.0)).norm() < 1e-16);
        let c = project(&p, &Vector3::new(1.0, 1.0, 1.0)).unwrap();
        assert!((c - Vector3::repeat(1.0 / 6.0)).norm() < 1e-16);
        assert!(project(&p, &Vector3::zeros()).is_err());
    }

    #[test]
    fn field_at_eigenvectors() {
        let p = ModelParams::reference();
        for beta in [0.5, 1.0, 3.35, 6.0] {
            let e = p.spectrum(beta).unwrap().dominant.right;
            assert!(field_b(&p, &e, beta).norm() < 1e-12);
            assert!(phi_cubic(&p, &e).abs() < 1e-9);
            for alpha in [0.0, 2.0, 7.0] {
                let expected = p.f() * e * (alpha - beta);
                assert!((field_b(&p, &e, alpha) - expected).norm() < 1e-12);
            }
        }
        let e0 = Vector3::new(0.0, 0.0, 1.0 / 3.0);
        assert!(phi_cubic(&p, &e0).abs() < 1e-15);
    }

    #[test]
    fn field_is_tangent_and_affine() {
        let p = ModelParams::reference();
        let y = project(&p, &Vector3::new(0.2, 0.5, 0.1)).unwrap();
        for alpha in [0.0, 1.0, 4.2] {
            let b = field_b(&p, &y, alpha);
            assert!(p.m().dot(&b).abs() < 1e-12);
            assert!((b - field_b(&p, &y, 0.0) - p.f() * y * alpha).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_control_converges() {
        let p = ModelParams::reference();
        let y0 = project(&p, &Vector3::new(1.0, 1.0, 1.0)).unwrap();
        let rec = integrate(&p, &y0, &2.0, 30.0, IntegrateOptions::default()).unwrap();
        let e = p.spectrum(2.0).unwrap().dominant.right;
        assert!((rec.final_point() - e).norm() < 1e-6);
        assert!(rec.max_step_drift < 1e-12);
        assert!((rec.average_reward() - lambda_p(&p, 2.0).unwrap()).abs() < 0.05);

        let still = integrate(&p, &e, &2.0, 1.0, IntegrateOptions::default()).unwrap();
        assert!((still.final_point() - e).norm() < 1e-9);
    }

    #[test]
    fn recording_and_csv() {
        let p = ModelParams::reference();
        let y0 = project(&p, &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let law = ControlSignal::square(1.0).unwrap().perturb(3.5, 2.5);
        let opts = IntegrateOptions {
            record_every: 10,
            ..Default::default()
        };
        let rec = integrate(&p, &y0, &law, 1.0, opts).unwrap();
        assert_eq!(rec.points.len(), 101);
        assert_eq!(rec.controls[1], 6.0);
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("t,y1,y2,y3,alpha,phi\n0,1,0,0,"));
    }

    #[test]
    fn phi0_endpoints() {
        let p = ModelParams::reference();
        let curve = trace_phi0(&p, 1e3, 50).unwrap();
        assert!((curve[0].1 - Vector3::new(0.0, 0.0, 1.0 / 3.0)).norm() < 1e-12);
        let (a, last) = curve.last().unwrap();
        assert!(a.is_infinite());
        assert!((last - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        for w in curve.windows(2) {
            assert!((w[0].1 - w[1].1).norm() > 0.0);
        }
        assert!(curve.iter().all(|(_, y)| phi_cubic(&p, y).abs() <= 1e-8));
    }

    #[test]
    fn chart_round_trip() {
        let p = ModelParams::reference();
        let y = project(&p, &Vector3::new(0.3, 0.2, 0.7)).unwrap();
        assert!((from_chart(&p, to_chart(&y)) - y).norm() < 1e-15);
    }
}
