//! The ergodic set `Z_0` enclosed by the `a`-trajectory from `e_A` and the
//! `A`-trajectory from `e_a`, its offsets, stability and bang-bang
//! controllability.

use std::io::Write;

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::Rng;
use serde::Serialize;

use super::polygon::Polygon;
use super::{
    check_on_simplex, field_b, flow_until, from_chart, phi_cubic, rk4_step, to_chart,
    write_path_csv,
};
use crate::control::{ControlSignal, Interp};
use crate::error::{validation, Error, Result};
use crate::perron::optimize_perron;
use crate::spectral::{rotate_tangent, ModelParams};

/// Curves stop once within this distance of their limit eigenvector.
pub const ENDPOINT_TOL: f64 = 1e-6;
/// Longest time a boundary curve may take to converge.
pub const CURVE_T_MAX: f64 = 200.0;
const CURVE_DT: f64 = 1e-3;
/// Vertex spacing of membership polygons, in chart units.
const POLYGON_SPACING: f64 = 5e-4;

/// Trajectory with constant control `control` from `e_start` to `e_target`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryCurve {
    pub control: f64,
    pub start_alpha: f64,
    pub target_alpha: f64,
    pub times: Vec<f64>,
    #[serde(skip)]
    pub points: Vec<Vector3<f64>>,
    /// Distance from the last point to `e_target`.
    pub endpoint_error: f64,
    /// Sign of `phi` along the curve after its first step; 0 if it changes.
    pub phi_sign: f64,
}

impl BoundaryCurve {
    fn trace(params: &ModelParams, start_alpha: f64, control: f64) -> Result<Self> {
        let start = params.spectrum(start_alpha)?.dominant.right;
        let target = params.spectrum(control)?.dominant.right;
        let (points, times, done) =
            flow_until(params, &start, control, 1.0, CURVE_DT, CURVE_T_MAX, |y| {
                (y - target).norm() <= ENDPOINT_TOL || field_b(params, y, control).norm() <= 1e-9
            });
        if !done {
            return Err(Error::Geometry(format!(
                "trajectory from e_{start_alpha} with control {control} did not reach e_{control} within t = {CURVE_T_MAX}"
            )));
        }
        let endpoint_error = (points.last().expect("non-empty") - target).norm();
        Ok(BoundaryCurve {
            control,
            start_alpha,
            target_alpha: control,
            phi_sign: constant_sign(points.iter().skip(1).map(|y| phi_cubic(params, y))),
            times,
            points,
            endpoint_error,
        })
    }

    /// CSV with columns `t,y1,y2,y3,alpha,phi`.
    pub fn write_csv<W: Write>(&self, params: &ModelParams, out: W) -> std::io::Result<()> {
        let controls = vec![self.control; self.points.len()];
        let phi: Vec<f64> = self.points.iter().map(|y| phi_cubic(params, y)).collect();
        write_path_csv(&self.times, &self.points, &controls, &phi, out)
    }
}

fn constant_sign(values: impl Iterator<Item = f64>) -> f64 {
    let mut sign = 0.0;
    for v in values.filter(|v| v.abs() > 1e-12) {
        if sign == 0.0 {
            sign = v.signum();
        } else if v.signum() != sign {
            return 0.0;
        }
    }
    sign
}

/// Decimated chart polyline with the time stamp of every kept vertex.
fn decimate(points: &[Vector3<f64>], times: &[f64], spacing: f64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let mut verts = vec![to_chart(&points[0])];
    let mut stamps = vec![times[0]];
    for (p, &t) in points.iter().zip(times).skip(1) {
        let c = to_chart(p);
        let last = verts.last().expect("non-empty");
        if (c[0] - last[0]).hypot(c[1] - last[1]) >= spacing {
            verts.push(c);
            stamps.push(t);
        }
    }
    let end = to_chart(points.last().expect("non-empty"));
    if *verts.last().expect("non-empty") != end {
        verts.push(end);
        stamps.push(*times.last().expect("non-empty"));
    }
    (verts, stamps)
}

/// Region enclosed by the `low`-trajectory from `e_high` and the
/// `high`-trajectory from `e_low`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub low: f64,
    pub high: f64,
    /// Control `low`, from `e_high` to `e_low`.
    pub lower: BoundaryCurve,
    /// Control `high`, from `e_low` to `e_high`.
    pub upper: BoundaryCurve,
    polygon: Polygon,
}

impl Region {
    pub fn contains(&self, y: &Vector3<f64>) -> bool {
        self.polygon.contains(to_chart(y))
    }

    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }

    /// `+1` when the boundary loop (lower curve, then upper curve) turns
    /// counter-clockwise about `m`, `-1` otherwise.
    pub fn orientation(&self) -> f64 {
        self.polygon.signed_area().signum()
    }

    /// The two boundary curves lie strictly on opposite sides of `Phi_0`.
    pub fn opposite_sides(&self) -> bool {
        self.lower.phi_sign * self.upper.phi_sign < 0.0
    }

    /// Uniform sample from the region by rejection in the chart plane.
    pub fn sample<R: Rng + ?Sized>(&self, params: &ModelParams, rng: &mut R) -> Vector3<f64> {
        let (lo, hi) = self.polygon.bounds();
        loop {
            let c = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
            let y = from_chart(params, c);
            if y.min() >= 0.0 && self.polygon.contains(c) {
                return y;
            }
        }
    }
}

pub fn build_region(params: &ModelParams, low: f64, high: f64) -> Result<Region> {
    if !(low > 0.0 && low < high) {
        return Err(validation(format!(
            "region needs 0 < low < high, got [{low}, {high}]"
        )));
    }
    let lower = BoundaryCurve::trace(params, high, low)?;
    let upper = BoundaryCurve::trace(params, low, high)?;
    let (mut verts, _) = decimate(&lower.points, &lower.times, POLYGON_SPACING);
    let (up, _) = decimate(&upper.points, &upper.times, POLYGON_SPACING);
    verts.extend(up.into_iter().skip(1));
    verts.pop();
    Ok(Region {
        low,
        high,
        lower,
        upper,
        polygon: Polygon::new(verts),
    })
}

/// `Z_0` with the shrunk set `Z_{-delta}` and the enlarged set `Z_{+2 delta}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicSet {
    pub delta: f64,
    pub z0: Region,
    pub z_minus: Region,
    pub z_plus2: Region,
}

pub fn build_ergodic_set(params: &ModelParams, delta: f64) -> Result<ErgodicSet> {
    let (a, big_a) = (params.lower(), params.upper());
    if !(delta >= 0.0) || !(a - 2.0 * delta > 0.0) || !(a + delta < big_a - delta) {
        return Err(validation(format!(
            "offset {delta} must satisfy a - 2 delta > 0 and a + delta < A - delta"
        )));
    }
    let opt = optimize_perron(params)?;
    if !opt.is_interior() || !(a < opt.alpha() && opt.alpha() < big_a) {
        return Err(validation(format!(
            "the Perron maximizer {} is not interior to [{a}, {big_a}]",
            opt.alpha()
        )));
    }
    Ok(ErgodicSet {
        delta,
        z0: build_region(params, a, big_a)?,
        z_minus: build_region(params, a + delta, big_a - delta)?,
        z_plus2: build_region(params, a - 2.0 * delta, big_a + 2.0 * delta)?,
    })
}

impl ErgodicSet {
    /// Writes `<prefix>_{z0,zminus,zplus2}_{lower,upper}.csv` into `dir`.
    pub fn write_csvs(&self, params: &ModelParams, dir: &std::path::Path) -> std::io::Result<()> {
        for (name, region) in [
            ("z0", &self.z0),
            ("zminus", &self.z_minus),
            ("zplus2", &self.z_plus2),
        ] {
            for (side, curve) in [("lower", &region.lower), ("upper", &region.upper)] {
                let file = std::fs::File::create(dir.join(format!("{name}_{side}.csv")))?;
                curve.write_csv(params, std::io::BufWriter::new(file))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub samples: usize,
    /// Largest `<b(z, alpha), n(z)>` over samples and `alpha in {a, A}`.
    pub worst_value: f64,
    pub worst_point: [f64; 3],
    pub worst_control: f64,
    /// Largest `|<b(z, c), n(z)>|` for the curve's own control `c`.
    pub tangency_defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks that `b(z, a)` and `b(z, A)` point into the region at `samples`
/// boundary points, using the outward unit normal `+/- Theta b(z, c) / |b|`.
pub fn stability_check(
    params: &ModelParams,
    region: &Region,
    samples: usize,
    tol: f64,
) -> StabilityReport {
    let m = params.m();
    let outward = -region.orientation();
    let controls = [params.lower(), params.upper()];
    let mut report = StabilityReport {
        samples: 0,
        worst_value: f64::NEG_INFINITY,
        worst_point: [0.0; 3],
        worst_control: controls[0],
        tangency_defect: 0.0,
        tolerance: tol,
        passed: true,
    };
    let per_curve = samples.div_ceil(2);
    for curve in [&region.lower, &region.upper] {
        let n = curve.points.len();
        for k in 0..per_curve {
            let z = curve.points[(k * (n - 1)) / per_curve.max(1)];
            let own = field_b(params, &z, curve.control);
            if own.norm() <= 1e-10 {
                continue;
            }
            let normal = rotate_tangent(&own, m) * (outward / own.norm());
            report.samples += 1;
            report.tangency_defect = report.tangency_defect.max(own.dot(&normal).abs());
            for alpha in controls {
                let v = field_b(params, &z, alpha).dot(&normal);
                if v > report.worst_value {
                    report.worst_value = v;
                    report.worst_point = [z[0], z[1], z[2]];
                    report.worst_control = alpha;
                }
            }
        }
    }
    report.passed = report.worst_value <= tol;
    report
}

/// A two-phase bang-bang control steering one point onto another.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectPlan {
    /// `(control, duration)` pairs applied in order.
    pub phases: Vec<(f64, f64)>,
    pub total_time: f64,
    /// Distance between the re-integrated end point and the target.
    pub landing_error: f64,
}

impl ConnectPlan {
    /// The plan as a piecewise-constant signal; `None` for the empty plan.
    pub fn signal(&self) -> Option<ControlSignal> {
        if self.phases.is_empty() {
            return None;
        }
        let mut times = Vec::new();
        let mut t = 0.0;
        for (_, d) in &self.phases {
            times.push(t);
            t += d;
        }
        let values = self.phases.iter().map(|(c, _)| *c).collect();
        ControlSignal::sampled(times, values, Interp::PiecewiseConstant).ok()
    }
}

/// Flow for exactly `duration` with constant control.
fn flow_for(
    params: &ModelParams,
    y: &Vector3<f64>,
    control: f64,
    sign: f64,
    duration: f64,
) -> Vector3<f64> {
    if duration <= 0.0 {
        return *y;
    }
    let n = (duration / CURVE_DT).ceil() as usize;
    let h = duration / n as f64;
    let mut z = *y;
    for k in 0..n {
        z = rk4_step(params, &control, k as f64 * h, &z, h, sign).0;
        z /= params.m().dot(&z);
    }
    z
}

fn segment_hit(p: [f64; 2], p2: [f64; 2], q: [f64; 2], q2: [f64; 2]) -> Option<(f64, f64)> {
    let r = [p2[0] - p[0], p2[1] - p[1]];
    let s = [q2[0] - q[0], q2[1] - q[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom == 0.0 {
        return None;
    }
    let qp = [q[0] - p[0], q[1] - p[1]];
    let u = (qp[0] * s[1] - qp[1] * s[0]) / denom;
    let v = (qp[0] * r[1] - qp[1] * r[0]) / denom;
    ((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)).then_some((u, v))
}

/// Earliest crossing (by total time) of two time-stamped polylines.
fn first_crossing(
    a: &(Vec<[f64; 2]>, Vec<f64>),
    b: &(Vec<[f64; 2]>, Vec<f64>),
) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for i in 0..a.0.len().saturating_sub(1) {
        for j in 0..b.0.len().saturating_sub(1) {
            if let Some((u, v)) = segment_hit(a.0[i], a.0[i + 1], b.0[j], b.0[j + 1]) {
                let t = a.1[i] + u * (a.1[i + 1] - a.1[i]);
                let s = b.1[j] + v * (b.1[j + 1] - b.1[j]);
                if best.is_none_or(|(bt, bs)| t + s < bt + bs) {
                    best = Some((t, s));
                }
            }
        }
    }
    best
}

fn chart_vec(v: &Vector3<f64>) -> Vector2<f64> {
    Vector2::new(v[0], v[1])
}

/// Bang-bang control sending `z` onto `target` inside `region` (normally
/// `Z_{-delta}`): flow forward from `z` with one extreme control until the
/// path meets the backward path of the other extreme control from `target`.
pub fn connect(
    params: &ModelParams,
    region: &Region,
    z: &Vector3<f64>,
    target: &Vector3<f64>,
) -> Result<ConnectPlan> {
    check_on_simplex(params, z)?;
    check_on_simplex(params, target)?;
    if !region.contains(z) || !region.contains(target) {
        return Err(validation("connect needs both points inside the region"));
    }
    if (z - target).norm() <= 1e-12 {
        return Ok(ConnectPlan {
            phases: Vec::new(),
            total_time: 0.0,
            landing_error: 0.0,
        });
    }
    let (a, big_a) = (params.lower(), params.upper());
    let forward = |c: f64| {
        let e = params.spectrum(c).map(|s| s.dominant.right);
        let (pts, times, _) = flow_until(params, z, c, 1.0, CURVE_DT, CURVE_T_MAX, |y| {
            e.as_ref().is_ok_and(|e| (y - e).norm() <= ENDPOINT_TOL)
        });
        decimate(&pts, &times, 1e-3)
    };
    let backward = |c: f64| {
        let (pts, times, _) = flow_until(params, target, c, -1.0, CURVE_DT, 50.0, |_| false);
        decimate(&pts, &times, 1e-3)
    };
    let candidates = [
        (a, big_a, first_crossing(&forward(a), &backward(big_a))),
        (big_a, a, first_crossing(&forward(big_a), &backward(a))),
    ];
    let (c1, c2, (mut t1, mut t2)) = candidates
        .into_iter()
        .filter_map(|(c1, c2, hit)| hit.map(|h| (c1, c2, h)))
        .min_by(|x, y| (x.2 .0 + x.2 .1).total_cmp(&(y.2 .0 + y.2 .1)))
        .ok_or_else(|| {
            Error::Geometry("forward and backward bang-bang curves do not intersect".into())
        })?;

    // Newton on (t1, t2) for y_forward(t1) = y_backward(t2).
    for _ in 0..20 {
        let yf = flow_for(params, z, c1, 1.0, t1);
        let yb = flow_for(params, target, c2, -1.0, t2);
        let res = chart_vec(&(yf - yb));
        if res.norm() <= 1e-12 {
            break;
        }
        let jac = Matrix2::from_columns(&[
            chart_vec(&field_b(params, &yf, c1)),
            chart_vec(&field_b(params, &yb, c2)),
        ]);
        let Some(step) = jac.lu().solve(&res) else {
            break;
        };
        t1 = (t1 - step[0]).max(0.0);
        t2 = (t2 - step[1]).max(0.0);
    }
    let landed = flow_for(params, &flow_for(params, z, c1, 1.0, t1), c2, 1.0, t2);
    let landing_error = (landed - target).norm();
    if landing_error > 1e-4 {
        return Err(Error::Geometry(format!(
            "bang-bang plan lands {landing_error:.3e} away from the target"
        )));
    }
    let phases = [(c1, t1), (c2, t2)]
        .into_iter()
        .filter(|(_, d)| *d > 0.0)
        .collect();
    Ok(ConnectPlan {
        phases,
        total_time: t1 + t2,
        landing_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_region() {
        let p = ModelParams::reference();
        let set = build_ergodic_set(&p, 0.05).unwrap();
        let z0 = &set.z0;
        assert!(z0.lower.endpoint_error <= ENDPOINT_TOL);
        assert!(z0.upper.endpoint_error <= ENDPOINT_TOL);
        assert!(z0.opposite_sides());
        let star = p.spectrum(3.35).unwrap().dominant.right;
        assert!(z0.contains(&star));
        assert!(set.z_minus.contains(&star));
        assert!(!z0.contains(&Vector3::new(1.0, 0.0, 0.0)));
        let report = stability_check(&p, z0, 500, 1e-8);
        assert!(report.passed, "{report:?}");
        assert!(report.tangency_defect < 1e-9);
    }

    #[test]
    fn rejects_bad_offsets() {
        let p = ModelParams::reference();
        assert!(build_ergodic_set(&p, 0.6).is_err());
        assert!(build_ergodic_set(&p, -0.1).is_err());
    }

    #[test]
    fn connect_round_trip() {
        let p = ModelParams::reference();
        let region = build_region(&p, 1.05, 5.95).unwrap();
        let star = p.spectrum(3.35).unwrap().dominant.right;
        let empty = connect(&p, &region, &star, &star).unwrap();
        assert_eq!(empty.total_time, 0.0);
        assert!(empty.signal().is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let target = region.sample(&p, &mut rng);
        let plan = connect(&p, &region, &star, &target).unwrap();
        assert!(plan.landing_error <= 1e-4);
        let back = connect(&p, &region, &target, &star).unwrap();
        assert!(back.landing_error <= 1e-4);
        assert!(plan.signal().is_some());
    }
}
