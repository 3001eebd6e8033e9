use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;

use super::solve::{run_time_dependent, HjbConfig, HjbRun};
use super::{GridField, SimplexGrid, UpwindOperator};
use crate::control::ControlLaw;
use crate::error::{validation, Error, Result};
use crate::perron::{classify_monotonicity, lambda_p, optimize_perron, Monotonicity};
use crate::simplex::{
    e_infinity, field_b, integrate, phi_cubic, to_chart, IntegrateOptions, TrajectoryRecord,
};
use crate::spectral::ModelParams;

/// Gauge-fixed eigenvector `u_bar = u(T) - u(T, y0)` with its switching
/// curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Eigenvector {
    pub lambda: f64,
    pub probe: [f64; 2],
    /// Spread over nodes of `u(T) - u(T - lag)`.
    pub stationarity_spread: f64,
    /// Zero contour of `<F y, D u_bar>_chart`, as chart segments.
    pub separation: Vec<[[f64; 2]; 2]>,
    #[serde(skip)]
    pub field: GridField,
    #[serde(skip)]
    pub grid: SimplexGrid,
}

impl Eigenvector {
    /// Distance in the chart from `c` to the separation line.
    pub fn distance_to_separation(&self, c: [f64; 2]) -> f64 {
        self.separation
            .iter()
            .map(|&[p, q]| segment_distance(c, p, q))
            .fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `segment,y1,y2`, two rows per segment.
    pub fn write_separation_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "segment,y1,y2")?;
        for (k, [p, q]) in self.separation.iter().enumerate() {
            writeln!(out, "{k},{},{}", p[0], p[1])?;
            writeln!(out, "{k},{},{}", q[0], q[1])?;
        }
        Ok(())
    }
}

fn segment_distance(c: [f64; 2], p: [f64; 2], q: [f64; 2]) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 > 0.0 {
        (((c[0] - p[0]) * d[0] + (c[1] - p[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (c[0] - p[0] - s * d[0]).hypot(c[1] - p[1] - s * d[1])
}

/// Zero contour of nodal values `s` by marching triangles (each grid square
/// split along its anti-diagonal).
fn zero_contour(grid: &SimplexGrid, s: &[f64]) -> Vec<[[f64; 2]; 2]> {
    let mut segs = Vec::new();
    let mut tri = |nodes: [usize; 3]| {
        let mut pts = Vec::with_capacity(2);
        for e in 0..3 {
            let (p, q) = (nodes[e], nodes[(e + 1) % 3]);
            let (sp, sq) = (s[p], s[q]);
            if (sp < 0.0) != (sq < 0.0) {
                let t = sp / (sp - sq);
                let (cp, cq) = (grid.chart(p), grid.chart(q));
                pts.push([cp[0] + t * (cq[0] - cp[0]), cp[1] + t * (cq[1] - cp[1])]);
            }
        }
        if pts.len() == 2 {
            segs.push([pts[0], pts[1]]);
        }
    };
    for n in 0..grid.len() {
        let [i, j] = grid.coords(n).map(|v| v as i64);
        let right = grid.node(i + 1, j);
        let up = grid.node(i, j + 1);
        if let (Some(r), Some(u)) = (right, up) {
            tri([n, r, u]);
            if let Some(d) = grid.node(i + 1, j + 1) {
                tri([r, d, u]);
            }
        }
    }
    segs
}

fn switching(params: &ModelParams, grid: &SimplexGrid, grad: &[[f64; 2]]) -> Vec<f64> {
    (0..grid.len())
        .map(|n| {
            let fy = params.f() * grid.point(n);
            fy[0] * grad[n][0] + fy[1] * grad[n][1]
        })
        .collect()
}

pub fn extract_eigenvector(params: &ModelParams, run: &HjbRun) -> Result<Eigenvector> {
    let grid = SimplexGrid::new(params, run.dy)?;
    if grid.len() != run.field.values.len() {
        return Err(validation("run does not belong to this parameter set"));
    }
    let probe = grid.nearest(run.probe);
    let gauge = run.field.values[probe];
    let field = GridField {
        values: run.field.values.iter().map(|v| v - gauge).collect(),
        time: run.field.time,
        epsilon: None,
    };
    let diffs: Vec<f64> = run
        .field
        .values
        .iter()
        .zip(&run.lagged.values)
        .map(|(a, b)| a - b)
        .collect();
    let (lo, hi) = diffs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let grad: Vec<[f64; 2]> = (0..grid.len()).map(|n| field.gradient(&grid, n)).collect();
    let s = switching(params, &grid, &grad);
    Ok(Eigenvector {
        lambda: run.lambda_ratio,
        probe: run.probe,
        stationarity_spread: hi - lo,
        separation: zero_contour(&grid, &s),
        field,
        grid,
    })
}

/// Bang-bang feedback `alpha(y) = A` if `<F y, grad u_bar(y)> >= 0`, else
/// `a`, with the gradient interpolated bilinearly from nodal values.
#[derive(Debug, Clone)]
pub struct GradientFeedback {
    params: ModelParams,
    grid: SimplexGrid,
    grads: Vec<[f64; 2]>,
}

impl GradientFeedback {
    pub fn new(params: &ModelParams, eig: &Eigenvector) -> Self {
        let grads = (0..eig.grid.len())
            .map(|n| eig.field.gradient(&eig.grid, n))
            .collect();
        GradientFeedback {
            params: params.clone(),
            grid: eig.grid.clone(),
            grads,
        }
    }

    /// Interpolated chart gradient; corners outside the mask are dropped and
    /// the remaining weights renormalized.
    pub fn gradient(&self, c: [f64; 2]) -> [f64; 2] {
        let h = self.grid.spacing();
        let (x, y) = ((c[0] / h).max(0.0), (c[1] / h).max(0.0));
        let (i, j) = (x.floor(), y.floor());
        let (fx, fy) = (x - i, y - j);
        let (i, j) = (i as i64, j as i64);
        let corners = [
            (i, j, (1.0 - fx) * (1.0 - fy)),
            (i + 1, j, fx * (1.0 - fy)),
            (i, j + 1, (1.0 - fx) * fy),
            (i + 1, j + 1, fx * fy),
        ];
        let mut acc = [0.0; 2];
        let mut total = 0.0;
        for (ci, cj, w) in corners {
            if let Some(n) = self.grid.node(ci, cj) {
                acc[0] += w * self.grads[n][0];
                acc[1] += w * self.grads[n][1];
                total += w;
            }
        }
        if total > 1e-12 {
            [acc[0] / total, acc[1] / total]
        } else {
            self.grads[self.grid.nearest(c)]
        }
    }
}

impl ControlLaw for GradientFeedback {
    fn control(&self, _t: f64, y: &Vector3<f64>) -> f64 {
        let g = self.gradient(to_chart(y));
        let fy = self.params.f() * y;
        if fy[0] * g[0] + fy[1] * g[1] < 0.0 {
            self.params.lower()
        } else {
            self.params.upper()
        }
    }

    fn hold_per_step(&self) -> bool {
        true
    }
}

/// Closed-loop path under [`GradientFeedback`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalTrajectory {
    pub record: TrajectoryRecord,
    /// Window of the moving average, in steps.
    pub window: usize,
    /// Trailing moving average of the control; entry `k` covers steps
    /// `k + 1 ..= k + window`.
    pub moving_average: Vec<f64>,
    /// Mean of the moving average over the last tenth of the horizon.
    pub tail_control: f64,
    /// `(1/T) int_0^T L(y(t)) dt`.
    pub average_reward: f64,
    pub switches: usize,
}

impl OptimalTrajectory {
    pub fn terminal_distance(&self, target: &Vector3<f64>) -> f64 {
        (self.record.final_point() - target).norm()
    }
}

pub fn optimal_trajectory(
    params: &ModelParams,
    eig: &Eigenvector,
    y0: &Vector3<f64>,
    horizon: f64,
    dt: f64,
) -> Result<OptimalTrajectory> {
    let law = GradientFeedback::new(params, eig);
    let record = integrate(
        params,
        y0,
        &law,
        horizon,
        IntegrateOptions {
            dt,
            renormalize: true,
            record_every: 1,
        },
    )?;
    let window = ((0.1 / dt).round() as usize).max(1);
    let ctrl = &record.controls[1..];
    if ctrl.len() < window {
        return Err(validation("horizon shorter than the averaging window"));
    }
    let mut moving_average = Vec::with_capacity(ctrl.len() + 1 - window);
    let mut sum: f64 = ctrl[..window].iter().sum();
    moving_average.push(sum / window as f64);
    for k in window..ctrl.len() {
        sum += ctrl[k] - ctrl[k - window];
        moving_average.push(sum / window as f64);
    }
    let tail = (ctrl.len() / 10).clamp(1, moving_average.len());
    let tail_control = moving_average[moving_average.len() - tail..]
        .iter()
        .sum::<f64>()
        / tail as f64;
    let switches = ctrl.windows(2).filter(|w| w[0] != w[1]).count();
    Ok(OptimalTrajectory {
        average_reward: record.average_reward(),
        record,
        window,
        moving_average,
        tail_control,
        switches,
    })
}

/// Outcome of checking `u(t, y) = lambda_P(A) t + log <phi_A, y>` against
/// the scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticularReport {
    pub upper: f64,
    pub lambda_upper: f64,
    /// `None` when `lambda_P` is increasing on `[0, A]` and the domain is the
    /// whole simplex; otherwise the second root of `lambda_P = lambda_P(A)`
    /// (infinite when there is none).
    pub a_prime: Option<f64>,
    pub domain_nodes: usize,
    pub total_nodes: usize,
    /// Minimum of `<F y, phi_A>` over the domain.
    pub min_switching: f64,
    pub sign_ok: bool,
    /// Largest `|H_num(log <phi_A, y>) - lambda_P(A)|` over interior domain
    /// nodes.
    pub residual_max: f64,
    /// Largest per-node truncation bound divided by `dy`.
    pub residual_constant: f64,
    pub residual_ok: bool,
    /// Cosine between level-set tangents of `u(T)` and `m x phi_A`.
    pub min_cosine: f64,
    pub mean_cosine: f64,
    pub alignment_nodes: usize,
    pub alignment_ok: bool,
}

impl ParticularReport {
    pub fn passed(&self) -> bool {
        self.sign_ok && self.residual_ok && self.alignment_ok
    }
}

const SIGN_TOL: f64 = -1e-9;
const MIN_COSINE: f64 = 0.99;

/// Smallest `A' > alpha_max` with `lambda_P(A') = lambda_P(upper)`.
fn second_root(params: &ModelParams, alpha_max: f64, upper: f64) -> Result<f64> {
    let target = lambda_p(params, upper)?;
    let f = |x: f64| lambda_p(params, x).map(|l| l - target);
    let mut lo = alpha_max;
    let mut hi = 2.0 * alpha_max;
    while f(hi)? >= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Ok(f64::INFINITY);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Control value `beta` of the point where the ray from `e_inf` through `y`
/// meets `Phi_0`; infinite if it does not.
fn ray_beta(params: &ModelParams, e_inf: &Vector3<f64>, y: &Vector3<f64>) -> f64 {
    let d = y - e_inf;
    if d.norm() < 1e-12 {
        return f64::INFINITY;
    }
    let s_max = (0..3)
        .filter(|&k| d[k] < 0.0)
        .map(|k| -e_inf[k] / d[k])
        .fold(f64::INFINITY, f64::min);
    let z = |s: f64| (e_inf + d * s).map(|v| v.max(0.0));
    let phi = |s: f64| phi_cubic(params, &z(s));
    const SAMPLES: usize = 400;
    let at = |k: usize| s_max * 1e-6f64.powf(1.0 - k as f64 / SAMPLES as f64);
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..=SAMPLES {
        let s = at(k);
        let v = phi(s);
        if v.abs() < 1e-15 {
            continue;
        }
        if let Some((sp, vp)) = prev {
            if (vp < 0.0) != (v < 0.0) {
                let (mut lo, mut hi, vlo) = (sp, s, vp);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if (phi(mid) < 0.0) == (vlo < 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let zs = z(0.5 * (lo + hi));
                let fz = params.f() * zs;
                return -field_b(params, &zs, 0.0).dot(&fz) / fz.norm_squared();
            }
        }
        prev = Some((s, v));
    }
    f64::INFINITY
}

/// Checks the particular solution on the simplex when `lambda_P` increases
/// on `[0, A]`, or on the subdomain `S'` of points whose ray from `e_inf`
/// meets `Phi_0` at some `e_beta` with `beta <= A'` when `A < alpha*`.
pub fn verify_particular_solution(
    params: &ModelParams,
    cfg: &HjbConfig,
) -> Result<ParticularReport> {
    let rates = params
        .rates()
        .ok_or_else(|| validation("particular solution check needs running-example rates"))?;
    let upper = params.upper();
    let a_prime = match classify_monotonicity(rates.tau1, rates.tau2) {
        Monotonicity::IncreasingToTau1 => None,
        Monotonicity::InteriorMax => {
            let opt = optimize_perron(params)?;
            if !opt.is_interior() || upper >= opt.alpha() {
                return Err(validation(format!(
                    "lambda_P is not increasing on [0, A] (A = {upper}, maximizer {})",
                    opt.alpha()
                )));
            }
            Some(second_root(params, opt.alpha(), upper)?)
        }
    };
    let triple = params.spectrum(upper)?;
    let lambda_upper = triple.dominant.value;
    let phi = triple.dominant.left;
    let grid = SimplexGrid::new(params, cfg.dy)?;
    let op = UpwindOperator::new(params, &grid)?;

    let in_domain: Vec<bool> = match a_prime {
        None => vec![true; grid.len()],
        Some(ap) => {
            let e_inf = e_infinity(params)
                .ok_or_else(|| Error::Geometry("F has no nonnegative kernel vector".into()))?;
            grid.points()
                .iter()
                .map(|y| ray_beta(params, &e_inf, y) <= ap)
                .collect()
        }
    };
    let domain: Vec<usize> = (0..grid.len()).filter(|&n| in_domain[n]).collect();
    if domain.is_empty() {
        return Err(Error::Geometry("empty verification domain".into()));
    }

    let min_switching = domain
        .iter()
        .map(|&n| (params.f() * grid.point(n)).dot(&phi))
        .fold(f64::INFINITY, f64::min);

    // Truncation of the upwind differences of log<phi, y>: with
    // t = <phi, y_k - y_n> / <phi, y_n>, each neighbour contributes
    // w (log(1 + t) - t), bounded by w t^2 / (2 min(1, 1 + t)^2).
    let ubar: Vec<f64> = grid.points().iter().map(|y| phi.dot(y).ln()).collect();
    let mut h = vec![0.0; grid.len()];
    op.hamiltonian(&ubar, &mut h);
    let mut residual_max: f64 = 0.0;
    let mut residual_constant: f64 = 0.0;
    let mut residual_ok = true;
    for &n in domain.iter().filter(|&&n| grid.is_interior(n)) {
        let pn = phi.dot(&grid.point(n));
        let bound = (0..2)
            .map(|c| {
                let st = op.stencils[c][n];
                (0..2)
                    .map(|k| {
                        let t = phi.dot(&(grid.point(st.nbr[k] as usize) - grid.point(n))) / pn;
                        st.w[k] * t * t / (2.0 * (1.0 + t.min(0.0)).powi(2))
                    })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let r = (h[n] - lambda_upper).abs();
        residual_max = residual_max.max(r);
        residual_constant = residual_constant.max(bound / cfg.dy);
        residual_ok &= r <= bound + 1e-12 * (1.0 + lambda_upper.abs());
    }

    let run = run_time_dependent(params, cfg)?;
    let m = params.m();
    let dir = m.cross(&phi);
    let mut cosines = Vec::new();
    for &n in &domain {
        let [i, j] = grid.coords(n).map(|v| v as i64);
        let nbrs = [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)];
        let inner = nbrs
            .iter()
            .all(|&(a, b)| grid.node(a, b).is_some_and(|k| in_domain[k]));
        if !inner {
            continue;
        }
        let g = run.field.gradient(&grid, n);
        let tc = [-g[1], g[0]];
        let t = Vector3::new(tc[0], tc[1], -(m[0] * tc[0] + m[1] * tc[1]) / m[2]);
        cosines.push(t.dot(&dir).abs() / (t.norm() * dir.norm()));
    }
    let min_cosine = cosines.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_cosine = cosines.iter().sum::<f64>() / cosines.len().max(1) as f64;

    Ok(ParticularReport {
        upper,
        lambda_upper,
        a_prime,
        domain_nodes: domain.len(),
        total_nodes: grid.len(),
        min_switching,
        sign_ok: min_switching >= SIGN_TOL,
        residual_max,
        residual_constant,
        residual_ok,
        alignment_nodes: cosines.len(),
        alignment_ok: !cosines.is_empty() && min_cosine >= MIN_COSINE,
        min_cosine,
        mean_cosine,
    })
}
