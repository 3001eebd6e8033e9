//! Monotone upwind finite differences for `u_t = max_alpha b(y, alpha) . D u + L(y)`
//! on the simplex, in the chart `(y1, y2)`.

mod banded;
mod eigen;
mod solve;

use std::io::Write;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::simplex::{field_b, from_chart, reward};
use crate::spectral::ModelParams;

pub use eigen::{
    extract_eigenvector, optimal_trajectory, verify_particular_solution, Eigenvector,
    GradientFeedback, OptimalTrajectory, ParticularReport,
};
pub use solve::{
    run_discounted, run_time_dependent, step_time_dependent, DiscountedRun, HjbConfig, HjbRun,
};

/// Node offsets a stencil may use, in grid units.
const OFFSETS: [[i64; 2]; 8] = [
    [1, 0],
    [-1, 0],
    [0, 1],
    [0, -1],
    [-1, 1],
    [1, -1],
    [-2, 1],
    [2, -1],
];

const NO_NODE: u32 = u32::MAX;

/// Nodes `(i dy, j dy)` of the chart triangle `m1 y1 + m2 y2 <= 1`, ordered
/// with `i` major so that neighbours stay within a narrow index band.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGrid {
    dy: f64,
    side: usize,
    nodes: Vec<[usize; 2]>,
    index: Vec<u32>,
    points: Vec<Vector3<f64>>,
}

impl SimplexGrid {
    pub fn new(params: &ModelParams, dy: f64) -> Result<Self> {
        if !(dy > 0.0 && dy <= 0.5) {
            return Err(validation(format!(
                "grid spacing must lie in (0, 0.5], got {dy}"
            )));
        }
        let m = params.m();
        let side = (1.0 / (m[0].min(m[1]) * dy)).floor() as usize + 1;
        let mut nodes = Vec::new();
        let mut index = vec![NO_NODE; side * side];
        let mut points = Vec::new();
        for i in 0..side {
            for j in 0..side {
                let c = [i as f64 * dy, j as f64 * dy];
                if m[0] * c[0] + m[1] * c[1] <= 1.0 + 1e-9 {
                    index[i * side + j] = nodes.len() as u32;
                    nodes.push([i, j]);
                    let mut y = from_chart(params, c);
                    y[2] = y[2].max(0.0);
                    points.push(y);
                }
            }
        }
        Ok(SimplexGrid {
            dy,
            side,
            nodes,
            index,
            points,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.dy
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: i64, j: i64) -> Option<usize> {
        if i < 0 || j < 0 || i as usize >= self.side || j as usize >= self.side {
            return None;
        }
        let k = self.index[i as usize * self.side + j as usize];
        (k != NO_NODE).then_some(k as usize)
    }

    pub fn coords(&self, n: usize) -> [usize; 2] {
        self.nodes[n]
    }

    pub fn chart(&self, n: usize) -> [f64; 2] {
        let [i, j] = self.nodes[n];
        [i as f64 * self.dy, j as f64 * self.dy]
    }

    pub fn point(&self, n: usize) -> Vector3<f64> {
        self.points[n]
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    fn neighbour(&self, n: usize, o: [i64; 2]) -> Option<usize> {
        let [i, j] = self.nodes[n];
        self.node(i as i64 + o[0], j as i64 + o[1])
    }

    /// All four axis neighbours exist.
    pub fn is_interior(&self, n: usize) -> bool {
        [[1, 0], [-1, 0], [0, 1], [0, -1]]
            .iter()
            .all(|&o| self.neighbour(n, o).is_some())
    }

    /// Node closest to chart point `c`.
    pub fn nearest(&self, c: [f64; 2]) -> usize {
        (0..self.len())
            .min_by(|&p, &q| {
                let d = |n: usize| {
                    let x = self.chart(n);
                    (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)
                };
                d(p).total_cmp(&d(q))
            })
            .expect("non-empty grid")
    }
}

/// Nodal values on a [`SimplexGrid`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridField {
    pub values: Vec<f64>,
    pub time: Option<f64>,
    pub epsilon: Option<f64>,
}

impl GridField {
    pub fn zeros(grid: &SimplexGrid) -> Self {
        GridField {
            values: vec![0.0; grid.len()],
            time: Some(0.0),
            epsilon: None,
        }
    }

    /// Backward and forward differences `(D-, D+)` per chart direction, where
    /// the neighbour exists.
    pub fn one_sided(&self, grid: &SimplexGrid, n: usize) -> [(Option<f64>, Option<f64>); 2] {
        let u = self.values[n];
        let h = grid.spacing();
        [0, 1].map(|d| {
            let mut fwd = [0, 0];
            fwd[d] = 1;
            let back = grid
                .neighbour(n, [-fwd[0], -fwd[1]])
                .map(|k| (u - self.values[k]) / h);
            let ahead = grid.neighbour(n, fwd).map(|k| (self.values[k] - u) / h);
            (back, ahead)
        })
    }

    /// Average of the available one-sided differences per direction.
    pub fn gradient(&self, grid: &SimplexGrid, n: usize) -> [f64; 2] {
        self.one_sided(grid, n).map(|pair| match pair {
            (Some(b), Some(f)) => 0.5 * (b + f),
            (Some(b), None) => b,
            (None, Some(f)) => f,
            (None, None) => 0.0,
        })
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// CSV with columns `i,j,y1,y2,y3,u`, one row per node.
    pub fn write_csv<W: Write>(&self, grid: &SimplexGrid, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,y1,y2,y3,u")?;
        for n in 0..grid.len() {
            let [i, j] = grid.coords(n);
            let y = grid.point(n);
            writeln!(out, "{i},{j},{},{},{},{}", y[0], y[1], y[2], self.values[n])?;
        }
        Ok(())
    }
}

/// `H(y, p) = max_{alpha in [a, A]} <b(y, alpha), p> + L(y)` for a chart
/// gradient `p`, with the maximizing control (`A` on ties).
pub fn hamiltonian(params: &ModelParams, y: &Vector3<f64>, p: [f64; 2]) -> (f64, f64) {
    let dot = |v: Vector3<f64>| v[0] * p[0] + v[1] * p[1];
    let (a, big_a) = (params.lower(), params.upper());
    let switching = dot(params.f() * y);
    let value = dot(field_b(params, y, a)) + reward(params, y) + (big_a - a) * switching.max(0.0);
    (value, if switching < 0.0 { a } else { big_a })
}

/// Up to two neighbours with nonnegative weights reproducing the drift.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Stencil {
    nbr: [u32; 2],
    w: [f64; 2],
}

impl Stencil {
    fn apply(&self, u: &[f64], un: f64) -> f64 {
        self.w[0] * (u[self.nbr[0] as usize] - un) + self.w[1] * (u[self.nbr[1] as usize] - un)
    }

    fn total(&self) -> f64 {
        self.w[0] + self.w[1]
    }
}

fn stencil_for(grid: &SimplexGrid, n: usize, drift: [f64; 2]) -> Result<Stencil> {
    let h = grid.spacing();
    let v = [drift[0] / h, drift[1] / h];
    let mut st = Stencil {
        nbr: [n as u32; 2],
        w: [0.0; 2],
    };
    // Classical upwinding when the upwind axis neighbours exist.
    let mut axis_ok = true;
    for d in 0..2 {
        if v[d] == 0.0 {
            continue;
        }
        let mut o = [0, 0];
        o[d] = if v[d] > 0.0 { 1 } else { -1 };
        match grid.neighbour(n, o) {
            Some(k) => {
                st.nbr[d] = k as u32;
                st.w[d] = v[d].abs();
            }
            None => axis_ok = false,
        }
    }
    if axis_ok {
        return Ok(st);
    }
    // Otherwise the cheapest nonnegative combination of available offsets.
    let avail: Vec<([f64; 2], usize)> = OFFSETS
        .iter()
        .filter_map(|&o| {
            grid.neighbour(n, o)
                .map(|k| ([o[0] as f64, o[1] as f64], k))
        })
        .collect();
    let mut best: Option<(f64, Stencil)> = None;
    let mut consider = |cost: f64, cand: Stencil| {
        if best.as_ref().is_none_or(|(c, _)| cost < *c - 1e-14) {
            best = Some((cost, cand));
        }
    };
    let vnorm = v[0].hypot(v[1]);
    for (p, &(o1, k1)) in avail.iter().enumerate() {
        let cross = o1[0] * v[1] - o1[1] * v[0];
        let along = o1[0] * v[0] + o1[1] * v[1];
        if cross.abs() <= 1e-12 * vnorm && along > 0.0 {
            let w = along / (o1[0] * o1[0] + o1[1] * o1[1]);
            consider(
                w,
                Stencil {
                    nbr: [k1 as u32, n as u32],
                    w: [w, 0.0],
                },
            );
        }
        for &(o2, k2) in &avail[p + 1..] {
            let det = o1[0] * o2[1] - o1[1] * o2[0];
            if det == 0.0 {
                continue;
            }
            let w1 = (v[0] * o2[1] - v[1] * o2[0]) / det;
            let w2 = (o1[0] * v[1] - o1[1] * v[0]) / det;
            if w1 >= 0.0 && w2 >= 0.0 {
                consider(
                    w1 + w2,
                    Stencil {
                        nbr: [k1 as u32, k2 as u32],
                        w: [w1, w2],
                    },
                );
            }
        }
    }
    best.map(|(_, s)| s).ok_or_else(|| {
        let c = grid.chart(n);
        Error::Geometry(format!(
            "drift ({}, {}) at chart node ({}, {}) points out of the simplex",
            drift[0], drift[1], c[0], c[1]
        ))
    })
}

/// Precomputed upwind stencils for the two extreme controls `a` and `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpwindOperator {
    controls: [f64; 2],
    stencils: [Vec<Stencil>; 2],
    reward: Vec<f64>,
    rate: f64,
}

impl UpwindOperator {
    pub fn new(params: &ModelParams, grid: &SimplexGrid) -> Result<Self> {
        let controls = [params.lower(), params.upper()];
        let build = |alpha: f64| -> Result<Vec<Stencil>> {
            (0..grid.len())
                .map(|n| {
                    let b = field_b(params, &grid.point(n), alpha);
                    stencil_for(grid, n, [b[0], b[1]])
                })
                .collect()
        };
        let stencils = [build(controls[0])?, build(controls[1])?];
        let rate = stencils
            .iter()
            .flat_map(|s| s.iter().map(Stencil::total))
            .fold(0.0, f64::max);
        let reward = grid.points().iter().map(|y| reward(params, y)).collect();
        Ok(UpwindOperator {
            controls,
            stencils,
            reward,
            rate,
        })
    }

    /// Largest total stencil weight; explicit Euler is monotone iff
    /// `dt * rate <= 1`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn controls(&self) -> [f64; 2] {
        self.controls
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    /// `max_alpha D_alpha u` at node `n` and the maximizing control index
    /// (1 = `A` on ties).
    fn drift_max(&self, u: &[f64], n: usize) -> (f64, usize) {
        let lo = self.stencils[0][n].apply(u, u[n]);
        let hi = self.stencils[1][n].apply(u, u[n]);
        if lo > hi {
            (lo, 0)
        } else {
            (hi, 1)
        }
    }

    /// Numerical Hamiltonian `H_num(u)` at every node.
    pub fn hamiltonian(&self, u: &[f64], out: &mut [f64]) {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(n, o)| *o = self.drift_max(u, n).0 + self.reward[n]);
    }

    /// Maximizing control index per node.
    pub fn policy(&self, u: &[f64]) -> Vec<usize> {
        (0..u.len()).map(|n| self.drift_max(u, n).1).collect()
    }

    /// Largest `|n - k|` over all stencil entries.
    fn bandwidth(&self) -> usize {
        self.stencils
            .iter()
            .flat_map(|s| s.iter().enumerate())
            .flat_map(|(n, st)| st.nbr.map(|k| (k as usize).abs_diff(n)))
            .max()
            .unwrap_or(0)
    }
}
