//! Reference computations that avoid the library's own eigen-solvers and
//! integrators: Schur eigenvalues, SVD null vectors and a plain RK4.
#![allow(dead_code)]

use ergodic_core::control::ControlLaw;
use ergodic_core::{ModelParams, RunningRates};
use nalgebra::{Matrix3, Vector3};

pub fn rates(tau1: f64, tau2: f64) -> RunningRates {
    RunningRates {
        tau1,
        tau2,
        beta2: 1.0,
        beta3: 2.0,
    }
}

/// Largest real part among the eigenvalues of `G + alpha F`.
pub fn perron(params: &ModelParams, alpha: f64) -> f64 {
    params
        .matrix(alpha)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Unit-norm vector spanning the numerical kernel of `a`.
fn null_vector(a: &Matrix3<f64>) -> Vector3<f64> {
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let k = (0..3)
        .min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]))
        .unwrap();
    v_t.row(k).transpose()
}

/// Right Perron vector normalized by `<m, e> = 1`.
pub fn right_vector(params: &ModelParams, alpha: f64) -> Vector3<f64> {
    let lam = perron(params, alpha);
    let e = null_vector(&(params.matrix(alpha) - Matrix3::identity() * lam));
    e / params.m().dot(&e)
}

/// Left Perron vector normalized by `<phi, e> = 1`.
pub fn left_vector(params: &ModelParams, alpha: f64) -> Vector3<f64> {
    let lam = perron(params, alpha);
    let phi = null_vector(&(params.matrix(alpha) - Matrix3::identity() * lam).transpose());
    phi / phi.dot(&right_vector(params, alpha))
}

pub fn theta(params: &ModelParams, v: &Vector3<f64>) -> Vector3<f64> {
    let m = params.m();
    m.cross(v) / m.norm()
}

fn drift(params: &ModelParams, y: &Vector3<f64>, alpha: f64) -> Vector3<f64> {
    let g = params.g() * y;
    g + params.f() * y * alpha - y * params.m().dot(&g)
}

/// Fixed-step RK4 of `y' = b(y, alpha(t))` without renormalization.
pub fn rk4(
    params: &ModelParams,
    law: &dyn ControlLaw,
    y0: Vector3<f64>,
    t_end: f64,
    dt: f64,
) -> Vector3<f64> {
    let n = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / n as f64;
    let mut y = y0;
    for k in 0..n {
        let t = k as f64 * h;
        let a = |s: f64, z: &Vector3<f64>| law.control(s, z);
        let k1 = drift(params, &y, a(t, &y));
        let y2 = y + k1 * (h / 2.0);
        let k2 = drift(params, &y2, a(t + h / 2.0, &y2));
        let y3 = y + k2 * (h / 2.0);
        let k3 = drift(params, &y3, a(t + h / 2.0, &y3));
        let y4 = y + k3 * h;
        let k4 = drift(params, &y4, a(t + h, &y4));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

/// Maximizer of `perron` by golden-section search on `[lo, hi]`.
pub fn argmax(params: &ModelParams, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-9 {
        let x1 = hi - r * (hi - lo);
        let x2 = lo + r * (hi - lo);
        if perron(params, x1) < perron(params, x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    0.5 * (lo + hi)
}
