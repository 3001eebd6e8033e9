//! The Perron eigenvalue `lambda_P(alpha)` of `G + alpha F` as a function of a
//! constant control: value, derivatives, global maximization and the
//! diagonalizability certificate of the running example.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::spectral::{dominant_root, eval_cubic, ModelParams, RunningRates, SpectralTriple};

/// Finite-difference step for first-derivative cross-checks.
pub const FD_STEP_FIRST: f64 = 1e-5;
/// Finite-difference step for second-derivative cross-checks.
pub const FD_STEP_SECOND: f64 = 1e-4;

const SCAN_POINTS: usize = 400;
const SCAN_START: f64 = 1e-3;

/// Dominant eigenvalue of `G + alpha F`.
pub fn lambda_p(params: &ModelParams, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(validation(format!(
            "control must be nonnegative, got {alpha}"
        )));
    }
    dominant_root(&params.matrix(alpha))
}

/// `d lambda_P / d alpha = phi_alpha F e_alpha`.
pub fn dlambda_p(params: &ModelParams, alpha: f64) -> Result<f64> {
    let s = params.spectrum(alpha)?;
    Ok(s.dominant.left.dot(&(params.f() * s.dominant.right)))
}

/// The two products `(phi_1 F e_i)(phi_i F e_1)` and gaps `lambda_1 - lambda_i`
/// for `i = 2, 3`.
pub(crate) fn second_order_terms(
    triple: &SpectralTriple,
    params: &ModelParams,
) -> Result<[(f64, f64); 2]> {
    let [p1, p2, p3] = triple.real_basis().ok_or_else(|| {
        Error::UnsupportedSpectrum("G + alpha F has a complex eigenvalue pair".into())
    })?;
    let f = params.f();
    let fe1 = f * p1.right;
    Ok([p2, p3].map(|pi| {
        let coupling = p1.left.dot(&(f * pi.right)) * pi.left.dot(&fe1);
        (coupling, p1.value - pi.value)
    }))
}

/// `d^2 lambda_P / d alpha^2 = 2 sum_{i=2,3} (phi_1 F e_i)(phi_i F e_1) / (lambda_1 - lambda_i)`.
pub fn d2lambda_p(params: &ModelParams, alpha: f64) -> Result<f64> {
    let s = params.spectrum(alpha)?;
    let terms = second_order_terms(&s, params)?;
    Ok(2.0 * terms.iter().map(|(c, gap)| c / gap).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    /// `lambda_P` increases from 0 towards `tau1` without a maximum.
    IncreasingToTau1,
    /// `lambda_P` rises to an interior maximum, then decreases to `tau1`.
    InteriorMax,
}

/// Shape of the Perron curve of the running example; the boundary case
/// `tau2 = 2 tau1` has no interior maximum.
pub fn classify_monotonicity(tau1: f64, tau2: f64) -> Monotonicity {
    if tau2 > 2.0 * tau1 {
        Monotonicity::InteriorMax
    } else {
        Monotonicity::IncreasingToTau1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerronOptimum {
    Interior {
        alpha_star: f64,
        lambda_star: f64,
        /// `|d lambda_P / d alpha|` at the returned point.
        derivative: f64,
    },
    /// No interior maximum on the scan range; the supremum over `[a, A]` is
    /// attained at the reported bound.
    Boundary { alpha: f64, lambda: f64 },
}

impl PerronOptimum {
    pub fn alpha(&self) -> f64 {
        match *self {
            PerronOptimum::Interior { alpha_star, .. } => alpha_star,
            PerronOptimum::Boundary { alpha, .. } => alpha,
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            PerronOptimum::Interior { lambda_star, .. } => lambda_star,
            PerronOptimum::Boundary { lambda, .. } => lambda,
        }
    }

    pub fn is_interior(&self) -> bool {
        matches!(self, PerronOptimum::Interior { .. })
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (llo + (lhi - llo) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn golden_max(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Global maximizer of `lambda_P` over `(0, infinity)`.
///
/// A log-spaced scan over `[1e-3, 10 A]` brackets the maximum, golden-section
/// search shrinks the bracket to `1e-6`, and Newton steps on `d lambda_P`
/// finish the job. When the scan maximum sits at an end of the range, the
/// curve is treated as monotone and the supremum over `[a, A]` is reported.
pub fn optimize_perron(params: &ModelParams) -> Result<PerronOptimum> {
    let grid = log_grid(SCAN_START, 10.0 * params.upper(), SCAN_POINTS);
    let values = grid
        .iter()
        .map(|&a| lambda_p(params, a))
        .collect::<Result<Vec<_>>>()?;
    let best = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .expect("non-empty scan");

    if best == 0 || best == grid.len() - 1 {
        let increasing = best == grid.len() - 1;
        let alpha = if increasing {
            params.upper()
        } else {
            params.lower()
        };
        return Ok(PerronOptimum::Boundary {
            alpha,
            lambda: lambda_p(params, alpha)?,
        });
    }

    let mut alpha = golden_max(
        |a| lambda_p(params, a),
        grid[best - 1],
        grid[best + 1],
        1e-6,
    )?;
    let mut slope = dlambda_p(params, alpha)?;
    for _ in 0..3 {
        if slope.abs() <= 1e-8 {
            break;
        }
        let curvature = d2lambda_p(params, alpha)?;
        if curvature >= 0.0 {
            break;
        }
        let next = alpha - slope / curvature;
        let next_slope = dlambda_p(params, next)?;
        if next_slope.abs() >= slope.abs() {
            break;
        }
        alpha = next;
        slope = next_slope;
    }
    Ok(PerronOptimum::Interior {
        alpha_star: alpha,
        lambda_star: lambda_p(params, alpha)?,
        derivative: slope.abs(),
    })
}

/// Residual of the critical-point relation of the running example,
/// `(b2 + b3) l^2 + t1 (b3 - b2) l + 2 alpha b2 b3 l - t1 t2 b2 b3 - 2 alpha t1 b2 b3`,
/// which vanishes whenever `d lambda_P / d alpha = 0`.
pub fn critical_point_residual(rates: &RunningRates, alpha: f64, lambda: f64) -> f64 {
    let RunningRates {
        tau1: t1,
        tau2: t2,
        beta2: b2,
        beta3: b3,
    } = *rates;
    (b2 + b3) * lambda * lambda + t1 * (b3 - b2) * lambda + 2.0 * alpha * b2 * b3 * lambda
        - t1 * t2 * b2 * b3
        - 2.0 * alpha * t1 * b2 * b3
}

/// Sign certificate that `G + alpha F` has three real eigenvalues
/// `lambda_1 > 0 > lambda_2 > lambda_3` (running example with `tau2 > 2 tau1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagonalizabilityCheck {
    pub alpha: f64,
    /// `P(0) = -alpha t1 t2 b3 - alpha^2 t1 b2 b3`.
    pub p_at_zero: f64,
    /// `P(-alpha b3) = alpha t2 b3 (alpha b3 - 2 t1)`.
    pub p_at_minus_alpha_beta3: f64,
    /// `P(-t2) = alpha b2 (t2^2 + t1 t2) + alpha b3 (t2^2 - 2 t1 t2) - alpha^2 (t1 + t2) b2 b3`.
    pub p_at_minus_tau2: f64,
    /// The closed forms agree with direct evaluation of the cubic.
    pub formulas_consistent: bool,
    /// `P(0) < 0` and one of the two negative probes is positive.
    pub sign_certificate: bool,
    /// The eigen-solver reports three real roots with `l1 > 0 > l2 > l3`.
    pub solver_ordered: bool,
    pub eigenvalues: Option<[f64; 3]>,
}

impl DiagonalizabilityCheck {
    pub fn passed(&self) -> bool {
        self.formulas_consistent && self.sign_certificate && self.solver_ordered
    }
}

pub fn diagonalizable_real(params: &ModelParams, alpha: f64) -> Result<DiagonalizabilityCheck> {
    let rates = params
        .rates()
        .ok_or_else(|| validation("diagonalizability certificate needs running-example rates"))?;
    let RunningRates {
        tau1: t1,
        tau2: t2,
        beta2: b2,
        beta3: b3,
    } = rates;
    let p_at_zero = -alpha * t1 * t2 * b3 - alpha * alpha * t1 * b2 * b3;
    let p_at_minus_alpha_beta3 = alpha * t2 * b3 * (alpha * b3 - 2.0 * t1);
    let p_at_minus_tau2 = alpha * b2 * (t2 * t2 + t1 * t2) + alpha * b3 * (t2 * t2 - 2.0 * t1 * t2)
        - alpha * alpha * (t1 + t2) * b2 * b3;

    let poly = crate::spectral::char_poly(params, alpha);
    let close = |closed: f64, x: f64| {
        let direct = eval_cubic(&poly, x);
        (closed - direct).abs() <= 1e-9 * (1.0 + direct.abs())
    };
    let formulas_consistent = close(p_at_zero, 0.0)
        && close(p_at_minus_alpha_beta3, -alpha * b3)
        && close(p_at_minus_tau2, -t2);
    let sign_certificate =
        p_at_zero < 0.0 && (p_at_minus_alpha_beta3 > 0.0 || p_at_minus_tau2 > 0.0);

    let eigenvalues = params
        .spectrum(alpha)
        .ok()
        .and_then(|s| s.real_basis())
        .map(|b| [b[0].value, b[1].value, b[2].value]);
    let solver_ordered = eigenvalues.is_some_and(|[l1, l2, l3]| l1 > 0.0 && 0.0 > l2 && l2 > l3);
    Ok(DiagonalizabilityCheck {
        alpha,
        p_at_zero,
        p_at_minus_alpha_beta3,
        p_at_minus_tau2,
        formulas_consistent,
        sign_certificate,
        solver_ordered,
        eigenvalues,
    })
}

/// Sampled Perron curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerronCurve {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub optimum: PerronOptimum,
}

/// Samples `lambda_P` and its derivative on `alphas` (in parallel).
pub fn perron_curve(params: &ModelParams, alphas: &[f64]) -> Result<PerronCurve> {
    let rows = alphas
        .par_iter()
        .map(|&a| {
            let s = params.spectrum(a)?;
            let d = s.dominant.left.dot(&(params.f() * s.dominant.right));
            Ok((s.dominant.value, d))
        })
        .collect::<Result<Vec<_>>>()?;
    let (values, derivs) = rows.into_iter().unzip();
    Ok(PerronCurve {
        alphas: alphas.to_vec(),
        values,
        derivs,
        optimum: optimize_perron(params)?,
    })
}

impl PerronCurve {
    /// CSV with columns `alpha,lambda,dlambda`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "alpha,lambda,dlambda")?;
        for ((a, l), d) in self.alphas.iter().zip(&self.values).zip(&self.derivs) {
            writeln!(out, "{a},{l},{d}")?;
        }
        Ok(())
    }
}
