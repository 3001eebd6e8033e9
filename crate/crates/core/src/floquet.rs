//! Floquet eigenvalue of periodic controls and its first two directional
//! derivatives around a constant control.

use std::io::Write;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{ControlSignal, Segment};
use crate::error::{validation, Error, Result};
use crate::perron::{dlambda_p, second_order_terms};
use crate::spectral::{cubic_roots, matrix_char_poly, CubicRoots, ModelParams};

/// Upper bound on the RK4 step used for monodromy matrices.
pub const MAX_STEP: f64 = 1e-3;
/// Lower bound on the number of RK4 steps per period.
pub const MIN_STEPS_PER_PERIOD: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloquetResult {
    pub lambda_f: f64,
    #[serde(skip)]
    pub monodromy: Matrix3<f64>,
    pub dominant_multiplier: f64,
    pub period: f64,
    pub steps: usize,
    pub max_step: f64,
}

fn periodic_parts(control: &ControlSignal) -> Result<(f64, Vec<Segment>)> {
    match (control.period(), control.period_segments()) {
        (Some(p), Some(s)) => Ok((p, s)),
        _ => Err(validation(
            "Floquet analysis needs a constant or periodic control",
        )),
    }
}

/// Fundamental matrix over one period of `X' = (G + alpha(t) F) X`, `X(0) = I`,
/// with the step count. RK4 runs separately on every control segment so that
/// jumps of the control never fall inside a step.
pub fn monodromy(params: &ModelParams, control: &ControlSignal) -> Result<(Matrix3<f64>, usize)> {
    let (period, segments) = periodic_parts(control)?;
    let h_max = (period / MIN_STEPS_PER_PERIOD as f64).min(MAX_STEP);
    let (g, f) = (*params.g(), *params.f());
    let rhs = |alpha: f64, x: &Matrix3<f64>| (g + f * alpha) * x;
    let mut x = Matrix3::identity();
    let mut steps = 0;
    for seg in &segments {
        let len = seg.t1 - seg.t0;
        let n = (len / h_max).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for k in 0..n {
            let t = seg.t0 + k as f64 * h;
            let a0 = seg.value(t);
            let am = seg.value(t + 0.5 * h);
            let a1 = seg.value(t + h);
            let k1 = rhs(a0, &x);
            let k2 = rhs(am, &(x + k1 * (0.5 * h)));
            let k3 = rhs(am, &(x + k2 * (0.5 * h)));
            let k4 = rhs(a1, &(x + k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        steps += n;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("monodromy"));
        }
    }
    Ok((x, steps))
}

/// Dominant Floquet multiplier: a simple positive real root of the
/// characteristic polynomial of the monodromy matrix.
fn dominant_multiplier(mono: &Matrix3<f64>) -> Result<f64> {
    let (rho, others) = match cubic_roots(&matrix_char_poly(mono)) {
        CubicRoots::Real([r1, r2, r3]) => {
            let best = [r1, r2, r3]
                .into_iter()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .expect("three roots");
            let rest: Vec<f64> = [r1, r2, r3]
                .into_iter()
                .filter(|&r| r != best)
                .map(f64::abs)
                .collect();
            (best, rest.into_iter().fold(0.0, f64::max))
        }
        CubicRoots::Complex { real, re, im } => (real, re.hypot(im)),
    };
    if !(rho > 0.0) {
        return Err(Error::UnsupportedSpectrum(format!(
            "dominant Floquet multiplier {rho} is not positive"
        )));
    }
    if rho - others < 1e-10 {
        return Err(Error::DegenerateSpectrum { gap: rho - others });
    }
    Ok(rho)
}

/// `lambda_F = log(rho) / theta` for the dominant multiplier `rho`.
pub fn lambda_f(params: &ModelParams, control: &ControlSignal) -> Result<FloquetResult> {
    let (period, _) = periodic_parts(control)?;
    let (mono, steps) = monodromy(params, control)?;
    let rho = dominant_multiplier(&mono)?;
    Ok(FloquetResult {
        lambda_f: rho.ln() / period,
        monodromy: mono,
        dominant_multiplier: rho,
        period,
        steps,
        max_step: (period / MIN_STEPS_PER_PERIOD as f64).min(MAX_STEP),
    })
}

/// Relative gap between `det` of the monodromy and `exp(int trace)`.
pub fn liouville_defect(
    params: &ModelParams,
    control: &ControlSignal,
    mono: &Matrix3<f64>,
) -> Result<f64> {
    let (period, _) = periodic_parts(control)?;
    let mean = control.mean().expect("periodic");
    let expected = ((params.g().trace() + mean * params.f().trace()) * period).exp();
    Ok((mono.determinant() - expected).abs() / expected)
}

const GL_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// The periodic solution `gamma_i` of `gamma_i' / mu + gamma_i = gamma`.
///
/// On each segment `gamma` is affine, so `gamma_i` is that affine function
/// lagged by `1/mu` plus a decaying exponential; the periodic start value
/// closes the loop over one period.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSignal {
    period: f64,
    mu: f64,
    segments: Vec<Segment>,
    starts: Vec<f64>,
}

fn relax(seg: &Segment, mu: f64, x0: f64, tau: f64) -> f64 {
    let p0 = seg.v0 - seg.slope / mu;
    p0 + seg.slope * tau + (x0 - p0) * (-mu * tau).exp()
}

fn relax_rate(seg: &Segment, mu: f64, x0: f64, tau: f64) -> f64 {
    let p0 = seg.v0 - seg.slope / mu;
    seg.slope - mu * (x0 - p0) * (-mu * tau).exp()
}

pub fn gamma_i(gamma: &ControlSignal, mu: f64) -> Result<RelaxedSignal> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(validation(format!(
            "relaxation rate must be positive, got {mu}"
        )));
    }
    let (period, segments) = periodic_parts(gamma)?;
    let end = |x0: f64| {
        segments
            .iter()
            .fold(x0, |x, s| relax(s, mu, x, s.t1 - s.t0))
    };
    let offset = end(0.0);
    let contraction = (-mu * period).exp();
    let x0 = offset / (1.0 - contraction);
    let mut starts = Vec::with_capacity(segments.len());
    let mut x = x0;
    for s in &segments {
        starts.push(x);
        x = relax(s, mu, x, s.t1 - s.t0);
    }
    Ok(RelaxedSignal {
        period,
        mu,
        segments,
        starts,
    })
}

impl RelaxedSignal {
    fn locate(&self, t: f64) -> (usize, f64) {
        let s = t.rem_euclid(self.period);
        let k = self
            .segments
            .partition_point(|seg| seg.t1 <= s)
            .min(self.segments.len() - 1);
        (k, s - self.segments[k].t0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (k, tau) = self.locate(t);
        relax(&self.segments[k], self.mu, self.starts[k], tau)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Integral average over one period of `g(gamma(t), gamma_i(t))`.
    fn average(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        let mut total = 0.0;
        for (seg, &x0) in self.segments.iter().zip(&self.starts) {
            let len = seg.t1 - seg.t0;
            let pieces = (self.mu * len / 0.25).ceil().max(1.0) as usize;
            let h = len / pieces as f64;
            for p in 0..pieces {
                let mid = (p as f64 + 0.5) * h;
                for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
                    let tau = mid + 0.5 * h * node;
                    total += 0.5 * h * w * g(seg.value(seg.t0 + tau), relax(seg, self.mu, x0, tau));
                }
            }
        }
        total / self.period
    }

    /// `<gamma_i^2>` over one period.
    pub fn mean_square(&self) -> f64 {
        self.average(|_, gi| gi * gi)
    }

    /// `<gamma gamma_i>` over one period.
    pub fn mean_cross(&self) -> f64 {
        self.average(|g, gi| g * gi)
    }

    /// Largest violation of the relaxation ODE at quadrature nodes, together
    /// with the mismatch of the periodic closure.
    pub fn residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (seg, &x0) in self.segments.iter().zip(&self.starts) {
            let len = seg.t1 - seg.t0;
            for node in GL_NODES {
                let tau = 0.5 * len * (1.0 + node);
                let lhs =
                    relax_rate(seg, self.mu, x0, tau) / self.mu + relax(seg, self.mu, x0, tau);
                worst = worst.max((lhs - seg.value(seg.t0 + tau)).abs());
            }
        }
        let last = self.segments.len() - 1;
        let seg = &self.segments[last];
        let closure = relax(seg, self.mu, self.starts[last], seg.t1 - seg.t0) - self.starts[0];
        worst.max(closure.abs())
    }
}

/// First directional derivative of `lambda_F` at the constant control `alpha`
/// in the direction `gamma`: `<gamma> d lambda_P / d alpha`.
pub fn first_directional(params: &ModelParams, alpha: f64, gamma: &ControlSignal) -> Result<f64> {
    let mean = gamma
        .mean()
        .ok_or_else(|| validation("direction must be constant or periodic"))?;
    Ok(mean * dlambda_p(params, alpha)?)
}

/// Second directional derivative
/// `2 sum_{i=2,3} <gamma_i^2> (phi_1 F e_i)(phi_i F e_1) / (lambda_1 - lambda_i)`.
pub fn second_directional(params: &ModelParams, alpha: f64, gamma: &ControlSignal) -> Result<f64> {
    let s = params.spectrum(alpha)?;
    let terms = second_order_terms(&s, params)?;
    let mut total = 0.0;
    for (coupling, gap) in terms {
        let weight = gamma_i(gamma, gap)?.mean_square();
        total += weight * coupling / gap;
    }
    Ok(2.0 * total)
}

/// `(lambda_F(alpha + eps gamma) - lambda_F(alpha - eps gamma)) / (2 eps)`.
pub fn first_directional_fd(
    params: &ModelParams,
    alpha: f64,
    gamma: &ControlSignal,
    eps: f64,
) -> Result<f64> {
    let plus = lambda_f(params, &gamma.perturb(alpha, eps))?.lambda_f;
    let minus = lambda_f(params, &gamma.perturb(alpha, -eps))?.lambda_f;
    Ok((plus - minus) / (2.0 * eps))
}

/// Second central difference of `eps -> lambda_F(alpha + eps gamma)` at 0.
pub fn second_directional_fd(
    params: &ModelParams,
    alpha: f64,
    gamma: &ControlSignal,
    eps: f64,
) -> Result<f64> {
    let plus = lambda_f(params, &gamma.perturb(alpha, eps))?.lambda_f;
    let mid = lambda_f(params, &ControlSignal::constant(alpha))?.lambda_f;
    let minus = lambda_f(params, &gamma.perturb(alpha, -eps))?.lambda_f;
    Ok((plus - 2.0 * mid + minus) / (eps * eps))
}

/// `lambda_F(alpha + eps gamma)` for every `eps` (computed in parallel).
pub fn epsilon_sweep(
    params: &ModelParams,
    alpha: f64,
    gamma: &ControlSignal,
    eps: &[f64],
) -> Result<Vec<(f64, f64)>> {
    eps.par_iter()
        .map(|&e| Ok((e, lambda_f(params, &gamma.perturb(alpha, e))?.lambda_f)))
        .collect()
}

/// CSV with columns `epsilon,lambda_f`.
pub fn write_sweep_csv<W: Write>(rows: &[(f64, f64)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epsilon,lambda_f")?;
    for (e, l) in rows {
        writeln!(out, "{e},{l}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perron::{d2lambda_p, lambda_p, optimize_perron};

    #[test]
    fn constant_control_reduces_to_perron() {
        let p = ModelParams::reference();
        for alpha in [0.0, 1.0, 3.35, 6.0] {
            let r = lambda_f(&p, &ControlSignal::constant(alpha)).unwrap();
            assert!(
                (r.lambda_f - lambda_p(&p, alpha).unwrap()).abs() <= 1e-8,
                "{alpha}"
            );
        }
    }

    #[test]
    fn constant_monodromy_is_exponential() {
        let p = ModelParams::reference();
        let (mono, _) = monodromy(&p, &ControlSignal::constant(2.0)).unwrap();
        let exact = p.matrix(2.0).exp();
        assert!((mono - exact).norm() <= 1e-9 * exact.norm());
    }

    #[test]
    fn square_wave_matches_composed_exponentials() {
        let p = ModelParams::reference();
        let sq = ControlSignal::square(1.0).unwrap().perturb(3.5, 2.5);
        let (mono, _) = monodromy(&p, &sq).unwrap();
        let exact = (p.matrix(1.0) * 0.5).exp() * (p.matrix(6.0) * 0.5).exp();
        assert!((mono - exact).norm() <= 1e-9 * exact.norm());
        assert!(liouville_defect(&p, &sq, &mono).unwrap() <= 1e-7);
    }

    #[test]
    fn short_period_expansion() {
        let p = ModelParams::reference();
        let theta = 1e-3;
        let c = ControlSignal::cosine(theta, 16).unwrap().perturb(2.0, 1.0);
        let (mono, _) = monodromy(&p, &c).unwrap();
        let first = Matrix3::identity() + p.matrix(2.0) * theta;
        assert!((mono - first).norm() <= 10.0 * (p.matrix(2.0) * theta).norm().powi(2));
    }

    #[test]
    fn relaxation_of_constants_and_cosines() {
        let one = ControlSignal::constant(1.0);
        let g = gamma_i(&one, 3.0).unwrap();
        assert!((g.eval(0.37) - 1.0).abs() < 1e-14);
        assert!((g.mean_square() - 1.0).abs() < 1e-12);

        let theta = 2.0;
        let mu = 1.7;
        let cos = ControlSignal::cosine(theta, 4096).unwrap();
        let g = gamma_i(&cos, mu).unwrap();
        let w = 2.0 * std::f64::consts::PI / theta;
        let gain = mu / (mu * mu + w * w).sqrt();
        let lag = (w / mu).atan();
        for k in 0..20 {
            let t = k as f64 * 0.137;
            let oracle = gain * (w * t - lag).cos();
            assert!((g.eval(t) - oracle).abs() < 1e-5, "{t}");
        }
        assert!(g.residual() <= 1e-8);
        assert!((g.mean_square() - g.mean_cross()).abs() <= 1e-8);
        assert!(gamma_i(&cos, 0.0).is_err());
    }

    #[test]
    fn square_wave_identity() {
        let sq = ControlSignal::square(1.0).unwrap();
        for mu in [0.5, 3.6, 14.1] {
            let g = gamma_i(&sq, mu).unwrap();
            assert!(g.residual() <= 1e-8);
            assert!((g.mean_square() - g.mean_cross()).abs() <= 1e-8);
        }
    }

    #[test]
    fn gamma_one_reproduces_perron_curvature() {
        let p = ModelParams::reference();
        let alpha = optimize_perron(&p).unwrap().alpha();
        let one = ControlSignal::constant(1.0);
        let sd = second_directional(&p, alpha, &one).unwrap();
        let d2 = d2lambda_p(&p, alpha).unwrap();
        assert!((sd - d2).abs() <= 1e-10);
        assert!(first_directional(&p, alpha, &one).unwrap().abs() <= 1e-8);
    }

    #[test]
    fn fast_oscillations_are_filtered() {
        let p = ModelParams::reference();
        let slow = second_directional(&p, 3.35, &ControlSignal::sine(1.0, 64).unwrap()).unwrap();
        let fast = second_directional(&p, 3.35, &ControlSignal::sine(1e-3, 64).unwrap()).unwrap();
        assert!(fast.abs() < 1e-3 * slow.abs());
    }

    #[test]
    fn sweep_csv() {
        let p = ModelParams::reference();
        let sq = ControlSignal::square(1.0).unwrap();
        let rows = epsilon_sweep(&p, 3.35, &sq, &[0.0, 0.1]).unwrap();
        assert!((rows[0].1 - lambda_p(&p, 3.35).unwrap()).abs() < 1e-8);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("epsilon,lambda_f\n0,"));
    }
}
