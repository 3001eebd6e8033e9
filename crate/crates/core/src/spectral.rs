//! Exact 3x3 linear algebra for the controlled system `x' = (G + alpha F) x`.
//!
//! Eigenvalues come from the characteristic cubic (trigonometric or Cardano
//! form, then Newton-polished); eigenvectors are null vectors of `M - lambda I`
//! obtained as cross products of its rows (right) or columns (left).
//!
//! Normalization: every right eigenvector satisfies `<m, e_i> = 1` (falling
//! back to unit Euclidean norm when `e_i` is orthogonal to `m`), and every left
//! eigenvector satisfies `<phi_i, e_i> = 1`. With this choice the vectors
//! `e_i - e_1` are tangent to the simplex, which the tangent-plane formulas of
//! [`crate::simplex`] rely on.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// Rates of the growth-fragmentation running example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningRates {
    pub tau1: f64,
    pub tau2: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl RunningRates {
    /// The reference parameter set (`tau1 = 0.5, tau2 = 5, beta2 = 1, beta3 = 2`).
    pub const REFERENCE: RunningRates = RunningRates {
        tau1: 0.5,
        tau2: 5.0,
        beta2: 1.0,
        beta3: 2.0,
    };
}

/// Model data: growth matrix `G`, fragmentation matrix `F`, size weights `m`
/// and the admissible control interval `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    g: Matrix3<f64>,
    f: Matrix3<f64>,
    m: Vector3<f64>,
    lower: f64,
    upper: f64,
    rates: Option<RunningRates>,
}

const REFERENCE_BOUNDS: (f64, f64) = (1.0, 6.0);

impl ModelParams {
    pub fn new(
        g: Matrix3<f64>,
        f: Matrix3<f64>,
        m: Vector3<f64>,
        lower: f64,
        upper: f64,
    ) -> Result<Self> {
        for (name, mat) in [("G", &g), ("F", &f)] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(validation(format!("{name} has non-finite entries")));
            }
            for i in 0..3 {
                for j in 0..3 {
                    if i != j && mat[(i, j)] < 0.0 {
                        return Err(validation(format!(
                            "{name}[{i}][{j}] = {} is a negative off-diagonal entry",
                            mat[(i, j)]
                        )));
                    }
                }
            }
        }
        if m.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(validation("m must be componentwise positive"));
        }
        let leak = (m.transpose() * f).abs().max();
        let scale = 1.0_f64.max(f.abs().max() * m.abs().max());
        if leak > 1e-12 * scale {
            return Err(validation(format!("m^T F = {leak:.3e} is not zero")));
        }
        if !(lower > 0.0 && lower < upper && upper.is_finite()) {
            return Err(validation(format!(
                "control bounds must satisfy 0 < a < A, got [{lower}, {upper}]"
            )));
        }
        Ok(Self {
            g,
            f,
            m,
            lower,
            upper,
            rates: None,
        })
    }

    /// Running example with the reference control bounds `a = 1, A = 6`.
    pub fn running_example(rates: RunningRates) -> Result<Self> {
        let RunningRates {
            tau1,
            tau2,
            beta2,
            beta3,
        } = rates;
        if [tau1, tau2, beta2, beta3]
            .iter()
            .any(|&r| !(r > 0.0) || !r.is_finite())
        {
            return Err(validation("running-example rates must be positive"));
        }
        #[rustfmt::skip]
        let g = Matrix3::new(
            -tau1, 0.0, 0.0,
            tau1, -tau2, 0.0,
            0.0, tau2, 0.0,
        );
        #[rustfmt::skip]
        let f = Matrix3::new(
            0.0, 2.0 * beta2, beta3,
            0.0, -beta2, beta3,
            0.0, 0.0, -beta3,
        );
        let m = Vector3::new(1.0, 2.0, 3.0);
        let mut params = Self::new(g, f, m, REFERENCE_BOUNDS.0, REFERENCE_BOUNDS.1)?;
        params.rates = Some(rates);
        Ok(params)
    }

    /// Running example at the reference rates and bounds.
    pub fn reference() -> Self {
        Self::running_example(RunningRates::REFERENCE).expect("reference parameters are valid")
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && lower < upper && upper.is_finite()) {
            return Err(validation(format!(
                "control bounds must satisfy 0 < a < A, got [{lower}, {upper}]"
            )));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    /// Multiplies `G` and `F` by `c > 0`; eigenvalues scale by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(validation("scale factor must be positive"));
        }
        let mut out = Self::new(self.g * c, self.f * c, self.m, self.lower, self.upper)?;
        out.rates = self.rates.map(|r| RunningRates {
            tau1: r.tau1 * c,
            tau2: r.tau2 * c,
            beta2: r.beta2 * c,
            beta3: r.beta3 * c,
        });
        Ok(out)
    }

    pub fn g(&self) -> &Matrix3<f64> {
        &self.g
    }

    pub fn f(&self) -> &Matrix3<f64> {
        &self.f
    }

    pub fn m(&self) -> &Vector3<f64> {
        &self.m
    }

    /// Lower control bound `a`.
    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Upper control bound `A`.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Rates, when the model was built from the running example.
    pub fn rates(&self) -> Option<RunningRates> {
        self.rates
    }

    /// `G + alpha F`.
    pub fn matrix(&self, alpha: f64) -> Matrix3<f64> {
        self.g + self.f * alpha
    }

    /// Eigen-decomposition of `G + alpha F` normalized against `m`.
    pub fn spectrum(&self, alpha: f64) -> Result<SpectralTriple> {
        eigen_triple(&self.matrix(alpha), &self.m)
    }
}

/// Coefficients `(1, c2, c1, c0)` of `det(X I - (G + alpha F))`.
pub fn char_poly(params: &ModelParams, alpha: f64) -> [f64; 4] {
    matrix_char_poly(&params.matrix(alpha))
}

pub(crate) fn matrix_char_poly(mat: &Matrix3<f64>) -> [f64; 4] {
    let tr = mat.trace();
    let minors = mat[(0, 0)] * mat[(1, 1)] - mat[(0, 1)] * mat[(1, 0)] + mat[(0, 0)] * mat[(2, 2)]
        - mat[(0, 2)] * mat[(2, 0)]
        + mat[(1, 1)] * mat[(2, 2)]
        - mat[(1, 2)] * mat[(2, 1)];
    [1.0, -tr, minors, -mat.determinant()]
}

pub(crate) fn eval_cubic(c: &[f64; 4], x: f64) -> f64 {
    ((c[0] * x + c[1]) * x + c[2]) * x + c[3]
}

fn eval_cubic_deriv(c: &[f64; 4], x: f64) -> f64 {
    (3.0 * c[0] * x + 2.0 * c[1]) * x + c[2]
}

/// Roots of a monic cubic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum CubicRoots {
    /// Three real roots in decreasing order.
    Real([f64; 3]),
    /// One real root and a complex-conjugate pair `re +/- i im`.
    Complex { real: f64, re: f64, im: f64 },
}

fn polish(c: &[f64; 4], mut x: f64) -> f64 {
    for _ in 0..5 {
        let d = eval_cubic_deriv(c, x);
        if d == 0.0 {
            break;
        }
        let step = eval_cubic(c, x) / d;
        let next = x - step;
        if !next.is_finite() || eval_cubic(c, next).abs() > eval_cubic(c, x).abs() {
            break;
        }
        x = next;
        if step.abs() <= f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// A double root is only resolved to about `sqrt(eps)` by any closed form.
/// Adjacent roots that straddle a critical point where the cubic vanishes to
/// rounding are collapsed onto that critical point.
fn merge_double_roots(c: &[f64; 4], mut roots: [f64; 3]) -> [f64; 3] {
    let scale = roots.iter().fold(1.0_f64, |acc, r| acc.max(r.abs()));
    for k in 0..2 {
        if roots[k] - roots[k + 1] > 1e-6 * scale {
            continue;
        }
        // Critical points of the cubic: 3 x^2 + 2 c2 x + c1 = 0.
        let disc = (c[1] * c[1] - 3.0 * c[2]).max(0.0).sqrt();
        let crit = [(-c[1] + disc) / 3.0, (-c[1] - disc) / 3.0];
        let mid = 0.5 * (roots[k] + roots[k + 1]);
        let x = if (crit[0] - mid).abs() < (crit[1] - mid).abs() {
            crit[0]
        } else {
            crit[1]
        };
        if eval_cubic(c, x).abs() <= 64.0 * f64::EPSILON * scale.powi(3) {
            roots[k] = x;
            roots[k + 1] = x;
        }
    }
    roots
}

pub(crate) fn cubic_roots(c: &[f64; 4]) -> CubicRoots {
    debug_assert!(c[0] == 1.0);
    let (c2, c1, c0) = (c[1], c[2], c[3]);
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = q * q / 4.0 + p * p * p / 27.0;

    if p < 0.0 && disc <= 0.0 {
        // Three real roots: trigonometric form.
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q) / (p * r)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        let two_pi_3 = 2.0 * std::f64::consts::PI / 3.0;
        let mut roots =
            [0, 1, 2].map(|k| polish(c, r * (theta - two_pi_3 * k as f64).cos() - shift));
        roots.sort_by(|a, b| b.total_cmp(a));
        return CubicRoots::Real(merge_double_roots(c, roots));
    }

    // One real root: Cardano.
    let sq = disc.max(0.0).sqrt();
    let t = (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt();
    let real = polish(c, t - shift);
    // Deflate: X^2 + (c2 + r) X + (c1 + (c2 + r) r).
    let b = c2 + real;
    let k = c1 + b * real;
    let d = b * b / 4.0 - k;
    if d >= 0.0 {
        let s = d.sqrt();
        let mut roots = [real, polish(c, -b / 2.0 + s), polish(c, -b / 2.0 - s)];
        roots.sort_by(|a, b| b.total_cmp(a));
        CubicRoots::Real(merge_double_roots(c, roots))
    } else {
        CubicRoots::Complex {
            real,
            re: -b / 2.0,
            im: (-d).sqrt(),
        }
    }
}

/// An eigenvalue with its right and left eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenpair {
    pub value: f64,
    pub right: Vector3<f64>,
    pub left: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Subdominant {
    /// Two real eigenpairs, `lambda_2 >= lambda_3`.
    Real([Eigenpair; 2]),
    /// A complex-conjugate pair; eigenvectors are not computed.
    ComplexPair { re: f64, im: f64 },
}

/// Spectrum of a 3x3 matrix with a simple real dominant eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralTriple {
    pub dominant: Eigenpair,
    pub subdominant: Subdominant,
    /// `min_{i=2,3} (lambda_1 - Re lambda_i)`.
    pub gap: f64,
}

impl SpectralTriple {
    pub fn lambdas(&self) -> [Complex64; 3] {
        let l1 = Complex64::new(self.dominant.value, 0.0);
        match self.subdominant {
            Subdominant::Real([p2, p3]) => [
                l1,
                Complex64::new(p2.value, 0.0),
                Complex64::new(p3.value, 0.0),
            ],
            Subdominant::ComplexPair { re, im } => {
                [l1, Complex64::new(re, im), Complex64::new(re, -im)]
            }
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self.subdominant, Subdominant::Real(_))
    }

    /// The three real eigenpairs, dominant first; `None` for a complex pair.
    pub fn real_basis(&self) -> Option<[Eigenpair; 3]> {
        match self.subdominant {
            Subdominant::Real([p2, p3]) => Some([self.dominant, p2, p3]),
            Subdominant::ComplexPair { .. } => None,
        }
    }
}

fn largest_cross(v: [Vector3<f64>; 3]) -> Vector3<f64> {
    let candidates = [v[0].cross(&v[1]), v[0].cross(&v[2]), v[1].cross(&v[2])];
    candidates
        .into_iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
        .expect("three candidates")
}

fn null_vectors(mat: &Matrix3<f64>, lambda: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let shifted = mat - Matrix3::identity() * lambda;
    let rows = [0, 1, 2].map(|i| shifted.row(i).transpose());
    let cols = [0, 1, 2].map(|j| shifted.column(j).into_owned());
    let right = largest_cross(rows);
    let left = largest_cross(cols);
    let scale = shifted.norm().max(f64::MIN_POSITIVE);
    let tiny = 1e-13 * scale * scale;
    if right.norm() <= tiny || left.norm() <= tiny {
        return Err(Error::UnsupportedSpectrum(format!(
            "eigenvalue {lambda} has a two-dimensional eigenspace"
        )));
    }
    Ok((right, left))
}

fn normalize_pair(
    mut right: Vector3<f64>,
    mut left: Vector3<f64>,
    m: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let mass = m.dot(&right);
    if mass.abs() > 1e-10 * m.norm() * right.norm() {
        right /= mass;
    } else {
        right /= right.norm();
        let pivot = right.iamax();
        if right[pivot] < 0.0 {
            right = -right;
        }
    }
    let pairing = left.dot(&right);
    if pairing.abs() <= 1e-14 * left.norm() * right.norm() {
        return Err(Error::UnsupportedSpectrum(
            "left and right eigenvectors are orthogonal (defective eigenvalue)".into(),
        ));
    }
    left /= pairing;
    Ok((right, left))
}

/// Eigenvalues and biorthonormal eigenvectors of `mat`, normalized against `m`.
pub fn eigen_triple(mat: &Matrix3<f64>, m: &Vector3<f64>) -> Result<SpectralTriple> {
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigen_triple"));
    }
    let coeffs = matrix_char_poly(mat);
    let pair = |value: f64| -> Result<Eigenpair> {
        let (r, l) = null_vectors(mat, value)?;
        let (right, left) = normalize_pair(r, l, m)?;
        Ok(Eigenpair { value, right, left })
    };
    match cubic_roots(&coeffs) {
        CubicRoots::Real([l1, l2, l3]) => {
            let gap = l1 - l2;
            if gap < 1e-10 {
                return Err(Error::DegenerateSpectrum { gap });
            }
            let dominant = pair(l1)?;
            let subdominant = Subdominant::Real([pair(l2)?, pair(l3)?]);
            Ok(SpectralTriple {
                dominant,
                subdominant,
                gap,
            })
        }
        CubicRoots::Complex { real, re, im } => {
            let gap = real - re;
            if gap < 1e-10 {
                if gap < 0.0 {
                    return Err(Error::UnsupportedSpectrum(format!(
                        "dominant eigenvalues form a complex pair {re} +/- {im}i"
                    )));
                }
                return Err(Error::DegenerateSpectrum { gap });
            }
            Ok(SpectralTriple {
                dominant: pair(real)?,
                subdominant: Subdominant::ComplexPair { re, im },
                gap,
            })
        }
    }
}

/// Largest real root of the characteristic polynomial (no eigenvectors).
pub(crate) fn dominant_root(mat: &Matrix3<f64>) -> Result<f64> {
    match cubic_roots(&matrix_char_poly(mat)) {
        CubicRoots::Real([l1, l2, _]) => {
            if l1 - l2 < 1e-10 {
                Err(Error::DegenerateSpectrum { gap: l1 - l2 })
            } else {
                Ok(l1)
            }
        }
        CubicRoots::Complex { real, re, .. } => {
            if real - re < 1e-10 {
                Err(Error::DegenerateSpectrum { gap: real - re })
            } else {
                Ok(real)
            }
        }
    }
}

/// Rotation by `+pi/2` about `m / |m|` in the plane orthogonal to `m`.
pub fn theta_rotate(v: &Vector3<f64>, m: &Vector3<f64>) -> Result<Vector3<f64>> {
    let mn = m.norm();
    if m.dot(v).abs() > 1e-9 * mn * v.norm().max(1.0) {
        return Err(validation(format!(
            "vector is not tangent to the simplex: <m, v> = {:.3e}",
            m.dot(v)
        )));
    }
    Ok(rotate_tangent(v, m))
}

/// [`theta_rotate`] without the tangency check.
pub(crate) fn rotate_tangent(v: &Vector3<f64>, m: &Vector3<f64>) -> Vector3<f64> {
    m.cross(v) / m.norm()
}

/// Strong connectivity of the graph with an edge `i -> j` whenever
/// `M[j][i] != 0`, `i != j`.
pub fn irreducible(mat: &Matrix3<f64>) -> bool {
    let reach_all = |edge: &dyn Fn(usize, usize) -> bool| {
        let mut seen = [true, false, false];
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            for j in 0..3 {
                if i != j && !seen[j] && edge(i, j) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    reach_all(&|i, j| mat[(j, i)] != 0.0) && reach_all(&|i, j| mat[(i, j)] != 0.0)
}
