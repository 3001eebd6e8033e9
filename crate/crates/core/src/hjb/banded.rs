//! Band LU without pivoting, for the diagonally dominant M-matrices of policy
//! evaluation.

use crate::error::{Error, Result};

pub(crate) struct BandMatrix {
    n: usize,
    w: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, w: usize) -> Self {
        BandMatrix {
            n,
            w,
            data: vec![0.0; n * (2 * w + 1)],
        }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.w);
        i * (2 * self.w + 1) + (j + self.w - i)
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.slot(i, j)]
    }

    /// Solves `A x = rhs` in place, destroying the matrix.
    pub(crate) fn solve(mut self, rhs: &mut [f64]) -> Result<()> {
        let (n, w) = (self.n, self.w);
        for k in 0..n {
            let piv = self.get(k, k);
            if !(piv.abs() > 0.0) || !piv.is_finite() {
                return Err(Error::NonFinite("band LU pivot"));
            }
            let last = (k + w).min(n - 1);
            for i in k + 1..=last {
                let s = self.slot(i, k);
                let l = self.data[s] / piv;
                if l == 0.0 {
                    continue;
                }
                self.data[s] = l;
                for j in k + 1..=last {
                    let v = self.get(k, j);
                    let t = self.slot(i, j);
                    self.data[t] -= l * v;
                }
                rhs[i] -= l * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let last = (k + w).min(n - 1);
            let mut acc = rhs[k];
            for j in k + 1..=last {
                acc -= self.get(k, j) * rhs[j];
            }
            rhs[k] = acc / self.get(k, k);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve() {
        let n = 50;
        let mut a = BandMatrix::zeros(n, 2);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            a.add(i, i, 4.0);
            b[i] += 4.0 * x[i];
            if i > 0 {
                a.add(i, i - 1, -1.0);
                b[i] -= x[i - 1];
            }
            if i + 2 < n {
                a.add(i, i + 2, -1.5);
                b[i] -= 1.5 * x[i + 2];
            }
        }
        a.solve(&mut b).unwrap();
        for i in 0..n {
            assert!((b[i] - x[i]).abs() < 1e-13);
        }
    }
}
