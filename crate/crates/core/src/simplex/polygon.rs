//! Closed polygons in the chart plane with fast point location.

const GRID: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Outside,
    Inside,
    Edge,
}

/// A simple closed polygon (the last vertex connects back to the first).
///
/// Membership uses a uniform grid: cells away from the boundary are
/// classified once, and only queries landing in cells crossed by an edge run
/// the exact crossing-number test.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    verts: Vec<[f64; 2]>,
    lo: [f64; 2],
    cell: [f64; 2],
    cells: Vec<Cell>,
}

impl Polygon {
    pub fn new(verts: Vec<[f64; 2]>) -> Self {
        assert!(verts.len() >= 3, "a polygon needs at least three vertices");
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &verts {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let cell = [0, 1].map(|d| ((hi[d] - lo[d]) / GRID as f64).max(1e-12));
        let mut poly = Polygon {
            verts,
            lo,
            cell,
            cells: vec![Cell::Outside; GRID * GRID],
        };
        let n = poly.verts.len();
        for k in 0..n {
            let (a, b) = (poly.verts[k], poly.verts[(k + 1) % n]);
            let (i0, j0) = poly.cell_of([a[0].min(b[0]), a[1].min(b[1])]);
            let (i1, j1) = poly.cell_of([a[0].max(b[0]), a[1].max(b[1])]);
            for i in i0.saturating_sub(1)..=(i1 + 1).min(GRID - 1) {
                for j in j0.saturating_sub(1)..=(j1 + 1).min(GRID - 1) {
                    poly.cells[i * GRID + j] = Cell::Edge;
                }
            }
        }
        for i in 0..GRID {
            for j in 0..GRID {
                if poly.cells[i * GRID + j] == Cell::Outside {
                    let centre = [
                        lo[0] + (i as f64 + 0.5) * cell[0],
                        lo[1] + (j as f64 + 0.5) * cell[1],
                    ];
                    if poly.crossing_test(centre) {
                        poly.cells[i * GRID + j] = Cell::Inside;
                    }
                }
            }
        }
        poly
    }

    fn cell_of(&self, p: [f64; 2]) -> (usize, usize) {
        let idx = |d: usize| {
            (((p[d] - self.lo[d]) / self.cell[d]).floor().max(0.0) as usize).min(GRID - 1)
        };
        (idx(0), idx(1))
    }

    fn crossing_test(&self, p: [f64; 2]) -> bool {
        let n = self.verts.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.verts[i], self.verts[j]);
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let outside_box =
            (0..2).any(|d| p[d] < self.lo[d] || p[d] > self.lo[d] + self.cell[d] * GRID as f64);
        if outside_box {
            return false;
        }
        let (i, j) = self.cell_of(p);
        match self.cells[i * GRID + j] {
            Cell::Outside => false,
            Cell::Inside => true,
            Cell::Edge => self.crossing_test(p),
        }
    }

    /// Shoelace area, positive for counter-clockwise vertex order.
    pub fn signed_area(&self) -> f64 {
        let n = self.verts.len();
        0.5 * (0..n)
            .map(|k| {
                let (a, b) = (self.verts[k], self.verts[(k + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.verts
    }

    /// Lower-left and upper-right corners of the bounding box.
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let hi = [0, 1].map(|d| self.lo[d] + self.cell[d] * GRID as f64);
        (self.lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_membership() {
        let verts: Vec<[f64; 2]> = (0..720)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 720.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let poly = Polygon::new(verts);
        let exact = 360.0 * (std::f64::consts::TAU / 720.0).sin();
        assert!((poly.signed_area() - exact).abs() < 1e-12);
        for k in 0..200 {
            let t = k as f64 * 0.1;
            let r = 0.02 * k as f64;
            let p = [r * t.cos(), r * t.sin()];
            if r < 0.999 {
                assert!(poly.contains(p), "{p:?}");
            } else if r > 1.0 {
                assert!(!poly.contains(p), "{p:?}");
            }
        }
        assert!(!poly.contains([5.0, 0.0]));
    }

    #[test]
    fn clockwise_area_is_negative() {
        let poly = Polygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]);
        assert_eq!(poly.signed_area(), -1.0);
        assert!(poly.contains([0.5, 0.5]));
        assert!(!poly.contains([1.5, 0.5]));
    }
}
