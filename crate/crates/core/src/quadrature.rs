//! Quadrature on triangles (barycentric points, weights summing to one)
//! and on edges (Gauss–Legendre on `[0, 1]`).

use crate::mesh::Point;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn centroid() -> Self {
        QuadratureRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
            degree: 1,
        }
    }

    /// Edge-midpoint rule, exact for quadratics.
    pub fn edge_midpoints() -> Self {
        QuadratureRule {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
            degree: 2,
        }
    }

    /// Seven-point rule exact for polynomials of degree five.
    pub fn degree5() -> Self {
        let s = 15f64.sqrt();
        let (b1, b2) = ((6.0 - s) / 21.0, (6.0 + s) / 21.0);
        let (a1, a2) = (1.0 - 2.0 * b1, 1.0 - 2.0 * b2);
        let (w1, w2) = ((155.0 - s) / 1200.0, (155.0 + s) / 1200.0);
        QuadratureRule {
            points: vec![
                [1.0 / 3.0; 3],
                [a1, b1, b1],
                [b1, a1, b1],
                [b1, b1, a1],
                [a2, b2, b2],
                [b2, a2, b2],
                [b2, b2, a2],
            ],
            weights: vec![9.0 / 40.0, w1, w1, w1, w2, w2, w2],
            degree: 5,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical points for the triangle `x`, paired with barycentric
    /// coordinates and weights scaled by `area`.
    pub fn on_triangle(&self, x: &[Point; 3], area: f64) -> impl Iterator<Item = (Point, [f64; 3], f64)> + '_ {
        let x = *x;
        self.points.iter().zip(&self.weights).map(move |(l, &w)| {
            let p = [
                l[0] * x[0][0] + l[1] * x[1][0] + l[2] * x[2][0],
                l[0] * x[0][1] + l[1] * x[1][1] + l[2] * x[2][1],
            ];
            (p, *l, w * area)
        })
    }

    /// Integral of `f` over a triangle with vertices `x`.
    pub fn integrate(&self, x: &[Point; 3], f: impl Fn(Point, [f64; 3]) -> f64) -> f64 {
        let area = crate::mesh::signed_area(x[0], x[1], x[2]).abs();
        self.on_triangle(x, area).map(|(p, l, w)| w * f(p, l)).sum()
    }
}

/// Gauss–Legendre rule on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl EdgeRule {
    pub fn gauss(n: usize) -> Self {
        let (xs, ws): (Vec<f64>, Vec<f64>) = match n {
            1 => (vec![0.0], vec![2.0]),
            2 => {
                let a = (1.0f64 / 3.0).sqrt();
                (vec![-a, a], vec![1.0, 1.0])
            }
            3 => {
                let a = 0.6f64.sqrt();
                (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            4 => {
                let r = (6.0f64 / 5.0).sqrt() * 2.0 / 7.0;
                let (x1, x2) = ((3.0 / 7.0 - r).sqrt(), (3.0 / 7.0 + r).sqrt());
                let s = 30f64.sqrt();
                let (w1, w2) = ((18.0 + s) / 36.0, (18.0 - s) / 36.0);
                (vec![-x2, -x1, x1, x2], vec![w2, w1, w1, w2])
            }
            _ => panic!("Gauss rule with {n} points not tabulated"),
        };
        EdgeRule {
            points: xs.iter().map(|x| 0.5 * (x + 1.0)).collect(),
            weights: ws.iter().map(|w| 0.5 * w).collect(),
            degree: 2 * n - 1,
        }
    }

    /// Integral of `f(point, t)` along the segment `a → b`, with `t ∈ [0, 1]`
    /// the local coordinate from `a`.
    pub fn integrate(&self, a: Point, b: Point, f: impl Fn(Point, f64) -> f64) -> f64 {
        let len = crate::mesh::distance(a, b);
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| {
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                w * len * f(p, t)
            })
            .sum()
    }
}

/// Splits a triangle into four congruent children by connecting its edge
/// midpoints; the child at vertex `k` comes first, the middle one last.
pub fn quadrisect(x: &[Point; 3]) -> [[Point; 3]; 4] {
    let m = |i: usize, j: usize| [0.5 * (x[i][0] + x[j][0]), 0.5 * (x[i][1] + x[j][1])];
    let (m01, m12, m20) = (m(0, 1), m(1, 2), m(2, 0));
    [
        [x[0], m01, m20],
        [m01, x[1], m12],
        [m20, m12, x[2]],
        [m01, m12, m20],
    ]
}

/// Recursively applies [`quadrisect`] `levels` times.
pub fn subdivide(x: &[Point; 3], levels: usize) -> Vec<[Point; 3]> {
    let mut tris = vec![*x];
    for _ in 0..levels {
        tris = tris.iter().flat_map(quadrisect).collect();
    }
    tris
}
