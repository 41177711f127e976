//! Benchmark problems with known solutions, exact error norms, efficiency
//! indices and convergence rates.
//!
//! Both examples are stated as lower-obstacle problems `φ ≥ ψ`. They are
//! stored here in the upper-obstacle form used by the solver, i.e. with `f`,
//! `φ_D` and the obstacle negated; [`ProblemDefinition::negated`] records
//! that the computed field is `−φ`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::fem::{constant, field, P1Function, ProblemData};
use crate::mesh::{rectangle_two_triangles, BoundaryTag, Mesh, Point};
use crate::quadrature::{subdivide, QuadratureRule};

/// Exact solution in the problem's original sign convention.
pub trait ExactSolution: Send + Sync {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> [f64; 2];
    /// Whether the triangle straddles a curve where the gradient jumps or
    /// the solution changes formula.
    fn crosses_kink(&self, x: &[Point; 3]) -> bool;
}

#[derive(Clone)]
pub struct ProblemDefinition {
    pub name: String,
    pub eps: f64,
    /// Coarse mesh before uniform pre-refinement.
    pub mesh: Mesh,
    pub initial_refinements: usize,
    /// Data in upper-obstacle form.
    pub data: ProblemData,
    pub exact: Option<Arc<dyn ExactSolution>>,
    /// `true` when `data` is the negation of a lower-obstacle problem.
    pub negated: bool,
    /// Free-form description of the initial mesh layout, for metadata.
    pub initial_mesh: String,
}

impl std::fmt::Debug for ProblemDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemDefinition")
            .field("name", &self.name)
            .field("eps", &self.eps)
            .field("initial_refinements", &self.initial_refinements)
            .field("negated", &self.negated)
            .finish_non_exhaustive()
    }
}

impl ProblemDefinition {
    pub fn initial_mesh(&self) -> Mesh {
        let mut mesh = self.mesh.clone();
        for _ in 0..self.initial_refinements {
            mesh = mesh.uniform_refine();
        }
        mesh
    }

    /// Sign that maps computed values back to the original convention.
    pub fn sign(&self) -> f64 {
        if self.negated {
            -1.0
        } else {
            1.0
        }
    }

    /// Exact solution expressed in the solver's sign convention.
    pub fn canonical_exact(&self) -> Option<Canonical> {
        self.exact.clone().map(|inner| Canonical {
            inner,
            sign: self.sign(),
        })
    }
}

/// Exact solution multiplied by a fixed sign.
#[derive(Clone)]
pub struct Canonical {
    inner: Arc<dyn ExactSolution>,
    sign: f64,
}

impl ExactSolution for Canonical {
    fn value(&self, p: Point) -> f64 {
        self.sign * self.inner.value(p)
    }

    fn gradient(&self, p: Point) -> [f64; 2] {
        let g = self.inner.gradient(p);
        [self.sign * g[0], self.sign * g[1]]
    }

    fn crosses_kink(&self, x: &[Point; 3]) -> bool {
        self.inner.crosses_kink(x)
    }
}

/// `cosh(a)/cosh(b)` for `|a| ≤ b` without overflow.
fn cosh_ratio(a: f64, b: f64) -> f64 {
    let a = a.abs();
    (a - b).exp() * (1.0 + (-2.0 * a).exp()) / (1.0 + (-2.0 * b).exp())
}

/// `sinh(a)/cosh(b)` for `|a| ≤ b` without overflow.
fn sinh_ratio(a: f64, b: f64) -> f64 {
    a.signum() * (a.abs() - b).exp() * (1.0 - (-2.0 * a.abs()).exp()) / (1.0 + (-2.0 * b).exp())
}

/// Boundary-layer solution on two rotated strips.
#[derive(Clone, Debug)]
pub struct StripSolution {
    pub eps: f64,
    pub alpha: f64,
    pub strips: [[f64; 2]; 2],
}

impl StripSolution {
    pub fn new(eps: f64) -> Self {
        StripSolution {
            eps,
            alpha: -PI / 16.0,
            strips: [[-1.5, -0.5], [0.5, 1.5]],
        }
    }

    /// Coordinate across the strips, `(R⁻¹ x)_1`.
    pub fn xi(&self, p: Point) -> f64 {
        self.alpha.cos() * p[0] + self.alpha.sin() * p[1]
    }

    pub fn strip_of(&self, xi: f64) -> Option<usize> {
        self.strips.iter().position(|s| xi > s[0] && xi < s[1])
    }

    /// Coefficients `(c, c')` of `c e^{x/ε} + c' e^{−x/ε} − 1` on strip `k`.
    /// They overflow for very small `ε`; evaluation does not use them.
    pub fn coefficients(&self, k: usize) -> [f64; 2] {
        let [a, b] = self.strips[k];
        let (m, half) = (0.5 * (a + b), 0.5 * (b - a));
        let denom = 2.0 * (half / self.eps).cosh();
        [(-m / self.eps).exp() / denom, (m / self.eps).exp() / denom]
    }

    /// One-dimensional profile and its derivative.
    pub fn profile(&self, xi: f64) -> (f64, f64) {
        match self.strip_of(xi) {
            None => (0.0, 0.0),
            Some(k) => {
                let [a, b] = self.strips[k];
                let (m, half) = (0.5 * (a + b), 0.5 * (b - a));
                let (t, s) = ((xi - m) / self.eps, half / self.eps);
                (cosh_ratio(t, s) - 1.0, sinh_ratio(t, s) / self.eps)
            }
        }
    }

    /// Upper obstacle (negated form): zero outside the strips and a tent
    /// `min(σ d, 2)` inside, `d` the distance to the strip boundary. The
    /// slope `σ` is twice the boundary slope of the exact solution, so the
    /// constraint never binds inside the strips.
    pub fn obstacle(&self, p: Point) -> f64 {
        let xi = self.xi(p);
        match self.strip_of(xi) {
            None => 0.0,
            Some(k) => {
                let [a, b] = self.strips[k];
                let half = 0.5 * (b - a);
                let slope = 2.0 * (half / self.eps).tanh() / self.eps;
                (slope * (xi - a).min(b - xi)).min(2.0)
            }
        }
    }
}

impl ExactSolution for StripSolution {
    fn value(&self, p: Point) -> f64 {
        self.profile(self.xi(p)).0
    }

    fn gradient(&self, p: Point) -> [f64; 2] {
        let d = self.profile(self.xi(p)).1;
        [d * self.alpha.cos(), d * self.alpha.sin()]
    }

    fn crosses_kink(&self, x: &[Point; 3]) -> bool {
        let xs = x.map(|p| self.xi(p));
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.strips.iter().flatten().any(|&c| lo < c && c < hi)
    }
}

/// Radially symmetric smooth solution, zero on the unit disk.
#[derive(Clone, Debug)]
pub struct RadialSolution {
    pub eps: f64,
}

impl RadialSolution {
    pub fn profile(r: f64) -> f64 {
        if r >= 1.0 {
            0.5 * r * r - r.ln() - 0.5
        } else {
            0.0
        }
    }

    pub fn load(&self, p: Point) -> f64 {
        let r2 = p[0] * p[0] + p[1] * p[1];
        let base = -2.0 * self.eps * self.eps;
        if r2 >= 1.0 {
            base + Self::profile(r2.sqrt())
        } else {
            base + 0.5 * (r2 - 1.0)
        }
    }
}

impl ExactSolution for RadialSolution {
    fn value(&self, p: Point) -> f64 {
        Self::profile(p[0].hypot(p[1]))
    }

    fn gradient(&self, p: Point) -> [f64; 2] {
        let r2 = p[0] * p[0] + p[1] * p[1];
        if r2 >= 1.0 {
            let s = 1.0 - 1.0 / r2;
            [s * p[0], s * p[1]]
        } else {
            [0.0, 0.0]
        }
    }

    fn crosses_kink(&self, x: &[Point; 3]) -> bool {
        let rmax = x.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
        rmax > 1.0 && distance_to_origin(x) < 1.0
    }
}

/// Distance from the origin to a closed triangle.
fn distance_to_origin(x: &[Point; 3]) -> f64 {
    let o = [0.0, 0.0];
    let inside = {
        let s = |a: Point, b: Point| (b[0] - a[0]) * (o[1] - a[1]) - (b[1] - a[1]) * (o[0] - a[0]);
        let (d0, d1, d2) = (s(x[0], x[1]), s(x[1], x[2]), s(x[2], x[0]));
        (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
    };
    if inside {
        return 0.0;
    }
    (0..3)
        .map(|k| {
            let (a, b) = (x[k], x[(k + 1) % 3]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let t = (-(a[0] * d[0] + a[1] * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
            (a[0] + t * d[0]).hypot(a[1] + t * d[1])
        })
        .fold(f64::INFINITY, f64::min)
}

/// Boundary layers enforced by obstacle constraints on two rotated strips
/// in `[−2.5, 2.5]²`, pure Neumann boundary.
pub fn example1(eps: f64) -> ProblemDefinition {
    let exact = StripSolution::new(eps);
    let g = exact.clone();
    let data = ProblemData::new(eps, constant(1.0))
        .with_neumann(constant(0.0))
        .with_obstacle(field(move |p| g.obstacle(p)));
    ProblemDefinition {
        name: "example1".into(),
        eps,
        mesh: rectangle_two_triangles(-2.5, 2.5, -2.5, 2.5, [BoundaryTag::Neumann; 4]),
        initial_refinements: 4,
        data,
        exact: Some(Arc::new(exact)),
        negated: true,
        initial_mesh: "square split along the diagonal (-2.5,-2.5)-(2.5,2.5)".into(),
    }
}

/// Smooth solution with a circular free boundary on `[−1, 1]²`, pure
/// Dirichlet boundary.
pub fn example2(eps: f64) -> ProblemDefinition {
    let exact = RadialSolution { eps };
    let load = exact.clone();
    let data = ProblemData::new(eps, field(move |p| -load.load(p)))
        .with_obstacle(constant(0.0))
        .with_dirichlet(field(|p| -RadialSolution::profile(p[0].hypot(p[1]))));
    ProblemDefinition {
        name: "example2".into(),
        eps,
        mesh: rectangle_two_triangles(-1.0, 1.0, -1.0, 1.0, [BoundaryTag::Dirichlet; 4]),
        initial_refinements: 3,
        data,
        exact: Some(Arc::new(exact)),
        negated: true,
        initial_mesh: "square split along the diagonal (-1,-1)-(1,1)".into(),
    }
}

/// Looks up a registered problem by name.
pub fn problem(name: &str, eps: f64) -> Option<ProblemDefinition> {
    match name {
        "example1" => Some(example1(eps)),
        "example2" => Some(example2(eps)),
        _ => None,
    }
}

pub const PROBLEM_NAMES: [&str; 2] = ["example1", "example2"];

#[derive(Clone, Debug)]
pub struct ErrorQuadrature {
    pub rule: QuadratureRule,
    /// Uniform subdivision levels on elements crossing a kink.
    pub kink_levels: usize,
}

impl Default for ErrorQuadrature {
    fn default() -> Self {
        ErrorQuadrature {
            rule: QuadratureRule::degree5(),
            kink_levels: 1,
        }
    }
}

/// `(‖u − φ_m‖_ε, ‖u − φ_m‖_1)` for an exact solution `u` in the same sign
/// convention as `φ_m`.
pub fn energy_error(
    mesh: &Mesh,
    phi: &P1Function,
    exact: &dyn ExactSolution,
    eps: f64,
    quad: &ErrorQuadrature,
) -> (f64, f64) {
    let (mut grad_sq, mut val_sq) = (0.0, 0.0);
    for e in 0..mesh.n_elements() {
        let x = mesh.element_coords(e);
        let gm = phi.gradient(mesh, e);
        let levels = if exact.crosses_kink(&x) { quad.kink_levels } else { 0 };
        for sub in subdivide(&x, levels) {
            let area = crate::mesh::signed_area(sub[0], sub[1], sub[2]);
            for (p, l, w) in quad.rule.on_triangle(&sub, area) {
                let g = exact.gradient(p);
                let (dx, dy) = (g[0] - gm[0], g[1] - gm[1]);
                let ph = interpolate_at(mesh, phi, e, &x, &sub, l);
                let d = exact.value(p) - ph;
                grad_sq += w * (dx * dx + dy * dy);
                val_sq += w * d * d;
            }
        }
    }
    ((eps * eps * grad_sq + val_sq).sqrt(), (grad_sq + val_sq).sqrt())
}

/// Value of `φ_m` at the point with barycentric coordinates `l` in `sub`.
fn interpolate_at(mesh: &Mesh, phi: &P1Function, e: usize, x: &[Point; 3], sub: &[Point; 3], l: [f64; 3]) -> f64 {
    if sub == x {
        return phi.value(mesh, e, l);
    }
    let p = [
        l[0] * sub[0][0] + l[1] * sub[1][0] + l[2] * sub[2][0],
        l[0] * sub[0][1] + l[1] * sub[1][1] + l[2] * sub[2][1],
    ];
    let area = crate::mesh::signed_area(x[0], x[1], x[2]);
    let b0 = crate::mesh::signed_area(p, x[1], x[2]) / area;
    let b1 = crate::mesh::signed_area(x[0], p, x[2]) / area;
    phi.value(mesh, e, [b0, b1, 1.0 - b0 - b1])
}

/// Efficiency index and convergence rate per adaptive iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub iteration: usize,
    pub dofs: usize,
    pub error: f64,
    pub efficiency: f64,
    /// Rate with respect to the previous iteration; `None` if undefined.
    pub eoc: Option<f64>,
}

/// Errors below this relative floor are treated as quadrature noise.
pub const ERROR_FLOOR: f64 = 1e-13;

/// `−log(e₂/e₁) / log(N₂/N₁)`, or `None` when undefined.
pub fn eoc(n1: usize, e1: f64, n2: usize, e2: f64) -> Option<f64> {
    if n1 == n2 || !(e1 > ERROR_FLOOR) || !(e2 > ERROR_FLOOR) {
        return None;
    }
    Some(-(e2 / e1).ln() / (n2 as f64 / n1 as f64).ln())
}

/// Least-squares slope of `−log e` against `log N`.
pub fn eoc_fit(points: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| *e > ERROR_FLOOR)
        .map(|&(n, e)| ((n as f64).ln(), -e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Log-log interpolation of `(N, e)` samples at `n`.
pub fn interpolate_loglog(points: &[(usize, f64)], n: usize) -> Option<f64> {
    let x = (n as f64).ln();
    points.windows(2).find_map(|w| {
        let ((n0, e0), (n1, e1)) = (w[0], w[1]);
        let (x0, x1) = ((n0 as f64).ln(), (n1 as f64).ln());
        if x < x0.min(x1) || x > x0.max(x1) {
            return None;
        }
        if x0 == x1 {
            return Some(e0);
        }
        let t = (x - x0) / (x1 - x0);
        Some((e0.ln() + t * (e1.ln() - e0.ln())).exp())
    })
}

/// Efficiency `estimate/error` and pairwise EOC for `(dofs, estimate, error)`
/// samples in iteration order.
pub fn efficiency_and_eoc(samples: &[(usize, f64, f64)]) -> Vec<EfficiencyRow> {
    samples
        .iter()
        .enumerate()
        .map(|(i, &(dofs, est, err))| EfficiencyRow {
            iteration: i,
            dofs,
            error: err,
            efficiency: est / err,
            eoc: if i == 0 {
                None
            } else {
                let (n0, _, e0) = samples[i - 1];
                eoc(n0, e0, dofs, err)
            },
        })
        .collect()
}
