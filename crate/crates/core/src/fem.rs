//! P1 finite element assembly for the bilinear form
//! `a_ε(u, v) = ε² (∇u, ∇v) + (u, v)` and the load functional.

use std::fmt::Write as _;
use std::sync::Arc;

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::quadrature::{EdgeRule, QuadratureRule};

/// Scalar field on the plane.
pub type Field = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

pub fn field(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Field {
    Arc::new(f)
}

pub fn constant(c: f64) -> Field {
    Arc::new(move |_| c)
}

/// Data of the obstacle problem in upper-obstacle form: find `u ≤ g`.
#[derive(Clone)]
pub struct ProblemData {
    pub eps: f64,
    pub f: Field,
    pub neumann: Field,
    /// Upper obstacle; `f64::INFINITY` means unconstrained.
    pub obstacle: Field,
    pub dirichlet: Field,
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData").field("eps", &self.eps).finish_non_exhaustive()
    }
}

impl ProblemData {
    pub fn new(eps: f64, f: Field) -> Self {
        ProblemData {
            eps,
            f,
            neumann: constant(0.0),
            obstacle: constant(f64::INFINITY),
            dirichlet: constant(0.0),
        }
    }

    pub fn with_neumann(mut self, neumann: Field) -> Self {
        self.neumann = neumann;
        self
    }

    pub fn with_obstacle(mut self, obstacle: Field) -> Self {
        self.obstacle = obstacle;
        self
    }

    pub fn with_dirichlet(mut self, dirichlet: Field) -> Self {
        self.dirichlet = dirichlet;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    /// Nodal interpolant of the obstacle.
    pub fn obstacle_nodal(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.vertices().iter().map(|&p| (self.obstacle)(p)).collect()
    }

    /// Nodal Dirichlet values (`NaN` off the Dirichlet boundary).
    pub fn dirichlet_nodal(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.is_dirichlet()
            .iter()
            .zip(mesh.vertices())
            .map(|(&d, &p)| if d { (self.dirichlet)(p) } else { f64::NAN })
            .collect()
    }
}

/// Continuous piecewise linear function given by its nodal values.
#[derive(Clone, Debug, PartialEq)]
pub struct P1Function {
    pub values: Vec<f64>,
}

impl P1Function {
    pub fn new(values: Vec<f64>) -> Self {
        P1Function { values }
    }

    pub fn zeros(n: usize) -> Self {
        P1Function { values: vec![0.0; n] }
    }

    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        P1Function {
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, mesh: &Mesh, e: usize, bary: [f64; 3]) -> f64 {
        let tri = mesh.elements()[e];
        (0..3).map(|k| bary[k] * self.values[tri[k]]).sum()
    }

    pub fn gradient(&self, mesh: &Mesh, e: usize) -> [f64; 2] {
        let (grads, _) = barycentric_gradients(&mesh.element_coords(e));
        let tri = mesh.elements()[e];
        let mut g = [0.0; 2];
        for k in 0..3 {
            g[0] += self.values[tri[k]] * grads[k][0];
            g[1] += self.values[tri[k]] * grads[k][1];
        }
        g
    }
}

/// Gradients of the barycentric coordinates and the (positive) area.
pub fn barycentric_gradients(x: &[Point; 3]) -> ([[f64; 2]; 3], f64) {
    let area = crate::mesh::signed_area(x[0], x[1], x[2]);
    let d = 2.0 * area;
    let g = [
        [(x[1][1] - x[2][1]) / d, (x[2][0] - x[1][0]) / d],
        [(x[2][1] - x[0][1]) / d, (x[0][0] - x[2][0]) / d],
        [(x[0][1] - x[1][1]) / d, (x[1][0] - x[0][0]) / d],
    ];
    (g, area.abs())
}

/// Symmetric sparse matrix over node indices.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    matrix: CsMat<f64>,
}

impl SparseOperator {
    pub fn from_triplets(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut tri = TriMat::new((n, n));
        for (i, j, v) in entries {
            tri.add_triplet(i, j, v);
        }
        SparseOperator { matrix: tri.to_csr() }
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn matrix(&self) -> &CsMat<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j).copied().unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, row) in self.matrix.outer_iterator().enumerate() {
            y[i] = row.iter().map(|(j, &v)| v * x[j]).sum();
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Largest absolute asymmetry `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.matrix.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Coordinate-format text: one `row col value` line per stored entry.
    pub fn to_coo_text(&self) -> String {
        let mut out = format!("% {} {} {}\n", self.n(), self.n(), self.nnz());
        for (i, row) in self.matrix.outer_iterator().enumerate() {
            for (j, &v) in row.iter() {
                let _ = writeln!(out, "{i} {j} {v:.17e}");
            }
        }
        out
    }
}

/// Assembles `ε² ∫∇φ_p·∇φ_q + ∫φ_p φ_q` exactly.
pub fn assemble_operator(mesh: &Mesh, eps: f64) -> SparseOperator {
    let eps2 = eps * eps;
    let mut entries = Vec::with_capacity(9 * mesh.n_elements());
    for (e, tri) in mesh.elements().iter().enumerate() {
        let (g, area) = barycentric_gradients(&mesh.element_coords(e));
        for i in 0..3 {
            for j in 0..3 {
                let stiff = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                let mass = area * if i == j { 1.0 / 6.0 } else { 1.0 / 12.0 };
                entries.push((tri[i], tri[j], eps2 * stiff + mass));
            }
        }
    }
    SparseOperator::from_triplets(mesh.n_vertices(), entries)
}

/// `b_p = ∫_Ω f φ_p + ∫_{Γ^N} π φ_p`.
pub fn assemble_load(mesh: &Mesh, data: &ProblemData, quad: &QuadratureRule, edge_rule: &EdgeRule) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_vertices()];
    for (e, tri) in mesh.elements().iter().enumerate() {
        let x = mesh.element_coords(e);
        let area = mesh.area(e);
        for (p, l, w) in quad.on_triangle(&x, area) {
            let fv = (data.f)(p);
            for k in 0..3 {
                b[tri[k]] += w * fv * l[k];
            }
        }
    }
    for &([a, c], tag) in mesh.boundary() {
        if tag != BoundaryTag::Neumann {
            continue;
        }
        let (pa, pc) = (mesh.vertices()[a], mesh.vertices()[c]);
        b[a] += edge_rule.integrate(pa, pc, |p, t| (data.neumann)(p) * (1.0 - t));
        b[c] += edge_rule.integrate(pa, pc, |p, t| (data.neumann)(p) * t);
    }
    b
}

/// `∫_{ω_p} φ_p = |ω_p| / 3` for every node.
pub fn basis_integrals(mesh: &Mesh) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_vertices()];
    for (e, tri) in mesh.elements().iter().enumerate() {
        let a = mesh.area(e) / 3.0;
        for &v in tri {
            out[v] += a;
        }
    }
    out
}

/// `‖φ‖_ε = (cᵀ A c)^{1/2}`.
pub fn energy_norm_matrix(phi: &P1Function, op: &SparseOperator) -> Result<f64> {
    let q = op.quadratic_form(&phi.values);
    let scale: f64 = phi.values.iter().map(|v| v * v).sum::<f64>() * op.diagonal().iter().fold(0.0_f64, |a, &d| a.max(d.abs()));
    if q < -1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NegativeQuadraticForm(q));
    }
    Ok(q.max(0.0).sqrt())
}

/// `‖φ‖_ε` evaluated elementwise by quadrature.
pub fn energy_norm_quadrature(mesh: &Mesh, phi: &P1Function, eps: f64, quad: &QuadratureRule) -> f64 {
    let mut sum = 0.0;
    for e in 0..mesh.n_elements() {
        let g = phi.gradient(mesh, e);
        let area = mesh.area(e);
        let x = mesh.element_coords(e);
        for (_, l, w) in quad.on_triangle(&x, area) {
            let v = phi.value(mesh, e, l);
            sum += w * (eps * eps * (g[0] * g[0] + g[1] * g[1]) + v * v);
        }
    }
    sum.sqrt()
}
