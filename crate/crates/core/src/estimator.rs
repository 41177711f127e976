//! Robust residual a posteriori estimator for the obstacle problem.
//!
//! Nodes are split into no-contact, semi-contact and full-contact classes.
//! The residual contributions `η_1..η_3` are collected on nodes outside
//! full contact, the complementarity term `η_4` and the data terms
//! `η_5, η_6` on semi/full-contact nodes, and the consistency term `η_7` on
//! every contact node. All per-node values are stored squared-summable:
//! `η_k = (Σ_p η_{k,p}²)^{1/2}` and `η = Σ_k η_k`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{P1Function, ProblemData};
use crate::mesh::{distance, Mesh, PatchIndex, Point};
use crate::quadrature::{subdivide, EdgeRule, QuadratureRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum NodeClass {
    NoContact,
    SemiContact,
    FullContact,
}

impl NodeClass {
    pub fn is_contact(self) -> bool {
        self != NodeClass::NoContact
    }

    pub fn label(self) -> &'static str {
        match self {
            NodeClass::NoContact => "none",
            NodeClass::SemiContact => "semi",
            NodeClass::FullContact => "full",
        }
    }
}

/// Which estimator drives marking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// The robust estimator `η`.
    Eta,
    /// Standard residual estimator over all nodes, blind to contact.
    EtaStd,
    /// `η` with `min{h/ε,1}` replaced by `h`.
    EtaNr,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Eta => "eta",
            EstimatorKind::EtaStd => "eta_std",
            EstimatorKind::EtaNr => "eta_nr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eta" => Some(EstimatorKind::Eta),
            "eta_std" => Some(EstimatorKind::EtaStd),
            "eta_nr" => Some(EstimatorKind::EtaNr),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// `min{h/ε, 1}` and `min{h/ε, 1}^{1/2} ε^{-1/2}`.
    Robust,
    /// `h` and `h^{1/2}`.
    NonRobust,
}

/// Volume and side weights for a patch of diameter `h`.
pub fn weights(h: f64, eps: f64, weighting: Weighting) -> (f64, f64) {
    match weighting {
        Weighting::Robust => {
            let w = (h / eps).min(1.0);
            (w, (w / eps).sqrt())
        }
        Weighting::NonRobust => (h, h.sqrt()),
    }
}

#[derive(Clone, Debug)]
pub struct EstimatorConfig {
    pub quad: QuadratureRule,
    pub edge_rule: EdgeRule,
    /// Absolute tolerance of the full-contact sign test.
    pub sign_tolerance: f64,
    /// Relative contact tolerance, scaled by `1 + ‖g_m‖_∞`.
    pub contact_tolerance: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            quad: QuadratureRule::degree5(),
            edge_rule: EdgeRule::gauss(4),
            sign_tolerance: 1e-12,
            contact_tolerance: 1e-9,
        }
    }
}

/// Everything the estimator needs about the discrete solution.
#[derive(Clone, Copy)]
pub struct EstimatorInput<'a> {
    pub mesh: &'a Mesh,
    pub patches: &'a PatchIndex,
    pub data: &'a ProblemData,
    pub phi: &'a P1Function,
    /// Nodal obstacle `g_m`.
    pub obstacle: &'a [f64],
    /// Nodal constraining force `⟨λ_m, φ_p⟩`.
    pub lambda: &'a [f64],
    pub dirichlet: &'a [bool],
}

/// Elementwise and edgewise residual densities of a P1 solution.
#[derive(Clone, Debug)]
pub struct Residuals {
    pub gradients: Vec<[f64; 2]>,
    /// `J_s = −ε² (∇φ|_e − ∇φ|_ẽ)·n_e` on interior edges, 0 on boundary edges.
    pub jumps: Vec<f64>,
    /// Outward unit normal of each boundary edge (zero for interior edges).
    pub boundary_normals: Vec<[f64; 2]>,
}

impl Residuals {
    pub fn new(mesh: &Mesh, phi: &P1Function, eps: f64) -> Self {
        let gradients: Vec<[f64; 2]> = (0..mesh.n_elements()).map(|e| phi.gradient(mesh, e)).collect();
        let mut jumps = vec![0.0; mesh.edges().len()];
        let mut boundary_normals = vec![[0.0; 2]; mesh.edges().len()];
        for (i, edge) in mesh.edges().iter().enumerate() {
            let n = outward_normal(mesh, edge.elements.0, edge.vertices);
            match edge.elements.1 {
                Some(other) => {
                    let (g0, g1) = (gradients[edge.elements.0], gradients[other]);
                    jumps[i] = -eps * eps * ((g0[0] - g1[0]) * n[0] + (g0[1] - g1[1]) * n[1]);
                }
                None => boundary_normals[i] = n,
            }
        }
        Residuals {
            gradients,
            jumps,
            boundary_normals,
        }
    }

    /// `π − ε² ∇φ·n` at a point of boundary edge `s`.
    fn neumann_residual(&self, mesh: &Mesh, data: &ProblemData, s: usize, x: Point) -> f64 {
        let e = mesh.edges()[s].elements.0;
        let g = self.gradients[e];
        let n = self.boundary_normals[s];
        (data.neumann)(x) - data.eps * data.eps * (g[0] * n[0] + g[1] * n[1])
    }
}

/// Unit normal of edge `vs` pointing out of element `e`.
pub fn outward_normal(mesh: &Mesh, e: usize, vs: [usize; 2]) -> [f64; 2] {
    let [a, b] = vs.map(|v| mesh.vertices()[v]);
    let len = distance(a, b);
    let mut n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
    let c = mesh.centroid(e);
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    if n[0] * (mid[0] - c[0]) + n[1] * (mid[1] - c[1]) < 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

fn local_index(tri: &[usize; 3], p: usize) -> usize {
    tri.iter().position(|&v| v == p).expect("node belongs to element")
}

fn patch_nodes(mesh: &Mesh, patches: &PatchIndex, p: usize) -> Vec<usize> {
    let mut vs: Vec<usize> = patches.elements[p].iter().flat_map(|&e| mesh.elements()[e]).collect();
    vs.sort_unstable();
    vs.dedup();
    vs
}

/// Contact classification. A free node touching the obstacle is in full
/// contact when the whole patch touches it and the residual densities are
/// pointwise nonnegative there; otherwise it is in semi-contact.
pub fn classify_nodes(input: &EstimatorInput, residuals: &Residuals, cfg: &EstimatorConfig) -> Vec<NodeClass> {
    let EstimatorInput {
        mesh,
        patches,
        data,
        phi,
        obstacle,
        dirichlet,
        ..
    } = *input;
    let scale = obstacle.iter().filter(|g| g.is_finite()).fold(0.0_f64, |a, g| a.max(g.abs()));
    let tau = cfg.contact_tolerance * (1.0 + scale);
    let touches = |q: usize| obstacle[q].is_finite() && (phi.values[q] - obstacle[q]).abs() <= tau;
    let tol = cfg.sign_tolerance;

    // element sign test at centroid, vertices and quadrature points
    let element_ok: Vec<bool> = (0..mesh.n_elements())
        .map(|e| {
            let x = mesh.element_coords(e);
            let area = mesh.area(e);
            let vertices = (0..3).map(|k| {
                let mut l = [0.0; 3];
                l[k] = 1.0;
                (x[k], l)
            });
            let quad = cfg.quad.on_triangle(&x, area).map(|(p, l, _)| (p, l));
            std::iter::once((mesh.centroid(e), [1.0 / 3.0; 3]))
                .chain(vertices)
                .chain(quad)
                .all(|(p, l)| (data.f)(p) - phi.value(mesh, e, l) >= -tol)
        })
        .collect();

    (0..mesh.n_vertices())
        .map(|p| {
            if dirichlet[p] || !touches(p) {
                return NodeClass::NoContact;
            }
            let whole_patch = patch_nodes(mesh, patches, p).into_iter().all(touches);
            let signs = whole_patch
                && patches.elements[p].iter().all(|&e| element_ok[e])
                && patches.interior_edges[p].iter().all(|&s| residuals.jumps[s] >= -tol)
                && patches.neumann_edges[p].iter().all(|&s| {
                    let [a, b] = mesh.edges()[s].vertices.map(|v| mesh.vertices()[v]);
                    cfg.edge_rule.points.iter().chain([0.0, 1.0].iter()).all(|&t| {
                        let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                        residuals.neumann_residual(mesh, data, s, x) >= -tol
                    })
                });
            if signs {
                NodeClass::FullContact
            } else {
                NodeClass::SemiContact
            }
        })
        .collect()
}

/// Squared, unweighted residual norms used by `η_1..η_3` and the
/// oscillation terms, accumulated per node over the relevant patch pieces.
#[derive(Clone, Debug)]
struct PatchNorms {
    interior: Vec<f64>,
    jump: Vec<f64>,
    neumann: Vec<f64>,
    osc_f: Vec<f64>,
    osc_pi: Vec<f64>,
}

fn patch_norms(input: &EstimatorInput, residuals: &Residuals, cfg: &EstimatorConfig) -> PatchNorms {
    let EstimatorInput {
        mesh, patches, data, phi, ..
    } = *input;
    let mut elem_res = vec![0.0; mesh.n_elements()];
    let mut elem_osc = vec![0.0; mesh.n_elements()];
    for e in 0..mesh.n_elements() {
        let x = mesh.element_coords(e);
        let fbar = (data.f)(mesh.centroid(e));
        for (p, l, w) in cfg.quad.on_triangle(&x, mesh.area(e)) {
            let fv = (data.f)(p);
            let r = fv - phi.value(mesh, e, l);
            elem_res[e] += w * r * r;
            elem_osc[e] += w * (fbar - fv) * (fbar - fv);
        }
    }
    let mut edge_jump = vec![0.0; mesh.edges().len()];
    let mut edge_neu = vec![0.0; mesh.edges().len()];
    let mut edge_osc = vec![0.0; mesh.edges().len()];
    for (s, edge) in mesh.edges().iter().enumerate() {
        let [a, b] = edge.vertices.map(|v| mesh.vertices()[v]);
        if edge.is_interior() {
            edge_jump[s] = residuals.jumps[s].powi(2) * distance(a, b);
        } else if edge.tag == Some(crate::mesh::BoundaryTag::Neumann) {
            edge_neu[s] = cfg
                .edge_rule
                .integrate(a, b, |x, _| residuals.neumann_residual(mesh, data, s, x).powi(2));
            let pibar = (data.neumann)([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
            edge_osc[s] = cfg.edge_rule.integrate(a, b, |x, _| ((data.neumann)(x) - pibar).powi(2));
        }
    }
    let n = mesh.n_vertices();
    let sum = |ids: &[usize], vals: &[f64]| ids.iter().map(|&i| vals[i]).sum::<f64>();
    PatchNorms {
        interior: (0..n).map(|p| sum(&patches.elements[p], &elem_res)).collect(),
        jump: (0..n).map(|p| sum(&patches.interior_edges[p], &edge_jump)).collect(),
        neumann: (0..n).map(|p| sum(&patches.neumann_edges[p], &edge_neu)).collect(),
        osc_f: (0..n).map(|p| sum(&patches.elements[p], &elem_osc)).collect(),
        osc_pi: (0..n).map(|p| sum(&patches.neumann_edges[p], &edge_osc)).collect(),
    }
}

/// Per-node `(η_{1,p}, η_{2,p}, η_{3,p})`; zero on full-contact nodes
/// unless `include_full_contact` is set.
pub fn eta123(
    input: &EstimatorInput,
    residuals: &Residuals,
    classes: &[NodeClass],
    weighting: Weighting,
    include_full_contact: bool,
    cfg: &EstimatorConfig,
) -> Vec<[f64; 3]> {
    let norms = patch_norms(input, residuals, cfg);
    eta123_from_norms(input, &norms, classes, weighting, include_full_contact)
}

fn eta123_from_norms(
    input: &EstimatorInput,
    norms: &PatchNorms,
    classes: &[NodeClass],
    weighting: Weighting,
    include_full_contact: bool,
) -> Vec<[f64; 3]> {
    (0..input.mesh.n_vertices())
        .map(|p| {
            if !include_full_contact && classes[p] == NodeClass::FullContact {
                return [0.0; 3];
            }
            let (wv, ws) = weights(input.patches.diameter[p], input.data.eps, weighting);
            [
                wv * norms.interior[p].sqrt(),
                ws * norms.jump[p].sqrt(),
                ws * norms.neumann[p].sqrt(),
            ]
        })
        .collect()
}

/// Lumped constraining force `s_p = ⟨λ_m, φ_p⟩ / ∫_{ω_p} φ_p`.
pub fn lumped_force(input: &EstimatorInput) -> Vec<f64> {
    let integrals = crate::fem::basis_integrals(input.mesh);
    input
        .lambda
        .iter()
        .zip(integrals)
        .map(|(l, i)| l / i)
        .collect()
}

/// Corner sub-triangle at local vertex `k` after two red refinements, in
/// barycentric coordinates of the parent.
fn corner_subtriangle(k: usize) -> [[f64; 3]; 3] {
    let (j, l) = ((k + 1) % 3, (k + 2) % 3);
    let mut c = [[0.0; 3]; 3];
    c[0][k] = 1.0;
    c[1][k] = 0.75;
    c[1][j] = 0.25;
    c[2][k] = 0.75;
    c[2][l] = 0.25;
    c
}

/// `∫_{ω̃_p} F(x, λ) λ_p`, with `ω̃_p` the part of the patch touching `p`
/// after two uniform red refinements.
fn integrate_fine_patch(
    mesh: &Mesh,
    patches: &PatchIndex,
    p: usize,
    rule: &QuadratureRule,
    f: impl Fn(usize, Point, [f64; 3]) -> f64,
) -> f64 {
    let mut sum = 0.0;
    for &e in &patches.elements[p] {
        let tri = mesh.elements()[e];
        let k = local_index(&tri, p);
        let x = mesh.element_coords(e);
        let sub = corner_subtriangle(k);
        let area = mesh.area(e) / 16.0;
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let mut bary = [0.0; 3];
            for (i, li) in l.iter().enumerate() {
                for m in 0..3 {
                    bary[m] += li * sub[i][m];
                }
            }
            let pt = [
                bary[0] * x[0][0] + bary[1] * x[1][0] + bary[2] * x[2][0],
                bary[0] * x[0][1] + bary[1] * x[1][1] + bary[2] * x[2][1],
            ];
            sum += w * area * f(e, pt, bary) * bary[k];
        }
    }
    sum
}

fn checked_sqrt(value: f64, scale: f64, node: usize, term: &'static str) -> Result<f64> {
    if value < -1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NegativeRadicand { node, term, value });
    }
    Ok(value.max(0.0).sqrt())
}

/// `η_{4,p} = (s_p ∫_{ω̃_p} (g_m − φ_m) φ_p)^{1/2}` on semi-contact nodes.
pub fn eta4(input: &EstimatorInput, classes: &[NodeClass], s: &[f64]) -> Result<Vec<f64>> {
    let EstimatorInput {
        mesh,
        patches,
        phi,
        obstacle,
        ..
    } = *input;
    // the integrand is quadratic: the edge-midpoint rule is exact
    let rule = QuadratureRule::edge_midpoints();
    (0..mesh.n_vertices())
        .map(|p| {
            if classes[p] != NodeClass::SemiContact || s[p] == 0.0 {
                return Ok(0.0);
            }
            let gap = integrate_fine_patch(mesh, patches, p, &rule, |e, _, l| {
                let tri = mesh.elements()[e];
                (0..3).map(|m| l[m] * (obstacle[tri[m]] - phi.values[tri[m]])).sum()
            });
            let scale = s[p].abs() * patches.area(mesh, p) * (1.0 + obstacle[p].abs());
            checked_sqrt(s[p] * gap, scale, p, "eta4")
        })
        .collect()
}

/// Differences below this multiple of the data size are evaluation
/// roundoff, e.g. an affine obstacle against its own interpolant.
const GAP_ROUNDOFF: f64 = 64.0 * f64::EPSILON;

fn positive_gap(g: f64, gm: f64) -> f64 {
    if !g.is_finite() || !gm.is_finite() || g - gm <= GAP_ROUNDOFF * (1.0 + g.abs()) {
        0.0
    } else {
        g - gm
    }
}

fn interpolate(mesh: &Mesh, values: &[f64], e: usize, l: [f64; 3]) -> f64 {
    let tri = mesh.elements()[e];
    let mut v = 0.0;
    for m in 0..3 {
        if l[m] != 0.0 {
            v += l[m] * values[tri[m]];
        }
    }
    v
}

/// Data-approximation terms `(η_{5,p}, η_{6,p}, η_{7,p})`. All vanish when
/// the obstacle is piecewise linear on the mesh.
pub fn eta567(
    input: &EstimatorInput,
    residuals: &Residuals,
    classes: &[NodeClass],
    s: &[f64],
    cfg: &EstimatorConfig,
) -> Result<Vec<[f64; 3]>> {
    let EstimatorInput {
        mesh,
        patches,
        data,
        phi,
        obstacle,
        ..
    } = *input;
    let g = &data.obstacle;
    let eps2 = data.eps * data.eps;
    (0..mesh.n_vertices())
        .map(|p| {
            let class = classes[p];
            if !class.is_contact() {
                return Ok([0.0; 3]);
            }
            let scale = patches.area(mesh, p) * (1.0 + obstacle[p].abs()) * (1.0 + s[p].abs());
            let mut out = [0.0; 3];
            if class == NodeClass::SemiContact && s[p] != 0.0 {
                let integral = integrate_fine_patch(mesh, patches, p, &cfg.quad, |e, x, l| {
                    positive_gap(g(x), interpolate(mesh, obstacle, e, l))
                });
                out[0] = checked_sqrt(s[p] * integral, scale, p, "eta5")?;
            }
            if class == NodeClass::FullContact {
                let gap = |e: usize, x: Point, l: [f64; 3]| positive_gap(g(x), interpolate(mesh, obstacle, e, l));
                let mut pairing = 0.0;
                for &e in &patches.elements[p] {
                    let k = local_index(&mesh.elements()[e], p);
                    let x = mesh.element_coords(e);
                    for (pt, l, w) in cfg.quad.on_triangle(&x, mesh.area(e)) {
                        let r = (data.f)(pt) - phi.value(mesh, e, l);
                        pairing += w * r * gap(e, pt, l) * l[k];
                    }
                }
                for &sid in &patches.interior_edges[p] {
                    pairing += residuals.jumps[sid] * edge_integral(mesh, sid, p, &cfg.edge_rule, &gap);
                }
                for &sid in &patches.neumann_edges[p] {
                    let edge = &mesh.edges()[sid];
                    if !edge.vertices.contains(&p) {
                        continue;
                    }
                    let e = edge.elements.0;
                    let tri = mesh.elements()[e];
                    let [a, b] = edge.vertices.map(|v| mesh.vertices()[v]);
                    let (ia, ib) = (local_index(&tri, edge.vertices[0]), local_index(&tri, edge.vertices[1]));
                    pairing += cfg.edge_rule.integrate(a, b, |x, t| {
                        let mut l = [0.0; 3];
                        l[ia] = 1.0 - t;
                        l[ib] = t;
                        let phi_p = if edge.vertices[0] == p { 1.0 - t } else { t };
                        residuals.neumann_residual(mesh, data, sid, x) * gap(e, x, l) * phi_p
                    });
                }
                out[1] = checked_sqrt(pairing, scale, p, "eta6")?;
            }
            // η_7 on all contact nodes
            let h = patches.diameter[p];
            let delta = 1e-7 * (1.0 + h);
            let mut sq = 0.0;
            for &e in &patches.elements[p] {
                let tri = mesh.elements()[e];
                let k = local_index(&tri, p);
                let (grads, _) = crate::fem::barycentric_gradients(&mesh.element_coords(e));
                let grad_phi = residuals.gradients[e];
                let x = mesh.element_coords(e);
                for sub in subdivide(&x, 1) {
                    let sub_area = crate::mesh::signed_area(sub[0], sub[1], sub[2]);
                    for (pt, _, w) in cfg.quad.on_triangle(&sub, sub_area) {
                        let l = barycentric(&x, pt);
                        let gv = g(pt);
                        let diff = phi.value(mesh, e, l) - gv;
                        if !(diff > GAP_ROUNDOFF * (1.0 + gv.abs())) || !gv.is_finite() {
                            continue;
                        }
                        let gg = [
                            (g([pt[0] + delta, pt[1]]) - g([pt[0] - delta, pt[1]])) / (2.0 * delta),
                            (g([pt[0], pt[1] + delta]) - g([pt[0], pt[1] - delta])) / (2.0 * delta),
                        ];
                        let value = diff * l[k];
                        let grad = [
                            (grad_phi[0] - gg[0]) * l[k] + diff * grads[k][0],
                            (grad_phi[1] - gg[1]) * l[k] + diff * grads[k][1],
                        ];
                        sq += w * (eps2 * (grad[0] * grad[0] + grad[1] * grad[1]) + value * value);
                    }
                }
            }
            out[2] = sq.sqrt();
            Ok(out)
        })
        .collect()
}

fn barycentric(x: &[Point; 3], p: Point) -> [f64; 3] {
    let area = crate::mesh::signed_area(x[0], x[1], x[2]);
    let l0 = crate::mesh::signed_area(p, x[1], x[2]) / area;
    let l1 = crate::mesh::signed_area(x[0], p, x[2]) / area;
    [l0, l1, 1.0 - l0 - l1]
}

/// `∫_s F φ_p` on an interior edge `s` incident to `p`, evaluated from the
/// first adjacent element.
fn edge_integral(
    mesh: &Mesh,
    sid: usize,
    p: usize,
    rule: &EdgeRule,
    f: &dyn Fn(usize, Point, [f64; 3]) -> f64,
) -> f64 {
    let edge = &mesh.edges()[sid];
    let e = edge.elements.0;
    let tri = mesh.elements()[e];
    let [a, b] = edge.vertices.map(|v| mesh.vertices()[v]);
    let (ia, ib) = (local_index(&tri, edge.vertices[0]), local_index(&tri, edge.vertices[1]));
    rule.integrate(a, b, |x, t| {
        let mut l = [0.0; 3];
        l[ia] = 1.0 - t;
        l[ib] = t;
        let phi_p = if edge.vertices[0] == p { 1.0 - t } else { t };
        f(e, x, l) * phi_p
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Totals {
    /// `η_k = (Σ_p η_{k,p}²)^{1/2}`, k = 1..7.
    pub components: [f64; 7],
    /// `η = Σ_k η_k`.
    pub eta: f64,
    /// `(Σ_k η_k²)^{1/2}`.
    pub eta_rss: f64,
    /// `η_1 + η_2 + η_3` restricted to nodes outside full contact.
    pub eta_123: f64,
    /// Standard residual estimator `Σ_{k≤3} η_k` summed over all nodes.
    pub eta_std: f64,
    /// Non-robust variant: `η` with `h`-weights in the first three terms.
    pub eta_nr: f64,
    pub osc_f: f64,
    pub osc_pi: f64,
}

#[derive(Clone, Debug)]
pub struct EstimatorBreakdown {
    pub classes: Vec<NodeClass>,
    pub s: Vec<f64>,
    /// Per-node `η_{k,p}`, k = 1..7.
    pub eta: Vec<[f64; 7]>,
    /// Per-node standard-residual contributions over all nodes.
    pub eta_std: Vec<[f64; 3]>,
    /// Per-node non-robust `η_{1..3,p}` (zero on full contact).
    pub eta_nr: Vec<[f64; 3]>,
    pub osc_f: Vec<f64>,
    pub osc_pi: Vec<f64>,
    pub totals: Totals,
}

impl EstimatorBreakdown {
    pub fn count(&self, class: NodeClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }

    /// Squared per-node contribution of the chosen estimator.
    pub fn node_squared(&self, p: usize, kind: EstimatorKind) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        match kind {
            EstimatorKind::Eta => sq(&self.eta[p]),
            EstimatorKind::EtaStd => sq(&self.eta_std[p]),
            EstimatorKind::EtaNr => sq(&self.eta_nr[p]) + sq(&self.eta[p][3..]),
        }
    }

    pub fn total(&self, kind: EstimatorKind) -> f64 {
        match kind {
            EstimatorKind::Eta => self.totals.eta,
            EstimatorKind::EtaStd => self.totals.eta_std,
            EstimatorKind::EtaNr => self.totals.eta_nr,
        }
    }

    /// CSV with columns `node_id, class, s_p, eta1..eta7`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node_id", "class", "s_p", "eta1", "eta2", "eta3", "eta4", "eta5", "eta6", "eta7"])?;
        for p in 0..self.classes.len() {
            let mut row = vec![p.to_string(), self.classes[p].label().to_string(), format!("{:e}", self.s[p])];
            row.extend(self.eta[p].iter().map(|v| format!("{v:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Global values from per-node contributions.
pub fn totals(
    eta: &[[f64; 7]],
    eta_std: &[[f64; 3]],
    eta_nr: &[[f64; 3]],
    osc_f: &[f64],
    osc_pi: &[f64],
) -> Totals {
    let root = |it: &mut dyn Iterator<Item = f64>| it.map(|v| v * v).sum::<f64>().sqrt();
    let mut components = [0.0; 7];
    for (k, c) in components.iter_mut().enumerate() {
        *c = root(&mut eta.iter().map(|v| v[k]));
    }
    let std: f64 = (0..3).map(|k| root(&mut eta_std.iter().map(|v| v[k]))).sum();
    let nr123: f64 = (0..3).map(|k| root(&mut eta_nr.iter().map(|v| v[k]))).sum();
    let eta_total: f64 = components.iter().sum();
    Totals {
        components,
        eta: eta_total,
        eta_rss: components.iter().map(|c| c * c).sum::<f64>().sqrt(),
        eta_123: components[..3].iter().sum(),
        eta_std: std,
        eta_nr: nr123 + components[3..].iter().sum::<f64>(),
        osc_f: root(&mut osc_f.iter().copied()),
        osc_pi: root(&mut osc_pi.iter().copied()),
    }
}

/// Runs classification and every contribution.
pub fn estimate(input: &EstimatorInput, cfg: &EstimatorConfig) -> Result<EstimatorBreakdown> {
    let residuals = Residuals::new(input.mesh, input.phi, input.data.eps);
    let classes = classify_nodes(input, &residuals, cfg);
    let norms = patch_norms(input, &residuals, cfg);
    let robust = eta123_from_norms(input, &norms, &classes, Weighting::Robust, false);
    let eta_std = eta123_from_norms(input, &norms, &classes, Weighting::Robust, true);
    let eta_nr = eta123_from_norms(input, &norms, &classes, Weighting::NonRobust, false);
    let s = lumped_force(input);
    let e4 = eta4(input, &classes, &s)?;
    let e567 = eta567(input, &residuals, &classes, &s, cfg)?;
    let eta: Vec<[f64; 7]> = (0..input.mesh.n_vertices())
        .map(|p| {
            let [a, b, c] = robust[p];
            let [d, e, f] = e567[p];
            [a, b, c, e4[p], d, e, f]
        })
        .collect();
    let (osc_f, osc_pi): (Vec<f64>, Vec<f64>) = (0..input.mesh.n_vertices())
        .map(|p| {
            let (wv, ws) = weights(input.patches.diameter[p], input.data.eps, Weighting::Robust);
            (wv * norms.osc_f[p].sqrt(), ws * norms.osc_pi[p].sqrt())
        })
        .unzip();
    let totals = totals(&eta, &eta_std, &eta_nr, &osc_f, &osc_pi);
    Ok(EstimatorBreakdown {
        classes,
        s,
        eta,
        eta_std,
        eta_nr,
        osc_f,
        osc_pi,
        totals,
    })
}

/// Distributes each node's squared contribution equally over its patch:
/// `ind(e)² = Σ_{p ∈ e} η_p² / |ω_p|`.
pub fn element_indicators(breakdown: &EstimatorBreakdown, mesh: &Mesh, kind: EstimatorKind) -> Vec<f64> {
    let node_sq: Vec<f64> = (0..mesh.n_vertices()).map(|p| breakdown.node_squared(p, kind)).collect();
    distribute(mesh, &node_sq)
}

/// `ind(e) = (Σ_{p ∈ e} v_p / |ω_p|)^{1/2}` for squared nodal values `v`.
pub fn distribute(mesh: &Mesh, node_sq: &[f64]) -> Vec<f64> {
    let mut patch_size = vec![0usize; mesh.n_vertices()];
    for tri in mesh.elements() {
        for &v in tri {
            patch_size[v] += 1;
        }
    }
    mesh.elements()
        .iter()
        .map(|tri| tri.iter().map(|&p| node_sq[p] / patch_size[p] as f64).sum::<f64>().sqrt())
        .collect()
}

pub fn write_indicators_csv<W: Write>(indicators: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["element_id", "indicator"])?;
    for (e, v) in indicators.iter().enumerate() {
        w.write_record([e.to_string(), format!("{v:e}")])?;
    }
    w.flush()?;
    Ok(())
}
