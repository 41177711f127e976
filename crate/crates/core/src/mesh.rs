//! Conforming triangular meshes with newest-vertex bisection.
//!
//! Elements are stored as counter-clockwise vertex triples `[a, b, c]` where
//! `(a, b)` is the refinement edge and `c` the newest vertex. Derived edge
//! tables are rebuilt whenever a new mesh is produced.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    #[serde(rename = "D")]
    Dirichlet,
    #[serde(rename = "N")]
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Dirichlet,
    Neumann,
}

/// An edge of the triangulation with its (one or two) adjacent elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Endpoints, sorted ascending.
    pub vertices: [usize; 2],
    pub elements: (usize, Option<usize>),
    pub tag: Option<BoundaryTag>,
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        self.elements.1.is_some()
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    elements: Vec<[usize; 3]>,
    boundary: Vec<([usize; 2], BoundaryTag)>,
    generation: Vec<u32>,
    edges: Vec<Edge>,
    // local edges of each element: [(a,b), (b,c), (c,a)]
    element_edges: Vec<[usize; 3]>,
    edge_lookup: HashMap<(usize, usize), usize>,
}

pub fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

pub fn distance(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn midpoint(p: Point, q: Point) -> Point {
    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
}

/// Builds and validates a mesh. Triangles may be given in either
/// orientation; the refinement edge of each element is initialized to its
/// longest edge, ties going to the edge whose opposite vertex has the
/// smallest index.
pub fn build_mesh(
    vertices: Vec<Point>,
    triangles: &[[usize; 3]],
    boundary_tags: &[([usize; 2], BoundaryTag)],
) -> Result<Mesh> {
    let nv = vertices.len();
    let mut elements = Vec::with_capacity(triangles.len());
    for (id, tri) in triangles.iter().enumerate() {
        for &v in tri {
            if v >= nv {
                return Err(Error::IndexOutOfRange {
                    element: id,
                    index: v,
                    n_vertices: nv,
                });
            }
        }
        let [p, q, r] = tri.map(|v| vertices[v]);
        let scale = distance(p, q).max(distance(q, r)).max(distance(r, p));
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(Error::DegenerateElement(id));
        }
        if signed_area(p, q, r).abs() <= 1e-14 * scale * scale {
            return Err(Error::DegenerateElement(id));
        }
        elements.push(initial_nvb_order(&vertices, *tri));
    }
    let generation = vec![0; elements.len()];
    let mut mesh = Mesh {
        vertices,
        elements,
        boundary: Vec::new(),
        generation,
        edges: Vec::new(),
        element_edges: Vec::new(),
        edge_lookup: HashMap::new(),
    };
    mesh.rebuild_edges()?;
    mesh.check_hanging_nodes()?;

    let mut used = vec![false; nv];
    for tri in &mesh.elements {
        for &v in tri {
            used[v] = true;
        }
    }
    if let Some(v) = used.iter().position(|u| !u) {
        return Err(Error::NonConforming(format!("vertex {v} belongs to no element")));
    }

    let mut tags: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
    for &([a, b], tag) in boundary_tags {
        let key = edge_key(a, b);
        match mesh.edge_lookup.get(&key) {
            Some(&e) if !mesh.edges[e].is_interior() => {
                tags.insert(key, tag);
            }
            _ => return Err(Error::NotABoundaryEdge(a, b)),
        }
    }
    for edge in &mut mesh.edges {
        if edge.is_interior() {
            continue;
        }
        let key = (edge.vertices[0], edge.vertices[1]);
        match tags.get(&key) {
            Some(&tag) => edge.tag = Some(tag),
            None => return Err(Error::UntaggedBoundaryEdge(key.0, key.1)),
        }
    }
    mesh.boundary = mesh
        .edges
        .iter()
        .filter_map(|e| e.tag.map(|t| (e.vertices, t)))
        .collect();
    Ok(mesh)
}

fn initial_nvb_order(vertices: &[Point], tri: [usize; 3]) -> [usize; 3] {
    // candidate k: refinement edge opposite local vertex k
    let len = |k: usize| distance(vertices[tri[(k + 1) % 3]], vertices[tri[(k + 2) % 3]]);
    let longest = (0..3).map(len).fold(0.0_f64, f64::max);
    let k = (0..3)
        .filter(|&k| len(k) >= longest * (1.0 - 1e-12))
        .min_by_key(|&k| tri[k])
        .unwrap();
    let (a, b, c) = (tri[(k + 1) % 3], tri[(k + 2) % 3], tri[k]);
    if signed_area(vertices[a], vertices[b], vertices[c]) > 0.0 {
        [a, b, c]
    } else {
        [b, a, c]
    }
}

impl Mesh {
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Elements as `[a, b, c]` with refinement edge `(a, b)`.
    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn boundary(&self) -> &[([usize; 2], BoundaryTag)] {
        &self.boundary
    }

    pub fn generation(&self) -> &[u32] {
        &self.generation
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge ids of element `e` in local order `[(a,b), (b,c), (c,a)]`.
    pub fn element_edges(&self, e: usize) -> [usize; 3] {
        self.element_edges[e]
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&edge_key(a, b)).copied()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_coords(&self, e: usize) -> [Point; 3] {
        self.elements[e].map(|v| self.vertices[v])
    }

    pub fn area(&self, e: usize) -> f64 {
        let [p, q, r] = self.element_coords(e);
        signed_area(p, q, r)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.area(e)).sum()
    }

    pub fn element_diameter(&self, e: usize) -> f64 {
        let [p, q, r] = self.element_coords(e);
        distance(p, q).max(distance(q, r)).max(distance(r, p))
    }

    pub fn centroid(&self, e: usize) -> Point {
        let [p, q, r] = self.element_coords(e);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.n_elements())
            .map(|e| {
                let x = self.element_coords(e);
                (0..3)
                    .map(|k| {
                        let (p, q, r) = (x[k], x[(k + 1) % 3], x[(k + 2) % 3]);
                        let u = [q[0] - p[0], q[1] - p[1]];
                        let v = [r[0] - p[0], r[1] - p[1]];
                        let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                        cos.clamp(-1.0, 1.0).acos()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Dirichlet wins at corners where Dirichlet and Neumann edges meet.
    pub fn node_kinds(&self) -> Vec<NodeKind> {
        let mut kinds = vec![NodeKind::Interior; self.n_vertices()];
        for &(vs, tag) in &self.boundary {
            for v in vs {
                match tag {
                    BoundaryTag::Dirichlet => kinds[v] = NodeKind::Dirichlet,
                    BoundaryTag::Neumann => {
                        if kinds[v] != NodeKind::Dirichlet {
                            kinds[v] = NodeKind::Neumann;
                        }
                    }
                }
            }
        }
        kinds
    }

    pub fn is_dirichlet(&self) -> Vec<bool> {
        self.node_kinds()
            .into_iter()
            .map(|k| k == NodeKind::Dirichlet)
            .collect()
    }

    fn rebuild_edges(&mut self) -> Result<()> {
        let mut edges: Vec<Edge> = Vec::with_capacity(self.elements.len() * 3 / 2 + 4);
        let mut lookup = HashMap::with_capacity(self.elements.len() * 2);
        let mut element_edges = Vec::with_capacity(self.elements.len());
        let old_tags: HashMap<(usize, usize), BoundaryTag> = self
            .boundary
            .iter()
            .map(|&([a, b], t)| (edge_key(a, b), t))
            .collect();
        for (e, tri) in self.elements.iter().enumerate() {
            let mut local = [0; 3];
            for k in 0..3 {
                let key = edge_key(tri[k], tri[(k + 1) % 3]);
                let id = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        elements: (e, None),
                        tag: None,
                    });
                    edges.len() - 1
                });
                if edges[id].elements.0 != e {
                    if edges[id].elements.1.is_some() {
                        return Err(Error::NonConforming(format!(
                            "edge ({}, {}) is shared by more than two elements",
                            key.0, key.1
                        )));
                    }
                    edges[id].elements.1 = Some(e);
                }
                local[k] = id;
            }
            element_edges.push(local);
        }
        for edge in &mut edges {
            if !edge.is_interior() {
                edge.tag = old_tags.get(&(edge.vertices[0], edge.vertices[1])).copied();
            }
        }
        self.edges = edges;
        self.edge_lookup = lookup;
        self.element_edges = element_edges;
        Ok(())
    }

    fn check_hanging_nodes(&self) -> Result<()> {
        for edge in self.edges.iter().filter(|e| !e.is_interior()) {
            let [a, b] = edge.vertices.map(|v| self.vertices[v]);
            let len = distance(a, b);
            for (v, &p) in self.vertices.iter().enumerate() {
                if edge.vertices.contains(&v) {
                    continue;
                }
                let cross = signed_area(a, b, p).abs() * 2.0 / len;
                let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len);
                if cross <= 1e-12 * len && t > 1e-12 && t < 1.0 - 1e-12 {
                    return Err(Error::NonConforming(format!(
                        "hanging node {v} on edge ({}, {})",
                        edge.vertices[0], edge.vertices[1]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Counts element uses per edge; every interior edge must be used by
    /// two elements and every boundary edge by one tagged boundary entry.
    pub fn check_conformity(&self) -> Result<()> {
        let mut uses: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.elements {
            for k in 0..3 {
                *uses.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        let tagged: HashMap<(usize, usize), BoundaryTag> = self
            .boundary
            .iter()
            .map(|&([a, b], t)| (edge_key(a, b), t))
            .collect();
        for (key, n) in &uses {
            match (*n, tagged.contains_key(key)) {
                (2, false) | (1, true) => {}
                _ => {
                    return Err(Error::NonConforming(format!(
                        "edge ({}, {}) used by {} elements",
                        key.0, key.1, n
                    )))
                }
            }
        }
        if tagged.len() != uses.values().filter(|&&n| n == 1).count() {
            return Err(Error::NonConforming("boundary tag count mismatch".into()));
        }
        for e in 0..self.n_elements() {
            if self.area(e) <= 0.0 {
                return Err(Error::DegenerateElement(e));
            }
        }
        self.check_hanging_nodes()
    }

    /// Bisects every marked element at least once and closes the
    /// refinement so the result is conforming.
    pub fn bisect(&self, marked: &[usize]) -> Result<(Mesh, Prolongation)> {
        let mut marked_edges = vec![false; self.edges.len()];
        for &e in marked {
            if e >= self.n_elements() {
                return Err(Error::UnknownElement(e));
            }
            marked_edges[self.element_edges[e][0]] = true;
        }
        Ok(self.refine_edges(marked_edges))
    }

    /// One uniform step: all edges are marked, so every element is split
    /// into four children by three bisections.
    pub fn uniform_refine(&self) -> Mesh {
        self.refine_edges(vec![true; self.edges.len()]).0
    }

    fn refine_edges(&self, mut marked_edges: Vec<bool>) -> (Mesh, Prolongation) {
        // closure: a marked edge forces the refinement edge of every adjacent element
        let mut stack: Vec<usize> = (0..marked_edges.len()).filter(|&i| marked_edges[i]).collect();
        while let Some(edge) = stack.pop() {
            let (e0, e1) = self.edges[edge].elements;
            for e in std::iter::once(e0).chain(e1) {
                let r = self.element_edges[e][0];
                if !marked_edges[r] {
                    marked_edges[r] = true;
                    stack.push(r);
                }
            }
        }

        let n_old = self.n_vertices();
        let mut vertices = self.vertices.clone();
        let mut parents = Vec::new();
        let mut new_vertex = vec![usize::MAX; self.edges.len()];
        for (i, edge) in self.edges.iter().enumerate() {
            if marked_edges[i] {
                let [a, b] = edge.vertices;
                new_vertex[i] = vertices.len();
                vertices.push(midpoint(self.vertices[a], self.vertices[b]));
                parents.push([a, b]);
            }
        }
        let split = |a: usize, b: usize| -> Option<usize> {
            let id = self.edge_lookup.get(&edge_key(a, b))?;
            marked_edges[*id].then_some(new_vertex[*id])
        };

        let mut elements = Vec::with_capacity(self.elements.len() * 2);
        let mut generation = Vec::with_capacity(self.elements.len() * 2);
        for (e, &tri) in self.elements.iter().enumerate() {
            push_children(tri, self.generation[e], &split, &mut elements, &mut generation);
        }

        let mut boundary = Vec::with_capacity(self.boundary.len() * 2);
        for &([a, b], tag) in &self.boundary {
            match split(a, b) {
                Some(m) => {
                    boundary.push(([a, m], tag));
                    boundary.push(([m, b], tag));
                }
                None => boundary.push(([a, b], tag)),
            }
        }

        let mut mesh = Mesh {
            vertices,
            elements,
            boundary,
            generation,
            edges: Vec::new(),
            element_edges: Vec::new(),
            edge_lookup: HashMap::new(),
        };
        mesh.rebuild_edges()
            .expect("bisection with closure produced a non-conforming mesh");
        (mesh, Prolongation { n_old, parents })
    }

    pub fn to_snapshot(&self) -> MeshSnapshot {
        MeshSnapshot {
            vertices: self.vertices.clone(),
            triangles: self.elements.clone(),
            boundary: self.boundary.iter().map(|&([a, b], t)| (a, b, t)).collect(),
        }
    }

    pub fn from_snapshot(snapshot: &MeshSnapshot) -> Result<Mesh> {
        let tags: Vec<_> = snapshot.boundary.iter().map(|&(a, b, t)| ([a, b], t)).collect();
        build_mesh(snapshot.vertices.clone(), &snapshot.triangles, &tags)
    }
}

fn push_children(
    tri: [usize; 3],
    gen: u32,
    split: &dyn Fn(usize, usize) -> Option<usize>,
    out: &mut Vec<[usize; 3]>,
    generation: &mut Vec<u32>,
) {
    let [a, b, c] = tri;
    match split(a, b) {
        Some(m) => {
            push_children([c, a, m], gen + 1, split, out, generation);
            push_children([b, c, m], gen + 1, split, out, generation);
        }
        None => {
            out.push(tri);
            generation.push(gen);
        }
    }
}

/// Maps nodal values from a mesh to its refinement. Old nodes keep their
/// ids; each new node sits at the midpoint of its parent edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Prolongation {
    pub n_old: usize,
    pub parents: Vec<[usize; 2]>,
}

impl Prolongation {
    pub fn identity(n: usize) -> Self {
        Prolongation {
            n_old: n,
            parents: Vec::new(),
        }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.n_old);
        let mut out = Vec::with_capacity(self.n_old + self.parents.len());
        out.extend_from_slice(values);
        for &[a, b] in &self.parents {
            out.push(0.5 * (values[a] + values[b]));
        }
        out
    }
}

pub fn bisect(mesh: &Mesh, marked: &[usize]) -> Result<(Mesh, Prolongation)> {
    mesh.bisect(marked)
}

pub fn uniform_refine(mesh: &Mesh) -> Mesh {
    mesh.uniform_refine()
}

/// Node patches: adjacent elements, interior skeleton edges, Neumann edges
/// and patch diameters.
#[derive(Clone, Debug)]
pub struct PatchIndex {
    pub elements: Vec<Vec<usize>>,
    /// Interior edges incident to the node (the skeleton of the patch).
    pub interior_edges: Vec<Vec<usize>>,
    /// Neumann edges on the patch boundary; empty unless the node lies on
    /// the Neumann boundary.
    pub neumann_edges: Vec<Vec<usize>>,
    pub diameter: Vec<f64>,
}

impl PatchIndex {
    pub fn n_nodes(&self) -> usize {
        self.elements.len()
    }

    /// Area of the patch.
    pub fn area(&self, mesh: &Mesh, p: usize) -> f64 {
        self.elements[p].iter().map(|&e| mesh.area(e)).sum()
    }
}

pub fn build_patches(mesh: &Mesh) -> PatchIndex {
    let n = mesh.n_vertices();
    let mut elements = vec![Vec::new(); n];
    for (e, tri) in mesh.elements().iter().enumerate() {
        for &v in tri {
            elements[v].push(e);
        }
    }
    let mut on_neumann = vec![false; n];
    for &(vs, tag) in mesh.boundary() {
        if tag == BoundaryTag::Neumann {
            on_neumann[vs[0]] = true;
            on_neumann[vs[1]] = true;
        }
    }
    let mut interior_edges = vec![Vec::new(); n];
    let mut neumann_edges = vec![Vec::new(); n];
    for (i, edge) in mesh.edges().iter().enumerate() {
        if edge.is_interior() {
            for v in edge.vertices {
                interior_edges[v].push(i);
            }
        } else if edge.tag == Some(BoundaryTag::Neumann) {
            // Γ^N ∩ ∂ω_p, collected for nodes on the Neumann boundary only
            for &v in &mesh.elements()[edge.elements.0] {
                if on_neumann[v] {
                    neumann_edges[v].push(i);
                }
            }
        }
    }
    let diameter = elements
        .iter()
        .map(|patch| {
            let mut vs: Vec<usize> = patch.iter().flat_map(|&e| mesh.elements()[e]).collect();
            vs.sort_unstable();
            vs.dedup();
            let mut d: f64 = 0.0;
            for (i, &p) in vs.iter().enumerate() {
                for &q in &vs[i + 1..] {
                    d = d.max(distance(mesh.vertices()[p], mesh.vertices()[q]));
                }
            }
            d
        })
        .collect();
    PatchIndex {
        elements,
        interior_edges,
        neumann_edges,
        diameter,
    }
}

/// JSON mesh exchange format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSnapshot {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<(usize, usize, BoundaryTag)>,
}

/// Rectangle `[x0,x1]×[y0,y1]` split by the diagonal from `(x0,y0)` to
/// `(x1,y1)`, with one tag per side in the order bottom, right, top, left.
pub fn rectangle_two_triangles(x0: f64, x1: f64, y0: f64, y1: f64, tags: [BoundaryTag; 4]) -> Mesh {
    let vertices = vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]];
    let triangles = [[0, 1, 2], [0, 2, 3]];
    let boundary = [([0, 1], tags[0]), ([1, 2], tags[1]), ([2, 3], tags[2]), ([3, 0], tags[3])];
    build_mesh(vertices, &triangles, &boundary).expect("rectangle mesh is valid")
}

/// Structured `nx × ny` grid whose cell diagonals all run towards the
/// rectangle's center ("union jack" pattern for even counts).
pub fn crossed_grid(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize, tag: BoundaryTag) -> Mesh {
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                x0 + (x1 - x0) * i as f64 / nx as f64,
                y0 + (y1 - y0) * j as f64 / ny as f64,
            ]);
        }
    }
    let mut triangles = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            let lower_left = (2 * i + 1 < nx) == (2 * j + 1 < ny);
            if lower_left {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push(([id(i, 0), id(i + 1, 0)], tag));
        boundary.push(([id(i, ny), id(i + 1, ny)], tag));
    }
    for j in 0..ny {
        boundary.push(([id(0, j), id(0, j + 1)], tag));
        boundary.push(([id(nx, j), id(nx, j + 1)], tag));
    }
    build_mesh(vertices, &triangles, &boundary).expect("structured grid is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use BoundaryTag::*;

    fn square() -> Mesh {
        rectangle_two_triangles(0.0, 1.0, 0.0, 1.0, [Neumann; 4])
    }

    #[test]
    fn two_triangle_square_is_valid() {
        let m = square();
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.edges().len(), 5);
        assert_eq!(m.boundary().len(), 4);
        m.check_conformity().unwrap();
        // refinement edge is the diagonal for both
        for e in 0..2 {
            let [a, b, _] = m.elements()[e];
            assert_eq!(edge_key(a, b), (0, 2));
            assert!(m.area(e) > 0.0);
        }
    }

    #[test]
    fn hanging_node_is_rejected() {
        // big triangle next to two small ones sharing a midpoint
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let tris = [[0, 1, 2], [0, 4, 3], [4, 2, 3]];
        let tags = [
            ([0, 1], Neumann),
            ([1, 2], Neumann),
            ([2, 3], Neumann),
            ([3, 0], Neumann),
        ];
        match build_mesh(vertices, &tris, &tags) {
            Err(Error::NonConforming(msg)) => assert!(msg.contains("hanging node 4"), "{msg}"),
            other => panic!("expected conformity error, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_and_untagged_inputs_are_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(matches!(
            build_mesh(v, &[[0, 1, 2]], &[]),
            Err(Error::DegenerateElement(0))
        ));
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let tags = [([0, 1], Neumann), ([1, 2], Neumann)];
        assert!(matches!(
            build_mesh(v.clone(), &[[0, 1, 2]], &tags),
            Err(Error::UntaggedBoundaryEdge(0, 2))
        ));
        assert!(matches!(
            build_mesh(v, &[[0, 1, 5]], &tags),
            Err(Error::IndexOutOfRange { index: 5, .. })
        ));
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let v = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let tags = [([0, 1], Dirichlet), ([1, 2], Dirichlet), ([2, 0], Dirichlet)];
        let m = build_mesh(v, &[[0, 1, 2]], &tags).unwrap();
        assert!((m.area(0) - 0.5).abs() < 1e-15);
        // longest edge (1,2) is the refinement edge, newest vertex 0
        assert_eq!(m.elements()[0][2], 0);
    }

    #[test]
    fn crossed_grid_interior_patch() {
        let m = crossed_grid(-2.5, 2.5, -2.5, 2.5, 2, 2, Neumann);
        assert_eq!(m.n_elements(), 8);
        let patches = build_patches(&m);
        let center = 4;
        assert_eq!(m.vertices()[center], [0.0, 0.0]);
        assert_eq!(patches.elements[center].len(), 8);
        assert_eq!(patches.interior_edges[center].len(), 8);
        assert!(patches.neumann_edges[center].is_empty());
        assert!((patches.diameter[center] - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn square_corner_patches() {
        let m = square();
        let patches = build_patches(&m);
        // corners 0 and 2 lie on the diagonal
        for p in [0, 2] {
            assert_eq!(patches.elements[p].len(), 2);
            assert_eq!(patches.interior_edges[p].len(), 1);
        }
        for p in [1, 3] {
            assert_eq!(patches.elements[p].len(), 1);
            assert!(patches.interior_edges[p].is_empty());
        }
        for p in 0..4 {
            assert!(!patches.neumann_edges[p].is_empty());
            for &e in &patches.neumann_edges[p] {
                assert_eq!(m.edges()[e].tag, Some(Neumann));
            }
        }
    }

    #[test]
    fn single_triangle_bisection() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let tags = [([0, 1], Neumann), ([1, 2], Neumann), ([2, 0], Neumann)];
        let m = build_mesh(v, &[[0, 1, 2]], &tags).unwrap();
        let (fine, prol) = m.bisect(&[0]).unwrap();
        assert_eq!(fine.n_elements(), 2);
        assert_eq!(fine.vertices()[3], [0.5, 0.5]);
        assert_eq!(prol.parents, vec![[1, 2]]);
        for e in 0..2 {
            assert!(fine.elements()[e].contains(&3));
            assert_eq!(fine.elements()[e][2], 3, "midpoint is the newest vertex");
        }
        fine.check_conformity().unwrap();
    }

    #[test]
    fn diagonal_marking_splits_both_neighbors() {
        let (fine, _) = square().bisect(&[0]).unwrap();
        assert_eq!(fine.n_elements(), 4);
        fine.check_conformity().unwrap();
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = square();
        let (fine, prol) = m.bisect(&[]).unwrap();
        assert_eq!(fine.elements(), m.elements());
        assert_eq!(fine.vertices(), m.vertices());
        assert_eq!(prol, Prolongation::identity(4));
        assert!(matches!(m.bisect(&[7]), Err(Error::UnknownElement(7))));
    }

    #[test]
    fn uniform_refinement_quadruples() {
        let mut m = square();
        let angle0 = m.min_angle();
        for k in 1..=4 {
            let h_before = build_patches(&m).diameter;
            let fine = m.uniform_refine();
            assert_eq!(fine.n_elements(), 2 * 4usize.pow(k));
            fine.check_conformity().unwrap();
            assert!(fine.min_angle() >= angle0 - 1e-12);
            let h_after = build_patches(&fine).diameter;
            for p in 0..m.n_vertices() {
                assert!(h_after[p] < h_before[p]);
            }
            m = fine;
        }
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prolongation_reproduces_linear_fields() {
        let m = square().uniform_refine();
        let lin = |p: Point| 2.0 * p[0] - 3.0 * p[1] + 0.5;
        let vals: Vec<f64> = m.vertices().iter().map(|&p| lin(p)).collect();
        let (fine, prol) = m.bisect(&[1, 3]).unwrap();
        let carried = prol.apply(&vals);
        for (p, &v) in fine.vertices().iter().zip(&carried) {
            assert!((v - lin(*p)).abs() < 1e-14);
        }
    }

    #[test]
    fn dirichlet_wins_at_mixed_corners() {
        let m = rectangle_two_triangles(0.0, 1.0, 0.0, 1.0, [Dirichlet, Neumann, Neumann, Neumann]);
        let kinds = m.node_kinds();
        assert_eq!(kinds[0], NodeKind::Dirichlet);
        assert_eq!(kinds[1], NodeKind::Dirichlet);
        assert_eq!(kinds[2], NodeKind::Neumann);
    }

    #[test]
    fn snapshot_round_trip() {
        let m = square().uniform_refine();
        let json = serde_json::to_string(&m.to_snapshot()).unwrap();
        assert!(json.contains("\"N\""));
        let back: MeshSnapshot = serde_json::from_str(&json).unwrap();
        let m2 = Mesh::from_snapshot(&back).unwrap();
        assert_eq!(m2.n_elements(), m.n_elements());
        assert!((m2.total_area() - 1.0).abs() < 1e-14);
    }
}
