//! Mesh topology, nodal vectors and generators for the unit disk and ball.
//!
//! Global node indices `0..n_boundary` are exactly the nodes on the boundary.
//! The geometry at any time is fully determined by a position
//! [`NodalVector`] of arity `dim`; the topology never changes.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::{Arc, OnceLock};

use crate::assembly::SparsityPattern;
use crate::error::{FemError, Result};
use crate::geometry::{self, Mat3};
use crate::ref_elem::{self, quadrature, ReferenceElement, Tabulation};
use crate::Point;

/// Fixed reference connectivity with boundary-first node enumeration.
#[derive(Debug)]
pub struct MeshTopology {
    pub dim: usize,
    pub degree: usize,
    pub n_nodes: usize,
    pub n_boundary: usize,
    /// `(element, local facet)` pairs on the boundary, ascending.
    pub boundary_faces: Vec<(usize, usize)>,
    elements: Vec<usize>,
    reference: ReferenceElement,
    tables: OnceLock<Arc<ElementTables>>,
    pattern: OnceLock<Arc<SparsityPattern>>,
}

/// Tabulations shared by every assembly routine on one topology.
#[derive(Debug)]
pub(crate) struct ElementTables {
    pub volume: Tabulation,
    /// One tabulation per local facet; points are element reference
    /// coordinates, weights are facet-reference weights.
    pub facets: Vec<Tabulation>,
    /// Reference tangent vectors of each facet parametrization.
    pub facet_tangents: Vec<Vec<Point>>,
}

impl Clone for MeshTopology {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            degree: self.degree,
            n_nodes: self.n_nodes,
            n_boundary: self.n_boundary,
            boundary_faces: self.boundary_faces.clone(),
            elements: self.elements.clone(),
            reference: self.reference.clone(),
            tables: OnceLock::new(),
            pattern: OnceLock::new(),
        }
    }
}

impl MeshTopology {
    /// Builds a topology from an element table; checks index ranges and the
    /// boundary-first ordering of facet nodes.
    pub fn new(
        dim: usize,
        degree: usize,
        elements: Vec<usize>,
        n_nodes: usize,
        n_boundary: usize,
        boundary_faces: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let reference = ReferenceElement::new(dim, degree)?;
        let nl = reference.n_local;
        if !elements.len().is_multiple_of(nl) {
            return Err(FemError::Invalid(format!(
                "element table length {} is not a multiple of {nl}",
                elements.len()
            )));
        }
        if let Some(&bad) = elements.iter().find(|&&j| j >= n_nodes) {
            return Err(FemError::Invalid(format!("node index {bad} >= {n_nodes}")));
        }
        if n_boundary > n_nodes {
            return Err(FemError::Invalid("more boundary nodes than nodes".into()));
        }
        let topo = Self {
            dim,
            degree,
            n_nodes,
            n_boundary,
            boundary_faces,
            elements,
            reference,
            tables: OnceLock::new(),
            pattern: OnceLock::new(),
        };
        for &(e, f) in &topo.boundary_faces {
            if e >= topo.n_elements() || f > dim {
                return Err(FemError::Invalid(format!("bad boundary face ({e}, {f})")));
            }
            for ln in topo.reference.facet_nodes(f) {
                if topo.element(e)[ln] >= n_boundary {
                    return Err(FemError::Invalid(format!(
                        "boundary face ({e}, {f}) references interior node"
                    )));
                }
            }
        }
        Ok(topo)
    }

    pub fn n_local(&self) -> usize {
        self.reference.n_local
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / self.reference.n_local
    }

    pub fn n_interior(&self) -> usize {
        self.n_nodes - self.n_boundary
    }

    #[inline]
    pub fn element(&self, e: usize) -> &[usize] {
        let nl = self.reference.n_local;
        &self.elements[e * nl..(e + 1) * nl]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> {
        self.elements.chunks(self.reference.n_local)
    }

    pub fn reference(&self) -> &ReferenceElement {
        &self.reference
    }

    /// Volume rule exactness `2k + n`.
    pub fn volume_exactness(&self) -> usize {
        2 * self.degree + self.dim
    }

    /// Surface rule exactness `2k + n - 1`.
    pub fn surface_exactness(&self) -> usize {
        2 * self.degree + self.dim - 1
    }

    pub(crate) fn tables(&self) -> Arc<ElementTables> {
        self.tables
            .get_or_init(|| {
                let rule =
                    quadrature(self.dim, self.volume_exactness()).expect("volume exactness within tabulated range");
                let volume = Tabulation::new(&self.reference, rule.points, rule.weights);
                let frule = quadrature(self.dim - 1, self.surface_exactness())
                    .expect("surface exactness within tabulated range");
                let mut facets = Vec::new();
                let mut facet_tangents = Vec::new();
                for f in 0..=self.dim {
                    let (base, tangents) = ref_elem::facet_frame(self.dim, f);
                    let pts = frule
                        .points
                        .iter()
                        .map(|s| {
                            let mut p = base;
                            for (i, t) in tangents.iter().enumerate() {
                                for c in 0..3 {
                                    p[c] += s[i] * t[c];
                                }
                            }
                            p
                        })
                        .collect();
                    facets.push(Tabulation::new(&self.reference, pts, frule.weights.clone()));
                    facet_tangents.push(tangents);
                }
                Arc::new(ElementTables {
                    volume,
                    facets,
                    facet_tangents,
                })
            })
            .clone()
    }

    pub(crate) fn pattern(&self) -> Arc<SparsityPattern> {
        self.pattern
            .get_or_init(|| Arc::new(SparsityPattern::from_topology(self)))
            .clone()
    }

    /// Writes the plain-text node/element listing.
    pub fn export_text<W: Write>(&self, x: &NodalVector, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# dim {} degree {} nodes {} boundary {} elements {}",
            self.dim,
            self.degree,
            self.n_nodes,
            self.n_boundary,
            self.n_elements()
        )?;
        writeln!(out, "nodes")?;
        for j in 0..self.n_nodes {
            let p = x.node(j);
            let coords: Vec<String> = p[..self.dim].iter().map(|c| format!("{c:.17e}")).collect();
            writeln!(out, "{j} {}", coords.join(" "))?;
        }
        writeln!(out, "elements")?;
        for (e, nodes) in self.elements().enumerate() {
            let ids: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
            writeln!(out, "{e} {}", ids.join(" "))?;
        }
        Ok(())
    }
}

/// Flat coefficient vector over nodes. Vector fields are stored component
/// major: component `c` of node `j` lives at `c * n_nodes + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalVector {
    pub data: Vec<f64>,
    pub arity: usize,
}

impl NodalVector {
    pub fn zeros(arity: usize, n_nodes: usize) -> Self {
        Self {
            data: vec![0.0; arity * n_nodes],
            arity,
        }
    }

    pub fn scalar(data: Vec<f64>) -> Self {
        Self { data, arity: 1 }
    }

    pub fn from_points(dim: usize, points: &[Point]) -> Self {
        let n = points.len();
        let mut v = Self::zeros(dim, n);
        for (j, p) in points.iter().enumerate() {
            v.set_node(j, p);
        }
        v
    }

    pub fn n_nodes(&self) -> usize {
        self.data.len() / self.arity
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.n_nodes();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.n_nodes();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Node value padded to three components.
    #[inline]
    pub fn node(&self, j: usize) -> Point {
        let n = self.n_nodes();
        let mut p = [0.0; 3];
        for c in 0..self.arity.min(3) {
            p[c] = self.data[c * n + j];
        }
        p
    }

    #[inline]
    pub fn set_node(&mut self, j: usize, p: &Point) {
        let n = self.n_nodes();
        for c in 0..self.arity.min(3) {
            self.data[c * n + j] = p[c];
        }
    }

    pub fn check_len(&self, arity: usize, n_nodes: usize) -> Result<()> {
        if self.arity != arity || self.data.len() != arity * n_nodes {
            return Err(FemError::DimensionMismatch {
                expected: arity * n_nodes,
                got: self.data.len(),
            });
        }
        Ok(())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &NodalVector) -> NodalVector {
        NodalVector {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect(),
            arity: self.arity,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Element coordinates gathered from a position vector.
#[inline]
pub(crate) fn gather_coords(topo: &MeshTopology, x: &NodalVector, e: usize, out: &mut Vec<Point>) {
    out.clear();
    out.extend(topo.element(e).iter().map(|&j| x.node(j)));
}

/// Physical point, Jacobian and its determinant at a reference point.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub point: Point,
    pub jacobian: Mat3,
    pub det: f64,
}

/// Evaluates the isoparametric map of element `e` at reference point `p`.
pub fn element_geometry(topo: &MeshTopology, x: &NodalVector, element: usize, p: &Point) -> Result<ElementGeometry> {
    x.check_len(topo.dim, topo.n_nodes)?;
    let reference = topo.reference();
    let values = reference.shape_values(p)?;
    let grads = reference.shape_gradients(p)?;
    let mut coords = Vec::new();
    gather_coords(topo, x, element, &mut coords);
    let mut point = [0.0; 3];
    for (xj, v) in coords.iter().zip(&values) {
        for c in 0..topo.dim {
            point[c] += xj[c] * v;
        }
    }
    let jacobian = geometry::jacobian(topo.dim, &coords, &grads);
    let det = geometry::det(topo.dim, &jacobian);
    if det <= 0.0 || !det.is_finite() {
        return Err(FemError::DegenerateElement { element, det });
    }
    Ok(ElementGeometry { point, jacobian, det })
}

/// Smallest Jacobian determinant over all elements and volume quadrature
/// points; fails on the first non-positive one.
pub fn check_positive_jacobians(topo: &MeshTopology, x: &NodalVector) -> Result<f64> {
    x.check_len(topo.dim, topo.n_nodes)?;
    let tables = topo.tables();
    let tab = &tables.volume;
    let mut coords = Vec::new();
    let mut min_det = f64::INFINITY;
    for e in 0..topo.n_elements() {
        gather_coords(topo, x, e, &mut coords);
        for q in 0..tab.len() {
            let jac = geometry::jacobian(topo.dim, &coords, tab.grads_at(q));
            let det = geometry::det(topo.dim, &jac);
            if det <= 0.0 || !det.is_finite() {
                return Err(FemError::DegenerateElement { element: e, det });
            }
            min_det = min_det.min(det);
        }
    }
    Ok(min_det)
}

/// Maximum over elements of the largest pairwise node distance.
pub fn mesh_size(topo: &MeshTopology, x: &NodalVector) -> f64 {
    let mut h: f64 = 0.0;
    let mut coords = Vec::new();
    for e in 0..topo.n_elements() {
        gather_coords(topo, x, e, &mut coords);
        for a in 0..coords.len() {
            for b in a + 1..coords.len() {
                h = h.max(geometry::distance(&coords[a], &coords[b]));
            }
        }
    }
    h
}

/// Builds the degree-`k` topology and positions from a vertex mesh.
/// Cells must be positively oriented. Edge midpoints on boundary facets are
/// moved by `project`; all other midpoints stay on straight edges.
fn build_topology(
    dim: usize,
    degree: usize,
    verts: &[Point],
    cells: &[Vec<usize>],
    project: impl Fn(Point) -> Point,
) -> Result<(MeshTopology, NodalVector)> {
    let nv = dim + 1;
    let key_of = |vs: &[usize]| -> [usize; 3] {
        let mut k = [usize::MAX; 3];
        let mut s: Vec<usize> = vs.to_vec();
        s.sort_unstable();
        k[..s.len()].copy_from_slice(&s);
        k
    };
    let mut facets: BTreeMap<[usize; 3], Vec<(usize, usize)>> = BTreeMap::new();
    for (ci, cell) in cells.iter().enumerate() {
        for f in 0..nv {
            let vs: Vec<usize> = (0..nv).filter(|&v| v != f).map(|v| cell[v]).collect();
            facets.entry(key_of(&vs)).or_default().push((ci, f));
        }
    }
    let mut boundary_faces = Vec::new();
    let mut boundary_vertex = vec![false; verts.len()];
    let mut boundary_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (key, owners) in &facets {
        match owners.len() {
            1 => {
                boundary_faces.push(owners[0]);
                let vs: Vec<usize> = key.iter().copied().filter(|&v| v != usize::MAX).collect();
                for (i, &a) in vs.iter().enumerate() {
                    boundary_vertex[a] = true;
                    for &b in &vs[i + 1..] {
                        boundary_edges.insert((a.min(b), a.max(b)));
                    }
                }
            }
            2 => {}
            n => {
                return Err(FemError::Invalid(format!(
                    "non-manifold facet {key:?} shared by {n} cells"
                )))
            }
        }
    }
    boundary_faces.sort_unstable();

    let local_edges = ref_elem::edges(dim);
    let mut all_edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    if degree == 2 {
        for cell in cells {
            for &(a, b) in local_edges {
                let (u, v) = (cell[a], cell[b]);
                all_edges.insert((u.min(v), u.max(v)));
            }
        }
    }

    let mut vertex_node = vec![usize::MAX; verts.len()];
    let mut edge_node: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut next = 0;
    for v in 0..verts.len() {
        if boundary_vertex[v] {
            vertex_node[v] = next;
            next += 1;
        }
    }
    if degree == 2 {
        for &e in &boundary_edges {
            edge_node.insert(e, next);
            next += 1;
        }
    }
    let n_boundary = next;
    for v in 0..verts.len() {
        if !boundary_vertex[v] {
            vertex_node[v] = next;
            next += 1;
        }
    }
    if degree == 2 {
        for &e in &all_edges {
            if !boundary_edges.contains(&e) {
                edge_node.insert(e, next);
                next += 1;
            }
        }
    }
    let n_nodes = next;

    let mut x = NodalVector::zeros(dim, n_nodes);
    for (v, p) in verts.iter().enumerate() {
        x.set_node(vertex_node[v], p);
    }
    for (&(a, b), &node) in &edge_node {
        let (pa, pb) = (verts[a], verts[b]);
        let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])];
        let p = if boundary_edges.contains(&(a, b)) {
            project(mid)
        } else {
            mid
        };
        x.set_node(node, &p);
    }

    let nl = ReferenceElement::new(dim, degree)?.n_local;
    let mut elements = Vec::with_capacity(cells.len() * nl);
    for cell in cells {
        for &v in cell.iter().take(nv) {
            elements.push(vertex_node[v]);
        }
        if degree == 2 {
            for &(a, b) in local_edges {
                let (u, w) = (cell[a], cell[b]);
                elements.push(edge_node[&(u.min(w), u.max(w))]);
            }
        }
    }
    let topo = MeshTopology::new(dim, degree, elements, n_nodes, n_boundary, boundary_faces)?;
    Ok((topo, x))
}

fn project_to_unit_sphere(p: Point) -> Point {
    let r = geometry::norm(&p);
    [p[0] / r, p[1] / r, p[2] / r]
}

fn signed_area(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counter-clockwise triangle `(a, b, c)`.
fn incircle(a: &[f64; 2], b: &[f64; 2], c: &[f64; 2], d: &[f64; 2]) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

fn orient_ccw(coords: &[[f64; 2]], t: &mut [usize; 3]) {
    if signed_area(&coords[t[0]], &coords[t[1]], &coords[t[2]]) < 0.0 {
        t.swap(1, 2);
    }
}

/// Lawson edge flips until every interior edge is locally Delaunay.
fn make_delaunay(coords: &[[f64; 2]], tris: &mut [[usize; 3]], spacing: f64) {
    let tol = 1e-10 * spacing.powi(4);
    for _ in 0..1000 {
        let mut edges: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (ti, t) in tris.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (t[i], t[(i + 1) % 3]);
                edges
                    .entry((a.min(b), a.max(b)))
                    .or_default()
                    .push((ti, t[(i + 2) % 3]));
            }
        }
        let mut touched = vec![false; tris.len()];
        let mut flips = 0;
        for (&(a, b), owners) in &edges {
            if owners.len() != 2 {
                continue;
            }
            let ((t1, o1), (t2, o2)) = (owners[0], owners[1]);
            if touched[t1] || touched[t2] {
                continue;
            }
            let tri = tris[t1];
            if incircle(&coords[tri[0]], &coords[tri[1]], &coords[tri[2]], &coords[o2]) <= tol {
                continue;
            }
            let mut n1 = [o1, a, o2];
            let mut n2 = [o1, o2, b];
            orient_ccw(coords, &mut n1);
            orient_ccw(coords, &mut n2);
            let min_area = 1e-12 * spacing * spacing;
            if signed_area(&coords[n1[0]], &coords[n1[1]], &coords[n1[2]]) <= min_area
                || signed_area(&coords[n2[0]], &coords[n2[1]], &coords[n2[2]]) <= min_area
            {
                continue;
            }
            tris[t1] = n1;
            tris[t2] = n2;
            touched[t1] = true;
            touched[t2] = true;
            flips += 1;
        }
        if flips == 0 {
            return;
        }
    }
}

/// Concentric-ring Delaunay triangulation of the unit disk: ring `i` of
/// `rings` has `6 i` equally spaced vertices.
fn disk_vertex_mesh(rings: usize) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let mut coords = vec![[0.0, 0.0]];
    let offset = |i: usize| if i == 0 { 0 } else { 1 + 3 * i * (i - 1) };
    for i in 1..=rings {
        let r = i as f64 / rings as f64;
        let n = 6 * i;
        for j in 0..n {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            if i == rings {
                coords.push([th.cos(), th.sin()]);
            } else {
                coords.push([r * th.cos(), r * th.sin()]);
            }
        }
    }
    let mut tris = Vec::new();
    for j in 0..6 {
        tris.push([0, offset(1) + j, offset(1) + (j + 1) % 6]);
    }
    for i in 2..=rings {
        let (n_in, n_out) = (6 * (i - 1), 6 * i);
        let (o_in, o_out) = (offset(i - 1), offset(i));
        let (mut a, mut b) = (0usize, 0usize);
        while a < n_in || b < n_out {
            let next_in = (a + 1) as f64 / n_in as f64;
            let next_out = (b + 1) as f64 / n_out as f64;
            let ia = o_in + a % n_in;
            let ob = o_out + b % n_out;
            if b < n_out && (a >= n_in || next_out <= next_in + 1e-12) {
                tris.push([ia, ob, o_out + (b + 1) % n_out]);
                b += 1;
            } else {
                tris.push([ia, ob, o_in + (a + 1) % n_in]);
                a += 1;
            }
        }
    }
    for t in tris.iter_mut() {
        orient_ccw(&coords, t);
    }
    make_delaunay(&coords, &mut tris, 1.0 / rings as f64);
    (coords, tris)
}

const DISK_H_RANGE: (f64, f64) = (0.01, 1.0);
const BALL_H_RANGE: (f64, f64) = (0.1, 1.0);
const GRADING_RANGE: (f64, f64) = (-0.6, 0.4);
const GRADING_TOL: f64 = 1e-4;

/// Quasi-uniform triangulation of the unit disk with `mesh_size <= h_target`.
pub fn generate_disk_mesh(h_target: f64, degree: usize) -> Result<(MeshTopology, NodalVector)> {
    let (lo, hi) = DISK_H_RANGE;
    if !(h_target > lo && h_target < hi) {
        return Err(FemError::MeshResolution {
            h: h_target,
            min: lo,
            max: hi,
        });
    }
    let mut rings = (1.0 / h_target).ceil().max(1.0) as usize;
    loop {
        let mesh = disk_mesh_with_rings(rings, degree)?;
        if mesh_size(&mesh.0, &mesh.1) <= h_target {
            return Ok(mesh);
        }
        rings += 1;
    }
}

/// Disk mesh with an explicit ring count.
pub fn disk_mesh_with_rings(rings: usize, degree: usize) -> Result<(MeshTopology, NodalVector)> {
    let (coords, tris) = disk_vertex_mesh(rings.max(1));
    let verts: Vec<Point> = coords.iter().map(|c| [c[0], c[1], 0.0]).collect();
    let cells: Vec<Vec<usize>> = tris.iter().map(|t| t.to_vec()).collect();
    build_topology(2, degree, &verts, &cells, project_to_unit_sphere)
}

/// Maps the cube `[-1, 1]^3` onto the unit ball along rays.
fn cube_to_ball(p: Point, grading: f64) -> Point {
    let inf = p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let two = geometry::norm(&p);
    if two == 0.0 {
        return p;
    }
    let s = (1.0 + grading * (1.0 - inf)) * inf / two;
    [p[0] * s, p[1] * s, p[2] * s]
}

/// Kuhn subdivision of an `n^3` cube grid, reflected per octant so that every
/// tetrahedron contains its cell's vertex closest to the origin, then mapped
/// onto the ball. Cube shell `‖p‖∞ = t` lands on the sphere of radius
/// `t (1 + grading (1 - t))`.
fn ball_vertex_mesh(n: usize, grading: f64) -> (Vec<Point>, Vec<Vec<usize>>) {
    let idx = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    let coord = |i: usize| -1.0 + 2.0 * i as f64 / n as f64;
    let mut verts = vec![[0.0; 3]; (n + 1).pow(3)];
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                let p = [coord(i), coord(j), coord(k)];
                let boundary = i == 0 || j == 0 || k == 0 || i == n || j == n || k == n;
                let mut q = cube_to_ball(p, grading);
                if boundary {
                    q = project_to_unit_sphere(q);
                }
                verts[idx(i, j, k)] = q;
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut cells = Vec::with_capacity(6 * n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let lo = [i, j, k];
                // start at the corner nearest to the origin
                let mut start = [0usize; 3];
                let mut step = [1isize; 3];
                for a in 0..3 {
                    let center = coord(lo[a]) + 1.0 / n as f64;
                    if center < -1e-12 {
                        start[a] = lo[a] + 1;
                        step[a] = -1;
                    } else {
                        start[a] = lo[a];
                    }
                }
                for perm in PERMS {
                    let mut cur = start;
                    let mut tet = vec![idx(cur[0], cur[1], cur[2])];
                    for &a in &perm {
                        cur[a] = (cur[a] as isize + step[a]) as usize;
                        tet.push(idx(cur[0], cur[1], cur[2]));
                    }
                    let p: Vec<Point> = tet.iter().map(|&v| verts[v]).collect();
                    let d = [
                        [p[1][0] - p[0][0], p[2][0] - p[0][0], p[3][0] - p[0][0]],
                        [p[1][1] - p[0][1], p[2][1] - p[0][1], p[3][1] - p[0][1]],
                        [p[1][2] - p[0][2], p[2][2] - p[0][2], p[3][2] - p[0][2]],
                    ];
                    if geometry::det(3, &d) < 0.0 {
                        tet.swap(2, 3);
                    }
                    cells.push(tet);
                }
            }
        }
    }
    (verts, cells)
}

/// Tetrahedral mesh of the unit ball with `mesh_size <= h_target`.
pub fn generate_ball_mesh(h_target: f64, degree: usize) -> Result<(MeshTopology, NodalVector)> {
    let (lo, hi) = BALL_H_RANGE;
    if !(h_target > lo && h_target < hi) {
        return Err(FemError::MeshResolution {
            h: h_target,
            min: lo,
            max: hi,
        });
    }
    let mut n = 2;
    let first = loop {
        if let Some(g) = best_grading(n, h_target, degree)? {
            break g;
        }
        n += 2;
    };
    let grading = match best_grading(n + 2, h_target, degree)? {
        Some(g) if g.abs() < first.abs() => {
            n += 2;
            g
        }
        _ => first,
    };
    ball_mesh_graded(n, grading, degree)
}

/// Smallest grading in range whose mesh size stays within `h_target`,
/// found by bisection; `None` when even the largest grading is too coarse.
fn best_grading(n: usize, h_target: f64, degree: usize) -> Result<Option<f64>> {
    let (mut lo, mut hi) = GRADING_RANGE;
    if ball_h(n, hi, degree)? > h_target {
        return Ok(None);
    }
    if ball_h(n, lo, degree)? <= h_target {
        return Ok(Some(lo));
    }
    while hi - lo > GRADING_TOL {
        let mid = 0.5 * (lo + hi);
        if ball_h(n, mid, degree)? <= h_target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

fn ball_h(n: usize, grading: f64, degree: usize) -> Result<f64> {
    let (topo, x) = ball_mesh_graded(n, grading, degree)?;
    Ok(mesh_size(&topo, &x))
}

/// Ball mesh with an explicit number of cube divisions per axis.
pub fn ball_mesh_with_divisions(n: usize, degree: usize) -> Result<(MeshTopology, NodalVector)> {
    ball_mesh_graded(n, 0.0, degree)
}

/// Ball mesh with `n` cube divisions per axis and radial grading in `(-1, 1)`;
/// positive values thin the outer layers.
pub fn ball_mesh_graded(n: usize, grading: f64, degree: usize) -> Result<(MeshTopology, NodalVector)> {
    if !(grading.abs() < 1.0) {
        return Err(FemError::Invalid(format!("grading must lie in (-1, 1), got {grading}")));
    }
    let (verts, cells) = ball_vertex_mesh(n.max(2), grading);
    build_topology(3, degree, &verts, &cells, project_to_unit_sphere)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_mass;
    use std::collections::HashMap;

    fn volume(topo: &MeshTopology, x: &NodalVector) -> f64 {
        let m = assemble_mass(topo, x).unwrap();
        let ones = vec![1.0; topo.n_nodes];
        m.quadratic_form(&ones)
    }

    #[test]
    fn disk_boundary_nodes_on_circle() {
        for k in [1, 2] {
            let (topo, x) = generate_disk_mesh(0.3, k).unwrap();
            for j in 0..topo.n_boundary {
                let p = x.node(j);
                assert!((geometry::norm(&p) - 1.0).abs() < 1e-12);
            }
            for j in topo.n_boundary..topo.n_nodes {
                assert!(geometry::norm(&x.node(j)) < 1.0 - 1e-3);
            }
            assert!(mesh_size(&topo, &x) <= 0.3);
            assert!(check_positive_jacobians(&topo, &x).unwrap() > 0.0);
        }
    }

    #[test]
    fn p2_disk_area_close_to_pi() {
        let (topo, x) = generate_disk_mesh(0.1, 2).unwrap();
        let area = volume(&topo, &x);
        assert!((area - std::f64::consts::PI).abs() < 5e-6, "{area}");
    }

    #[test]
    fn p1_disk_area_below_pi() {
        let (topo, x) = generate_disk_mesh(0.35, 1).unwrap();
        assert!(volume(&topo, &x) < std::f64::consts::PI);
    }

    #[test]
    fn ball_volume_and_boundary() {
        let (topo, x) = generate_ball_mesh(0.5, 2).unwrap();
        let vol = volume(&topo, &x);
        assert!((vol - 4.0 / 3.0 * std::f64::consts::PI).abs() < 2e-3, "{vol}");
        for j in 0..topo.n_boundary {
            assert!((geometry::norm(&x.node(j)) - 1.0).abs() < 1e-12);
        }
        assert!(check_positive_jacobians(&topo, &x).unwrap() > 0.0);
    }

    #[test]
    fn ball_element_count_growth() {
        let counts: Vec<usize> = [0.7, 0.35, 0.175]
            .iter()
            .map(|&h| generate_ball_mesh(h, 1).unwrap().0.n_elements())
            .collect();
        for w in counts.windows(2) {
            let ratio = w[1] as f64 / w[0] as f64;
            assert!((4.0..=16.0).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn ball_series_sizes_are_distinct_and_close_to_targets() {
        let targets = [0.73, 0.62, 0.55, 0.49, 0.43];
        let hs: Vec<f64> = targets
            .iter()
            .map(|&h| {
                let (topo, x) = generate_ball_mesh(h, 2).unwrap();
                assert!(check_positive_jacobians(&topo, &x).unwrap() > 0.0);
                mesh_size(&topo, &x)
            })
            .collect();
        for (h, t) in hs.iter().zip(targets) {
            assert!(*h <= t && *h > 0.97 * t, "{h} for target {t}");
        }
    }

    #[test]
    fn graded_ball_keeps_boundary_on_sphere() {
        let (topo, x) = ball_mesh_graded(4, -0.4, 2).unwrap();
        for j in 0..topo.n_boundary {
            assert!((geometry::norm(&x.node(j)) - 1.0).abs() < 1e-12);
        }
        assert!(ball_mesh_graded(4, 1.0, 1).is_err());
    }

    #[test]
    fn rejects_out_of_range_h() {
        assert!(generate_disk_mesh(0.001, 2).is_err());
        assert!(generate_disk_mesh(1.5, 2).is_err());
        assert!(generate_ball_mesh(0.05, 2).is_err());
    }

    #[test]
    fn mesh_size_of_unit_right_triangle_and_scaling() {
        let topo = MeshTopology::new(2, 1, vec![0, 1, 2], 3, 3, vec![]).unwrap();
        let x = NodalVector::from_points(2, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!((mesh_size(&topo, &x) - 2f64.sqrt()).abs() < 1e-15);
        let scaled = NodalVector {
            data: x.data.iter().map(|v| 3.0 * v).collect(),
            arity: 2,
        };
        assert!((mesh_size(&topo, &scaled) - 3.0 * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn mesh_size_halves_under_refinement() {
        let hs: Vec<f64> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&h| {
                let (t, x) = generate_disk_mesh(h, 2).unwrap();
                mesh_size(&t, &x)
            })
            .collect();
        for w in hs.windows(2) {
            let r = w[0] / w[1];
            assert!((1.6..=2.4).contains(&r), "{r}");
        }
    }

    #[test]
    fn conformity_and_boundary_first() {
        for (topo, _) in [
            generate_disk_mesh(0.25, 2).unwrap(),
            generate_ball_mesh(0.7, 2).unwrap(),
        ] {
            let reference = topo.reference().clone();
            let mut faces: HashMap<Vec<usize>, usize> = HashMap::new();
            for e in 0..topo.n_elements() {
                let nodes = topo.element(e);
                let mut uniq = nodes.to_vec();
                uniq.sort_unstable();
                uniq.dedup();
                assert_eq!(uniq.len(), nodes.len());
                for f in 0..=topo.dim {
                    let mut key: Vec<usize> = reference.facet_nodes(f).iter().map(|&l| nodes[l]).collect();
                    key.sort_unstable();
                    *faces.entry(key).or_default() += 1;
                }
            }
            let mut n_boundary_faces = 0;
            for (key, count) in &faces {
                assert!(*count == 1 || *count == 2);
                if *count == 1 {
                    n_boundary_faces += 1;
                    assert!(key.iter().all(|&j| j < topo.n_boundary));
                }
            }
            assert_eq!(n_boundary_faces, topo.boundary_faces.len());
        }
    }

    #[test]
    fn identity_geometry_and_translation() {
        let topo = MeshTopology::new(2, 1, vec![0, 1, 2], 3, 3, vec![]).unwrap();
        let x = NodalVector::from_points(2, &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let g = element_geometry(&topo, &x, 0, &[0.2, 0.3, 0.0]).unwrap();
        assert_eq!(g.det, 1.0);
        assert_eq!(g.jacobian[0][0], 1.0);
        assert_eq!(g.jacobian[0][1], 0.0);
        assert!((g.point[0] - 0.2).abs() < 1e-15);
        let shifted = NodalVector::from_points(2, &[[2.0, 1.0, 0.0], [3.0, 1.0, 0.0], [2.0, 2.0, 0.0]]);
        let gs = element_geometry(&topo, &shifted, 0, &[0.2, 0.3, 0.0]).unwrap();
        assert_eq!(gs.jacobian, g.jacobian);
        assert!((gs.point[0] - 2.2).abs() < 1e-15 && (gs.point[1] - 1.3).abs() < 1e-15);
        let flipped = NodalVector::from_points(2, &[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]);
        assert!(matches!(
            element_geometry(&topo, &flipped, 0, &[0.2, 0.3, 0.0]),
            Err(FemError::DegenerateElement { element: 0, .. })
        ));
    }

    #[test]
    fn affine_element_has_constant_jacobian() {
        let (topo, x) = generate_disk_mesh(0.3, 1).unwrap();
        let g0 = element_geometry(&topo, &x, 3, &[0.1, 0.1, 0.0]).unwrap();
        for i in 0..10 {
            let s = 0.05 * i as f64;
            let g = element_geometry(&topo, &x, 3, &[s, 0.5 - s, 0.0]).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    assert!((g.jacobian[r][c] - g0.jacobian[r][c]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn export_lists_nodes_and_elements() {
        let (topo, x) = generate_disk_mesh(0.5, 2).unwrap();
        let mut buf = Vec::new();
        topo.export_text(&x, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3 + topo.n_nodes + topo.n_elements());
        assert_eq!(lines[1], "nodes");
    }
}
