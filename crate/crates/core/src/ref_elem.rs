//! Reference simplices, Lagrange shape functions of degree 1 and 2, and
//! quadrature rules on the unit simplex.
//!
//! Reference vertices are `0, e1, e2(, e3)`. Local node order is vertices
//! first, then edge midpoints in the order of [`TRI_EDGES`] / [`TET_EDGES`].
//! Local facet `f` is the facet opposite vertex `f`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{FemError, Result};
use crate::Point;

/// Local edges of the reference triangle, as vertex pairs.
pub const TRI_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];
/// Local edges of the reference tetrahedron, as vertex pairs.
pub const TET_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (0, 2), (0, 3), (1, 3), (2, 3)];

const INSIDE_TOL: f64 = 1e-12;

/// Edge table for a simplex of the given dimension.
pub fn edges(dim: usize) -> &'static [(usize, usize)] {
    if dim == 2 {
        &TRI_EDGES
    } else {
        &TET_EDGES
    }
}

/// Lagrange element of degree `k` on the reference triangle or tetrahedron.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub dim: usize,
    pub degree: usize,
    pub n_local: usize,
    pub local_nodes: Vec<Point>,
}

impl ReferenceElement {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if !(2..=3).contains(&dim) || !(1..=2).contains(&degree) {
            return Err(FemError::UnsupportedElement { dim, degree });
        }
        let mut local_nodes: Vec<Point> = (0..=dim).map(vertex).collect();
        if degree == 2 {
            for &(a, b) in edges(dim) {
                let (pa, pb) = (vertex(a), vertex(b));
                local_nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])]);
            }
        }
        Ok(Self {
            dim,
            degree,
            n_local: local_nodes.len(),
            local_nodes,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.dim + 1
    }

    /// Number of local nodes on one facet.
    pub fn n_facet_nodes(&self) -> usize {
        match (self.dim, self.degree) {
            (2, 1) => 2,
            (2, _) => 3,
            (_, 1) => 3,
            _ => 6,
        }
    }

    /// Basis values at `p`; rejects points outside the closed simplex.
    pub fn shape_values(&self, p: &Point) -> Result<Vec<f64>> {
        self.check_inside(p)?;
        let mut values = vec![0.0; self.n_local];
        let mut grads = vec![[0.0; 3]; self.n_local];
        self.eval(p, &mut values, &mut grads);
        Ok(values)
    }

    /// Reference gradients at `p`, one row per basis function.
    pub fn shape_gradients(&self, p: &Point) -> Result<Vec<[f64; 3]>> {
        self.check_inside(p)?;
        let mut values = vec![0.0; self.n_local];
        let mut grads = vec![[0.0; 3]; self.n_local];
        self.eval(p, &mut values, &mut grads);
        Ok(grads)
    }

    fn check_inside(&self, p: &Point) -> Result<()> {
        let coords = &p[..self.dim];
        let sum: f64 = coords.iter().sum();
        if coords.iter().any(|&c| c < -INSIDE_TOL) || sum > 1.0 + INSIDE_TOL {
            return Err(FemError::OutsideReference(coords.to_vec()));
        }
        Ok(())
    }

    /// Unchecked evaluation used by the tabulation in hot loops.
    pub(crate) fn eval(&self, p: &Point, values: &mut [f64], grads: &mut [[f64; 3]]) {
        let dim = self.dim;
        let mut lambda = [0.0; 4];
        let mut dlambda = [[0.0; 3]; 4];
        lambda[0] = 1.0 - p[..dim].iter().sum::<f64>();
        for c in 0..dim {
            lambda[c + 1] = p[c];
            dlambda[0][c] = -1.0;
            dlambda[c + 1][c] = 1.0;
        }
        match self.degree {
            1 => {
                values[..=dim].copy_from_slice(&lambda[..=dim]);
                grads[..=dim].copy_from_slice(&dlambda[..=dim]);
            }
            _ => {
                for v in 0..=dim {
                    values[v] = lambda[v] * (2.0 * lambda[v] - 1.0);
                    let s = 4.0 * lambda[v] - 1.0;
                    grads[v] = [s * dlambda[v][0], s * dlambda[v][1], s * dlambda[v][2]];
                }
                for (e, &(a, b)) in edges(dim).iter().enumerate() {
                    let j = dim + 1 + e;
                    values[j] = 4.0 * lambda[a] * lambda[b];
                    for c in 0..3 {
                        grads[j][c] = 4.0 * (lambda[a] * dlambda[b][c] + lambda[b] * dlambda[a][c]);
                    }
                }
            }
        }
    }

    /// Local node indices lying on facet `f` (the facet opposite vertex `f`).
    pub fn facet_nodes(&self, f: usize) -> Vec<usize> {
        let mut nodes: Vec<usize> = (0..=self.dim).filter(|&v| v != f).collect();
        if self.degree == 2 {
            for (e, &(a, b)) in edges(self.dim).iter().enumerate() {
                if a != f && b != f {
                    nodes.push(self.dim + 1 + e);
                }
            }
        }
        nodes
    }
}

/// Reference coordinates of vertex `v`.
pub fn vertex(v: usize) -> Point {
    let mut p = [0.0; 3];
    if v > 0 {
        p[v - 1] = 1.0;
    }
    p
}

/// Affine parametrization of facet `f` over the (dim-1)-simplex: returns the
/// base point and the tangent directions in reference coordinates.
pub fn facet_frame(dim: usize, f: usize) -> (Point, Vec<Point>) {
    let verts: Vec<usize> = (0..=dim).filter(|&v| v != f).collect();
    let base = vertex(verts[0]);
    let tangents = verts[1..]
        .iter()
        .map(|&v| {
            let pv = vertex(v);
            [pv[0] - base[0], pv[1] - base[1], pv[2] - base[2]]
        })
        .collect();
    (base, tangents)
}

/// Quadrature rule on the unit simplex of dimension 1, 2 or 3.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Highest supported exactness per dimension (index = dimension).
pub const MAX_EXACTNESS: [usize; 4] = [0, 41, 21, 15];

/// Conical-product (collapsed Gauss–Jacobi) rule exact for total degree
/// `exactness` on the reference simplex. All weights are positive.
pub fn quadrature(dim: usize, exactness: usize) -> Result<QuadratureRule> {
    if !(1..=3).contains(&dim) || exactness > MAX_EXACTNESS[dim] {
        return Err(FemError::UnsupportedQuadrature {
            dim,
            exactness,
            max: if (1..=3).contains(&dim) { MAX_EXACTNESS[dim] } else { 0 },
        });
    }
    // Collapsed coordinates raise the degree in the Legendre direction only
    // through the other variables, so m points per direction suffice when
    // 2m - 1 >= exactness.
    let m = exactness / 2 + 1;
    let (ga, wa) = gauss_jacobi_unit(m, 0);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match dim {
        1 => {
            for i in 0..m {
                points.push([ga[i], 0.0, 0.0]);
                weights.push(wa[i]);
            }
        }
        2 => {
            let (gb, wb) = gauss_jacobi_unit(m, 1);
            for j in 0..m {
                for i in 0..m {
                    points.push([ga[i] * (1.0 - gb[j]), gb[j], 0.0]);
                    weights.push(wa[i] * wb[j]);
                }
            }
        }
        _ => {
            let (gb, wb) = gauss_jacobi_unit(m, 1);
            let (gc, wc) = gauss_jacobi_unit(m, 2);
            for l in 0..m {
                for j in 0..m {
                    for i in 0..m {
                        let c = gc[l];
                        let b = gb[j] * (1.0 - c);
                        let a = ga[i] * (1.0 - gb[j]) * (1.0 - c);
                        points.push([a, b, c]);
                        weights.push(wa[i] * wb[j] * wc[l]);
                    }
                }
            }
        }
    }
    Ok(QuadratureRule {
        dim,
        points,
        weights,
        exactness,
    })
}

/// Gauss–Legendre rule with `m` points on [0, 1].
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_jacobi_unit(m, 0)
}

/// Gauss–Jacobi nodes/weights on [0, 1] for the weight (1 - s)^alpha, via
/// the Golub–Welsch eigenvalue method.
fn gauss_jacobi_unit(m: usize, alpha: u32) -> (Vec<f64>, Vec<f64>) {
    let a = alpha as f64;
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for n in 0..m {
        let nf = n as f64;
        let diag = if n == 0 {
            -a / (a + 2.0)
        } else {
            -a * a / ((2.0 * nf + a) * (2.0 * nf + a + 2.0))
        };
        jac[(n, n)] = diag;
        if n + 1 < m {
            let k = nf + 1.0;
            let s = 2.0 * k + a;
            let b = 4.0 * k * (k + a) * k * (k + a) / (s * s * (s + 1.0) * (s - 1.0));
            jac[(n, n + 1)] = b.sqrt();
            jac[(n + 1, n)] = b.sqrt();
        }
    }
    let mu0 = 2f64.powf(a + 1.0) / (a + 1.0);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    let scale = 2f64.powf(-a - 1.0);
    let nodes = pairs.iter().map(|p| 0.5 * (1.0 + p.0)).collect();
    let weights = pairs.iter().map(|p| p.1 * scale).collect();
    (nodes, weights)
}

/// Shape values and reference gradients tabulated at the points of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub n_local: usize,
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 3]>,
}

impl Tabulation {
    pub fn new(elem: &ReferenceElement, points: Vec<Point>, weights: Vec<f64>) -> Self {
        let nl = elem.n_local;
        let mut values = vec![0.0; points.len() * nl];
        let mut grads = vec![[0.0; 3]; points.len() * nl];
        for (q, p) in points.iter().enumerate() {
            elem.eval(p, &mut values[q * nl..(q + 1) * nl], &mut grads[q * nl..(q + 1) * nl]);
        }
        Self {
            n_local: nl,
            points,
            weights,
            values,
            grads,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn values_at(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_local..(q + 1) * self.n_local]
    }

    #[inline]
    pub fn grads_at(&self, q: usize) -> &[[f64; 3]] {
        &self.grads[q * self.n_local..(q + 1) * self.n_local]
    }
}
