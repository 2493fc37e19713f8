//! Mass, stiffness and load assembly on the current geometry, plus the
//! boundary/interior block split.

use std::io::Write;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{FemError, Result};
use crate::geometry::{self, Mat3};
use crate::mesh::{gather_coords, MeshTopology, NodalVector};
use crate::Point;

/// Row-compressed sparsity pattern with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrPattern {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl CsrPattern {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Storage position of entry `(i, j)`, if present.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }
}

/// General sparse matrix sharing its pattern.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub pattern: Arc<CsrPattern>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Iterates `(column, value)` over row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
        self.pattern.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows()];
        self.mul_vec_into(y, &mut out);
        out
    }

    pub fn mul_vec_into(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.ncols());
        let p = &self.pattern;
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.values[k] * y[p.col_idx[k]];
            }
            *o = s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols())).map(|i| self.get(i, i)).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Coordinate listing, one `row col value` triple per line.
    pub fn write_coo<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {} {} {}", self.nrows(), self.ncols(), self.pattern.nnz())?;
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                writeln!(out, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }

    /// Rows `r0..r1`, columns `c0..c1`.
    pub fn submatrix(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> CsrMatrix {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in r0..r1 {
            for (j, v) in self.row(i) {
                if j >= c0 && j < c1 {
                    col_idx.push(j - c0);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            pattern: Arc::new(CsrPattern {
                nrows: r1 - r0,
                ncols: c1 - c0,
                row_ptr,
                col_idx,
            }),
            values,
        }
    }
}

/// Symmetric matrix on the node set of a topology.
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    pub csr: CsrMatrix,
}

impl SparseSymMatrix {
    pub fn n(&self) -> usize {
        self.csr.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    pub fn mul_vec(&self, y: &[f64]) -> Vec<f64> {
        self.csr.mul_vec(y)
    }

    pub fn quadratic_form(&self, z: &[f64]) -> f64 {
        let kz = self.csr.mul_vec(z);
        kz.iter().zip(z).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.csr.max_abs()
    }

    /// `max |K_ij - K_ji| / max |K|`.
    pub fn symmetry_error(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.n() {
            for (j, v) in self.csr.row(i) {
                if j > i {
                    worst = worst.max((v - self.get(j, i)).abs());
                }
            }
        }
        worst / scale
    }

    /// `a * self + b * other`; both must share the topology pattern.
    pub fn linear_combination(&self, a: f64, other: &SparseSymMatrix, b: f64) -> SparseSymMatrix {
        assert!(Arc::ptr_eq(&self.csr.pattern, &other.csr.pattern) || self.csr.pattern == other.csr.pattern);
        SparseSymMatrix {
            csr: CsrMatrix {
                pattern: self.csr.pattern.clone(),
                values: self
                    .csr
                    .values
                    .iter()
                    .zip(&other.csr.values)
                    .map(|(x, y)| a * x + b * y)
                    .collect(),
            },
        }
    }

    pub fn write_coo<W: Write>(&self, out: W) -> Result<()> {
        self.csr.write_coo(out)
    }
}

/// Global pattern of a topology plus the scatter map from element-local
/// `(a, b)` entries to storage positions.
#[derive(Debug)]
pub struct SparsityPattern {
    pub csr: Arc<CsrPattern>,
    scatter: Vec<usize>,
    n_local: usize,
}

impl SparsityPattern {
    pub(crate) fn from_topology(topo: &MeshTopology) -> Self {
        let n = topo.n_nodes;
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for nodes in topo.elements() {
            for &a in nodes {
                rows[a].extend_from_slice(nodes);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let csr = CsrPattern {
            nrows: n,
            ncols: n,
            row_ptr,
            col_idx,
        };
        let nl = topo.n_local();
        let mut scatter = Vec::with_capacity(topo.n_elements() * nl * nl);
        for nodes in topo.elements() {
            for &a in nodes {
                for &b in nodes {
                    scatter.push(csr.find(a, b).expect("pattern covers element"));
                }
            }
        }
        Self {
            csr: Arc::new(csr),
            scatter,
            n_local: nl,
        }
    }

    fn add_local(&self, values: &mut [f64], e: usize, local: &[f64]) {
        let nl2 = self.n_local * self.n_local;
        for (k, &pos) in self.scatter[e * nl2..(e + 1) * nl2].iter().enumerate() {
            values[pos] += local[k];
        }
    }
}

/// Per-quadrature-point data handed to element kernels.
pub struct QuadPoint<'a> {
    pub element: usize,
    pub nodes: &'a [usize],
    pub point: Point,
    pub jacobian: Mat3,
    pub det: f64,
    /// Quadrature weight times `det`.
    pub jxw: f64,
    pub values: &'a [f64],
    /// Physical gradients of the local basis functions.
    pub grads: &'a [[f64; 3]],
}

/// Runs `kernel` on every volume quadrature point of every element, in
/// ascending element order.
pub fn for_each_quad_point<F>(topo: &MeshTopology, x: &NodalVector, mut kernel: F) -> Result<()>
where
    F: FnMut(&QuadPoint) -> Result<()>,
{
    x.check_len(topo.dim, topo.n_nodes)?;
    let dim = topo.dim;
    let tables = topo.tables();
    let tab = &tables.volume;
    let nl = topo.n_local();
    let mut coords = Vec::with_capacity(nl);
    let mut grads = vec![[0.0; 3]; nl];
    for e in 0..topo.n_elements() {
        gather_coords(topo, x, e, &mut coords);
        for q in 0..tab.len() {
            let rg = tab.grads_at(q);
            let jac = geometry::jacobian(dim, &coords, rg);
            let det = geometry::det(dim, &jac);
            if det <= 0.0 || !det.is_finite() {
                return Err(FemError::DegenerateElement { element: e, det });
            }
            let inv = geometry::inverse(dim, &jac, det);
            for (g, r) in grads.iter_mut().zip(rg) {
                *g = geometry::push_gradient(dim, &inv, r);
            }
            let vals = tab.values_at(q);
            let mut point = [0.0; 3];
            for (xj, v) in coords.iter().zip(vals) {
                for c in 0..dim {
                    point[c] += xj[c] * v;
                }
            }
            kernel(&QuadPoint {
                element: e,
                nodes: topo.element(e),
                point,
                jacobian: jac,
                det,
                jxw: tab.weights[q] * det,
                values: vals,
                grads: &grads,
            })?;
        }
    }
    Ok(())
}

/// Assembles a symmetric matrix whose element contribution at one quadrature
/// point is `local[a][b] += kernel(qp, a, b)`; only `a <= b` is evaluated.
pub fn assemble_symmetric<F>(topo: &MeshTopology, x: &NodalVector, kernel: F) -> Result<SparseSymMatrix>
where
    F: Fn(&QuadPoint, usize, usize) -> f64,
{
    let pattern = topo.pattern();
    let nl = topo.n_local();
    let mut values = vec![0.0; pattern.csr.nnz()];
    let mut local = vec![0.0; nl * nl];
    let mut current = usize::MAX;
    let flush = |e: usize, local: &mut [f64], values: &mut [f64]| {
        for a in 0..nl {
            for b in 0..a {
                local[a * nl + b] = local[b * nl + a];
            }
        }
        pattern.add_local(values, e, local);
        local.iter_mut().for_each(|v| *v = 0.0);
    };
    for_each_quad_point(topo, x, |qp| {
        if qp.element != current {
            if current != usize::MAX {
                flush(current, &mut local, &mut values);
            }
            current = qp.element;
        }
        for a in 0..nl {
            for b in a..nl {
                local[a * nl + b] += kernel(qp, a, b);
            }
        }
        Ok(())
    })?;
    if current != usize::MAX {
        flush(current, &mut local, &mut values);
    }
    let m = SparseSymMatrix {
        csr: CsrMatrix {
            pattern: pattern.csr.clone(),
            values,
        },
    };
    record_symmetry(&m);
    Ok(m)
}

/// `M_jk = ∫ φ_j φ_k` over the discrete domain.
pub fn assemble_mass(topo: &MeshTopology, x: &NodalVector) -> Result<SparseSymMatrix> {
    assemble_symmetric(topo, x, |qp, a, b| qp.jxw * qp.values[a] * qp.values[b])
}

/// `A_jk = ∫ ∇φ_j · ∇φ_k` over the discrete domain.
pub fn assemble_stiffness(topo: &MeshTopology, x: &NodalVector) -> Result<SparseSymMatrix> {
    let a = assemble_symmetric(topo, x, |qp, a, b| qp.jxw * geometry::dot(&qp.grads[a], &qp.grads[b]))?;
    record_kernel(&a);
    Ok(a)
}

/// Mass and stiffness from a single geometry pass.
pub fn assemble_mass_stiffness(topo: &MeshTopology, x: &NodalVector) -> Result<(SparseSymMatrix, SparseSymMatrix)> {
    let pattern = topo.pattern();
    let nl = topo.n_local();
    let nnz = pattern.csr.nnz();
    let (mut mv, mut av) = (vec![0.0; nnz], vec![0.0; nnz]);
    let (mut ml, mut al) = (vec![0.0; nl * nl], vec![0.0; nl * nl]);
    let mut current = usize::MAX;
    let flush = |e: usize, local: &mut [f64], values: &mut [f64]| {
        for a in 0..nl {
            for b in 0..a {
                local[a * nl + b] = local[b * nl + a];
            }
        }
        pattern.add_local(values, e, local);
        local.iter_mut().for_each(|v| *v = 0.0);
    };
    for_each_quad_point(topo, x, |qp| {
        if qp.element != current {
            if current != usize::MAX {
                flush(current, &mut ml, &mut mv);
                flush(current, &mut al, &mut av);
            }
            current = qp.element;
        }
        for a in 0..nl {
            let wa = qp.jxw * qp.values[a];
            let ga = qp.grads[a];
            for b in a..nl {
                ml[a * nl + b] += wa * qp.values[b];
                al[a * nl + b] += qp.jxw * geometry::dot(&ga, &qp.grads[b]);
            }
        }
        Ok(())
    })?;
    if current != usize::MAX {
        flush(current, &mut ml, &mut mv);
        flush(current, &mut al, &mut av);
    }
    let wrap = |values| SparseSymMatrix {
        csr: CsrMatrix {
            pattern: pattern.csr.clone(),
            values,
        },
    };
    let (m, a) = (wrap(mv), wrap(av));
    record_symmetry(&m);
    record_symmetry(&a);
    record_kernel(&a);
    Ok((m, a))
}

/// Runs `kernel(point, surface_jxw, values)` on every surface quadrature
/// point of every boundary face.
pub fn for_each_boundary_point<F>(topo: &MeshTopology, x: &NodalVector, mut kernel: F) -> Result<()>
where
    F: FnMut(usize, &Point, f64, &[f64]) -> Result<()>,
{
    x.check_len(topo.dim, topo.n_nodes)?;
    let dim = topo.dim;
    let tables = topo.tables();
    let mut coords = Vec::new();
    for &(e, f) in &topo.boundary_faces {
        gather_coords(topo, x, e, &mut coords);
        let tab = &tables.facets[f];
        let tangents = &tables.facet_tangents[f];
        for q in 0..tab.len() {
            let jac = geometry::jacobian(dim, &coords, tab.grads_at(q));
            let mapped: Vec<Point> = tangents
                .iter()
                .map(|t| {
                    let mut out = [0.0; 3];
                    for r in 0..dim {
                        for c in 0..dim {
                            out[r] += jac[r][c] * t[c];
                        }
                    }
                    out
                })
                .collect();
            let ds = if dim == 2 {
                geometry::norm(&mapped[0])
            } else {
                geometry::norm(&geometry::cross(&mapped[0], &mapped[1]))
            };
            if ds <= 0.0 || !ds.is_finite() {
                return Err(FemError::DegenerateElement { element: e, det: ds });
            }
            let vals = tab.values_at(q);
            let mut point = [0.0; 3];
            for (xj, v) in coords.iter().zip(vals) {
                for c in 0..dim {
                    point[c] += xj[c] * v;
                }
            }
            kernel(e, &point, tab.weights[q] * ds, vals)?;
        }
    }
    Ok(())
}

/// Entry `k` is `∫ f(·, t) φ_k + β ∫_Γ g(·, t) φ_k`.
pub fn assemble_load<F, G>(
    topo: &MeshTopology,
    x: &NodalVector,
    f_eval: F,
    g_eval: G,
    t: f64,
    beta: f64,
) -> Result<NodalVector>
where
    F: Fn(&Point, f64) -> f64,
    G: Fn(&Point, f64) -> f64,
{
    let mut b = vec![0.0; topo.n_nodes];
    for_each_quad_point(topo, x, |qp| {
        let fv = f_eval(&qp.point, t);
        if !fv.is_finite() {
            return Err(FemError::NonFinite { node: qp.element, t });
        }
        for (a, &node) in qp.nodes.iter().enumerate() {
            b[node] += qp.jxw * fv * qp.values[a];
        }
        Ok(())
    })?;
    if beta != 0.0 {
        for_each_boundary_point(topo, x, |e, p, ds, vals| {
            let gv = g_eval(p, t);
            if !gv.is_finite() {
                return Err(FemError::NonFinite { node: e, t });
            }
            for (a, &node) in topo.element(e).iter().enumerate() {
                b[node] += beta * ds * gv * vals[a];
            }
            Ok(())
        })?;
    }
    Ok(NodalVector::scalar(b))
}

/// Measure of the discrete boundary.
pub fn boundary_measure(topo: &MeshTopology, x: &NodalVector) -> Result<f64> {
    let mut s = 0.0;
    for_each_boundary_point(topo, x, |_, _, ds, _| {
        s += ds;
        Ok(())
    })?;
    Ok(s)
}

/// The `(Γ, Ω)` split of a matrix at index `N_Γ`.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub split: usize,
    pub a11: CsrMatrix,
    pub a12: CsrMatrix,
    pub a21: CsrMatrix,
    pub a22: CsrMatrix,
}

impl BlockPartition {
    /// Dense reassembly `[[A11, A12], [A21, A22]]`.
    pub fn reassemble_dense(&self) -> Vec<Vec<f64>> {
        let n = self.split + self.a22.nrows();
        let mut d = vec![vec![0.0; n]; n];
        let s = self.split;
        for (blk, r0, c0) in [
            (&self.a11, 0, 0),
            (&self.a12, 0, s),
            (&self.a21, s, 0),
            (&self.a22, s, s),
        ] {
            for i in 0..blk.nrows() {
                for (j, v) in blk.row(i) {
                    d[r0 + i][c0 + j] = v;
                }
            }
        }
        d
    }
}

pub fn extract_blocks(k: &SparseSymMatrix, split: usize) -> Result<BlockPartition> {
    let n = k.n();
    if split == 0 || split >= n {
        return Err(FemError::InvalidSplit { split, n });
    }
    Ok(BlockPartition {
        split,
        a11: k.csr.submatrix(0, split, 0, split),
        a12: k.csr.submatrix(0, split, split, n),
        a21: k.csr.submatrix(split, n, 0, split),
        a22: k.csr.submatrix(split, n, split, n),
    })
}

static ASSEMBLED: AtomicUsize = AtomicUsize::new(0);
static WORST_SYMMETRY: AtomicU64 = AtomicU64::new(0);
static WORST_KERNEL: AtomicU64 = AtomicU64::new(0);

fn record_symmetry(m: &SparseSymMatrix) {
    ASSEMBLED.fetch_add(1, Ordering::Relaxed);
    WORST_SYMMETRY.fetch_max(m.symmetry_error().to_bits(), Ordering::Relaxed);
}

fn record_kernel(a: &SparseSymMatrix) {
    let ones = vec![1.0; a.n()];
    let r = a.mul_vec(&ones);
    let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = a.max_abs();
    let rel = if scale > 0.0 { worst / scale } else { 0.0 };
    WORST_KERNEL.fetch_max(rel.to_bits(), Ordering::Relaxed);
}

/// Process-wide record of structural checks on assembled matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyStats {
    pub matrices: usize,
    pub worst_symmetry: f64,
    pub worst_kernel: f64,
}

pub fn assembly_stats() -> AssemblyStats {
    AssemblyStats {
        matrices: ASSEMBLED.load(Ordering::Relaxed),
        worst_symmetry: f64::from_bits(WORST_SYMMETRY.load(Ordering::Relaxed)),
        worst_kernel: f64::from_bits(WORST_KERNEL.load(Ordering::Relaxed)),
    }
}
