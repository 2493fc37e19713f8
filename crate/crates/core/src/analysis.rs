//! Error norms, time aggregation, convergence slopes, matrix transport
//! identities and defect dual norms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_load, assemble_mass, assemble_mass_stiffness, assemble_stiffness, extract_blocks, for_each_quad_point,
    SparseSymMatrix,
};
use crate::error::{FemError, Result};
use crate::evolution::DiffusionData;
use crate::geometry::{self, Mat3};
use crate::linsolve::SpdSolver;
use crate::mesh::{MeshTopology, NodalVector};
use crate::ref_elem::gauss_legendre_unit;
use crate::Point;

/// `(zᵀ K z)^{1/2}`, summed in squares over the components of `z`.
pub fn matrix_norm(z: &NodalVector, k: &SparseSymMatrix) -> Result<f64> {
    let n = k.n();
    z.check_len(z.arity, n)?;
    let mut total = 0.0;
    let mut zz = 0.0;
    for c in 0..z.arity {
        let zc = z.component(c);
        total += k.quadratic_form(zc);
        zz += zc.iter().map(|v| v * v).sum::<f64>();
    }
    if total < 0.0 {
        if total < -1e-12 * k.max_abs() * zz {
            return Err(FemError::NegativeQuadraticForm { value: total });
        }
        return Ok(0.0);
    }
    Ok(total.sqrt())
}

const FD_STEP: f64 = 1e-6;

/// Analytic vector field `(x, t) -> value`.
pub type VectorFn = dyn Fn(&Point, f64) -> Point;

/// `(‖u_h - u‖_{L2}, ‖∇u_h - ∇u‖_{L2})` by quadrature on the discrete
/// domain. Without an analytic gradient, central differences are used.
pub fn error_vs_exact(
    topo: &MeshTopology,
    x: &NodalVector,
    coeffs: &NodalVector,
    exact: &dyn Fn(&Point, f64) -> f64,
    gradient: Option<&VectorFn>,
    t: f64,
) -> Result<(f64, f64)> {
    coeffs.check_len(1, topo.n_nodes)?;
    let dim = topo.dim;
    let (mut l2, mut h1) = (0.0, 0.0);
    for_each_quad_point(topo, x, |qp| {
        let mut uh = 0.0;
        let mut guh = [0.0; 3];
        for (a, &node) in qp.nodes.iter().enumerate() {
            let c = coeffs.data[node];
            uh += c * qp.values[a];
            for d in 0..dim {
                guh[d] += c * qp.grads[a][d];
            }
        }
        let ue = exact(&qp.point, t);
        if !ue.is_finite() {
            return Err(FemError::NonFinite { node: qp.element, t });
        }
        let ge = match gradient {
            Some(g) => g(&qp.point, t),
            None => {
                let mut g = [0.0; 3];
                for (d, gd) in g.iter_mut().enumerate().take(dim) {
                    let (mut p, mut m) = (qp.point, qp.point);
                    p[d] += FD_STEP;
                    m[d] -= FD_STEP;
                    *gd = (exact(&p, t) - exact(&m, t)) / (2.0 * FD_STEP);
                }
                g
            }
        };
        l2 += qp.jxw * (uh - ue).powi(2);
        h1 += qp.jxw * (0..dim).map(|d| (guh[d] - ge[d]).powi(2)).sum::<f64>();
        Ok(())
    })?;
    Ok((l2.sqrt(), h1.sqrt()))
}

/// Time-aggregated error functionals of a series `e_0..e_M` on a uniform
/// grid; `e_0` belongs to the initial time and is excluded from the
/// `L2`-in-time sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAggregate {
    pub linf_l2: f64,
    pub linf_h1: f64,
    pub l2_h1: f64,
}

pub fn aggregate_time_errors(per_step: &[(f64, f64)], tau: f64) -> TimeAggregate {
    let linf_l2 = per_step.iter().fold(0.0f64, |m, e| m.max(e.0));
    let linf_h1 = per_step.iter().fold(0.0f64, |m, e| m.max(e.1));
    let sum: f64 = per_step.iter().skip(1).map(|e| e.1 * e.1).sum();
    TimeAggregate {
        linf_l2,
        linf_h1,
        l2_h1: (tau * sum).sqrt(),
    }
}

/// Pairwise and least-squares convergence slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eoc {
    pub pairwise: Vec<f64>,
    pub least_squares: f64,
    /// Root mean square residual of the log-log fit.
    pub fit_residual: f64,
}

pub fn eoc(rows: &[(f64, f64)]) -> Result<Eoc> {
    if rows.len() < 2 {
        return Err(FemError::Invalid("need ≥ 2 rows".into()));
    }
    if let Some(&(h, e)) = rows.iter().find(|(h, e)| !(*h > 0.0) || !(*e > 0.0)) {
        return Err(FemError::Invalid(format!(
            "slopes need positive h and error, got h={h}, err={e}"
        )));
    }
    let pairwise = rows
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    let lx: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let n = rows.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(FemError::Invalid("all mesh sizes are equal".into()));
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    Ok(Eoc {
        pairwise,
        least_squares: slope,
        fit_residual: (rss / n).sqrt(),
    })
}

/// Column names of the error table, in CSV order after `h,tau`.
pub const ERROR_COLUMNS: [&str; 6] = [
    "err_x_LinfL2",
    "err_x_LinfH1",
    "err_v_LinfL2",
    "err_v_LinfH1",
    "err_u_LinfL2",
    "err_u_L2H1",
];

pub const CSV_HEADER: &str = "h,tau,err_x_LinfL2,err_x_LinfH1,err_v_LinfL2,err_v_LinfH1,err_u_LinfL2,err_u_L2H1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub h: f64,
    pub tau: f64,
    /// Errors in [`ERROR_COLUMNS`] order; `None` when not recorded.
    pub errors: [Option<f64>; 6],
}

/// Per-refinement error records, finest last.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

impl ErrorTable {
    /// Checks strictly decreasing `h` and nonnegative errors.
    pub fn validate(&self) -> Result<()> {
        for w in self.rows.windows(2) {
            if !(w[1].h < w[0].h) {
                return Err(FemError::Invalid(format!(
                    "mesh sizes not strictly decreasing: {} then {}",
                    w[0].h, w[1].h
                )));
            }
        }
        for r in &self.rows {
            if r.errors.iter().flatten().any(|e| !(*e >= 0.0)) {
                return Err(FemError::Invalid(format!("negative or NaN error at h={}", r.h)));
            }
        }
        Ok(())
    }

    pub fn column(&self, c: usize) -> Vec<(f64, f64)> {
        self.rows.iter().filter_map(|r| r.errors[c].map(|e| (r.h, e))).collect()
    }

    /// Slopes for every column with at least two positive entries.
    pub fn slopes(&self) -> Vec<(&'static str, Eoc)> {
        ERROR_COLUMNS
            .iter()
            .enumerate()
            .filter_map(|(c, name)| eoc(&self.column(c)).ok().map(|e| (*name, e)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let mut cells = vec![fmt_value(r.h), fmt_value(r.tau)];
            cells.extend(r.errors.iter().map(|e| e.map(fmt_value).unwrap_or_default()));
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| FemError::Invalid("empty CSV".into()))?;
        if header.trim() != CSV_HEADER {
            return Err(FemError::Invalid(format!("unexpected CSV header: {header}")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != 8 {
                return Err(FemError::Invalid(format!(
                    "row {}: expected 8 fields, found {}",
                    i + 1,
                    cells.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| FemError::Invalid(format!("row {}: bad number '{s}'", i + 1)))
            };
            let mut errors = [None; 6];
            for (c, cell) in cells[2..].iter().enumerate() {
                if !cell.is_empty() {
                    errors[c] = Some(parse(cell)?);
                }
            }
            rows.push(ErrorRow {
                h: parse(cells[0])?,
                tau: parse(cells[1])?,
                errors,
            });
        }
        Ok(Self { rows })
    }
}

/// Result of one transport-identity check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / max(|lhs|, |rhs|)`, zero when both vanish.
    pub discrepancy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Mass,
    Stiffness,
}

const THETA_POINTS: usize = 10;

/// Gradient of the finite element vector field `e` at one quadrature point:
/// `G[r][c] = ∂e_r/∂x_c`.
fn field_gradient(dim: usize, e: &NodalVector, nodes: &[usize], grads: &[[f64; 3]]) -> Mat3 {
    let mut g = [[0.0; 3]; 3];
    for (a, &node) in nodes.iter().enumerate() {
        let ev = e.node(node);
        for r in 0..dim {
            for c in 0..dim {
                g[r][c] += ev[r] * grads[a][c];
            }
        }
    }
    g
}

fn divergence(dim: usize, g: &Mat3) -> f64 {
    (0..dim).map(|d| g[d][d]).sum()
}

/// `D e = (∇·e) I - (∇e + ∇eᵀ)`.
fn deformation_tensor(dim: usize, g: &Mat3) -> Mat3 {
    let div = divergence(dim, g);
    let mut d = [[0.0; 3]; 3];
    for r in 0..dim {
        for c in 0..dim {
            d[r][c] = -(g[r][c] + g[c][r]);
        }
        d[r][r] += div;
    }
    d
}

/// Integral of the transport integrand on the mesh `x`.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for t in terms {
        let next = sum + t;
        comp += if sum.abs() >= t.abs() {
            (sum - next) + t
        } else {
            (t - next) + sum
        };
        sum = next;
    }
    sum + comp
}

/// `det(J + E) - det(J)` expanded over the nonempty sets of columns taken
/// from `E`, free of the cancellation in the direct difference.
fn det_increment(dim: usize, j: &Mat3, e: &Mat3) -> f64 {
    let mut total = 0.0;
    for mask in 1..(1usize << dim) {
        let mut m = *j;
        for c in 0..dim {
            if mask & (1 << c) != 0 {
                for r in 0..dim {
                    m[r][c] = e[r][c];
                }
            }
        }
        total += geometry::det(dim, &m);
    }
    total
}

/// Per-element contributions to `wᵀ (M(y + e) - M(y)) z`.
fn mass_difference_by_element(
    topo: &MeshTopology,
    y: &NodalVector,
    e: &NodalVector,
    w: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    let dim = topo.dim;
    let mut out = vec![0.0; topo.n_elements()];
    for_each_quad_point(topo, y, |qp| {
        let g = field_gradient(dim, e, qp.nodes, qp.grads);
        let mut de = [[0.0; 3]; 3];
        for r in 0..dim {
            for k in 0..dim {
                de[r][k] = (0..dim).map(|c| g[r][c] * qp.jacobian[c][k]).sum();
            }
        }
        let weight = qp.jxw / qp.det.abs();
        let increment = qp.det.signum() * det_increment(dim, &qp.jacobian, &de);
        let (mut wh, mut zh) = (0.0, 0.0);
        for (a, &node) in qp.nodes.iter().enumerate() {
            wh += w[node] * qp.values[a];
            zh += z[node] * qp.values[a];
        }
        out[qp.element] += weight * increment * wh * zh;
        Ok(())
    })?;
    Ok(out)
}

/// Per-element contributions to `wᵀ M(x) z` or `wᵀ A(x) z`.
fn bilinear_by_element(
    topo: &MeshTopology,
    x: &NodalVector,
    w: &[f64],
    z: &[f64],
    kind: MatrixKind,
) -> Result<Vec<f64>> {
    let dim = topo.dim;
    let mut out = vec![0.0; topo.n_elements()];
    for_each_quad_point(topo, x, |qp| {
        let v = match kind {
            MatrixKind::Mass => {
                let (mut wh, mut zh) = (0.0, 0.0);
                for (a, &node) in qp.nodes.iter().enumerate() {
                    wh += w[node] * qp.values[a];
                    zh += z[node] * qp.values[a];
                }
                wh * zh
            }
            MatrixKind::Stiffness => {
                let (mut gw, mut gz) = ([0.0; 3], [0.0; 3]);
                for (a, &node) in qp.nodes.iter().enumerate() {
                    for d in 0..dim {
                        gw[d] += w[node] * qp.grads[a][d];
                        gz[d] += z[node] * qp.grads[a][d];
                    }
                }
                (0..dim).map(|d| gw[d] * gz[d]).sum()
            }
        };
        out[qp.element] += qp.jxw * v;
        Ok(())
    })?;
    Ok(out)
}

fn transport_integral(
    topo: &MeshTopology,
    x: &NodalVector,
    e: &NodalVector,
    w: &[f64],
    z: &[f64],
    kind: MatrixKind,
) -> Result<f64> {
    let dim = topo.dim;
    let mut terms = Vec::new();
    for_each_quad_point(topo, x, |qp| {
        let g = field_gradient(dim, e, qp.nodes, qp.grads);
        match kind {
            MatrixKind::Mass => {
                let (mut wh, mut zh) = (0.0, 0.0);
                for (a, &node) in qp.nodes.iter().enumerate() {
                    wh += w[node] * qp.values[a];
                    zh += z[node] * qp.values[a];
                }
                terms.push(qp.jxw * wh * divergence(dim, &g) * zh);
            }
            MatrixKind::Stiffness => {
                let (mut gw, mut gz) = ([0.0; 3], [0.0; 3]);
                for (a, &node) in qp.nodes.iter().enumerate() {
                    for d in 0..dim {
                        gw[d] += w[node] * qp.grads[a][d];
                        gz[d] += z[node] * qp.grads[a][d];
                    }
                }
                let dt = deformation_tensor(dim, &g);
                let mut s = 0.0;
                for r in 0..dim {
                    for c in 0..dim {
                        s += gw[r] * dt[r][c] * gz[c];
                    }
                }
                terms.push(qp.jxw * s);
            }
        }
        Ok(())
    })?;
    Ok(compensated_sum(terms))
}

/// Compares `wᵀ(K(y+e) - K(y))z` with the θ-integral of the transport
/// integrand over the intermediate meshes `y + θe`.
pub fn check_matrix_difference_identity(
    topo: &MeshTopology,
    y: &NodalVector,
    e: &NodalVector,
    w: &[f64],
    z: &[f64],
    kind: MatrixKind,
) -> Result<IdentityCheck> {
    y.check_len(topo.dim, topo.n_nodes)?;
    e.check_len(topo.dim, topo.n_nodes)?;
    for v in [w, z] {
        if v.len() != topo.n_nodes {
            return Err(FemError::DimensionMismatch {
                expected: topo.n_nodes,
                got: v.len(),
            });
        }
    }
    let lhs = match kind {
        MatrixKind::Mass => compensated_sum(mass_difference_by_element(topo, y, e, w, z)?),
        MatrixKind::Stiffness => {
            let s1 = bilinear_by_element(topo, &y.axpy(1.0, e), w, z, kind)?;
            let s0 = bilinear_by_element(topo, y, w, z, kind)?;
            compensated_sum(s1.iter().zip(&s0).map(|(a, b)| a - b))
        }
    };
    let (nodes, weights) = gauss_legendre_unit(THETA_POINTS);
    let mut terms = Vec::with_capacity(nodes.len());
    for (th, wt) in nodes.iter().zip(&weights) {
        terms.push(wt * transport_integral(topo, &y.axpy(*th, e), e, w, z, kind)?);
    }
    let rhs = compensated_sum(terms);
    let scale = lhs.abs().max(rhs.abs());
    let discrepancy = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
    Ok(IdentityCheck { lhs, rhs, discrepancy })
}

/// `max_θ ‖∇·e^θ‖_∞` and `max_θ ‖D e^θ‖_∞` sampled at the θ-quadrature
/// nodes, the endpoints and every volume quadrature point.
pub fn measure_growth_constants(topo: &MeshTopology, y: &NodalVector, e: &NodalVector) -> Result<(f64, f64)> {
    let dim = topo.dim;
    let (mut mu, mut eta) = (0.0f64, 0.0f64);
    let (nodes, _) = gauss_legendre_unit(THETA_POINTS);
    let thetas: Vec<f64> = [0.0].iter().chain(nodes.iter()).chain([1.0].iter()).copied().collect();
    for th in thetas {
        for_each_quad_point(topo, &y.axpy(th, e), |qp| {
            let g = field_gradient(dim, e, qp.nodes, qp.grads);
            mu = mu.max(divergence(dim, &g).abs());
            eta = eta.max(geometry::sym_spectral_radius(dim, &deformation_tensor(dim, &g)));
            Ok(())
        })?;
    }
    Ok((mu, eta))
}

/// Outcome of the norm-growth bounds at one θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub theta: f64,
    pub mass_ratio: f64,
    pub mass_bound: f64,
    pub stiffness_ratio: f64,
    pub stiffness_bound: f64,
}

impl GrowthCheck {
    pub fn holds(&self) -> bool {
        self.mass_ratio <= self.mass_bound * (1.0 + 1e-12)
            && self.stiffness_ratio <= self.stiffness_bound * (1.0 + 1e-12)
    }
}

/// Ratios `‖w‖_{K(y+θe)} / ‖w‖_{K(y)}` against `e^{μ/2}` and `e^{η/2}`.
pub fn check_growth_bounds(
    topo: &MeshTopology,
    y: &NodalVector,
    e: &NodalVector,
    w: &[f64],
    thetas: &[f64],
) -> Result<Vec<GrowthCheck>> {
    let (mu, eta) = measure_growth_constants(topo, y, e)?;
    let wv = NodalVector::scalar(w.to_vec());
    let (m0, a0) = assemble_mass_stiffness(topo, y)?;
    let (nm0, na0) = (matrix_norm(&wv, &m0)?, matrix_norm(&wv, &a0)?);
    thetas
        .iter()
        .map(|&th| {
            let (m, a) = assemble_mass_stiffness(topo, &y.axpy(th, e))?;
            Ok(GrowthCheck {
                theta: th,
                mass_ratio: matrix_norm(&wv, &m)? / nm0,
                mass_bound: (mu / 2.0).exp(),
                stiffness_ratio: matrix_norm(&wv, &a)? / na0,
                stiffness_bound: (eta / 2.0).exp(),
            })
        })
        .collect()
}

/// `(rᵀ S⁻¹ r)^{1/2}`, the dual norm of a residual `r = M d`.
pub fn dual_norm_of_residual(solver: &SpdSolver, r: &[f64]) -> Result<f64> {
    let z = solver.solve(r)?;
    let v: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    Ok(v.max(0.0).sqrt())
}

/// Dual norm of the velocity defect `A22 v^{Ω,*} + A21 v^{Γ,*}` with respect
/// to `A22`, summed in squares over components.
pub fn defect_velocity(topo: &MeshTopology, x_star: &NodalVector, v_star: &NodalVector) -> Result<f64> {
    v_star.check_len(topo.dim, topo.n_nodes)?;
    let a = assemble_stiffness(topo, x_star)?;
    let blocks = extract_blocks(&a, topo.n_boundary)?;
    let solver = SpdSolver::factorize(&blocks.a22, "A22")?;
    let nb = topo.n_boundary;
    let mut total = 0.0;
    for c in 0..topo.dim {
        let vc = v_star.component(c);
        let mut r = blocks.a22.mul_vec(&vc[nb..]);
        let r2 = blocks.a21.mul_vec(&vc[..nb]);
        r.iter_mut().zip(&r2).for_each(|(a, b)| *a += b);
        total += dual_norm_of_residual(&solver, &r)?.powi(2);
    }
    Ok(total.sqrt())
}

/// Diffusion defect value together with its step-size robustness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionDefect {
    pub value: f64,
    pub value_coarse_eps: f64,
    pub robust: bool,
}

const ROBUSTNESS_TOL: f64 = 0.05;

/// Dual norm with respect to `M + A` of
/// `d/dt(M u*) + β A u* - b`, the time derivative by central differences.
pub fn defect_diffusion(
    topo: &MeshTopology,
    x_at: &dyn Fn(f64) -> NodalVector,
    u_at: &dyn Fn(f64) -> NodalVector,
    data: &DiffusionData,
    t: f64,
    eps: f64,
) -> Result<DiffusionDefect> {
    let x = x_at(t);
    let u = u_at(t);
    let (m, a) = assemble_mass_stiffness(topo, &x)?;
    let (f, g) = (data.f.clone(), data.g.clone());
    let b = assemble_load(topo, &x, |p, s| f(p, s), |p, s| g(p, s), t, data.beta)?;
    let au = a.mul_vec(&u.data);
    let k = m.linear_combination(1.0, &a, 1.0);
    let solver = SpdSolver::factorize(&k.csr, "M + A")?;
    let with_eps = |eps: f64| -> Result<f64> {
        let mp = assemble_mass(topo, &x_at(t + eps))?.mul_vec(&u_at(t + eps).data);
        let mm = assemble_mass(topo, &x_at(t - eps))?.mul_vec(&u_at(t - eps).data);
        let r: Vec<f64> = (0..topo.n_nodes)
            .map(|i| (mp[i] - mm[i]) / (2.0 * eps) + data.beta * au[i] - b.data[i])
            .collect();
        dual_norm_of_residual(&solver, &r)
    };
    let value = with_eps(eps)?;
    let value_coarse_eps = with_eps(10.0 * eps)?;
    let robust = (value - value_coarse_eps).abs() <= ROBUSTNESS_TOL * value.abs().max(1e-300);
    if !robust {
        log::warn!("diffusion defect sensitive to the difference step: {value:e} vs {value_coarse_eps:e}");
    }
    Ok(DiffusionDefect {
        value,
        value_coarse_eps,
        robust,
    })
}

/// One row of a defect study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectRow {
    pub h: f64,
    pub t: f64,
    pub velocity: Option<f64>,
    pub diffusion: Option<f64>,
}

/// Defect dual norms across refinements with fitted decay exponents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectReport {
    pub rows: Vec<DefectRow>,
    pub velocity_fit: Option<Eoc>,
    pub diffusion_fit: Option<Eoc>,
}

impl DefectReport {
    pub fn new(rows: Vec<DefectRow>) -> Self {
        let fit = |sel: fn(&DefectRow) -> Option<f64>| {
            let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| sel(r).map(|v| (r.h, v))).collect();
            eoc(&pts).ok()
        };
        Self {
            velocity_fit: fit(|r| r.velocity),
            diffusion_fit: fit(|r| r.diffusion),
            rows,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
