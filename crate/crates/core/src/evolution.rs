//! Linearly implicit BDF time stepping of positions and of the diffusion
//! equation, plus nodewise RK4 reference trajectories.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::assembly::{assemble_load, assemble_mass, assemble_mass_stiffness};
use crate::error::{FemError, Result};
use crate::harmonic::{solve_harmonic_extension, trace_boundary_velocity, BoundaryVelocityField};
use crate::linsolve::SpdSolver;
use crate::mesh::{check_positive_jacobians, MeshTopology, NodalVector};
use crate::Point;

/// Scalar space-time evaluator `(x, t) -> value`.
pub type ScalarField = Arc<dyn Fn(&Point, f64) -> f64 + Send + Sync>;

/// Data of the diffusion equation `∂•u + u ∇·v - β Δu = f`, `β ∂_ν u = β g`.
#[derive(Clone)]
pub struct DiffusionData {
    pub f: ScalarField,
    pub g: ScalarField,
    pub beta: f64,
}

impl std::fmt::Debug for DiffusionData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionData").field("beta", &self.beta).finish()
    }
}

impl DiffusionData {
    pub fn homogeneous(beta: f64) -> Self {
        Self {
            f: Arc::new(|_, _| 0.0),
            g: Arc::new(|_, _| 0.0),
            beta,
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// BDF-`q` coefficients `δ_0..δ_q` and extrapolation weights `γ_0..γ_{q-1}`.
pub fn bdf_coefficients(q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(1..=4).contains(&q) {
        return Err(FemError::BdfOrder(q));
    }
    let mut delta = vec![0.0; q + 1];
    for l in 1..=q {
        for (j, d) in delta.iter_mut().enumerate().take(l + 1) {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            *d += sign * binomial(l, j) / l as f64;
        }
    }
    let gamma = (0..q)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * binomial(q, j + 1)
        })
        .collect();
    Ok((delta, gamma))
}

/// Past positions and cached products `M(x^{n-j}) u^{n-j}`, newest first.
#[derive(Debug, Clone)]
pub struct BdfHistory {
    pub q: usize,
    pub tau: f64,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Index of the step to be computed next.
    pub step: usize,
    positions: VecDeque<NodalVector>,
    solutions: VecDeque<NodalVector>,
    mass_u: VecDeque<Vec<f64>>,
}

impl BdfHistory {
    pub fn new(q: usize, tau: f64) -> Result<Self> {
        let (delta, gamma) = bdf_coefficients(q)?;
        if !(tau > 0.0) {
            return Err(FemError::Invalid(format!("time step must be positive, got {tau}")));
        }
        Ok(Self {
            q,
            tau,
            delta,
            gamma,
            step: 0,
            positions: VecDeque::new(),
            solutions: VecDeque::new(),
            mass_u: VecDeque::new(),
        })
    }

    /// Time of the step to be computed next.
    pub fn t_next(&self) -> f64 {
        self.step as f64 * self.tau
    }

    /// `x^{n-1-j}`.
    pub fn position(&self, j: usize) -> &NodalVector {
        &self.positions[j]
    }

    pub fn solution(&self, j: usize) -> Option<&NodalVector> {
        self.solutions.get(j)
    }

    pub fn is_ready(&self) -> bool {
        self.positions.len() == self.q
    }

    pub fn tracks_solution(&self) -> bool {
        !self.mass_u.is_empty()
    }

    /// Appends step `self.step` and advances the counter.
    pub fn push(&mut self, x: NodalVector, u: Option<(NodalVector, Vec<f64>)>) {
        self.positions.push_front(x);
        self.positions.truncate(self.q);
        if let Some((u, mu)) = u {
            self.solutions.push_front(u);
            self.mass_u.push_front(mu);
            self.solutions.truncate(self.q);
            self.mass_u.truncate(self.q);
        }
        self.step += 1;
    }

    /// Extrapolated positions `Σ γ_j x^{n-1-j}`.
    pub fn extrapolate(&self) -> NodalVector {
        let mut out = NodalVector::zeros(self.positions[0].arity, self.positions[0].n_nodes());
        for (g, x) in self.gamma.iter().zip(&self.positions) {
            out.data.iter_mut().zip(&x.data).for_each(|(o, v)| *o += g * v);
        }
        out
    }
}

/// Fills steps `0..q-1` with exact positions (and nodal values of `u`),
/// leaving the counter at `q`.
pub fn startup(
    history: &mut BdfHistory,
    topo: &MeshTopology,
    positions: &[NodalVector],
    solutions: Option<&[NodalVector]>,
) -> Result<()> {
    if positions.len() != history.q || solutions.is_some_and(|s| s.len() != history.q) {
        return Err(FemError::DimensionMismatch {
            expected: history.q,
            got: positions.len(),
        });
    }
    history.step = 0;
    history.positions.clear();
    history.solutions.clear();
    history.mass_u.clear();
    for (j, x) in positions.iter().enumerate() {
        x.check_len(topo.dim, topo.n_nodes)?;
        let u = match solutions {
            Some(us) => {
                let u = us[j].clone();
                u.check_len(1, topo.n_nodes)?;
                let m = assemble_mass(topo, x)?;
                let mu = m.mul_vec(&u.data);
                Some((u, mu))
            }
            None => None,
        };
        history.push(x.clone(), u);
    }
    Ok(())
}

/// Extrapolate, evaluate boundary velocity, extend harmonically, update
/// positions. Returns `(x^n, v^n)` without modifying the history.
pub fn bdf_position_step(
    history: &BdfHistory,
    topo: &MeshTopology,
    field: &BoundaryVelocityField,
) -> Result<(NodalVector, NodalVector)> {
    if !history.is_ready() {
        return Err(FemError::Invalid("history not initialized".into()));
    }
    let n = history.step;
    let t = history.t_next();
    let degenerated = |source: FemError| FemError::MeshDegenerated {
        step: n,
        source: Box::new(source),
    };
    let x_tilde = history.extrapolate();
    let vg = trace_boundary_velocity(field, topo, &x_tilde, t)?;
    let v = solve_harmonic_extension(topo, &x_tilde, &vg).map_err(|e| match e {
        FemError::DegenerateElement { .. } | FemError::NotSpd { .. } => degenerated(e),
        other => other,
    })?;
    let d0 = history.delta[0];
    let mut x = NodalVector::zeros(topo.dim, topo.n_nodes);
    for (i, o) in x.data.iter_mut().enumerate() {
        let mut s = history.tau * v.data[i];
        for j in 1..=history.q {
            s -= history.delta[j] * history.positions[j - 1].data[i];
        }
        *o = s / d0;
    }
    check_positive_jacobians(topo, &x).map_err(degenerated)?;
    Ok((x, v))
}

/// Solves `(δ_0/τ) M(x^n) u + β A(x^n) u = b - (1/τ) Σ δ_j M(x^{n-j}) u^{n-j}`.
/// Returns `u^n` and the product `M(x^n) u^n`.
pub fn bdf_diffusion_step(
    history: &BdfHistory,
    topo: &MeshTopology,
    x_n: &NodalVector,
    data: &DiffusionData,
) -> Result<(NodalVector, Vec<f64>)> {
    if history.mass_u.len() != history.q {
        return Err(FemError::Invalid("solution history not initialized".into()));
    }
    let t = history.t_next();
    let tau = history.tau;
    let (m, a) = assemble_mass_stiffness(topo, x_n)?;
    let k = m.linear_combination(history.delta[0] / tau, &a, data.beta);
    let f = data.f.clone();
    let g = data.g.clone();
    let mut rhs = assemble_load(topo, x_n, |p, s| f(p, s), |p, s| g(p, s), t, data.beta)?.data;
    for j in 1..=history.q {
        let c = history.delta[j] / tau;
        rhs.iter_mut()
            .zip(&history.mass_u[j - 1])
            .for_each(|(r, mu)| *r -= c * mu);
    }
    let solver = SpdSolver::factorize(&k.csr, "BDF diffusion system")?;
    let u = solver.solve(&rhs)?;
    let mu = m.mul_vec(&u);
    Ok((NodalVector::scalar(u), mu))
}

/// One full step: positions, then the diffusion solve on the new geometry
/// when the history tracks a solution. Returns `(x^n, v^n, u^n)`.
pub fn advance(
    history: &mut BdfHistory,
    topo: &MeshTopology,
    field: &BoundaryVelocityField,
    data: Option<&DiffusionData>,
) -> Result<(NodalVector, NodalVector, Option<NodalVector>)> {
    let (x, v) = bdf_position_step(history, topo, field)?;
    let u = match data {
        Some(d) if history.tracks_solution() => Some(bdf_diffusion_step(history, topo, &x, d)?),
        _ => None,
    };
    let u_out = u.as_ref().map(|(u, _)| u.clone());
    history.push(x.clone(), u);
    Ok((x, v, u_out))
}

/// Time series on a uniform grid `t_m = m τ`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tau: f64,
    pub times: Vec<f64>,
    pub positions: Vec<NodalVector>,
    pub velocities: Option<Vec<NodalVector>>,
    pub solutions: Option<Vec<NodalVector>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Per-step dump in the mesh text format, preceded by `time` lines.
    pub fn dump_text<W: Write>(&self, topo: &MeshTopology, mut out: W) -> Result<()> {
        for (t, x) in self.times.iter().zip(&self.positions) {
            writeln!(out, "time {t:.17e}")?;
            topo.export_text(x, &mut out)?;
        }
        Ok(())
    }
}

/// Number of uniform steps of size `tau` covering `[0, t_end]`.
pub fn step_count(tau: f64, t_end: f64) -> Result<usize> {
    let m = (t_end / tau).round();
    if !(tau > 0.0) || m < 1.0 || (m * tau - t_end).abs() > 1e-12 * t_end.max(1.0) {
        return Err(FemError::Invalid(format!(
            "time step {tau} does not divide the interval [0, {t_end}]"
        )));
    }
    Ok(m as usize)
}

/// Classical RK4 on `ẋ_j = v(x_j, t)` for every node, recording every
/// `stride`-th step.
pub fn rk4_reference_positions(
    topo: &MeshTopology,
    x0: &NodalVector,
    field: &BoundaryVelocityField,
    tau_ref: f64,
    t_end: f64,
    stride: usize,
) -> Result<Trajectory> {
    x0.check_len(topo.dim, topo.n_nodes)?;
    let steps = step_count(tau_ref, t_end)?;
    if stride == 0 || steps % stride != 0 {
        return Err(FemError::Invalid(format!(
            "output stride {stride} does not divide {steps} steps"
        )));
    }
    let n_out = steps / stride + 1;
    let dim = topo.dim;
    let per_node: Vec<Result<Vec<Point>>> = (0..topo.n_nodes)
        .into_par_iter()
        .map(|j| {
            let mut p = x0.node(j);
            let mut out = Vec::with_capacity(n_out);
            out.push(p);
            let h = tau_ref;
            for m in 0..steps {
                let t = m as f64 * h;
                let k1 = field.eval(&p, t);
                let k2 = field.eval(&add(&p, 0.5 * h, &k1, dim), t + 0.5 * h);
                let k3 = field.eval(&add(&p, 0.5 * h, &k2, dim), t + 0.5 * h);
                let k4 = field.eval(&add(&p, h, &k3, dim), t + h);
                for c in 0..dim {
                    p[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
                if p[..dim].iter().any(|c| !c.is_finite()) {
                    return Err(FemError::NonFinite { node: j, t: t + h });
                }
                if (m + 1) % stride == 0 {
                    out.push(p);
                }
            }
            Ok(out)
        })
        .collect();
    let mut positions = vec![NodalVector::zeros(dim, topo.n_nodes); n_out];
    for (j, traj) in per_node.into_iter().enumerate() {
        for (x, p) in positions.iter_mut().zip(traj?) {
            x.set_node(j, &p);
        }
    }
    let tau = tau_ref * stride as f64;
    Ok(Trajectory {
        tau,
        times: (0..n_out).map(|m| m as f64 * tau).collect(),
        positions,
        velocities: None,
        solutions: None,
    })
}

#[inline]
fn add(p: &Point, s: f64, k: &Point, dim: usize) -> Point {
    let mut out = *p;
    for c in 0..dim {
        out[c] += s * k[c];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_stiffness;
    use crate::mesh::generate_disk_mesh;

    #[test]
    fn coefficient_tables() {
        let (d1, g1) = bdf_coefficients(1).unwrap();
        assert_eq!((d1, g1), (vec![1.0, -1.0], vec![1.0]));
        let (d2, g2) = bdf_coefficients(2).unwrap();
        for (a, b) in d2.iter().zip([1.5, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(g2, vec![2.0, -1.0]);
        let (d4, _) = bdf_coefficients(4).unwrap();
        for (a, b) in d4.iter().zip([25.0 / 12.0, -4.0, 3.0, -4.0 / 3.0, 0.25]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(bdf_coefficients(0).is_err());
        assert!(bdf_coefficients(5).is_err());
    }

    #[test]
    fn coefficient_identities() {
        for q in 1..=4 {
            let (d, g) = bdf_coefficients(q).unwrap();
            assert!(d.iter().sum::<f64>().abs() < 1e-15);
            let first: f64 = d.iter().enumerate().map(|(j, v)| j as f64 * v).sum();
            assert!((first + 1.0).abs() < 1e-14);
            for deg in 0..q {
                // p(t) = t^deg with t_n = 0, t_{n-1-j} = -(j+1)
                let s: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * (-(j as f64) - 1.0).powi(deg as i32))
                    .sum();
                let expect = if deg == 0 { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rk4_constant_field_and_rotation() {
        let (topo, x) = generate_disk_mesh(0.4, 2).unwrap();
        let c = BoundaryVelocityField::new(2, |_, _| [0.3, -0.2, 0.0]);
        let tr = rk4_reference_positions(&topo, &x, &c, 1e-2, 1.0, 10).unwrap();
        assert_eq!(tr.len(), 11);
        for j in 0..topo.n_nodes {
            let (p0, p1) = (x.node(j), tr.positions[10].node(j));
            assert!((p1[0] - p0[0] - 0.3).abs() < 1e-13);
            assert!((p1[1] - p0[1] + 0.2).abs() < 1e-13);
        }
        let rot = BoundaryVelocityField::new(2, |p, _| [-p[1], p[0], 0.0]);
        let tr = rk4_reference_positions(&topo, &x, &rot, 1e-3, 1.0, 1000).unwrap();
        for j in 0..topo.n_nodes {
            let r0 = crate::geometry::norm(&x.node(j));
            let r1 = crate::geometry::norm(&tr.positions[1].node(j));
            assert!((r0 - r1).abs() <= 1e-11);
        }
    }

    #[test]
    fn rk4_richardson_order() {
        let (topo, x) = generate_disk_mesh(0.5, 1).unwrap();
        let f = BoundaryVelocityField::new(2, |p, t| [(p[1] + t).sin(), p[0] * p[0] - t, 0.0]);
        let fine = rk4_reference_positions(&topo, &x, &f, 0.1 / 8.0, 1.0, 80).unwrap();
        let err = |tau: f64| {
            let tr = rk4_reference_positions(&topo, &x, &f, tau, 1.0, (1.0 / tau).round() as usize).unwrap();
            tr.positions[1].axpy(-1.0, &fine.positions[1]).max_abs()
        };
        let ratio = err(0.2) / err(0.1);
        assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    }

    fn stationary_history(q: usize, topo: &MeshTopology, x: &NodalVector, u: Option<&NodalVector>) -> BdfHistory {
        let mut h = BdfHistory::new(q, 0.01).unwrap();
        let xs = vec![x.clone(); q];
        let us = u.map(|u| vec![u.clone(); q]);
        startup(&mut h, topo, &xs, us.as_deref()).unwrap();
        h
    }

    #[test]
    fn stationary_domain_stays_put() {
        let (topo, x) = generate_disk_mesh(0.3, 2).unwrap();
        let mut h = stationary_history(4, &topo, &x, None);
        let zero = BoundaryVelocityField::zero(2);
        for _ in 0..5 {
            let (xn, _, _) = advance(&mut h, &topo, &zero, None).unwrap();
            assert!(xn.axpy(-1.0, &x).max_abs() < 1e-14);
        }
        assert_eq!(h.step, 9);
    }

    #[test]
    fn constants_are_steady_and_energy_decays() {
        let (topo, x) = generate_disk_mesh(0.3, 2).unwrap();
        let zero = BoundaryVelocityField::zero(2);
        let data = DiffusionData::homogeneous(1.0);
        let ones = NodalVector::scalar(vec![1.0; topo.n_nodes]);
        let mut h = stationary_history(1, &topo, &x, Some(&ones));
        for _ in 0..3 {
            let (_, _, u) = advance(&mut h, &topo, &zero, Some(&data)).unwrap();
            assert!(u.unwrap().data.iter().all(|v| (v - 1.0).abs() < 1e-10));
        }
        let m = assemble_mass(&topo, &x).unwrap();
        let u0 = NodalVector::scalar((0..topo.n_nodes).map(|j| x.node(j)[0] * x.node(j)[1]).collect());
        let mut h = stationary_history(1, &topo, &x, Some(&u0));
        let mut prev = m.quadratic_form(&u0.data);
        for _ in 0..5 {
            let (_, _, u) = advance(&mut h, &topo, &zero, Some(&data)).unwrap();
            let e = m.quadratic_form(&u.unwrap().data);
            assert!(e <= prev + 1e-15);
            prev = e;
        }
    }

    #[test]
    fn affine_motion_is_continued_exactly() {
        let (topo, x) = generate_disk_mesh(0.3, 2).unwrap();
        let c = [0.2, -0.1, 0.0];
        let field = BoundaryVelocityField::new(2, move |_, _| c);
        for q in [1, 4] {
            let tau = 0.01;
            let mut h = BdfHistory::new(q, tau).unwrap();
            let xs: Vec<NodalVector> = (0..q)
                .map(|m| {
                    let mut xm = x.clone();
                    for j in 0..topo.n_nodes {
                        let p = x.node(j);
                        let t = m as f64 * tau;
                        xm.set_node(j, &[p[0] + t * c[0], p[1] + t * c[1], 0.0]);
                    }
                    xm
                })
                .collect();
            startup(&mut h, &topo, &xs, None).unwrap();
            for _ in 0..6 {
                let t = h.t_next();
                let (xn, _, _) = advance(&mut h, &topo, &field, None).unwrap();
                for j in 0..topo.n_nodes {
                    let p = x.node(j);
                    let got = xn.node(j);
                    assert!((got[0] - p[0] - t * c[0]).abs() < 1e-12);
                    assert!((got[1] - p[1] - t * c[1]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn affine_boundary_velocity_q1_matches_node_ode() {
        let (topo, x) = generate_disk_mesh(0.3, 2).unwrap();
        let b = [[0.1, 0.2, 0.0], [-0.3, 0.05, 0.0], [0.0; 3]];
        let field = BoundaryVelocityField::affine(2, b, [0.1, 0.0, 0.0]);
        let mut h = stationary_history(1, &topo, &x, None);
        h.tau = 0.01;
        let mut oracle = x.clone();
        for _ in 0..5 {
            let (xn, _, _) = advance(&mut h, &topo, &field, None).unwrap();
            for j in 0..topo.n_nodes {
                let p = oracle.node(j);
                let v = field.eval(&p, 0.0);
                oracle.set_node(j, &[p[0] + 0.01 * v[0], p[1] + 0.01 * v[1], 0.0]);
            }
            assert!(xn.axpy(-1.0, &oracle).max_abs() < 1e-12);
        }
    }

    #[test]
    fn degeneration_reports_step() {
        let (topo, x) = generate_disk_mesh(0.4, 1).unwrap();
        let field = BoundaryVelocityField::new(2, |p, _| [-50.0 * p[0], 0.0, 0.0]);
        let mut h = stationary_history(1, &topo, &x, None);
        h.tau = 0.1;
        let err = advance(&mut h, &topo, &field, None).unwrap_err();
        assert!(matches!(err, FemError::MeshDegenerated { step: 1, .. }), "{err}");
    }

    #[test]
    fn diffusion_temporal_order() {
        let (topo, x) = generate_disk_mesh(0.5, 1).unwrap();
        let zero = BoundaryVelocityField::zero(2);
        let data = DiffusionData::homogeneous(1.0);
        let a = assemble_stiffness(&topo, &x).unwrap();
        let u0: Vec<f64> = (0..topo.n_nodes).map(|j| x.node(j)[0] + x.node(j)[1].powi(2)).collect();
        let run = |q: usize, tau: f64| -> Vec<f64> {
            let steps = (0.2 / tau).round() as usize;
            let mut h = BdfHistory::new(q, tau).unwrap();
            let starts = semi_discrete(&topo, &x, &u0, tau, q);
            startup(&mut h, &topo, &vec![x.clone(); q], Some(&starts)).unwrap();
            let mut u = starts[q - 1].clone();
            for _ in q..=steps {
                u = advance(&mut h, &topo, &zero, Some(&data)).unwrap().2.unwrap();
            }
            u.data
        };
        let reference = semi_discrete_at(&topo, &x, &u0, 0.2);
        for q in [1, 2] {
            let e = |tau: f64| {
                let u = run(q, tau);
                let d: Vec<f64> = u.iter().zip(&reference).map(|(a, b)| a - b).collect();
                a.quadratic_form(&d).sqrt() + d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            };
            let rate = (e(0.02) / e(0.01)).log2();
            assert!((rate - q as f64).abs() <= 0.4, "q={q} rate={rate}");
        }
    }

    /// Exact solution of `M u' + A u = 0` by dense eigen-decomposition.
    fn semi_discrete_at(topo: &MeshTopology, x: &NodalVector, u0: &[f64], t: f64) -> Vec<f64> {
        let m = assemble_mass(topo, x).unwrap().csr.to_dense();
        let a = assemble_stiffness(topo, x).unwrap().csr.to_dense();
        let n = u0.len();
        let md = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]);
        let ad = nalgebra::DMatrix::from_fn(n, n, |i, j| a[i][j]);
        let l = md.clone().cholesky().unwrap().l();
        let linv = l.clone().try_inverse().unwrap();
        let s = &linv * ad * linv.transpose();
        let eig = s.symmetric_eigen();
        let w = l.transpose() * nalgebra::DVector::from_column_slice(u0);
        let coeff = eig.eigenvectors.transpose() * w;
        let decayed = nalgebra::DVector::from_fn(n, |i, _| coeff[i] * (-eig.eigenvalues[i] * t).exp());
        let y = linv.transpose() * (&eig.eigenvectors * decayed);
        y.as_slice().to_vec()
    }

    fn semi_discrete(topo: &MeshTopology, x: &NodalVector, u0: &[f64], tau: f64, q: usize) -> Vec<NodalVector> {
        (0..q)
            .map(|m| NodalVector::scalar(semi_discrete_at(topo, x, u0, m as f64 * tau)))
            .collect()
    }
}
