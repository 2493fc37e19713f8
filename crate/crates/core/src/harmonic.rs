//! Discrete harmonic extension of prescribed boundary velocities.

use std::fmt;
use std::sync::Arc;

use crate::assembly::{assemble_stiffness, extract_blocks, BlockPartition};
use crate::error::{FemError, Result};
use crate::linsolve::SpdSolver;
use crate::mesh::{MeshTopology, NodalVector};
use crate::Point;

type FieldFn = dyn Fn(&Point, f64) -> Point + Send + Sync;

/// Velocity evaluator `(x, t) -> v(x, t)` defined near the moving boundary.
#[derive(Clone)]
pub struct BoundaryVelocityField {
    pub dim: usize,
    f: Arc<FieldFn>,
}

impl fmt::Debug for BoundaryVelocityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryVelocityField").field("dim", &self.dim).finish()
    }
}

impl BoundaryVelocityField {
    pub fn new(dim: usize, f: impl Fn(&Point, f64) -> Point + Send + Sync + 'static) -> Self {
        Self { dim, f: Arc::new(f) }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_, _| [0.0; 3])
    }

    /// `v(x) = B x + c`, constant in time.
    pub fn affine(dim: usize, b: [[f64; 3]; 3], c: Point) -> Self {
        Self::new(dim, move |p, _| {
            let mut v = c;
            for r in 0..dim {
                for k in 0..dim {
                    v[r] += b[r][k] * p[k];
                }
            }
            for comp in v.iter_mut().skip(dim) {
                *comp = 0.0;
            }
            v
        })
    }

    #[inline]
    pub fn eval(&self, p: &Point, t: f64) -> Point {
        (self.f)(p, t)
    }
}

/// Boundary entries hold `v(x_j, t)`; interior entries are zero.
pub fn trace_boundary_velocity(
    field: &BoundaryVelocityField,
    topo: &MeshTopology,
    x: &NodalVector,
    t: f64,
) -> Result<NodalVector> {
    x.check_len(topo.dim, topo.n_nodes)?;
    let mut v = NodalVector::zeros(topo.dim, topo.n_nodes);
    for j in 0..topo.n_boundary {
        let val = field.eval(&x.node(j), t);
        if val[..topo.dim].iter().any(|c| !c.is_finite()) {
            return Err(FemError::NonFinite { node: j, t });
        }
        v.set_node(j, &val);
    }
    Ok(v)
}

/// Non-default behaviour of the extension solve, for tests and diagnostics.
#[derive(Debug, Clone, Default)]
pub struct HarmonicOptions {
    /// Interior values of the extension vector `w`; zero when absent.
    pub interior_guess: Option<NodalVector>,
    /// Mutation hook: flips the sign of the `A21` coupling.
    pub flip_a21_sign: bool,
}

/// Solves `-A22 v^Ω = A21 v^Γ` componentwise with one factorization.
pub fn solve_harmonic_extension(topo: &MeshTopology, x: &NodalVector, v_boundary: &NodalVector) -> Result<NodalVector> {
    solve_harmonic_extension_with(topo, x, v_boundary, &HarmonicOptions::default())
}

pub fn solve_harmonic_extension_with(
    topo: &MeshTopology,
    x: &NodalVector,
    v_boundary: &NodalVector,
    opts: &HarmonicOptions,
) -> Result<NodalVector> {
    v_boundary.check_len(topo.dim, topo.n_nodes)?;
    let a = assemble_stiffness(topo, x)?;
    let blocks = extract_blocks(&a, topo.n_boundary)?;
    let solver = SpdSolver::factorize(&blocks.a22, "A22")?;
    extend_with_blocks(topo, &blocks, &solver, v_boundary, opts)
}

/// Extension using an already split and factorized stiffness matrix.
pub fn extend_with_blocks(
    topo: &MeshTopology,
    blocks: &BlockPartition,
    solver: &SpdSolver,
    v_boundary: &NodalVector,
    opts: &HarmonicOptions,
) -> Result<NodalVector> {
    let (nb, n) = (topo.n_boundary, topo.n_nodes);
    let sign = if opts.flip_a21_sign { -1.0 } else { 1.0 };
    if let Some(w) = &opts.interior_guess {
        w.check_len(topo.dim, n)?;
    }
    let mut rhs = Vec::with_capacity(topo.dim);
    for c in 0..topo.dim {
        let comp = v_boundary.component(c);
        let mut r: Vec<f64> = blocks.a21.mul_vec(&comp[..nb]).iter().map(|v| -sign * v).collect();
        if let Some(w) = &opts.interior_guess {
            let aw = blocks.a22.mul_vec(&w.component(c)[nb..]);
            r.iter_mut().zip(&aw).for_each(|(a, b)| *a -= b);
        }
        rhs.push(r);
    }
    let sols = solver.solve_many(&rhs)?;
    let mut v = NodalVector::zeros(topo.dim, n);
    for (c, sol) in sols.iter().enumerate() {
        let out = v.component_mut(c);
        out[..nb].copy_from_slice(&v_boundary.component(c)[..nb]);
        out[nb..].copy_from_slice(sol);
        if let Some(w) = &opts.interior_guess {
            let wc = w.component(c);
            out[nb..].iter_mut().zip(&wc[nb..]).for_each(|(a, b)| *a += b);
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_ball_mesh, generate_disk_mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_affine(dim: usize, rng: &mut ChaCha8Rng) -> ([[f64; 3]; 3], Point) {
        let mut b = [[0.0; 3]; 3];
        let mut c = [0.0; 3];
        for r in 0..dim {
            c[r] = rng.gen_range(-1.0..1.0);
            for k in 0..dim {
                b[r][k] = rng.gen_range(-1.0..1.0);
            }
        }
        (b, c)
    }

    #[test]
    fn zero_data_gives_zero() {
        let (topo, x) = generate_disk_mesh(0.3, 2).unwrap();
        let vg = trace_boundary_velocity(&BoundaryVelocityField::zero(2), &topo, &x, 0.0).unwrap();
        assert!(vg.data.iter().all(|&v| v == 0.0));
        let v = solve_harmonic_extension(&topo, &x, &vg).unwrap();
        assert!(v.data.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn identity_field_traces_coordinates() {
        let (topo, x) = generate_disk_mesh(0.3, 2).unwrap();
        let field = BoundaryVelocityField::new(2, |p, _| *p);
        let vg = trace_boundary_velocity(&field, &topo, &x, 0.0).unwrap();
        for j in 0..topo.n_nodes {
            let expect = if j < topo.n_boundary { x.node(j) } else { [0.0; 3] };
            assert_eq!(vg.node(j), expect);
        }
    }

    #[test]
    fn affine_reproduction_both_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (topo, x) in [
            generate_disk_mesh(0.25, 2).unwrap(),
            generate_ball_mesh(0.7, 2).unwrap(),
        ] {
            for _ in 0..5 {
                let (b, c) = random_affine(topo.dim, &mut rng);
                let field = BoundaryVelocityField::affine(topo.dim, b, c);
                let vg = trace_boundary_velocity(&field, &topo, &x, 0.0).unwrap();
                let v = solve_harmonic_extension(&topo, &x, &vg).unwrap();
                for j in topo.n_boundary..topo.n_nodes {
                    let e = field.eval(&x.node(j), 0.0);
                    let got = v.node(j);
                    for d in 0..topo.dim {
                        assert!((got[d] - e[d]).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn sign_flip_breaks_reproduction() {
        let (topo, x) = generate_disk_mesh(0.3, 2).unwrap();
        let field = BoundaryVelocityField::affine(2, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]], [0.5, 0.0, 0.0]);
        let vg = trace_boundary_velocity(&field, &topo, &x, 0.0).unwrap();
        let opts = HarmonicOptions {
            flip_a21_sign: true,
            ..Default::default()
        };
        let v = solve_harmonic_extension_with(&topo, &x, &vg, &opts).unwrap();
        let j = topo.n_boundary;
        let e = field.eval(&x.node(j), 0.0);
        assert!((v.node(j)[0] - e[0]).abs() > 1e-3);
    }

    #[test]
    fn independent_of_interior_guess() {
        let (topo, x) = generate_disk_mesh(0.2, 2).unwrap();
        let field = BoundaryVelocityField::new(2, |p, _| [p[0].exp() * p[1].sin(), p[0] * p[1], 0.0]);
        let vg = trace_boundary_velocity(&field, &topo, &x, 0.0).unwrap();
        let v0 = solve_harmonic_extension(&topo, &x, &vg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = NodalVector::zeros(2, topo.n_nodes);
        w.data.iter_mut().for_each(|v| *v = rng.gen_range(-5.0..5.0));
        let opts = HarmonicOptions {
            interior_guess: Some(w),
            ..Default::default()
        };
        let v1 = solve_harmonic_extension_with(&topo, &x, &vg, &opts).unwrap();
        let scale = v0.max_abs();
        for (a, b) in v0.data.iter().zip(&v1.data) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn p1_discrete_maximum_principle() {
        let (topo, x) = generate_disk_mesh(0.1, 1).unwrap();
        let field = BoundaryVelocityField::new(2, |p, _| [(3.0 * p[0]).sin() + p[1] * p[1], (p[0] * p[1]).cos(), 0.0]);
        let vg = trace_boundary_velocity(&field, &topo, &x, 0.0).unwrap();
        let v = solve_harmonic_extension(&topo, &x, &vg).unwrap();
        for c in 0..2 {
            let comp = v.component(c);
            let bd = &comp[..topo.n_boundary];
            let lo = bd.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = bd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for &val in &comp[topo.n_boundary..] {
                assert!(val >= lo - 1e-6 && val <= hi + 1e-6);
            }
        }
    }

    #[test]
    fn non_finite_boundary_value_is_reported() {
        let (topo, x) = generate_disk_mesh(0.4, 1).unwrap();
        let field = BoundaryVelocityField::new(2, |_, _| [f64::NAN, 0.0, 0.0]);
        assert!(matches!(
            trace_boundary_velocity(&field, &topo, &x, 0.5),
            Err(FemError::NonFinite { node: 0, .. })
        ));
    }
}
