//! Symmetric positive definite solves: sparse Cholesky by default, Jacobi
//! preconditioned conjugate gradients as fallback.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::assembly::CsrMatrix;
use crate::error::{FemError, Result};

/// Relative residual tolerance of every solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

const MAX_REFINEMENTS: usize = 3;
const CG_MAX_ITER_FACTOR: usize = 10;

enum Backend {
    Cholesky(Llt<usize, f64>),
    Jacobi(Vec<f64>),
}

/// Reusable solver handle for one SPD matrix.
pub struct SpdSolver {
    matrix: CsrMatrix,
    role: String,
    backend: Backend,
    pub tol: f64,
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.backend {
            Backend::Cholesky(_) => "cholesky",
            Backend::Jacobi(_) => "jacobi-cg",
        };
        f.debug_struct("SpdSolver")
            .field("role", &self.role)
            .field("n", &self.matrix.nrows())
            .field("backend", &kind)
            .finish()
    }
}

fn check_square(k: &CsrMatrix) -> Result<()> {
    if k.nrows() != k.ncols() {
        return Err(FemError::DimensionMismatch {
            expected: k.nrows(),
            got: k.ncols(),
        });
    }
    Ok(())
}

impl SpdSolver {
    /// Sparse Cholesky factorization; `role` names the matrix in errors.
    pub fn factorize(k: &CsrMatrix, role: &str) -> Result<Self> {
        check_square(k)?;
        let n = k.nrows();
        let mut triplets = Vec::with_capacity(k.pattern.nnz() / 2 + n);
        for i in 0..n {
            for (j, v) in k.row(i) {
                if j <= i {
                    triplets.push(Triplet::new(i, j, v));
                }
            }
        }
        let not_spd = || FemError::NotSpd { role: role.to_string() };
        if k.diagonal().iter().any(|&d| !(d > 0.0)) {
            return Err(not_spd());
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| FemError::Invalid(format!("{role}: {e:?}")))?;
        let llt = mat.sp_cholesky(Side::Lower).map_err(|_| not_spd())?;
        Ok(Self {
            matrix: k.clone(),
            role: role.to_string(),
            backend: Backend::Cholesky(llt),
            tol: RESIDUAL_TOL,
        })
    }

    /// Jacobi-preconditioned conjugate gradients.
    pub fn iterative(k: &CsrMatrix, role: &str) -> Result<Self> {
        check_square(k)?;
        let diag = k.diagonal();
        if diag.iter().any(|&d| !(d > 0.0)) {
            return Err(FemError::NotSpd { role: role.to_string() });
        }
        Ok(Self {
            matrix: k.clone(),
            role: role.to_string(),
            backend: Backend::Jacobi(diag.iter().map(|d| 1.0 / d).collect()),
            tol: RESIDUAL_TOL,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.solve_many(&[b.to_vec()])?;
        Ok(out.pop().expect("one solution"))
    }

    /// Solves for several right-hand sides against the same matrix.
    pub fn solve_many(&self, bs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.n();
        for b in bs {
            if b.len() != n {
                return Err(FemError::DimensionMismatch {
                    expected: n,
                    got: b.len(),
                });
            }
        }
        let mut ys = match &self.backend {
            Backend::Cholesky(llt) => cholesky_solve(llt, bs),
            Backend::Jacobi(inv_diag) => bs
                .iter()
                .map(|b| pcg(&self.matrix, inv_diag, b, vec![0.0; n], self.tol * 0.1))
                .collect(),
        };
        for (y, b) in ys.iter_mut().zip(bs) {
            self.enforce_contract(y, b)?;
        }
        Ok(ys)
    }

    fn enforce_contract(&self, y: &mut Vec<f64>, b: &[f64]) -> Result<()> {
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            y.iter_mut().for_each(|v| *v = 0.0);
            record(0.0);
            return Ok(());
        }
        let mut r = residual(&self.matrix, y, b);
        let mut ratio = norm2(&r) / bnorm;
        let mut refinements = 0;
        while ratio > self.tol && refinements < MAX_REFINEMENTS {
            let dy = match &self.backend {
                Backend::Cholesky(llt) => cholesky_solve(llt, &[r.clone()]).pop().unwrap(),
                Backend::Jacobi(inv) => pcg(&self.matrix, inv, &r, vec![0.0; r.len()], self.tol * 0.1),
            };
            y.iter_mut().zip(&dy).for_each(|(a, d)| *a += d);
            r = residual(&self.matrix, y, b);
            ratio = norm2(&r) / bnorm;
            refinements += 1;
        }
        if ratio > self.tol {
            let inv: Vec<f64> = self.matrix.diagonal().iter().map(|d| 1.0 / d).collect();
            *y = pcg(&self.matrix, &inv, b, y.clone(), self.tol * 0.1);
            ratio = norm2(&residual(&self.matrix, y, b)) / bnorm;
        }
        if !ratio.is_finite() || ratio > self.tol {
            return Err(FemError::ResidualContract {
                role: self.role.clone(),
                ratio,
                tol: self.tol,
            });
        }
        record(ratio);
        Ok(())
    }
}

fn cholesky_solve(llt: &Llt<usize, f64>, bs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = bs.first().map_or(0, |b| b.len());
    let rhs = Mat::<f64>::from_fn(n, bs.len(), |i, j| bs[j][i]);
    let sol = llt.solve(&rhs);
    (0..bs.len()).map(|j| (0..n).map(|i| sol[(i, j)]).collect()).collect()
}

fn residual(k: &CsrMatrix, y: &[f64], b: &[f64]) -> Vec<f64> {
    let ky = k.mul_vec(y);
    ky.iter().zip(b).map(|(a, c)| c - a).collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(k: &CsrMatrix, inv_diag: &[f64], b: &[f64], mut x: Vec<f64>, tol: f64) -> Vec<f64> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return vec![0.0; n];
    }
    let mut r = residual(k, &x, b);
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut kp = vec![0.0; n];
    for _ in 0..CG_MAX_ITER_FACTOR * n.max(10) {
        if norm2(&r) <= tol * bnorm {
            break;
        }
        k.mul_vec_into(&p, &mut kp);
        let pkp = dot(&p, &kp);
        if !(pkp > 0.0) {
            break;
        }
        let alpha = rz / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

static SOLVES: AtomicUsize = AtomicUsize::new(0);
static WORST_RATIO: AtomicU64 = AtomicU64::new(0);

fn record(ratio: f64) {
    SOLVES.fetch_add(1, Ordering::Relaxed);
    WORST_RATIO.fetch_max(ratio.to_bits(), Ordering::Relaxed);
}

/// Number of solves so far and the worst relative residual observed.
pub fn solve_stats() -> (usize, f64) {
    (
        SOLVES.load(Ordering::Relaxed),
        f64::from_bits(WORST_RATIO.load(Ordering::Relaxed)),
    )
}
