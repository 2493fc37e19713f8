//! Small dense kernels for element Jacobians (2x2 / 3x3 stored as 3x3).

use crate::Point;

pub type Mat3 = [[f64; 3]; 3];

/// Jacobian `J[r][c] = sum_j x_j[r] * dphi_j/dxi_c` for one evaluation point.
#[inline]
pub fn jacobian(dim: usize, coords: &[Point], grads: &[[f64; 3]]) -> Mat3 {
    let mut jac = [[0.0; 3]; 3];
    for (x, g) in coords.iter().zip(grads) {
        for r in 0..dim {
            for c in 0..dim {
                jac[r][c] += x[r] * g[c];
            }
        }
    }
    jac
}

#[inline]
pub fn det(dim: usize, m: &Mat3) -> f64 {
    if dim == 2 {
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    } else {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Inverse given a precomputed nonzero determinant.
#[inline]
pub fn inverse(dim: usize, m: &Mat3, d: f64) -> Mat3 {
    let mut inv = [[0.0; 3]; 3];
    if dim == 2 {
        inv[0][0] = m[1][1] / d;
        inv[0][1] = -m[0][1] / d;
        inv[1][0] = -m[1][0] / d;
        inv[1][1] = m[0][0] / d;
    } else {
        inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
        inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
        inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
        inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d;
        inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
        inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
        inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d;
        inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d;
        inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
    }
    inv
}

/// Physical gradient `J^{-T} g` from a reference gradient.
#[inline]
pub fn push_gradient(dim: usize, inv: &Mat3, g: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for r in 0..dim {
        let mut s = 0.0;
        for c in 0..dim {
            s += inv[c][r] * g[c];
        }
        out[r] = s;
    }
    out
}

#[inline]
pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn distance(a: &Point, b: &Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    norm(&d)
}

/// Largest absolute eigenvalue of a symmetric `dim x dim` matrix.
pub fn sym_spectral_radius(dim: usize, m: &Mat3) -> f64 {
    let mut a = nalgebra::Matrix3::<f64>::zeros();
    for r in 0..dim {
        for c in 0..dim {
            a[(r, c)] = m[r][c];
        }
    }
    a.symmetric_eigenvalues().iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}
