//! Small fixed-size vector/matrix types for planar work.

use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

/// A point or vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    /// Rotation by +pi/2: (x, y) -> (-y, x).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Anticlockwise rotation by `angle` radians.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        rhs * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

/// A 2x2 matrix in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { a11: 0.0, a12: 0.0, a21: 0.0, a22: 0.0 };

    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    /// Matrix with the given columns.
    pub fn from_columns(c1: Vec2, c2: Vec2) -> Self {
        Mat2::new(c1.x, c2.x, c1.y, c2.y)
    }

    /// Outer product u v^T.
    pub fn outer(u: Vec2, v: Vec2) -> Self {
        Mat2::new(u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y)
    }

    pub fn transpose(self) -> Mat2 {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn trace(self) -> f64 {
        self.a11 + self.a22
    }

    pub fn det(self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(self.a11 * v.x + self.a12 * v.y, self.a21 * v.x + self.a22 * v.y)
    }

    pub fn mul_mat(self, b: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * b.a11 + self.a12 * b.a21,
            self.a11 * b.a12 + self.a12 * b.a22,
            self.a21 * b.a11 + self.a22 * b.a21,
            self.a21 * b.a12 + self.a22 * b.a22,
        )
    }

    /// Solve A x = b. Returns `None` when the matrix is singular to working precision.
    pub fn solve(self, b: Vec2) -> Option<Vec2> {
        let d = self.det();
        let scale = self.a11.abs() + self.a12.abs() + self.a21.abs() + self.a22.abs();
        if d.abs() <= 1e-14 * scale.max(1.0) * scale.max(1.0) {
            return None;
        }
        Some(Vec2::new(
            (b.x * self.a22 - b.y * self.a12) / d,
            (b.y * self.a11 - b.x * self.a21) / d,
        ))
    }

    pub fn inverse(self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 {
            return None;
        }
        Some(Mat2::new(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d))
    }

    /// Real eigenvalues and normalised eigenvectors, smaller eigenvalue first.
    /// Returns `None` for a complex pair.
    pub fn eigen_real(self) -> Option<((f64, Vec2), (f64, Vec2))> {
        let tr = self.trace();
        let det = self.det();
        let disc = tr * tr - 4.0 * det;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let l1 = 0.5 * (tr - sq);
        let l2 = 0.5 * (tr + sq);
        Some(((l1, self.eigenvector(l1)), (l2, self.eigenvector(l2))))
    }

    fn eigenvector(self, lambda: f64) -> Vec2 {
        // (A - lambda I) v = 0; pick the better-conditioned row.
        let r1 = Vec2::new(self.a11 - lambda, self.a12);
        let r2 = Vec2::new(self.a21, self.a22 - lambda);
        let v = if r1.norm() >= r2.norm() { r1.perp() } else { r2.perp() };
        if v.norm() == 0.0 {
            // A is lambda * I; any direction works.
            return Vec2::new(1.0, 0.0);
        }
        v.normalized()
    }

    /// Eigen-decomposition of a symmetric matrix: ((lambda_max, v_max), (lambda_min, v_min)),
    /// with v_min = perp(v_max).
    pub fn symmetric_eigen(self) -> ((f64, Vec2), (f64, Vec2)) {
        let tr = self.trace();
        let det = self.det();
        let off = 0.5 * (self.a12 + self.a21);
        let half_gap = (0.25 * (self.a11 - self.a22).powi(2) + off * off).sqrt();
        let l_max = 0.5 * tr + half_gap;
        // Guard against cancellation for the small eigenvalue.
        let l_min = if l_max.abs() > 0.0 { det / l_max } else { 0.5 * tr - half_gap };
        let v_max = if half_gap == 0.0 {
            Vec2::new(1.0, 0.0)
        } else {
            let r1 = Vec2::new(self.a11 - l_min, off);
            let r2 = Vec2::new(off, self.a22 - l_min);
            if r1.norm() >= r2.norm() { r1.normalized() } else { r2.normalized() }
        };
        ((l_max, v_max), (l_min, v_max.perp()))
    }

    /// Singular value decomposition A = U diag(s1, s2) V^T with s1 >= s2 >= 0.
    /// Returned as ((s1, u1, v1), (s2, u2, v2)).
    pub fn svd(self) -> ((f64, Vec2, Vec2), (f64, Vec2, Vec2)) {
        let c = self.transpose().mul_mat(self);
        let ((l_max, v1), (l_min, v2)) = c.symmetric_eigen();
        let s1 = l_max.max(0.0).sqrt();
        let s2 = l_min.max(0.0).sqrt();
        let u1 = if s1 > 0.0 { self.mul_vec(v1) / s1 } else { Vec2::new(1.0, 0.0) };
        let u2 = if s2 > s1 * 1e-15 { self.mul_vec(v2) / s2 } else { u1.perp() };
        ((s1, u1, v1), (s2, u2, v2))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2::new(self.a11 + rhs.a11, self.a12 + rhs.a12, self.a21 + rhs.a21, self.a22 + rhs.a22)
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: f64) -> Mat2 {
        Mat2::new(self.a11 * rhs, self.a12 * rhs, self.a21 * rhs, self.a22 * rhs)
    }
}

/// Solve a dense 4x4 linear system by Gaussian elimination with partial pivoting.
pub fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let m = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= m * a[col][k];
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for k in row + 1..4 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}
