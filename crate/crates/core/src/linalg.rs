//! Small fixed-size linear algebra: 3-vectors, 2×2 and 4×4 matrices, a
//! Gram–Schmidt QR for 4×4 matrices, and a block-tridiagonal Cholesky solver
//! for the orbit Newton iteration.

use crate::scalar::Real;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn from_f64(x: f64, y: f64, z: f64) -> Self {
        Self::new(T::lit(x), T::lit(y), T::lit(z))
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// Unit normal of the configuration plane.
    pub fn plane_normal() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        // hypot-style scaling keeps tiny and huge vectors accurate
        let m = self.x.abs().max(self.y.abs()).max(self.z.abs());
        if m == T::zero() {
            return T::zero();
        }
        let s = self * (T::one() / m);
        m * s.norm_sq().sqrt()
    }

    pub fn normalized(self) -> Self {
        self * (T::one() / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_abs(self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T: Real> Mat2<T> {
    pub fn zero() -> Self {
        Mat2([[T::zero(); 2]; 2])
    }

    pub fn identity() -> Self {
        Mat2([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    pub fn diag(a: T, b: T) -> Self {
        Mat2([[a, T::zero()], [T::zero(), b]])
    }

    pub fn det(&self) -> T {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1]
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == T::zero() || !d.is_finite() {
            return None;
        }
        let m = &self.0;
        let inv = T::one() / d;
        Some(Mat2([[m[1][1] * inv, -m[0][1] * inv], [-m[1][0] * inv, m[0][0] * inv]]))
    }

    pub fn apply(&self, v: [T; 2]) -> [T; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().flatten().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    /// Positive definiteness of the symmetric part.
    pub fn is_positive_definite(&self) -> bool {
        let m = &self.0;
        let off = (m[0][1] + m[1][0]) * T::lit(0.5);
        m[0][0] > T::zero() && m[0][0] * m[1][1] - off * off > T::zero()
    }

    /// Eigen-decomposition of the symmetric part: `(λ_max, λ_min, unit eigenvector of λ_max)`.
    pub fn symmetric_eigen(&self) -> (T, T, [T; 2]) {
        let m = &self.0;
        let a = m[0][0];
        let c = m[1][1];
        let b = (m[0][1] + m[1][0]) * T::lit(0.5);
        let half_tr = (a + c) * T::lit(0.5);
        let half_diff = (a - c) * T::lit(0.5);
        let rad = (half_diff * half_diff + b * b).sqrt();
        let hi = half_tr + rad;
        let lo = half_tr - rad;
        // eigenvector for hi: angle φ with tan 2φ = 2b/(a−c)
        let phi = T::lit(0.5) * (b + b).atan2(a - c);
        (hi, lo, [phi.cos(), phi.sin()])
    }
}

impl<T: Real> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut r = Self::zero();
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] = self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j];
            }
        }
        r
    }
}

impl<T: Real> Add for Mat2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] = r.0[i][j] + o.0[i][j];
            }
        }
        r
    }
}

impl<T: Real> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] = r.0[i][j] - o.0[i][j];
            }
        }
        r
    }
}

impl<T: Real> Mul<T> for Mat2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        let mut r = self;
        for row in r.0.iter_mut() {
            for x in row.iter_mut() {
                *x = *x * s;
            }
        }
        r
    }
}

/// Row-major 4×4 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat4<T>(pub [[T; 4]; 4]);

impl<T: Real> Mat4<T> {
    pub fn zero() -> Self {
        Mat4([[T::zero(); 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            m.0[i][i] = T::one();
        }
        m
    }

    /// Assembles `[[a, b], [c, d]]` from 2×2 blocks.
    pub fn from_blocks(a: Mat2<T>, b: Mat2<T>, c: Mat2<T>, d: Mat2<T>) -> Self {
        let mut m = Self::zero();
        for i in 0..2 {
            for j in 0..2 {
                m.0[i][j] = a.0[i][j];
                m.0[i][j + 2] = b.0[i][j];
                m.0[i + 2][j] = c.0[i][j];
                m.0[i + 2][j + 2] = d.0[i][j];
            }
        }
        m
    }

    /// The 2×2 block at block position `(bi, bj)`.
    pub fn block(&self, bi: usize, bj: usize) -> Mat2<T> {
        let mut r = Mat2::zero();
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] = self.0[2 * bi + i][2 * bj + j];
            }
        }
        r
    }

    pub fn transpose(&self) -> Self {
        let mut r = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                r.0[i][j] = self.0[j][i];
            }
        }
        r
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().flatten().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn column(&self, j: usize) -> [T; 4] {
        [self.0[0][j], self.0[1][j], self.0[2][j], self.0[3][j]]
    }

    pub fn set_column(&mut self, j: usize, c: [T; 4]) {
        for (i, v) in c.into_iter().enumerate() {
            self.0[i][j] = v;
        }
    }

    pub fn apply(&self, v: [T; 4]) -> [T; 4] {
        let mut r = [T::zero(); 4];
        for (i, ri) in r.iter_mut().enumerate() {
            *ri = (0..4).map(|j| self.0[i][j] * v[j]).sum();
        }
        r
    }

    /// The standard symplectic form `[[0, I], [−I, 0]]`.
    pub fn symplectic_form() -> Self {
        let z = Mat2::zero();
        let i = Mat2::identity();
        Self::from_blocks(z, i, i * -T::one(), z)
    }
}

impl<T: Real> Mul for Mat4<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut r = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                r.0[i][j] = (0..4).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        r
    }
}

impl<T: Real> Sub for Mat4<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..4 {
            for j in 0..4 {
                r.0[i][j] = r.0[i][j] - o.0[i][j];
            }
        }
        r
    }
}

impl<T: Real> Mul<T> for Mat4<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        let mut r = self;
        for row in r.0.iter_mut() {
            for x in row.iter_mut() {
                *x = *x * s;
            }
        }
        r
    }
}

impl<T> Index<(usize, usize)> for Mat4<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.0[i][j]
    }
}

impl<T> IndexMut<(usize, usize)> for Mat4<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.0[i][j]
    }
}

/// Thin QR of a 4×4 matrix by modified Gram–Schmidt with one round of
/// reorthogonalization. The diagonal of `R` is non-negative.
pub fn qr4<T: Real>(a: &Mat4<T>) -> (Mat4<T>, Mat4<T>) {
    let mut q = Mat4::zero();
    let mut r = Mat4::zero();
    for j in 0..4 {
        let mut v = a.column(j);
        for _pass in 0..2 {
            for k in 0..j {
                let qk = q.column(k);
                let proj: T = (0..4).map(|i| qk[i] * v[i]).sum();
                r.0[k][j] = r.0[k][j] + proj;
                for i in 0..4 {
                    v[i] = v[i] - proj * qk[i];
                }
            }
        }
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        r.0[j][j] = norm;
        if norm > T::zero() {
            for x in v.iter_mut() {
                *x = *x / norm;
            }
        }
        q.set_column(j, v);
    }
    (q, r)
}

/// Solves a symmetric block-tridiagonal system with 2×2 blocks by block
/// Cholesky (no pivoting). `diag[k]` is the k-th diagonal block and
/// `lower[k]` the block coupling row `k+1` to column `k`. Each right-hand side
/// in `rhs` is a list of 2-vectors, one per block row.
///
/// Returns `None` if a pivot block fails to be positive definite.
pub fn solve_block_tridiagonal<T: Real>(
    diag: &[Mat2<T>],
    lower: &[Mat2<T>],
    rhs: &[Vec<[T; 2]>],
) -> Option<Vec<Vec<[T; 2]>>> {
    let n = diag.len();
    debug_assert_eq!(lower.len() + 1, n.max(1));
    if n == 0 {
        return Some(rhs.to_vec());
    }
    // pivots C_k = D_k − L_{k−1} C_{k−1}^{-1} L_{k−1}^T
    let mut pivots_inv = Vec::with_capacity(n);
    let mut c = diag[0];
    for k in 0..n {
        if k > 0 {
            let l = lower[k - 1];
            let prev_inv: Mat2<T> = pivots_inv[k - 1];
            c = diag[k] - l * prev_inv * l.transpose();
        }
        if !c.is_positive_definite() {
            return None;
        }
        pivots_inv.push(c.inverse()?);
    }
    let mut out = Vec::with_capacity(rhs.len());
    for b in rhs {
        debug_assert_eq!(b.len(), n);
        // forward: y_k = b_k − L_{k−1} C_{k−1}^{-1} y_{k−1}
        let mut y = b.clone();
        for k in 1..n {
            let t = lower[k - 1].apply(pivots_inv[k - 1].apply(y[k - 1]));
            y[k] = [y[k][0] - t[0], y[k][1] - t[1]];
        }
        // backward: x_k = C_k^{-1} (y_k − L_k^T x_{k+1})
        let mut x = vec![[T::zero(); 2]; n];
        x[n - 1] = pivots_inv[n - 1].apply(y[n - 1]);
        for k in (0..n - 1).rev() {
            let t = lower[k].transpose().apply(x[k + 1]);
            x[k] = pivots_inv[k].apply([y[k][0] - t[0], y[k][1] - t[1]]);
        }
        out.push(x);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_and_dot() {
        let ex = Vec3::<f64>::from_f64(1.0, 0.0, 0.0);
        let ey = Vec3::<f64>::from_f64(0.0, 1.0, 0.0);
        assert_eq!(ex.cross(ey), Vec3::plane_normal());
        assert_eq!(ex.dot(ey), 0.0);
        assert!((Vec3::<f64>::from_f64(3.0, 4.0, 12.0).norm() - 13.0).abs() < 1e-15);
    }

    #[test]
    fn qr_reconstructs() {
        let mut a = Mat4::<f64>::zero();
        for i in 0..4 {
            for j in 0..4 {
                a.0[i][j] = ((i * 7 + j * 3) % 5) as f64 + if i == j { 3.0 } else { 0.0 };
            }
        }
        let (q, r) = qr4(&a);
        let qa = q * r;
        assert!((qa - a).max_abs() < 1e-12);
        let qtq = q.transpose() * q;
        assert!((qtq - Mat4::identity()).max_abs() < 1e-14);
        for i in 0..4 {
            for j in 0..i {
                assert_eq!(r.0[i][j], 0.0);
            }
        }
    }

    #[test]
    fn symmetric_eigen_diag() {
        let (hi, lo, v) = Mat2::<f64>::diag(1.0, 5.0).symmetric_eigen();
        assert_eq!((hi, lo), (5.0, 1.0));
        assert!(v[0].abs() < 1e-15 && (v[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn block_tridiagonal_matches_dense() {
        // dense 6×6 SPD with 2×2 block tridiagonal pattern
        let d = [
            Mat2([[4.0, 1.0], [1.0, 3.0]]),
            Mat2([[5.0, 0.5], [0.5, 4.0]]),
            Mat2([[6.0, -1.0], [-1.0, 5.0]]),
        ];
        let l = [Mat2([[1.0, 0.2], [0.0, 0.7]]), Mat2([[-0.5, 0.1], [0.3, 0.9]])];
        let b: Vec<[f64; 2]> = vec![[1.0, 2.0], [3.0, -1.0], [0.5, 0.25]];
        let x = &solve_block_tridiagonal(&d, &l, std::slice::from_ref(&b)).unwrap()[0];
        // residual H x − b
        for k in 0..3 {
            let mut r = d[k].apply(x[k]);
            if k > 0 {
                let t = l[k - 1].apply(x[k - 1]);
                r = [r[0] + t[0], r[1] + t[1]];
            }
            if k < 2 {
                let t = l[k].transpose().apply(x[k + 1]);
                r = [r[0] + t[0], r[1] + t[1]];
            }
            assert!((r[0] - b[k][0]).abs() < 1e-13 && (r[1] - b[k][1]).abs() < 1e-13);
        }
    }

    #[test]
    fn block_tridiagonal_rejects_indefinite() {
        let d = [Mat2::diag(1.0, -1.0)];
        assert!(solve_block_tridiagonal::<f64>(&d, &[], &[vec![[1.0, 1.0]]]).is_none());
    }
}
