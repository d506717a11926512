//! Small fixed-size complex linear algebra on C^2 and the standard
//! Hermitian, Riemannian and symplectic pairings.
//!
//! Conventions: `<a, b> = sum conj(a_k) b_k`, `g(a, b) = Re <a, b>`,
//! `omega(a, b) = Im <a, b>`, and `J` is multiplication by `i`. With these,
//! `omega(a, J b) = g(a, b)` and `omega = sum dx_k ^ dy_k`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// The imaginary unit.
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Shorthand constructor for a complex number.
#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// A point or tangent vector of C^2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct C2(pub [Complex64; 2]);

impl C2 {
    /// The zero vector.
    pub const ZERO: C2 = C2([Complex64 { re: 0.0, im: 0.0 }; 2]);

    /// Builds a vector from two complex components.
    #[inline]
    pub fn new(a: Complex64, b: Complex64) -> Self {
        C2([a, b])
    }

    /// Builds a real vector.
    #[inline]
    pub fn real(a: f64, b: f64) -> Self {
        C2([c(a, 0.0), c(b, 0.0)])
    }

    /// Builds `x + i y` from real and imaginary parts.
    #[inline]
    pub fn from_parts(x: [f64; 2], y: [f64; 2]) -> Self {
        C2([c(x[0], y[0]), c(x[1], y[1])])
    }

    /// Real parts.
    #[inline]
    pub fn re(&self) -> [f64; 2] {
        [self.0[0].re, self.0[1].re]
    }

    /// Imaginary parts.
    #[inline]
    pub fn im(&self) -> [f64; 2] {
        [self.0[0].im, self.0[1].im]
    }

    /// Multiplication by `i`.
    #[inline]
    pub fn j(&self) -> Self {
        C2([I * self.0[0], I * self.0[1]])
    }

    /// Multiplication by a complex scalar.
    #[inline]
    pub fn cscale(&self, s: Complex64) -> Self {
        C2([s * self.0[0], s * self.0[1]])
    }

    /// Hermitian product `<self, b>`.
    #[inline]
    pub fn herm(&self, b: &C2) -> Complex64 {
        self.0[0].conj() * b.0[0] + self.0[1].conj() * b.0[1]
    }

    /// Euclidean inner product `Re <self, b>`.
    #[inline]
    pub fn dot(&self, b: &C2) -> f64 {
        self.0[0].re * b.0[0].re
            + self.0[0].im * b.0[0].im
            + self.0[1].re * b.0[1].re
            + self.0[1].im * b.0[1].im
    }

    /// Symplectic pairing `Im <self, b>`.
    #[inline]
    pub fn omega(&self, b: &C2) -> f64 {
        self.0[0].re * b.0[0].im - self.0[0].im * b.0[0].re + self.0[1].re * b.0[1].im
            - self.0[1].im * b.0[1].re
    }

    /// Squared Euclidean norm.
    #[inline]
    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }

    /// Euclidean norm.
    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Complex determinant `dz1 ^ dz2 (self, b)`.
    #[inline]
    pub fn det(&self, b: &C2) -> Complex64 {
        self.0[0] * b.0[1] - self.0[1] * b.0[0]
    }

    /// Coordinates as four reals `(x1, x2, y1, y2)`.
    #[inline]
    pub fn to_real4(&self) -> [f64; 4] {
        [self.0[0].re, self.0[1].re, self.0[0].im, self.0[1].im]
    }

    /// Inverse of [`C2::to_real4`].
    #[inline]
    pub fn from_real4(v: [f64; 4]) -> Self {
        C2([c(v[0], v[2]), c(v[1], v[3])])
    }

    /// Components as a slice, for the n-generic ambient interface.
    #[inline]
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    /// True when every component is finite.
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<usize> for C2 {
    type Output = Complex64;
    #[inline]
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for C2 {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.0[i]
    }
}

impl Add for C2 {
    type Output = C2;
    #[inline]
    fn add(self, b: C2) -> C2 {
        C2([self.0[0] + b.0[0], self.0[1] + b.0[1]])
    }
}

impl Sub for C2 {
    type Output = C2;
    #[inline]
    fn sub(self, b: C2) -> C2 {
        C2([self.0[0] - b.0[0], self.0[1] - b.0[1]])
    }
}

impl Neg for C2 {
    type Output = C2;
    #[inline]
    fn neg(self) -> C2 {
        C2([-self.0[0], -self.0[1]])
    }
}

impl Mul<f64> for C2 {
    type Output = C2;
    #[inline]
    fn mul(self, s: f64) -> C2 {
        C2([self.0[0] * s, self.0[1] * s])
    }
}

impl Mul<C2> for f64 {
    type Output = C2;
    #[inline]
    fn mul(self, v: C2) -> C2 {
        v * self
    }
}

impl AddAssign for C2 {
    #[inline]
    fn add_assign(&mut self, b: C2) {
        self.0[0] += b.0[0];
        self.0[1] += b.0[1];
    }
}

impl SubAssign for C2 {
    #[inline]
    fn sub_assign(&mut self, b: C2) {
        self.0[0] -= b.0[0];
        self.0[1] -= b.0[1];
    }
}

/// Values that form a real vector space, so splines and integrators can be
/// written once for scalars, complex numbers and points of C^2.
pub trait Linear:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Default
{
}

impl Linear for f64 {}
impl Linear for Complex64 {}
impl Linear for C2 {}

/// Euclidean norm for [`Linear`] values, used by convergence checks.
pub trait Norm {
    /// Euclidean norm of the value.
    fn norm_l2(&self) -> f64;
}

impl Norm for f64 {
    fn norm_l2(&self) -> f64 {
        self.abs()
    }
}

impl Norm for Complex64 {
    fn norm_l2(&self) -> f64 {
        self.norm()
    }
}

impl Norm for C2 {
    fn norm_l2(&self) -> f64 {
        self.norm()
    }
}

/// Inverse of a symmetric 2x2 matrix `[[a, b], [b, d]]`, with its determinant.
#[inline]
pub fn inv_sym2(a: f64, b: f64, d: f64) -> ([f64; 3], f64) {
    let det = a * d - b * b;
    ([d / det, -b / det, a / det], det)
}

/// Solves a dense `n x n` real system by Gaussian elimination with partial
/// pivoting. Returns `None` for a numerically singular matrix.
pub fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s -= a[r * n + k] * x[k];
        }
        x[r] = s / a[r * n + r];
    }
    Some(x)
}

/// Wraps an angle to `(-pi, pi]`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut x = a % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Gram-Schmidt orthonormal basis (for the Euclidean metric) of the real span
/// of two vectors of C^2. Returns `None` when they are dependent.
pub fn orthonormal_pair(a: &C2, b: &C2) -> Option<(C2, C2)> {
    let na = a.norm();
    if na < 1e-300 {
        return None;
    }
    let e1 = *a * (1.0 / na);
    let w = *b - e1 * e1.dot(b);
    let nw = w.norm();
    if nw < 1e-12 * b.norm().max(1e-300) {
        return None;
    }
    Some((e1, w * (1.0 / nw)))
}

/// Component of `v` orthogonal to the real span of `(a, b)`.
pub fn reject_from_plane(v: &C2, a: &C2, b: &C2) -> Option<C2> {
    let (e1, e2) = orthonormal_pair(a, b)?;
    Some(*v - e1 * e1.dot(v) - e2 * e2.dot(v))
}

/// Principal angles between two real 2-planes of C^2 spanned by `(a0, a1)` and
/// `(b0, b1)`, smallest first.
pub fn principal_angles(a0: &C2, a1: &C2, b0: &C2, b1: &C2) -> Option<[f64; 2]> {
    let (u0, u1) = orthonormal_pair(a0, a1)?;
    let (v0, v1) = orthonormal_pair(b0, b1)?;
    let m = [u0.dot(&v0), u0.dot(&v1), u1.dot(&v0), u1.dot(&v1)];
    // Singular values of the 2x2 matrix of cosines.
    let (s_max, s_min) = singular_values2(m);
    let clamp = |x: f64| x.clamp(-1.0, 1.0);
    Some([clamp(s_max).acos(), clamp(s_min).acos()])
}

/// Singular values `(max, min)` of a row-major 2x2 real matrix.
pub fn singular_values2(m: [f64; 4]) -> (f64, f64) {
    let [a, b, cc, d] = m;
    let s1 = a * a + b * b + cc * cc + d * d;
    let det = a * d - b * cc;
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    let smax = ((s1 + disc) / 2.0).max(0.0).sqrt();
    let smin = ((s1 - disc) / 2.0).max(0.0).sqrt();
    (smax, smin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairings_follow_conventions() {
        let e1 = C2::real(1.0, 0.0);
        assert_eq!(e1.omega(&e1.j()), 1.0);
        assert_eq!(e1.dot(&e1.j()), 0.0);
        let a = C2::new(c(0.3, -1.2), c(2.0, 0.5));
        let b = C2::new(c(-0.7, 0.4), c(0.1, 1.5));
        assert!((a.omega(&b.j()) - a.dot(&b)).abs() < 1e-15);
        assert!((a.omega(&b) + b.omega(&a)).abs() < 1e-15);
        let h = a.herm(&b);
        assert!((h.re - a.dot(&b)).abs() < 1e-15);
        assert!((h.im - a.omega(&b)).abs() < 1e-15);
    }

    #[test]
    fn dense_solver_matches_known_solution() {
        let a = vec![2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let x = [1.0, -2.0, 0.5];
        let b = (0..3).map(|r| (0..3).map(|k| a[r * 3 + k] * x[k]).sum()).collect();
        let got = solve_dense(a, b, 3).unwrap();
        for k in 0..3 {
            assert!((got[k] - x[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn principal_angles_of_rotated_planes() {
        let e1 = C2::real(1.0, 0.0);
        let e2 = C2::real(0.0, 1.0);
        let ang = principal_angles(&e1, &e2, &e1.cscale(c(0.0, 0.3).exp()), &e2).unwrap();
        assert!(ang[0].abs() < 1e-7);
        assert!((ang[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }
}
