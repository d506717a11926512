//! Structured parameter grids for discs and segments, with fourth-order
//! finite-difference derivative operators.
//!
//! A [`PolarGrid`] stores `(R + 1) x M` samples in ring-major order: ring 0 is
//! the pole, replicated at every angle, and ring `j` sits at radius
//! `j * rho_max / R`. Radial derivatives use the reflection
//! `f(-rho, phi) = f(rho, phi + pi)` through the pole, so `M` must be even.

use crate::geom::Linear;
use crate::spline::{Axis, EndCondition, SlopeOperator, Spline1, Spline2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Polar parameter grid of a disc of radius `rho_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarGrid {
    /// Number of angles (even).
    pub m: usize,
    /// Number of rings beyond the pole.
    pub r: usize,
    /// Radius in hundred-thousandths, so the grid stays `Eq`.
    rho_max_e5: u64,
}

impl PolarGrid {
    /// A grid with `m` angles (even, at least 8) and `r` rings (at least 4).
    pub fn new(m: usize, r: usize, rho_max: f64) -> Self {
        assert!(m % 2 == 0 && m >= 8, "polar grid needs an even number of angles >= 8");
        assert!(r >= 4, "polar grid needs at least 4 rings");
        PolarGrid { m, r, rho_max_e5: (rho_max * 1e5).round() as u64 }
    }

    /// Disc radius.
    pub fn rho_max(&self) -> f64 {
        self.rho_max_e5 as f64 * 1e-5
    }

    /// Number of stored samples, `(r + 1) m`.
    pub fn len(&self) -> usize {
        (self.r + 1) * self.m
    }

    /// Always false.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Storage index of ring `j`, angle `k`.
    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        j * self.m + k
    }

    /// Ring spacing.
    pub fn dr(&self) -> f64 {
        self.rho_max() / self.r as f64
    }

    /// Angle spacing.
    pub fn dphi(&self) -> f64 {
        2.0 * PI / self.m as f64
    }

    /// Radius of ring `j`.
    pub fn rho(&self, j: usize) -> f64 {
        j as f64 * self.dr()
    }

    /// Angle of spoke `k`.
    pub fn phi(&self, k: usize) -> f64 {
        k as f64 * self.dphi()
    }

    /// Cartesian parameter of sample `(j, k)`.
    pub fn xi(&self, j: usize, k: usize) -> [f64; 2] {
        let (r, p) = (self.rho(j), self.phi(k));
        [r * p.cos(), r * p.sin()]
    }

    /// Angular derivative (zero on the pole ring).
    pub fn d_phi<T: Linear>(&self, f: &[T]) -> Vec<T> {
        let (m, h) = (self.m, self.dphi());
        let mut out = vec![T::default(); self.len()];
        for j in 1..=self.r {
            let row = &f[j * m..(j + 1) * m];
            for k in 0..m {
                let at = |o: isize| row[((k as isize + o).rem_euclid(m as isize)) as usize];
                out[j * m + k] =
                    (at(-2) - at(2) + (at(1) - at(-1)) * 8.0) * (1.0 / (12.0 * h));
            }
        }
        out
    }

    /// Value on the double-cover line through the pole at signed ring index
    /// `s` in `-r..=r` along spoke `k`.
    #[inline]
    pub fn line_value<T: Linear>(&self, f: &[T], k: usize, s: isize) -> T {
        if s >= 0 {
            f[self.index(s as usize, k)]
        } else {
            f[self.index((-s) as usize, (k + self.m / 2) % self.m)]
        }
    }

    /// Radial derivative. On the pole ring, entry `k` is the derivative along
    /// the direction of spoke `k`.
    pub fn d_rho<T: Linear>(&self, f: &[T]) -> Vec<T> {
        let (m, r, h) = (self.m, self.r, self.dr());
        let mut out = vec![T::default(); self.len()];
        let inv = 1.0 / (12.0 * h);
        for k in 0..m {
            let v = |s: isize| self.line_value(f, k, s);
            for j in 0..=r {
                let js = j as isize;
                out[j * m + k] = if j + 2 <= r {
                    (v(js - 2) - v(js + 2) + (v(js + 1) - v(js - 1)) * 8.0) * inv
                } else if j + 1 == r {
                    (v(js + 1) * 3.0 + v(js) * 10.0 - v(js - 1) * 18.0 + v(js - 2) * 6.0 - v(js - 3))
                        * inv
                } else {
                    (v(js) * 25.0 - v(js - 1) * 48.0 + v(js - 2) * 36.0 - v(js - 3) * 16.0
                        + v(js - 4) * 3.0)
                        * inv
                };
            }
        }
        out
    }

    /// Axis of the double-cover radial line, `rho` in `[-rho_max, rho_max]`.
    pub fn line_axis(&self) -> Axis {
        Axis {
            origin: -self.rho_max(),
            h: self.dr(),
            n: 2 * self.r + 1,
            kind: EndCondition::NotAKnot,
        }
    }

    /// Axis of the periodic angle.
    pub fn angle_axis(&self) -> Axis {
        Axis { origin: 0.0, h: self.dphi(), n: self.m, kind: EndCondition::Periodic }
    }

    /// Cubic spline through the double-cover line along spoke `k`.
    pub fn line_spline<T: Linear>(&self, f: &[T], k: usize, op: &SlopeOperator) -> Spline1<T> {
        let r = self.r as isize;
        let vals: Vec<T> = (-r..=r).map(|s| self.line_value(f, k, s)).collect();
        Spline1::with_operator(self.line_axis(), op, vals)
    }

    /// Slope operator for double-cover lines.
    pub fn line_operator(&self) -> SlopeOperator {
        SlopeOperator::new(2 * self.r + 1, self.dr(), EndCondition::NotAKnot)
    }

    /// Tensor spline of the samples over `(phi, rho)` on the double cover.
    pub fn tensor_spline<T: Linear>(&self, f: &[T]) -> Spline2<T> {
        let (m, r) = (self.m, self.r as isize);
        let n1 = 2 * self.r + 1;
        let mut vals = vec![T::default(); m * n1];
        for (i1, s) in (-r..=r).enumerate() {
            for k in 0..m {
                vals[i1 * m + k] = self.line_value(f, k, s);
            }
        }
        Spline2::new(self.angle_axis(), self.line_axis(), vals)
    }

    /// Samples a function of the Cartesian parameter on the grid.
    pub fn sample<T: Linear>(&self, f: impl Fn([f64; 2]) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..=self.r {
            for k in 0..self.m {
                out.push(f(self.xi(j, k)));
            }
        }
        out
    }
}

/// Uniform grid on a segment `[x0, x1]` with `n + 1` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineGrid {
    /// Left end.
    pub x0: f64,
    /// Right end.
    pub x1: f64,
    /// Number of intervals (at least 4).
    pub n: usize,
}

impl LineGrid {
    /// Node spacing.
    pub fn h(&self) -> f64 {
        (self.x1 - self.x0) / self.n as f64
    }

    /// Node coordinate.
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + self.h() * i as f64
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.n + 1
    }

    /// Always false.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Fourth-order derivative with one-sided stencils at the ends.
    pub fn d<T: Linear>(&self, f: &[T]) -> Vec<T> {
        assert!(self.n >= 4);
        let n = self.n;
        let inv = 1.0 / (12.0 * self.h());
        (0..=n)
            .map(|i| {
                if i >= 2 && i + 2 <= n {
                    (f[i - 2] - f[i + 2] + (f[i + 1] - f[i - 1]) * 8.0) * inv
                } else if i == 1 {
                    (f[0] * -3.0 - f[1] * 10.0 + f[2] * 18.0 - f[3] * 6.0 + f[4]) * inv
                } else if i == 0 {
                    (f[0] * -25.0 + f[1] * 48.0 - f[2] * 36.0 + f[3] * 16.0 - f[4] * 3.0) * inv
                } else if i + 1 == n {
                    (f[n] * 3.0 + f[n - 1] * 10.0 - f[n - 2] * 18.0 + f[n - 3] * 6.0 - f[n - 4]) * inv
                } else {
                    (f[n] * 25.0 - f[n - 1] * 48.0 + f[n - 2] * 36.0 - f[n - 3] * 16.0
                        + f[n - 4] * 3.0)
                        * inv
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_derivatives_of_smooth_function() {
        let f = |x: [f64; 2]| (0.7 * x[0] - 0.3 * x[1]).sin() + x[0] * x[1] * x[1];
        let dfx = |x: [f64; 2]| 0.7 * (0.7 * x[0] - 0.3 * x[1]).cos() + x[1] * x[1];
        let dfy = |x: [f64; 2]| -0.3 * (0.7 * x[0] - 0.3 * x[1]).cos() + 2.0 * x[0] * x[1];
        let err = |m: usize, r: usize| {
            let g = PolarGrid::new(m, r, 1.0);
            let v = g.sample(f);
            let dr = g.d_rho(&v);
            let dp = g.d_phi(&v);
            let mut worst = 0.0f64;
            for j in 0..=g.r {
                for k in 0..g.m {
                    let x = g.xi(j, k);
                    let p = g.phi(k);
                    let (c, s) = (p.cos(), p.sin());
                    let er = dfx(x) * c + dfy(x) * s;
                    let ep = g.rho(j) * (-dfx(x) * s + dfy(x) * c);
                    worst = worst.max((dr[g.index(j, k)] - er).abs());
                    worst = worst.max((dp[g.index(j, k)] - ep).abs());
                }
            }
            worst
        };
        let (e1, e2) = (err(32, 16), err(64, 32));
        assert!(e2 < 3e-4, "{e2}");
        assert!(e1 / e2 > 12.0, "{}", e1 / e2);
    }

    #[test]
    fn line_derivative_is_exact_for_quartics() {
        let g = LineGrid { x0: -1.0, x1: 2.0, n: 12 };
        let f: Vec<f64> = (0..=12).map(|i| g.x(i).powi(4) - g.x(i)).collect();
        let d = g.d(&f);
        for i in 0..=12 {
            assert!((d[i] - (4.0 * g.x(i).powi(3) - 1.0)).abs() < 1e-10);
        }
    }
}
