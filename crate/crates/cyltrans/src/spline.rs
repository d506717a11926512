//! Cubic splines on uniform grids: interpolation (periodic and not-a-knot),
//! tensor-product evaluation, and B-spline bases for Galerkin discretizations.
//!
//! Interpolating splines are stored in Hermite form (nodal values and nodal
//! slopes). For a tensor-product interpolant the nodal slopes along each axis
//! and the mixed slopes are obtained by applying the one-dimensional slope
//! operators in sequence, which reproduces the tensor spline exactly.

use crate::geom::Linear;

/// Gauss-Legendre rule on `[0, 1]` with `n` points (`n` in 1..=4).
pub fn gauss01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (0.6f64).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        _ => panic!("gauss01 supports 1 to 4 points"),
    };
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|t| 0.5 * t).collect(),
    )
}

/// End conditions of a one-dimensional interpolating spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndCondition {
    /// Periodic with period `n h`.
    Periodic,
    /// Third derivative continuous at the second and second-to-last nodes.
    NotAKnot,
}

/// Linear map from nodal values to nodal slopes of the interpolating cubic
/// spline on a uniform grid.
#[derive(Debug, Clone)]
pub struct SlopeOperator {
    n: usize,
    h: f64,
    kind: EndCondition,
    mat: Vec<f64>,
}

impl SlopeOperator {
    /// Builds the operator for `n` nodes with spacing `h`.
    ///
    /// Not-a-knot needs at least 4 nodes, periodic at least 3.
    pub fn new(n: usize, h: f64, kind: EndCondition) -> Self {
        match kind {
            EndCondition::Periodic => assert!(n >= 3, "periodic spline needs 3 nodes"),
            EndCondition::NotAKnot => assert!(n >= 4, "not-a-knot spline needs 4 nodes"),
        }
        // System A m = B y; the operator is A^{-1} B.
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n * n];
        match kind {
            EndCondition::Periodic => {
                for i in 0..n {
                    let ip = (i + 1) % n;
                    let im = (i + n - 1) % n;
                    a[i * n + im] += 1.0;
                    a[i * n + i] += 4.0;
                    a[i * n + ip] += 1.0;
                    b[i * n + ip] += 3.0 / h;
                    b[i * n + im] -= 3.0 / h;
                }
            }
            EndCondition::NotAKnot => {
                for i in 1..n - 1 {
                    a[i * n + i - 1] = 1.0;
                    a[i * n + i] = 4.0;
                    a[i * n + i + 1] = 1.0;
                    b[i * n + i + 1] = 3.0 / h;
                    b[i * n + i - 1] = -3.0 / h;
                }
                // m2 - m0 = 2 (y0 - 2 y1 + y2) / h
                a[2] = 1.0;
                a[0] = -1.0;
                b[0] = 2.0 / h;
                b[1] = -4.0 / h;
                b[2] = 2.0 / h;
                // m_{n-1} - m_{n-3} = 2 (y_{n-3} - 2 y_{n-2} + y_{n-1}) / h
                let r = (n - 1) * n;
                a[r + n - 1] = 1.0;
                a[r + n - 3] = -1.0;
                b[r + n - 3] = 2.0 / h;
                b[r + n - 2] = -4.0 / h;
                b[r + n - 1] = 2.0 / h;
            }
        }
        let mut mat = vec![0.0; n * n];
        for col in 0..n {
            let rhs: Vec<f64> = (0..n).map(|r| b[r * n + col]).collect();
            let sol = crate::geom::solve_dense(a.clone(), rhs, n)
                .expect("spline slope system is nonsingular");
            for r in 0..n {
                mat[r * n + col] = sol[r];
            }
        }
        SlopeOperator { n, h, kind, mat }
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.n
    }

    /// Always false; operators have at least three nodes.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// End condition.
    pub fn kind(&self) -> EndCondition {
        self.kind
    }

    /// Slopes of the interpolant through `y`.
    pub fn apply<T: Linear>(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.n);
        let n = self.n;
        (0..n)
            .map(|r| {
                let row = &self.mat[r * n..(r + 1) * n];
                let mut acc = T::default();
                for (k, yk) in y.iter().enumerate() {
                    if row[k] != 0.0 {
                        acc = acc + *yk * row[k];
                    }
                }
                acc
            })
            .collect()
    }

    /// Slopes of the interpolant through the strided values `y[off + k * stride]`.
    pub fn apply_strided<T: Linear>(&self, y: &[T], off: usize, stride: usize) -> Vec<T> {
        let v: Vec<T> = (0..self.n).map(|k| y[off + k * stride]).collect();
        self.apply(&v)
    }
}

/// Cubic Hermite basis on `[0, 1]`: values and first two derivatives in `u`.
#[inline]
pub fn hermite_basis(u: f64) -> [[f64; 4]; 3] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        [2.0 * u3 - 3.0 * u2 + 1.0, u3 - 2.0 * u2 + u, -2.0 * u3 + 3.0 * u2, u3 - u2],
        [6.0 * u2 - 6.0 * u, 3.0 * u2 - 4.0 * u + 1.0, -6.0 * u2 + 6.0 * u, 3.0 * u2 - 2.0 * u],
        [12.0 * u - 6.0, 6.0 * u - 4.0, -12.0 * u + 6.0, 6.0 * u - 2.0],
    ]
}

/// A uniform axis of an interpolation grid.
#[derive(Debug, Clone)]
pub struct Axis {
    /// Coordinate of node 0.
    pub origin: f64,
    /// Node spacing.
    pub h: f64,
    /// Number of nodes.
    pub n: usize,
    /// End condition.
    pub kind: EndCondition,
}

impl Axis {
    /// Interval index and local coordinate in `[0, 1]` of `x`.
    ///
    /// Periodic axes wrap; not-a-knot axes extrapolate from the end intervals.
    pub fn locate(&self, x: f64) -> (usize, usize, f64) {
        let s = (x - self.origin) / self.h;
        match self.kind {
            EndCondition::Periodic => {
                let n = self.n as f64;
                let w = s.rem_euclid(n);
                let mut i = w.floor() as usize;
                if i >= self.n {
                    i = self.n - 1;
                }
                let u = w - i as f64;
                (i, (i + 1) % self.n, u)
            }
            EndCondition::NotAKnot => {
                let mut i = s.floor();
                if i < 0.0 {
                    i = 0.0;
                }
                if i > (self.n - 2) as f64 {
                    i = (self.n - 2) as f64;
                }
                let iu = i as usize;
                (iu, iu + 1, s - i)
            }
        }
    }

    /// Coordinate of node `k`.
    pub fn node(&self, k: usize) -> f64 {
        self.origin + self.h * k as f64
    }
}

/// A one-dimensional interpolating cubic spline of `Linear` values.
#[derive(Debug, Clone)]
pub struct Spline1<T: Linear> {
    axis: Axis,
    values: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Linear> Spline1<T> {
    /// Interpolates `values` on the given axis.
    pub fn new(axis: Axis, values: Vec<T>) -> Self {
        let op = SlopeOperator::new(axis.n, axis.h, axis.kind);
        let slopes = op.apply(&values);
        Spline1 { axis, values, slopes }
    }

    /// Interpolates with a precomputed slope operator.
    pub fn with_operator(axis: Axis, op: &SlopeOperator, values: Vec<T>) -> Self {
        let slopes = op.apply(&values);
        Spline1 { axis, values, slopes }
    }

    /// Value, first and second derivative at `x`.
    pub fn eval(&self, x: f64) -> (T, T, T) {
        let (i0, i1, u) = self.axis.locate(x);
        let b = hermite_basis(u);
        let h = self.axis.h;
        let (y0, y1) = (self.values[i0], self.values[i1]);
        let (m0, m1) = (self.slopes[i0] * h, self.slopes[i1] * h);
        let mut out = [T::default(); 3];
        for (d, o) in out.iter_mut().enumerate() {
            let s = h.powi(-(d as i32));
            *o = (y0 * b[d][0] + m0 * b[d][1] + y1 * b[d][2] + m1 * b[d][3]) * s;
        }
        (out[0], out[1], out[2])
    }

    /// The axis.
    pub fn axis(&self) -> &Axis {
        &self.axis
    }
}

/// Value and derivatives of a tensor spline at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct Jet2<T> {
    /// Value.
    pub v: T,
    /// Derivative along axis 0.
    pub d0: T,
    /// Derivative along axis 1.
    pub d1: T,
    /// Second derivative along axis 0.
    pub d00: T,
    /// Mixed second derivative.
    pub d01: T,
    /// Second derivative along axis 1.
    pub d11: T,
}

/// Tensor-product interpolating cubic spline on a uniform 2D grid. Node
/// `(i0, i1)` is stored at `i1 * n0 + i0` (axis 0 fastest).
#[derive(Debug, Clone)]
pub struct Spline2<T: Linear> {
    ax0: Axis,
    ax1: Axis,
    v: Vec<T>,
    d0: Vec<T>,
    d1: Vec<T>,
    d01: Vec<T>,
}

impl<T: Linear> Spline2<T> {
    /// Interpolates nodal `values` on the grid `ax0 x ax1`.
    pub fn new(ax0: Axis, ax1: Axis, values: Vec<T>) -> Self {
        let op0 = SlopeOperator::new(ax0.n, ax0.h, ax0.kind);
        let op1 = SlopeOperator::new(ax1.n, ax1.h, ax1.kind);
        Self::with_operators(ax0, ax1, &op0, &op1, values)
    }

    /// Interpolates with precomputed slope operators.
    pub fn with_operators(
        ax0: Axis,
        ax1: Axis,
        op0: &SlopeOperator,
        op1: &SlopeOperator,
        values: Vec<T>,
    ) -> Self {
        let (n0, n1) = (ax0.n, ax1.n);
        assert_eq!(values.len(), n0 * n1);
        let along0 = |src: &[T]| {
            let mut out = vec![T::default(); n0 * n1];
            for i1 in 0..n1 {
                let s = op0.apply(&src[i1 * n0..(i1 + 1) * n0]);
                out[i1 * n0..(i1 + 1) * n0].copy_from_slice(&s);
            }
            out
        };
        let along1 = |src: &[T]| {
            let mut out = vec![T::default(); n0 * n1];
            for i0 in 0..n0 {
                let s = op1.apply_strided(src, i0, n0);
                for (i1, val) in s.into_iter().enumerate() {
                    out[i1 * n0 + i0] = val;
                }
            }
            out
        };
        let d0 = along0(&values);
        let d1 = along1(&values);
        let d01 = along1(&d0);
        Spline2 { ax0, ax1, v: values, d0, d1, d01 }
    }

    /// Axis 0.
    pub fn axis0(&self) -> &Axis {
        &self.ax0
    }

    /// Axis 1.
    pub fn axis1(&self) -> &Axis {
        &self.ax1
    }

    /// Nodal values.
    pub fn values(&self) -> &[T] {
        &self.v
    }

    /// Value and derivatives up to second order at `(x0, x1)`.
    pub fn eval(&self, x0: f64, x1: f64) -> Jet2<T> {
        let (a0, a1, u) = self.ax0.locate(x0);
        let (b0, b1, w) = self.ax1.locate(x1);
        let (h0, h1) = (self.ax0.h, self.ax1.h);
        let bu = hermite_basis(u);
        let bw = hermite_basis(w);
        let n0 = self.ax0.n;
        let idx = [[b0 * n0 + a0, b0 * n0 + a1], [b1 * n0 + a0, b1 * n0 + a1]];
        // Coefficient for basis pair (p in axis 0, q in axis 1), with p, q in
        // {value0, slope0, value1, slope1}.
        let coef = |p: usize, q: usize| -> T {
            let ia = p / 2;
            let ib = q / 2;
            let node = idx[ib][ia];
            match (p % 2, q % 2) {
                (0, 0) => self.v[node],
                (1, 0) => self.d0[node] * h0,
                (0, 1) => self.d1[node] * h1,
                _ => self.d01[node] * (h0 * h1),
            }
        };
        let mut acc = [[T::default(); 3]; 3];
        for p in 0..4 {
            for q in 0..4 {
                let cpq = coef(p, q);
                for (du, row) in acc.iter_mut().enumerate() {
                    for (dw, cell) in row.iter_mut().enumerate() {
                        if du + dw <= 2 {
                            *cell = *cell + cpq * (bu[du][p] * bw[dw][q]);
                        }
                    }
                }
            }
        }
        Jet2 {
            v: acc[0][0],
            d0: acc[1][0] * (1.0 / h0),
            d1: acc[0][1] * (1.0 / h1),
            d00: acc[2][0] * (1.0 / (h0 * h0)),
            d01: acc[1][1] * (1.0 / (h0 * h1)),
            d11: acc[0][2] * (1.0 / (h1 * h1)),
        }
    }
}

/// Values and first derivatives of the four periodic uniform cubic B-splines
/// that are nonzero on an interval, at local coordinate `u`, ordered by basis
/// index `e - 1, e, e + 1, e + 2`. Derivatives are with respect to `u`.
#[inline]
pub fn periodic_bspline(u: f64) -> ([f64; 4], [f64; 4]) {
    let u2 = u * u;
    let u3 = u2 * u;
    let om = 1.0 - u;
    (
        [
            om * om * om / 6.0,
            (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
            (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
            u3 / 6.0,
        ],
        [
            -om * om / 2.0,
            (9.0 * u2 - 12.0 * u) / 6.0,
            (-9.0 * u2 + 6.0 * u + 3.0) / 6.0,
            u2 / 2.0,
        ],
    )
}

/// Clamped uniform cubic B-spline basis on `[0, 1]` with `k` intervals
/// (`k + 3` functions).
#[derive(Debug, Clone)]
pub struct ClampedBasis {
    k: usize,
    knots: Vec<f64>,
}

impl ClampedBasis {
    /// Basis with `k >= 1` uniform intervals.
    pub fn new(k: usize) -> Self {
        assert!(k >= 1);
        let mut knots = vec![0.0; 3];
        for i in 0..=k {
            knots.push(i as f64 / k as f64);
        }
        knots.extend([1.0; 3]);
        ClampedBasis { k, knots }
    }

    /// Number of intervals.
    pub fn intervals(&self) -> usize {
        self.k
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.k + 3
    }

    /// Greville abscissae: the coefficients reproducing the identity `t`.
    pub fn greville(&self) -> Vec<f64> {
        (0..self.len()).map(|j| (self.knots[j + 1] + self.knots[j + 2] + self.knots[j + 3]) / 3.0).collect()
    }

    /// Always false.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Values and first derivatives (in `t`) of the functions
    /// `e, e + 1, e + 2, e + 3` nonzero on interval `e`, at `t` in that interval.
    pub fn eval(&self, e: usize, t: f64) -> ([f64; 4], [f64; 4]) {
        let span = e + 3;
        let p = 3;
        let kn = &self.knots;
        // Cox-de Boor triangle (values of degree 0..p), then derivatives.
        let mut ndu = [[0.0f64; 4]; 4];
        let mut left = [0.0f64; 4];
        let mut right = [0.0f64; 4];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - kn[span + 1 - j];
            right[j] = kn[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut vals = [0.0; 4];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = ndu[j][p];
        }
        // First derivative: p * (N_{i,p-1} / (u_{i+p} - u_i) - N_{i+1,p-1} / (u_{i+p+1} - u_{i+1})).
        let mut ders = [0.0; 4];
        for (r, d) in ders.iter_mut().enumerate() {
            let i = span - p + r;
            let mut acc = 0.0;
            // N_{i, p-1} is ndu[r-1][p-1] (nonzero lower-degree functions are i..span at degree p-1).
            if r >= 1 {
                let den = kn[i + p] - kn[i];
                if den > 0.0 {
                    acc += ndu[r - 1][p - 1] / den;
                }
            }
            if r < p {
                let den = kn[i + p + 1] - kn[i + 1];
                if den > 0.0 {
                    acc -= ndu[r][p - 1] / den;
                }
            }
            *d = p as f64 * acc;
        }
        (vals, ders)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..=4 {
            let (x, w) = gauss01(n);
            for deg in 0..2 * n {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((got - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn not_a_knot_reproduces_cubics() {
        let n = 9;
        let h = 0.25;
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.3 * x * x * x;
        let df = |x: f64| -2.0 + x - 0.9 * x * x;
        let ax = Axis { origin: -1.0, h, n, kind: EndCondition::NotAKnot };
        let vals: Vec<f64> = (0..n).map(|k| f(ax.node(k))).collect();
        let s = Spline1::new(ax, vals);
        for x in [-1.0, -0.63, 0.1, 0.77, 1.0] {
            let (v, d, _) = s.eval(x);
            assert!((v - f(x)).abs() < 1e-13);
            assert!((d - df(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_spline_converges_fourth_order() {
        let err = |n: usize| {
            let h = 2.0 * std::f64::consts::PI / n as f64;
            let ax = Axis { origin: 0.0, h, n, kind: EndCondition::Periodic };
            let vals: Vec<f64> = (0..n).map(|k| (ax.node(k)).sin().exp()).collect();
            let s = Spline1::new(ax, vals);
            (0..200)
                .map(|k| {
                    let x = 0.0314 * k as f64;
                    (s.eval(x).0 - x.sin().exp()).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!(ratio > 14.0, "ratio {ratio}");
    }

    #[test]
    fn tensor_spline_reproduces_bicubic() {
        let f = |a: f64, b: f64| 0.5 + a - 2.0 * b + a * b * b - 0.25 * a * a * a * b;
        let ax0 = Axis { origin: 0.0, h: 0.2, n: 6, kind: EndCondition::NotAKnot };
        let ax1 = Axis { origin: -0.5, h: 0.25, n: 5, kind: EndCondition::NotAKnot };
        let mut vals = vec![0.0; 30];
        for i1 in 0..5 {
            for i0 in 0..6 {
                vals[i1 * 6 + i0] = f(ax0.node(i0), ax1.node(i1));
            }
        }
        let s = Spline2::new(ax0, ax1, vals);
        let (a, b) = (0.37, 0.11);
        let j = s.eval(a, b);
        assert!((j.v - f(a, b)).abs() < 1e-13);
        assert!((j.d0 - (1.0 + b * b - 0.75 * a * a * b)).abs() < 1e-12);
        assert!((j.d1 - (-2.0 + 2.0 * a * b - 0.25 * a * a * a)).abs() < 1e-12);
        assert!((j.d01 - (2.0 * b - 0.75 * a * a)).abs() < 1e-11);
    }

    #[test]
    fn clamped_basis_is_partition_of_unity() {
        let b = ClampedBasis::new(5);
        for e in 0..5 {
            for k in 0..7 {
                let t = (e as f64 + k as f64 / 6.0) / 5.0;
                let (v, d) = b.eval(e, t);
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                assert!(d.iter().sum::<f64>().abs() < 1e-12);
            }
        }
        let (v0, _) = b.eval(0, 0.0);
        assert_eq!(v0, [1.0, 0.0, 0.0, 0.0]);
        let (v1, _) = b.eval(4, 1.0);
        assert!((v1[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn greville_coefficients_reproduce_t() {
        let b = ClampedBasis::new(6);
        let g = b.greville();
        for e in 0..6 {
            for q in 0..5 {
                let t = (e as f64 + q as f64 / 4.0) / 6.0;
                let (v, d) = b.eval(e, t);
                let val: f64 = (0..4).map(|r| v[r] * g[e + r]).sum();
                let der: f64 = (0..4).map(|r| d[r] * g[e + r]).sum();
                assert!((val - t).abs() < 1e-14 && (der - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clamped_basis_derivative_matches_difference() {
        let b = ClampedBasis::new(4);
        let e = 1;
        let t = 0.33;
        let h = 1e-6;
        let (_, d) = b.eval(e, t);
        let (vp, _) = b.eval(e, t + h);
        let (vm, _) = b.eval(e, t - h);
        for r in 0..4 {
            assert!((d[r] - (vp[r] - vm[r]) / (2.0 * h)).abs() < 1e-7);
        }
    }

    #[test]
    fn periodic_bspline_partition_and_derivative() {
        for k in 0..=10 {
            let u = k as f64 / 10.0;
            let (v, d) = periodic_bspline(u);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(d.iter().sum::<f64>().abs() < 1e-14);
        }
    }
}
