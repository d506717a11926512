//! Boundary positive Lagrangians: analytic descriptions, tabulated discs,
//! graph perturbations in a tubular chart, and positivity and intersection
//! diagnostics.
//!
//! Every two-dimensional kind exposes a parameter map `f: R^2 -> C^2` with
//! first and second derivatives ([`ParamJet`]). Graph perturbations use the
//! vertical chart of the reference: a parameter `x` and fiber vector `xi`
//! correspond to `f(x) + i (D Re f(x))^{-T} xi`. The graph of an exact form
//! `dh` in this chart is the graph of `d(h o (Re f)^{-1})` over `Re z`, so
//! it is exactly Lagrangian.

use crate::ambient::AmbientStructure;
use crate::error::{Error, Result};
use crate::geom::{c, principal_angles, solve_dense, wrap_angle, C2, I};
use crate::grid::PolarGrid;
use crate::spline::Spline2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

/// A monomial `coeff * x1^p1 * x2^p2` of a real potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    /// Exponents.
    pub powers: [u32; 2],
    /// Coefficient.
    pub coeff: f64,
}

/// Real scalar potentials on a two-dimensional parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Potential {
    /// A polynomial (the empty polynomial is zero).
    Polynomial {
        /// Monomials.
        terms: Vec<PolyTerm>,
    },
    /// `amplitude * (1 - |x - center|^2 / radius^2)^4` inside the disc, zero outside (C3).
    Bump {
        /// Peak value.
        amplitude: f64,
        /// Center.
        center: [f64; 2],
        /// Support radius.
        radius: f64,
    },
    /// Sum of potentials.
    Sum {
        /// Summands.
        parts: Vec<Potential>,
    },
}

impl Potential {
    /// The zero potential.
    pub fn zero() -> Self {
        Potential::Polynomial { terms: vec![] }
    }

    /// A constant.
    pub fn constant(v: f64) -> Self {
        Potential::Polynomial { terms: vec![PolyTerm { powers: [0, 0], coeff: v }] }
    }

    /// `x^T A x / 2` for a symmetric `A`.
    pub fn quadratic(a: [[f64; 2]; 2]) -> Self {
        Potential::Polynomial {
            terms: vec![
                PolyTerm { powers: [2, 0], coeff: 0.5 * a[0][0] },
                PolyTerm { powers: [1, 1], coeff: 0.5 * (a[0][1] + a[1][0]) },
                PolyTerm { powers: [0, 2], coeff: 0.5 * a[1][1] },
            ],
        }
    }

    /// `k * (x1^3 / 3 - x1 x2^2)`, a harmonic cubic.
    pub fn harmonic_cubic(k: f64) -> Self {
        Potential::Polynomial {
            terms: vec![
                PolyTerm { powers: [3, 0], coeff: k / 3.0 },
                PolyTerm { powers: [1, 2], coeff: -k },
            ],
        }
    }

    /// The potential multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        match self {
            Potential::Polynomial { terms } => Potential::Polynomial {
                terms: terms
                    .iter()
                    .map(|t| PolyTerm { powers: t.powers, coeff: t.coeff * s })
                    .collect(),
            },
            Potential::Bump { amplitude, center, radius } => {
                Potential::Bump { amplitude: amplitude * s, center: *center, radius: *radius }
            }
            Potential::Sum { parts } => {
                Potential::Sum { parts: parts.iter().map(|p| p.scaled(s)).collect() }
            }
        }
    }

    /// True when the differential vanishes identically (structurally).
    pub fn is_locally_constant(&self) -> bool {
        match self {
            Potential::Polynomial { terms } => {
                terms.iter().all(|t| t.coeff == 0.0 || t.powers == [0, 0])
            }
            Potential::Bump { amplitude, .. } => *amplitude == 0.0,
            Potential::Sum { parts } => parts.iter().all(|p| p.is_locally_constant()),
        }
    }

    /// Value, gradient and Hessian at `x`.
    pub fn eval(&self, x: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
        match self {
            Potential::Polynomial { terms } => {
                let mut v = 0.0;
                let mut g = [0.0; 2];
                let mut h = [[0.0; 2]; 2];
                let pw = |b: f64, p: i64| if p < 0 { 0.0 } else { b.powi(p as i32) };
                for t in terms {
                    let (p, q) = (t.powers[0] as i64, t.powers[1] as i64);
                    let (pf, qf) = (p as f64, q as f64);
                    v += t.coeff * pw(x[0], p) * pw(x[1], q);
                    g[0] += t.coeff * pf * pw(x[0], p - 1) * pw(x[1], q);
                    g[1] += t.coeff * qf * pw(x[0], p) * pw(x[1], q - 1);
                    h[0][0] += t.coeff * pf * (pf - 1.0) * pw(x[0], p - 2) * pw(x[1], q);
                    h[1][1] += t.coeff * qf * (qf - 1.0) * pw(x[0], p) * pw(x[1], q - 2);
                    let m = t.coeff * pf * qf * pw(x[0], p - 1) * pw(x[1], q - 1);
                    h[0][1] += m;
                    h[1][0] += m;
                }
                (v, g, h)
            }
            Potential::Bump { amplitude, center, radius } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                let r2 = radius * radius;
                let q = (d[0] * d[0] + d[1] * d[1]) / r2;
                if q >= 1.0 {
                    return (0.0, [0.0; 2], [[0.0; 2]; 2]);
                }
                let w = 1.0 - q;
                let v = amplitude * w.powi(4);
                let gcoef = amplitude * 4.0 * w.powi(3) * (-2.0 / r2);
                let g = [gcoef * d[0], gcoef * d[1]];
                let a = amplitude * 12.0 * w * w * 4.0 / (r2 * r2);
                let mut h = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        h[i][j] = a * d[i] * d[j] + if i == j { gcoef } else { 0.0 };
                    }
                }
                (v, g, h)
            }
            Potential::Sum { parts } => {
                let mut acc = (0.0, [0.0; 2], [[0.0; 2]; 2]);
                for p in parts {
                    let (v, g, h) = p.eval(x);
                    acc.0 += v;
                    for i in 0..2 {
                        acc.1[i] += g[i];
                        for j in 0..2 {
                            acc.2[i][j] += h[i][j];
                        }
                    }
                }
                acc
            }
        }
    }

    /// Sup over the sample points of `max(|h|, |grad h|, |Hess h|)` (Frobenius).
    pub fn c2_norm(&self, samples: &[[f64; 2]]) -> f64 {
        samples
            .iter()
            .map(|x| {
                let (v, g, h) = self.eval(*x);
                let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
                let hn = (h[0][0].powi(2) + h[0][1].powi(2) + h[1][0].powi(2) + h[1][1].powi(2))
                    .sqrt();
                v.abs().max(gn).max(hn)
            })
            .fold(0.0, f64::max)
    }
}

/// Odd-profile plane curves `gamma: [-1, 1] -> C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Profile {
    /// `sum coeffs[k] s^k`.
    Polynomial {
        /// Coefficients by degree.
        coeffs: Vec<Complex64>,
    },
    /// `s exp(i alpha s)`.
    Twisted {
        /// Twist rate.
        alpha: f64,
    },
}

impl Profile {
    /// `gamma(s)` and `gamma'(s)`.
    pub fn eval(&self, s: f64) -> (Complex64, Complex64) {
        match self {
            Profile::Polynomial { coeffs } => {
                let mut v = c(0.0, 0.0);
                let mut d = c(0.0, 0.0);
                for (k, a) in coeffs.iter().enumerate() {
                    v += a * s.powi(k as i32);
                    if k > 0 {
                        d += a * (k as f64) * s.powi(k as i32 - 1);
                    }
                }
                (v, d)
            }
            Profile::Twisted { alpha } => {
                let e = (I * (alpha * s)).exp();
                (e * s, e * (1.0 + I * (alpha * s)))
            }
        }
    }
}

/// Value, first and second parameter derivatives of a parameter map.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParamJet {
    /// `f(x)`.
    pub v: C2,
    /// `df/dx_k`.
    pub d: [C2; 2],
    /// `d^2 f / dx_k dx_l`.
    pub dd: [[C2; 2]; 2],
}

/// A disc tabulated on a polar grid, interpolated by a tensor cubic spline on
/// the double cover through the pole. Parameters are Cartesian
/// `xi = rho (cos phi, sin phi)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolarPatch {
    /// The grid.
    pub grid: PolarGrid,
    /// Samples in grid storage order.
    pub nodes: Vec<C2>,
    #[serde(skip)]
    spline: OnceLock<Spline2<C2>>,
}

impl PartialEq for PolarPatch {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.nodes == other.nodes
    }
}

impl PolarPatch {
    /// Tabulated patch from grid samples.
    pub fn new(grid: PolarGrid, nodes: Vec<C2>) -> Self {
        assert_eq!(nodes.len(), grid.len());
        PolarPatch { grid, nodes, spline: OnceLock::new() }
    }

    fn spline(&self) -> &Spline2<C2> {
        self.spline.get_or_init(|| self.grid.tensor_spline(&self.nodes))
    }

    /// Evaluates the spline in polar parameters `(phi, rho)`.
    pub fn eval_polar(&self, phi: f64, rho: f64) -> crate::spline::Jet2<C2> {
        self.spline().eval(phi, rho)
    }

    /// Value and Cartesian first derivatives.
    pub fn first(&self, x: [f64; 2]) -> (C2, [C2; 2]) {
        let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let tiny = 1e-9 * self.grid.rho_max();
        if rho < tiny {
            let a = self.eval_polar(0.0, 0.0);
            let b = self.eval_polar(FRAC_PI_2, 0.0);
            return (a.v, [a.d1, b.d1]);
        }
        let phi = x[1].atan2(x[0]);
        let j = self.eval_polar(phi, rho);
        let (cp, sp) = (x[0] / rho, x[1] / rho);
        // d/dxi1 = cos f_rho - sin f_phi / rho ; d/dxi2 = sin f_rho + cos f_phi / rho
        let d0 = j.d1 * cp - j.d0 * (sp / rho);
        let d1 = j.d1 * sp + j.d0 * (cp / rho);
        (j.v, [d0, d1])
    }

    /// Full jet; second derivatives by central differences of the first.
    pub fn jet(&self, x: [f64; 2]) -> ParamJet {
        let (v, d) = self.first(x);
        let h = 1e-5 * self.grid.rho_max();
        let mut dd = [[C2::ZERO; 2]; 2];
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let (_, dp) = self.first(xp);
            let (_, dm) = self.first(xm);
            for l in 0..2 {
                dd[k][l] = (dp[l] - dm[l]) * (0.5 / h);
            }
        }
        // Symmetrize.
        let m = (dd[0][1] + dd[1][0]) * 0.5;
        dd[0][1] = m;
        dd[1][0] = m;
        ParamJet { v, d, dd }
    }
}

/// The kinds of boundary Lagrangian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LagrangianKind {
    /// `origin + x1 v1 + x2 v2`.
    LinearSubspace {
        /// Spanning frame.
        frame: [C2; 2],
        /// Base point.
        #[serde(default)]
        origin: C2,
    },
    /// Graph of `dh` over a reference in its vertical tubular chart.
    GraphOverReference {
        /// Reference Lagrangian.
        reference: Box<BoundaryLagrangian>,
        /// Potential on the reference parameters.
        potential: Potential,
    },
    /// Tabulated polar disc.
    PolarPatch {
        /// The samples and their spline.
        patch: PolarPatch,
    },
    /// Orbit `{gamma(s) x : s in [-1, 1], x in S^1}`, parameterized by `(s, psi)`.
    ProfileOrbit {
        /// The profile curve.
        profile: Profile,
    },
    /// `(f(anchor + s x) - f(anchor)) / s`: the base blown up by `1 / s` about
    /// the point at `anchor`; its tangent plane there when `s = 0`.
    Rescaled {
        /// The unscaled Lagrangian.
        base: Box<BoundaryLagrangian>,
        /// Parameter of the center point on the base.
        anchor: [f64; 2],
        /// Scale `s >= 0`.
        scale: f64,
    },
}

/// A boundary Lagrangian with its orientation sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLagrangian {
    /// Geometry.
    #[serde(flatten)]
    pub kind: LagrangianKind,
    /// Global orientation sign (+1 or -1) relative to the parameter order.
    #[serde(default = "plus_one")]
    pub orientation: i8,
}

fn plus_one() -> i8 {
    1
}

impl BoundaryLagrangian {
    /// The linear Lagrangian spanned by `frame` through `origin`.
    pub fn linear(frame: [C2; 2], origin: C2) -> Self {
        BoundaryLagrangian { kind: LagrangianKind::LinearSubspace { frame, origin }, orientation: 1 }
    }

    /// `R^2` in `C^2`.
    pub fn real_plane() -> Self {
        Self::linear([C2::real(1.0, 0.0), C2::real(0.0, 1.0)], C2::ZERO)
    }

    /// The plane `e^{i a} R^2`.
    pub fn rotated_plane(a: f64) -> Self {
        let e = (I * a).exp();
        Self::linear([C2::new(e, c(0.0, 0.0)), C2::new(c(0.0, 0.0), e)], C2::ZERO)
    }

    /// The rescaled Lagrangian `(L - f(anchor)) / scale` (the tangent plane at
    /// `f(anchor)` when `scale = 0`).
    pub fn rescaled(&self, anchor: [f64; 2], scale: f64) -> Self {
        BoundaryLagrangian {
            kind: LagrangianKind::Rescaled { base: Box::new(self.clone()), anchor, scale },
            orientation: self.orientation,
        }
    }

    /// A tabulated polar disc.
    pub fn polar_patch(grid: PolarGrid, nodes: Vec<C2>) -> Self {
        BoundaryLagrangian {
            kind: LagrangianKind::PolarPatch { patch: PolarPatch::new(grid, nodes) },
            orientation: 1,
        }
    }

    /// True when the parameter is inside the parameter domain.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        match &self.kind {
            LagrangianKind::LinearSubspace { .. } => x.iter().all(|v| v.is_finite()),
            LagrangianKind::GraphOverReference { reference, .. } => reference.contains(x),
            LagrangianKind::PolarPatch { patch } => {
                (x[0] * x[0] + x[1] * x[1]).sqrt() <= patch.grid.rho_max() * (1.0 + 1e-9)
            }
            LagrangianKind::ProfileOrbit { .. } => x[0].abs() <= 1.0,
            LagrangianKind::Rescaled { base, anchor, scale } => {
                base.contains([anchor[0] + scale * x[0], anchor[1] + scale * x[1]])
            }
        }
    }

    /// Parameter map with derivatives.
    pub fn jet(&self, x: [f64; 2]) -> Result<ParamJet> {
        match &self.kind {
            LagrangianKind::LinearSubspace { frame, origin } => Ok(ParamJet {
                v: *origin + frame[0] * x[0] + frame[1] * x[1],
                d: *frame,
                dd: [[C2::ZERO; 2]; 2],
            }),
            LagrangianKind::PolarPatch { patch } => Ok(patch.jet(x)),
            LagrangianKind::ProfileOrbit { profile } => {
                let (g, dg) = profile.eval(x[0]);
                let (cs, sn) = (x[1].cos(), x[1].sin());
                let u = C2::real(cs, sn);
                let du = C2::real(-sn, cs);
                let d2g = {
                    let h = 1e-5;
                    (profile.eval(x[0] + h).1 - profile.eval(x[0] - h).1) / (2.0 * h)
                };
                Ok(ParamJet {
                    v: u.cscale(g),
                    d: [u.cscale(dg), du.cscale(g)],
                    dd: [[u.cscale(d2g), du.cscale(dg)], [du.cscale(dg), (-u).cscale(g)]],
                })
            }
            LagrangianKind::GraphOverReference { reference, potential } => {
                graph_jet(reference, potential, x)
            }
            LagrangianKind::Rescaled { base, anchor, scale } => {
                let a = base.jet(*anchor)?;
                if *scale == 0.0 {
                    return Ok(ParamJet {
                        v: a.d[0] * x[0] + a.d[1] * x[1],
                        d: a.d,
                        dd: [[C2::ZERO; 2]; 2],
                    });
                }
                let y = base.jet([anchor[0] + scale * x[0], anchor[1] + scale * x[1]])?;
                let dd = [
                    [y.dd[0][0] * *scale, y.dd[0][1] * *scale],
                    [y.dd[1][0] * *scale, y.dd[1][1] * *scale],
                ];
                Ok(ParamJet { v: (y.v - a.v) * (1.0 / scale), d: y.d, dd })
            }
        }
    }

    /// Parameter `x` with `Re f(x) = Re z` (vertical projection), by Newton's
    /// method from the best grid or origin guess.
    pub fn vertical_projection(&self, z: &C2) -> Result<[f64; 2]> {
        match &self.kind {
            LagrangianKind::LinearSubspace { frame, origin } => {
                let a = [frame[0].re(), frame[1].re()];
                let det = a[0][0] * a[1][1] - a[1][0] * a[0][1];
                if det.abs() < 1e-14 {
                    return Err(Error::Domain("linear Lagrangian is not a graph over Re".into()));
                }
                let b = [z.re()[0] - origin.re()[0], z.re()[1] - origin.re()[1]];
                Ok([
                    (b[0] * a[1][1] - a[1][0] * b[1]) / det,
                    (a[0][0] * b[1] - b[0] * a[0][1]) / det,
                ])
            }
            LagrangianKind::GraphOverReference { reference, .. } => {
                reference.vertical_projection(z)
            }
            LagrangianKind::PolarPatch { patch } => {
                let guess = nearest_node(patch, |w| {
                    let d = [w.re()[0] - z.re()[0], w.re()[1] - z.re()[1]];
                    d[0] * d[0] + d[1] * d[1]
                });
                self.newton_vertical(z, guess)
            }
            LagrangianKind::ProfileOrbit { .. } => Err(Error::Invalid(
                "profile orbits carry no vertical chart".into(),
            )),
            LagrangianKind::Rescaled { .. } => self.newton_vertical(z, [0.0, 0.0]),
        }
    }

    fn newton_vertical(&self, z: &C2, mut x: [f64; 2]) -> Result<[f64; 2]> {
        let target = z.re();
        for _ in 0..50 {
            if !self.contains(x) {
                return Err(Error::ChartOverflow("vertical projection left the domain".into()));
            }
            let (v, d) = self.first(x)?;
            let r = [v.re()[0] - target[0], v.re()[1] - target[1]];
            let a = [d[0].re(), d[1].re()];
            let det = a[0][0] * a[1][1] - a[1][0] * a[0][1];
            if det.abs() < 1e-14 {
                return Err(Error::ChartOverflow("Re f is singular".into()));
            }
            let dx = [
                (r[0] * a[1][1] - a[1][0] * r[1]) / det,
                (a[0][0] * r[1] - r[0] * a[0][1]) / det,
            ];
            x = [x[0] - dx[0], x[1] - dx[1]];
            if dx[0].abs() + dx[1].abs() < 1e-15 * (1.0 + x[0].abs() + x[1].abs()) {
                break;
            }
        }
        let (v, _) = self.first(x)?;
        let res = ((v.re()[0] - target[0]).powi(2) + (v.re()[1] - target[1]).powi(2)).sqrt();
        if res > 1e-11 * (1.0 + z.norm()) || !self.contains(x) {
            return Err(Error::ChartOverflow(format!("vertical projection residual {res:.2e}")));
        }
        Ok(x)
    }

    /// Value and first derivatives (cheaper than [`Self::jet`] for patches).
    pub fn first(&self, x: [f64; 2]) -> Result<(C2, [C2; 2])> {
        match &self.kind {
            LagrangianKind::PolarPatch { patch } => Ok(patch.first(x)),
            LagrangianKind::Rescaled { base, anchor, scale } => {
                let (a, da) = base.first(*anchor)?;
                if *scale == 0.0 {
                    return Ok((da[0] * x[0] + da[1] * x[1], da));
                }
                let (v, d) = base.first([anchor[0] + scale * x[0], anchor[1] + scale * x[1]])?;
                Ok(((v - a) * (1.0 / scale), d))
            }
            _ => {
                let j = self.jet(x)?;
                Ok((j.v, j.d))
            }
        }
    }

    /// Parameter of the point of the Lagrangian closest to `z`, by
    /// Gauss-Newton from `guess`.
    pub fn closest_param(&self, z: &C2, guess: [f64; 2]) -> Result<[f64; 2]> {
        let mut x = guess;
        for _ in 0..60 {
            let (v, d) = self.first(x)?;
            let r = v - *z;
            let g = [
                [d[0].dot(&d[0]), d[0].dot(&d[1])],
                [d[1].dot(&d[0]), d[1].dot(&d[1])],
            ];
            let b = [d[0].dot(&r), d[1].dot(&r)];
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            if det.abs() < 1e-300 {
                return Err(Error::NoConvergence("singular parameter metric".into()));
            }
            let dx = [
                (b[0] * g[1][1] - g[0][1] * b[1]) / det,
                (g[0][0] * b[1] - b[0] * g[1][0]) / det,
            ];
            x = [x[0] - dx[0], x[1] - dx[1]];
            if dx[0].abs() + dx[1].abs() < 1e-14 * (1.0 + x[0].abs() + x[1].abs()) {
                return Ok(x);
            }
        }
        Ok(x)
    }

    /// A reasonable starting parameter for projecting `z`.
    pub fn initial_guess(&self, z: &C2) -> [f64; 2] {
        match &self.kind {
            LagrangianKind::PolarPatch { patch } => nearest_node(patch, |w| (*w - *z).norm_sqr()),
            LagrangianKind::ProfileOrbit { .. } => {
                let re = z.re();
                let s = z.norm();
                [s.min(1.0), re[1].atan2(re[0])]
            }
            _ => self.vertical_projection(z).unwrap_or([0.0, 0.0]),
        }
    }

    /// Distance from `z` to the Lagrangian (locally, near the initial guess).
    pub fn distance(&self, z: &C2) -> Result<f64> {
        let x = self.closest_param(z, self.initial_guess(z))?;
        Ok((self.first(x)?.0 - *z).norm())
    }

    /// Oriented tangent frame at parameter `x`.
    pub fn oriented_frame(&self, x: [f64; 2]) -> Result<(C2, [C2; 2])> {
        let (v, d) = self.first(x)?;
        let mut sign = self.orientation as f64;
        if let LagrangianKind::ProfileOrbit { .. } = self.kind {
            if x[0] < 0.0 {
                sign = -sign;
            }
        }
        Ok((v, [d[0] * sign, d[1]]))
    }

    /// Deterministic low-discrepancy parameter samples of the domain.
    pub fn sample_params(&self, count: usize) -> Vec<[f64; 2]> {
        (0..count)
            .map(|i| {
                let (u, w) = (halton(i + 1, 2), halton(i + 1, 3));
                match &self.kind {
                    LagrangianKind::LinearSubspace { .. } | LagrangianKind::Rescaled { .. } => {
                        [2.0 * u - 1.0, 2.0 * w - 1.0]
                    }
                    LagrangianKind::GraphOverReference { reference, .. } => {
                        reference.sample_params(count)[i]
                    }
                    LagrangianKind::PolarPatch { patch } => {
                        let r = 0.999 * patch.grid.rho_max() * u.sqrt();
                        let p = 2.0 * PI * w;
                        [r * p.cos(), r * p.sin()]
                    }
                    LagrangianKind::ProfileOrbit { .. } => {
                        let s = 2.0 * u - 1.0;
                        // Skip the degenerate orbit at s = 0.
                        let s = if s.abs() < 1e-3 { 1e-3 } else { s };
                        [s, 2.0 * PI * w]
                    }
                }
            })
            .collect()
    }
}

fn nearest_node(patch: &PolarPatch, dist: impl Fn(&C2) -> f64) -> [f64; 2] {
    let g = &patch.grid;
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for j in 0..=g.r {
        for k in 0..g.m {
            let d = dist(&patch.nodes[g.index(j, k)]);
            if d < best.0 {
                best = (d, g.xi(j, k));
            }
        }
    }
    best.1
}

fn graph_jet(reference: &BoundaryLagrangian, potential: &Potential, x: [f64; 2]) -> Result<ParamJet> {
    let offset = |x: [f64; 2]| -> Result<(C2, [C2; 2])> {
        let rj = reference.jet(x)?;
        let a = [rj.d[0].re(), rj.d[1].re()];
        let det = a[0][0] * a[1][1] - a[1][0] * a[0][1];
        if det.abs() < 1e-14 {
            return Err(Error::ChartOverflow("reference is not a graph over Re".into()));
        }
        // M = (D Re f)^{-1} with columns indexed by x, so M^T g solves (D Re f)^T y = g.
        let (_, g, h) = potential.eval(x);
        let solve_t = |g: [f64; 2]| -> [f64; 2] {
            // (D Re f)^T y = g, D Re f has columns a[k].
            let m = [[a[0][0], a[0][1]], [a[1][0], a[1][1]]];
            let dt = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            [
                (g[0] * m[1][1] - m[0][1] * g[1]) / dt,
                (m[0][0] * g[1] - g[0] * m[1][0]) / dt,
            ]
        };
        let y = solve_t(g);
        // Derivative of y: (D Re f)^T dy_k = H[:, k] - (d_k D Re f)^T y.
        let mut dy = [[0.0; 2]; 2];
        for k in 0..2 {
            let ddk = [rj.dd[k][0].re(), rj.dd[k][1].re()];
            let rhs = [h[0][k] - ddk[0][0] * y[0] - ddk[0][1] * y[1], h[1][k] - ddk[1][0] * y[0] - ddk[1][1] * y[1]];
            dy[k] = solve_t(rhs);
        }
        Ok((
            C2::from_parts([0.0, 0.0], y),
            [C2::from_parts([0.0, 0.0], dy[0]), C2::from_parts([0.0, 0.0], dy[1])],
        ))
    };
    let rj = reference.jet(x)?;
    let (o, d_o) = offset(x)?;
    // Second derivatives of the offset by differences of its first derivatives.
    let hs = 1e-5;
    let mut dd = rj.dd;
    for k in 0..2 {
        let mut xp = x;
        let mut xm = x;
        xp[k] += hs;
        xm[k] -= hs;
        let (_, dp) = offset(xp)?;
        let (_, dm) = offset(xm)?;
        for l in 0..2 {
            dd[k][l] += (dp[l] - dm[l]) * (0.5 / hs);
        }
    }
    Ok(ParamJet { v: rj.v + o, d: [rj.d[0] + d_o[0], rj.d[1] + d_o[1]], dd })
}

/// Radical-inverse sequence in the given base.
pub fn halton(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Polar-grid discretization of a Lagrangian disc (a snapshot of `Lambda_t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianMesh {
    /// Parameter grid.
    pub grid: PolarGrid,
    /// Samples in grid storage order (the pole replicated on ring 0).
    pub nodes: Vec<C2>,
    /// Orientation sign relative to `(d_rho, d_phi)`.
    pub orientation: i8,
}

impl LagrangianMesh {
    /// Samples a parameter map on the grid.
    pub fn from_map(grid: PolarGrid, f: impl Fn([f64; 2]) -> C2) -> Self {
        LagrangianMesh { grid, nodes: grid.sample(f), orientation: 1 }
    }

    /// Tangent frames `(d_rho, d_phi / rho)` at every stored sample off the pole.
    pub fn frames(&self) -> Vec<(usize, C2, [C2; 2])> {
        let dr = self.grid.d_rho(&self.nodes);
        let dp = self.grid.d_phi(&self.nodes);
        let mut out = Vec::new();
        for j in 1..=self.grid.r {
            let rho = self.grid.rho(j);
            for k in 0..self.grid.m {
                let i = self.grid.index(j, k);
                let s = self.orientation as f64;
                out.push((i, self.nodes[i], [dr[i] * s, dp[i] * (1.0 / rho)]));
            }
        }
        out
    }

    /// Worst normalized omega-pullback `|omega(a, b)| / (|a| |b|)` over the
    /// samples, with fourth-order derivative estimates.
    pub fn omega_defect(&self) -> f64 {
        self.frames()
            .iter()
            .map(|(_, _, f)| f[0].omega(&f[1]).abs() / (f[0].norm() * f[1].norm()))
            .fold(0.0, f64::max)
    }

    /// The mesh as a tabulated boundary Lagrangian.
    pub fn to_boundary(&self) -> BoundaryLagrangian {
        BoundaryLagrangian {
            kind: LagrangianKind::PolarPatch {
                patch: PolarPatch::new(self.grid, self.nodes.clone()),
            },
            orientation: self.orientation,
        }
    }
}

/// Result of a positivity scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    /// Number of sampled planes.
    pub samples: usize,
    /// Smallest sampled phase.
    pub min_phase: f64,
    /// Largest sampled phase.
    pub max_phase: f64,
    /// Largest `|phase|`.
    pub max_abs_phase: f64,
    /// Worst normalized omega residual.
    pub worst_omega_residual: f64,
    /// All sampled phases lie in `(-pi/2, pi/2)`.
    pub positive: bool,
    /// Some `|phase| > pi/2 - delta_phase`.
    pub near_degenerate: bool,
}

/// What a positivity scan inspects.
#[derive(Debug, Clone, Copy)]
pub enum PositivityTarget<'a> {
    /// An analytic boundary Lagrangian, sampled at low-discrepancy parameters.
    Boundary(&'a BoundaryLagrangian),
    /// A mesh, sampled at every `stride`-th stored sample.
    Mesh(&'a LagrangianMesh),
}

/// Phase statistics over a deterministic sample of tangent planes.
pub fn positivity_report(
    ambient: &AmbientStructure,
    target: PositivityTarget<'_>,
    samples: usize,
    delta_phase: f64,
) -> Result<PositivityReport> {
    if samples == 0 {
        return Err(Error::Invalid("samples must be at least 1".into()));
    }
    let frames: Vec<(C2, [C2; 2])> = match target {
        PositivityTarget::Boundary(lag) => lag
            .sample_params(samples)
            .into_iter()
            .map(|x| lag.oriented_frame(x))
            .collect::<Result<_>>()?,
        PositivityTarget::Mesh(mesh) => {
            let all = mesh.frames();
            let stride = (all.len() / samples).max(1);
            all.into_iter().step_by(stride).map(|(_, z, f)| (z, f)).collect()
        }
    };
    let mut rep = PositivityReport {
        samples: frames.len(),
        min_phase: f64::INFINITY,
        max_phase: f64::NEG_INFINITY,
        max_abs_phase: 0.0,
        worst_omega_residual: 0.0,
        positive: true,
        near_degenerate: false,
    };
    for (z, f) in frames {
        let val = ambient.omega2(&z, &f[0], &f[1]);
        let th = wrap_angle(val.arg());
        rep.min_phase = rep.min_phase.min(th);
        rep.max_phase = rep.max_phase.max(th);
        rep.max_abs_phase = rep.max_abs_phase.max(th.abs());
        let res = f[0].omega(&f[1]).abs() / (f[0].norm() * f[1].norm()).max(1e-300);
        rep.worst_omega_residual = rep.worst_omega_residual.max(res);
    }
    rep.positive = rep.max_abs_phase < FRAC_PI_2;
    rep.near_degenerate = AmbientStructure::near_degenerate(rep.max_abs_phase, delta_phase);
    Ok(rep)
}

/// An intersection found from one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPoint {
    /// The seed.
    pub seed: C2,
    /// The refined intersection point, when Newton converged.
    pub point: Option<C2>,
    /// Smallest principal angle between the two tangent planes.
    pub gap: f64,
    /// `gap > tol_transverse`.
    pub transverse: bool,
    /// Failure description for non-converged seeds.
    pub failure: Option<String>,
}

/// Newton-refined intersection points of two boundary Lagrangians.
pub fn intersection_points(
    lag_a: &BoundaryLagrangian,
    lag_b: &BoundaryLagrangian,
    seeds: &[C2],
    tol_transverse: f64,
) -> Vec<IntersectionPoint> {
    seeds
        .iter()
        .map(|seed| match refine_intersection(lag_a, lag_b, seed) {
            Ok((p, gap)) => IntersectionPoint {
                seed: *seed,
                point: Some(p),
                gap,
                transverse: gap > tol_transverse,
                failure: None,
            },
            Err(e) => IntersectionPoint {
                seed: *seed,
                point: None,
                gap: 0.0,
                transverse: false,
                failure: Some(e.to_string()),
            },
        })
        .collect()
}

fn refine_intersection(a: &BoundaryLagrangian, b: &BoundaryLagrangian, seed: &C2) -> Result<(C2, f64)> {
    let mut x = a.closest_param(seed, a.initial_guess(seed))?;
    let mut y = b.closest_param(seed, b.initial_guess(seed))?;
    let scale = 1.0 + seed.norm();
    for it in 0..60 {
        let (fa, da) = a.first(x)?;
        let (fb, db) = b.first(y)?;
        let r = (fa - fb).to_real4();
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn < 1e-13 * scale {
            let ang = principal_angles(&da[0], &da[1], &db[0], &db[1])
                .ok_or_else(|| Error::Invalid("degenerate tangent frame".into()))?;
            return Ok((fa, ang[0]));
        }
        let cols = [da[0].to_real4(), da[1].to_real4(), (-db[0]).to_real4(), (-db[1]).to_real4()];
        let mut m = vec![0.0; 16];
        for (k, col) in cols.iter().enumerate() {
            for rr in 0..4 {
                m[rr * 4 + k] = col[rr];
            }
        }
        let Some(step) = solve_dense(m, r.to_vec(), 4) else {
            return Err(Error::NoConvergence(format!("singular intersection system at iteration {it}")));
        };
        x = [x[0] - step[0], x[1] - step[1]];
        y = [y[0] - step[2], y[1] - step[3]];
    }
    Err(Error::NoConvergence("intersection Newton did not converge".into()))
}

/// The orbit Lagrangian of a profile curve (n = 2), validated for the
/// Lagrangian condition and positivity.
pub fn profile_sphere(
    ambient: &AmbientStructure,
    gamma: Profile,
    n: usize,
    samples: usize,
) -> Result<BoundaryLagrangian> {
    if n != 2 {
        return Err(Error::Invalid("profile orbits are implemented for n = 2".into()));
    }
    let lag = BoundaryLagrangian { kind: LagrangianKind::ProfileOrbit { profile: gamma }, orientation: 1 };
    let rep = positivity_report(ambient, PositivityTarget::Boundary(&lag), samples, 0.0)?;
    if rep.worst_omega_residual > 1e-10 {
        return Err(Error::NotLagrangian { residual: rep.worst_omega_residual });
    }
    if !rep.positive {
        let params = lag.sample_params(samples);
        let index = params
            .iter()
            .position(|x| {
                let (z, f) = lag.oriented_frame(*x).expect("orbit frames are defined");
                ambient.omega2(&z, &f[0], &f[1]).arg().abs() >= FRAC_PI_2
            })
            .unwrap_or(0);
        return Err(Error::Positivity { phase: rep.max_abs_phase, index });
    }
    Ok(lag)
}

/// `Lambda_{1,h}`: the graph of `dh` over `base` in its vertical chart.
/// Returns `base` unchanged when `dh` vanishes identically.
pub fn perturb_graph(base: &BoundaryLagrangian, h: &Potential, samples: usize) -> Result<BoundaryLagrangian> {
    if h.is_locally_constant() {
        return Ok(base.clone());
    }
    let out = BoundaryLagrangian {
        kind: LagrangianKind::GraphOverReference {
            reference: Box::new(base.clone()),
            potential: h.clone(),
        },
        orientation: base.orientation,
    };
    for x in base.sample_params(samples) {
        out.jet(x)?;
    }
    Ok(out)
}

/// A line `origin + x direction` in C (the n = 1 boundary curves).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line1 {
    /// Point at parameter 0.
    pub origin: Complex64,
    /// Direction.
    pub direction: Complex64,
}

impl Line1 {
    /// Point at parameter `x`.
    pub fn at(&self, x: f64) -> Complex64 {
        self.origin + self.direction * x
    }

    /// Parameter of the closest point.
    pub fn project(&self, z: Complex64) -> f64 {
        let d = z - self.origin;
        (self.direction.conj() * d).re / self.direction.norm_sqr()
    }

    /// Distance from `z`.
    pub fn distance(&self, z: Complex64) -> f64 {
        (self.at(self.project(z)) - z).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_graph_over_real_plane() {
        let a = [[0.2, -0.1], [-0.1, 0.05]];
        let g = perturb_graph(&BoundaryLagrangian::real_plane(), &Potential::quadratic(a), 16).unwrap();
        let x = [0.3, -0.7];
        let j = g.jet(x).unwrap();
        let want = C2::from_parts(x, [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]);
        assert!((j.v - want).norm() < 1e-15);
    }

    #[test]
    fn constant_perturbation_returns_base() {
        let base = BoundaryLagrangian::real_plane();
        assert_eq!(perturb_graph(&base, &Potential::constant(3.0), 8).unwrap(), base);
        assert_eq!(perturb_graph(&base, &Potential::zero(), 8).unwrap(), base);
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let b = Potential::Bump { amplitude: 0.3, center: [0.1, -0.2], radius: 0.5 };
        let x = [0.25, -0.05];
        let (_, g, h) = b.eval(x);
        let e = 1e-6;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += e;
            xm[k] -= e;
            assert!((g[k] - (b.eval(xp).0 - b.eval(xm).0) / (2.0 * e)).abs() < 1e-8);
            for l in 0..2 {
                assert!((h[l][k] - (b.eval(xp).1[l] - b.eval(xm).1[l]) / (2.0 * e)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn linear_intersection_and_self_intersection() {
        let a = BoundaryLagrangian::real_plane();
        let b = BoundaryLagrangian::rotated_plane(0.3);
        let hits = intersection_points(&a, &b, &[C2::real(0.1, -0.2)], 1e-6);
        assert!(hits[0].point.unwrap().norm() < 1e-12);
        assert!(hits[0].transverse);
        let hits = intersection_points(&a, &a, &[C2::real(0.1, -0.2)], 1e-6);
        assert!(!hits[0].transverse);
        assert!(hits[0].gap < 1e-7);
    }
}
