//! Imaginary special Lagrangian cylinders: boundary-adapted charts around a
//! reference cylinder, the special residual, Newton correction, one-parameter
//! continuation, end solves by rescaling and regularity diagnostics.
//!
//! # Chart
//!
//! Around a reference cylinder `X(phi, t)` (the cubic-spline interpolant of a
//! [`CylinderMesh`], or an analytic orbit) a pair of spline potentials
//! `(u, v)` defines
//!
//! ```text
//! Y = X - (J + alpha) dX(G^{-1} du) - J dX(G^{-1} *dv) + Q
//! ```
//!
//! `alpha` is blended linearly in `t` between the boundary values that put
//! `(J + alpha) nu` into `T Lambda_i` (`nu` the conormal of `C_i`). `Q` is
//! supported in the first and last element rows and moves the boundary traces
//! exactly onto `Lambda_i`. Derivatives of `Y` are central differences in the
//! parameters (step [`FD_STEP`]); the residual and its Jacobian use the same
//! formula, so Newton converges quadratically to the discrete solution.
//!
//! # Equations
//!
//! The unknowns are `u` on rows `1..=K+1` (row 0 is zero, row `K + 2` holds the
//! fixed constant `l`) and `v` with its first coefficient pinned. The
//! equations are the Galerkin projections of `Re Omega(Y_phi, Y_t)` on the
//! interior test functions and of `omega(Y_phi, Y_t)` on all test functions
//! but the first.

use crate::ambient::AmbientStructure;
use crate::elliptic::{
    assemble_frames, assemble_with, fundamental_harmonic, metric, CylinderMesh, Discretization, DofLayout,
    LocalBasis, ScalarField, SpaceTag, SurfaceGeometry, Weight, WeightedStiffness,
};
use crate::error::{Error, Result};
use crate::geom::{solve_dense, C2, I};
use crate::lagrangian::{BoundaryLagrangian, Line1};
use crate::sparse::{CsrMatrix, SparseLu};
use crate::spline::{gauss01, Spline2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Parameter step of the central differences that differentiate the chart.
pub const FD_STEP: f64 = 1e-4;

/// Largest admissible rescaling factor of an end solve.
pub const END_S_MAX: f64 = 0.25;

/// Diameter ratio below which continuation hands off to the end solver.
pub const END_THRESHOLD: f64 = 0.05;

/// Smallest continuation step before the family is truncated.
pub const MIN_STEP: f64 = 1e-4;

/// The orbit cylinder `sqrt(a + i s(t)) (cos phi, sin phi)` with `s` linear
/// from `s0` to `s1`, an exact imaginary special Lagrangian in flat C^2 when
/// `s1 < s0`, between the planes `e^{i alpha_k} R^2`, `tan(2 alpha_k) = s_k / a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitCylinder {
    /// Orbit parameter `a > 0`.
    pub a: f64,
    /// `s` at `C0`.
    pub s0: f64,
    /// `s` at `C1`.
    pub s1: f64,
}

impl OrbitCylinder {
    /// The orbit cylinder between `e^{i alpha0} R^2` and `e^{i alpha1} R^2`
    /// (`|alpha_k| < pi / 4`, `alpha1 < alpha0`).
    pub fn between(a: f64, alpha0: f64, alpha1: f64) -> Result<Self> {
        if !(a > 0.0) || !(alpha1 < alpha0) || alpha0.abs() >= PI / 4.0 || alpha1.abs() >= PI / 4.0 {
            return Err(Error::Invalid("orbit cylinder needs a > 0 and -pi/4 < alpha1 < alpha0 < pi/4".into()));
        }
        Ok(OrbitCylinder { a, s0: a * (2.0 * alpha0).tan(), s1: a * (2.0 * alpha1).tan() })
    }

    /// The two boundary planes.
    pub fn boundaries(&self) -> [BoundaryLagrangian; 2] {
        [
            BoundaryLagrangian::rotated_plane(self.s0.atan2(self.a) / 2.0),
            BoundaryLagrangian::rotated_plane(self.s1.atan2(self.a) / 2.0),
        ]
    }

    /// Nodes of the orbit on an `m x (k + 1)` grid in flat C^2.
    pub fn mesh(&self, m: usize, k: usize) -> Result<CylinderMesh> {
        CylinderMesh::from_map(AmbientStructure::flat(2), m, k, |p, t| {
            self.point(p, t).expect("orbit is defined everywhere").0
        })
    }
}

impl SurfaceGeometry for OrbitCylinder {
    fn point(&self, phi: f64, t: f64) -> Result<(C2, C2, C2)> {
        let s = self.s0 + t * (self.s1 - self.s0);
        let g = Complex64::new(self.a, s).sqrt();
        let dg = I * (self.s1 - self.s0) / (2.0 * g);
        let (c, sn) = (phi.cos(), phi.sin());
        Ok((C2::real(c, sn).cscale(g), C2::real(-sn, c).cscale(g), C2::real(c, sn).cscale(dg)))
    }
}

/// Reference surface of a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChartBase {
    /// The cubic-spline interpolant of mesh nodes.
    Mesh {
        /// The nodes.
        mesh: CylinderMesh,
    },
    /// An analytic orbit cylinder.
    Orbit {
        /// The orbit.
        orbit: OrbitCylinder,
    },
}

impl ChartBase {
    fn point(&self, phi: f64, t: f64) -> Result<(C2, C2, C2)> {
        match self {
            ChartBase::Mesh { mesh } => mesh.surface(Discretization::Spline)?.point(phi, t),
            ChartBase::Orbit { orbit } => orbit.point(phi, t),
        }
    }
}

/// Options of the Newton corrector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Target of the scaled residual norm.
    pub tol: f64,
    /// Iteration limit.
    pub max_iter: usize,
    /// Step halvings allowed before reporting divergence.
    pub max_backtracks: usize,
    /// Largest node displacement from the reference, as a fraction of the
    /// reference's smallest length scale.
    pub chart_radius: f64,
    /// Roundoff floor: a residual below `floor` that no step reduces is
    /// reported as converged.
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    1e-10
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-11, max_iter: 12, max_backtracks: 3, chart_radius: 0.25, floor: default_floor() }
    }
}

#[derive(Debug, Clone, Copy)]
struct BoundaryFrame {
    xb: [f64; 2],
    xbase: C2,
    pinv: [[f64; 4]; 2],
    alpha: f64,
    a: [C2; 4],
}

#[derive(Debug, Clone, Copy)]
struct ChartQuad {
    ei: usize,
    el: usize,
    g: usize,
    u: f64,
    v: f64,
    t: f64,
    w: f64,
    x: C2,
    xp: C2,
    xt: C2,
    /// Chart vectors `[a_u1, a_u2, a_v1, a_v2]` at center, `+phi`, `-phi`, `+t`, `-t`.
    a: [[C2; 4]; 5],
}

/// Chart vectors of the potentials at a reference point.
fn chart_vectors(xp: &C2, xt: &C2, alpha: f64) -> Option<[C2; 4]> {
    let g = metric(xp, xt);
    let d = g[0] * g[2] - g[1] * g[1];
    if !(d > 0.0) {
        return None;
    }
    let n1 = (*xp * g[2] - *xt * g[1]) * (1.0 / d);
    let n2 = (*xt * g[0] - *xp * g[1]) * (1.0 / d);
    let m = Complex64::new(-alpha, -1.0);
    let sg = d.sqrt();
    Some([n1.cscale(m), n2.cscale(m), xt.cscale(-I) * (1.0 / sg), xp.cscale(I) * (1.0 / sg)])
}

fn conormal(xp: &C2, xt: &C2) -> C2 {
    let g = metric(xp, xt);
    let d = g[0] * g[2] - g[1] * g[1];
    (*xt * g[0] - *xp * g[1]) * (1.0 / d)
}

/// Boundary blending weight of row `C_i` and its `t`-derivative.
fn blend(i: usize, t: f64, k: usize) -> (f64, f64) {
    let kf = k as f64;
    let s = if i == 0 { t } else { 1.0 - t };
    if s * kf >= 1.0 {
        return (0.0, 0.0);
    }
    let r = 1.0 - s * kf;
    let d = -3.0 * kf * r * r;
    (r * r * r, if i == 0 { d } else { -d })
}

fn apply_pinv(p: &[[f64; 4]; 2], z: &C2) -> [f64; 2] {
    let r = z.to_real4();
    [
        p[0][0] * r[0] + p[0][1] * r[1] + p[0][2] * r[2] + p[0][3] * r[3],
        p[1][0] * r[0] + p[1][1] * r[1] + p[1][2] * r[2] + p[1][3] * r[3],
    ]
}

/// A boundary-adapted chart of cylinders near a reference cylinder.
#[derive(Debug, Clone)]
pub struct WeinsteinChart {
    /// Ambient structure.
    pub ambient: AmbientStructure,
    /// Reference surface.
    pub base: ChartBase,
    /// Boundary Lagrangians of `C0` and `C1`.
    pub lags: [BoundaryLagrangian; 2],
    /// Angles.
    pub m: usize,
    /// `t`-intervals.
    pub k: usize,
    layout: DofLayout,
    quad: Vec<ChartQuad>,
    /// Boundary frames at `((i M + ei) 4 + g) 3 + shift` (shift: center, +phi, -phi).
    bframes: Vec<BoundaryFrame>,
    /// Boundary frames at the node angles, `i M + node`.
    node_frames: Vec<BoundaryFrame>,
    gauss: Vec<f64>,
    test_mass: Vec<f64>,
    length_scale: f64,
}

/// Residual, positivity and (optionally) Jacobian of the chart equations.
#[derive(Debug, Clone)]
struct Evaluation {
    rf: Vec<f64>,
    rw: Vec<f64>,
    min_im: f64,
    jac: Option<Vec<(usize, usize, f64)>>,
    frames: Option<Vec<(C2, C2, C2)>>,
}

impl WeinsteinChart {
    /// Builds the chart. Requires `n = 2`, `m >= 4` and `k >= 3`.
    pub fn new(ambient: AmbientStructure, base: ChartBase, lags: [BoundaryLagrangian; 2], m: usize, k: usize) -> Result<Self> {
        if ambient.n != 2 {
            return Err(Error::Invalid("charts are implemented for n = 2".into()));
        }
        if m < 4 || k < 3 {
            return Err(Error::Invalid("charts need at least 4 angles and 3 t-intervals".into()));
        }
        if let ChartBase::Mesh { mesh } = &base {
            if mesh.m != m || mesh.k != k {
                return Err(Error::Invalid("chart resolution differs from its reference mesh".into()));
            }
        }
        let layout = DofLayout::for_resolution(2, m, k, Discretization::Spline);
        let (gx, _) = gauss01(4);
        let dphi = 2.0 * PI / m as f64;
        let h = FD_STEP;
        let mut chart = WeinsteinChart {
            ambient,
            base,
            lags,
            m,
            k,
            layout,
            quad: Vec::new(),
            bframes: Vec::new(),
            node_frames: Vec::new(),
            gauss: gx.clone(),
            test_mass: Vec::new(),
            length_scale: 0.0,
        };
        let mut bframes = Vec::with_capacity(2 * m * 4 * 3);
        for i in 0..2 {
            let mut guess = None;
            for ei in 0..m {
                for g in 0..4 {
                    let phi = (ei as f64 + gx[g]) * dphi;
                    for sh in [0.0, h, -h] {
                        let f = chart.boundary_frame(i, phi + sh, guess)?;
                        guess = Some(f.xb);
                        bframes.push(f);
                    }
                }
            }
        }
        let mut node_frames = Vec::with_capacity(2 * m);
        for i in 0..2 {
            let mut guess = None;
            for node in 0..m {
                let f = chart.boundary_frame(i, node as f64 * dphi, guess)?;
                guess = Some(f.xb);
                node_frames.push(f);
            }
        }
        chart.bframes = bframes;
        chart.node_frames = node_frames;
        let mut quad = Vec::with_capacity(m * k * 16);
        for q in chart.layout.quadrature() {
            let g = (0..4).find(|&g| (gx[g] - q.u).abs() < 1e-14).expect("quadrature abscissa");
            let (x, xp, xt) = chart.base.point(q.phi, q.t)?;
            let mut a = [[C2::ZERO; 4]; 5];
            let shifts = [(0.0, 0.0, 0usize), (h, 0.0, 1), (-h, 0.0, 2), (0.0, h, 0), (0.0, -h, 0)];
            for (s, (dp, dt, sh)) in shifts.iter().enumerate() {
                let (_, sp, st) = chart.base.point(q.phi + dp, q.t + dt)?;
                let a0 = chart.bframes[chart.bindex(0, q.ei, g, *sh)].alpha;
                let a1 = chart.bframes[chart.bindex(1, q.ei, g, *sh)].alpha;
                let tt = q.t + dt;
                let alpha = (1.0 - tt) * a0 + tt * a1;
                a[s] = chart_vectors(&sp, &st, alpha)
                    .ok_or(Error::DegenerateElement { element: q.elem, det: 0.0 })?;
            }
            quad.push(ChartQuad { ei: q.ei, el: q.el, g, u: q.u, v: q.v, t: q.t, w: q.w, x, xp, xt, a });
        }
        let mut test_mass = vec![0.0; chart.layout.len()];
        for q in &quad {
            let lb = chart.layout.local_basis(q.ei, q.el, q.u, q.v);
            for j in 0..lb.n {
                test_mass[lb.dof[j]] += q.w * lb.val[j];
            }
        }
        chart.quad = quad;
        chart.test_mass = test_mass;
        chart.length_scale = chart.reference_length_scale()?;
        Ok(chart)
    }

    /// The chart around an exact orbit cylinder between its planes, in flat C^2.
    pub fn orbit(orbit: OrbitCylinder, m: usize, k: usize) -> Result<Self> {
        Self::new(AmbientStructure::flat(2), ChartBase::Orbit { orbit }, orbit.boundaries(), m, k)
    }

    /// The chart around mesh nodes.
    pub fn around(mesh: &CylinderMesh, lags: [BoundaryLagrangian; 2]) -> Result<Self> {
        Self::new(mesh.ambient.clone(), ChartBase::Mesh { mesh: mesh.clone() }, lags, mesh.m, mesh.k)
    }

    /// Dof layout of the potentials.
    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    fn bindex(&self, i: usize, ei: usize, g: usize, sh: usize) -> usize {
        ((i * self.m + ei) * 4 + g) * 3 + sh
    }

    fn boundary_frame(&self, i: usize, phi: f64, guess: Option<[f64; 2]>) -> Result<BoundaryFrame> {
        let (x, xp, xt) = self.base.point(phi, i as f64)?;
        let lag = &self.lags[i];
        let start = match guess {
            Some(g) => g,
            None => lag.initial_guess(&x),
        };
        let xb = lag.closest_param(&x, start)?;
        let (_, d) = lag.first(xb)?;
        let cols = [d[0].to_real4(), d[1].to_real4()];
        let n = [
            [dot4(&cols[0], &cols[0]), dot4(&cols[0], &cols[1])],
            [dot4(&cols[1], &cols[0]), dot4(&cols[1], &cols[1])],
        ];
        let det = n[0][0] * n[1][1] - n[0][1] * n[1][0];
        if !(det > 0.0) {
            return Err(Error::Domain("boundary Lagrangian frame is singular".into()));
        }
        let inv = [[n[1][1] / det, -n[0][1] / det], [-n[1][0] / det, n[0][0] / det]];
        let mut pinv = [[0.0; 4]; 2];
        for r in 0..2 {
            for c in 0..4 {
                pinv[r][c] = inv[r][0] * cols[0][c] + inv[r][1] * cols[1][c];
            }
        }
        let perp = |z: &C2| {
            let p = apply_pinv(&pinv, z);
            *z - (d[0] * p[0] + d[1] * p[1])
        };
        let nu = conormal(&xp, &xt);
        let (a, b) = (perp(&nu), perp(&nu.cscale(I)));
        let den = a.norm_sqr();
        if !(den > 1e-24 * nu.norm_sqr()) {
            return Err(Error::Domain(format!("cylinder is tangent to its boundary Lagrangian at phi = {phi:.4}")));
        }
        let alpha = -a.dot(&b) / den;
        let av = chart_vectors(&xp, &xt, alpha).ok_or(Error::DegenerateElement { element: 0, det: 0.0 })?;
        Ok(BoundaryFrame { xb, xbase: x, pinv, alpha, a: av })
    }

    fn reference_length_scale(&self) -> Result<f64> {
        // Smallest of the loop radii and the t-length of the reference.
        let mut scale = f64::INFINITY;
        let dphi = 2.0 * PI / self.m as f64;
        for l in 0..=self.k {
            let t = l as f64 / self.k as f64;
            let pts: Vec<C2> = (0..self.m)
                .map(|i| self.base.point(i as f64 * dphi, t).map(|p| p.0))
                .collect::<Result<_>>()?;
            let len: f64 = (0..self.m).map(|i| (pts[(i + 1) % self.m] - pts[i]).norm()).sum();
            scale = scale.min(len / (2.0 * PI));
        }
        for i in 0..self.m {
            let mut len = 0.0;
            let mut prev = self.base.point(i as f64 * dphi, 0.0)?.0;
            for l in 1..=self.k {
                let p = self.base.point(i as f64 * dphi, l as f64 / self.k as f64)?.0;
                len += (p - prev).norm();
                prev = p;
            }
            scale = scale.min(len);
        }
        Ok(scale)
    }

    /// Unknown index of `u` dof `d` (rows `1..=K+1`).
    fn u_unknown(&self, d: usize) -> Option<usize> {
        let l = d / self.m;
        (l >= 1 && l <= self.k + 1).then(|| d - self.m)
    }

    fn nu(&self) -> usize {
        self.m * (self.k + 1)
    }

    fn v_unknown(&self, d: usize) -> Option<usize> {
        (d >= 1).then(|| self.nu() + d - 1)
    }

    /// Number of unknowns (and equations).
    pub fn unknowns(&self) -> usize {
        self.nu() + self.layout.len() - 1
    }

    fn pack(&self, uc: &[f64], vc: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.unknowns()];
        for d in 0..self.layout.len() {
            if let Some(j) = self.u_unknown(d) {
                x[j] = uc[d];
            }
            if let Some(j) = self.v_unknown(d) {
                x[j] = vc[d];
            }
        }
        x
    }

    fn unpack(&self, x: &[f64], ell: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.layout.len();
        let mut uc = vec![0.0; n];
        let mut vc = vec![0.0; n];
        for d in 0..n {
            if let Some(j) = self.u_unknown(d) {
                uc[d] = x[j];
            }
            if let Some(j) = self.v_unknown(d) {
                vc[d] = x[j];
            }
        }
        for d in self.layout.c1() {
            uc[d] = ell;
        }
        (uc, vc)
    }

    fn equations(&self, ev: &Evaluation) -> Vec<f64> {
        let mut r = vec![0.0; self.unknowns()];
        for a in 0..self.layout.len() {
            if let Some(j) = self.u_unknown(a) {
                r[j] = ev.rf[a];
            }
            if let Some(j) = self.v_unknown(a) {
                r[j] = ev.rw[a];
            }
        }
        r
    }

    fn scaled_norm(&self, ev: &Evaluation) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.layout.len() {
            if self.u_unknown(a).is_some() {
                worst = worst.max((ev.rf[a] / self.test_mass[a]).abs());
            }
            if self.v_unknown(a).is_some() {
                worst = worst.max((ev.rw[a] / self.test_mass[a]).abs());
            }
        }
        worst
    }

    /// Boundary trace correction at one boundary frame: `q`, and `dq/dc_j`
    /// for the local dofs (16 u then 16 v).
    fn boundary_q(&self, i: usize, f: &BoundaryFrame, lb: &LocalBasis, uc: &[f64], vc: &[f64], jac: bool) -> Result<(C2, [C2; 32])> {
        let mut eb = [C2::ZERO; 32];
        let mut vb = C2::ZERO;
        for j in 0..lb.n {
            let eu = f.a[0] * lb.dphi[j] + f.a[1] * lb.dt[j];
            let evv = f.a[2] * lb.dphi[j] + f.a[3] * lb.dt[j];
            vb += eu * uc[lb.dof[j]] + evv * vc[lb.dof[j]];
            eb[j] = eu;
            eb[16 + j] = evv;
        }
        let dx = apply_pinv(&f.pinv, &vb);
        let y = [f.xb[0] + dx[0], f.xb[1] + dx[1]];
        let (fy, dfy) = self.lags[i].first(y).map_err(|e| Error::ChartOverflow(format!("boundary map: {e}")))?;
        let q = fy - f.xbase - vb;
        let mut dq = [C2::ZERO; 32];
        if jac {
            for j in 0..32 {
                if eb[j] == C2::ZERO {
                    continue;
                }
                let p = apply_pinv(&f.pinv, &eb[j]);
                dq[j] = dfy[0] * p[0] + dfy[1] * p[1] - eb[j];
            }
        }
        Ok((q, dq))
    }

    fn evaluate(&self, uc: &[f64], vc: &[f64], jac: bool, keep_frames: bool) -> Result<Evaluation> {
        let (m, k) = (self.m, self.k);
        let ndof = self.layout.len();
        let h = FD_STEP;
        let dphi = 2.0 * PI / m as f64;
        let du = h / dphi;
        let dv = h * k as f64;
        // Boundary corrections per boundary, column and shift.
        let mut bq: Vec<Option<(C2, [C2; 32])>> = vec![None; self.bframes.len()];
        for i in 0..2 {
            let el = if i == 0 { 0 } else { k - 1 };
            let vedge = i as f64;
            for ei in 0..m {
                for g in 0..4 {
                    for (sh, off) in [0.0, du, -du].iter().enumerate() {
                        let idx = self.bindex(i, ei, g, sh);
                        let lb = self.layout.local_basis(ei, el, self.gauss[g] + off, vedge);
                        bq[idx] = Some(self.boundary_q(i, &self.bframes[idx], &lb, uc, vc, jac)?);
                    }
                }
            }
        }
        let mut rf = vec![0.0; ndof];
        let mut rw = vec![0.0; ndof];
        let mut min_im = f64::INFINITY;
        let mut trips = if jac { Some(Vec::with_capacity(m * k * 32 * 32)) } else { None };
        let mut frames = if keep_frames { Some(Vec::with_capacity(self.quad.len())) } else { None };
        let mut elem = [[0.0f64; 32]; 32];
        let mut elem_dofs = [0usize; 16];
        for (qi, q) in self.quad.iter().enumerate() {
            let first_in_elem = qi % 16 == 0;
            if first_in_elem {
                elem = [[0.0; 32]; 32];
            }
            let lbs = [
                self.layout.local_basis(q.ei, q.el, q.u, q.v),
                self.layout.local_basis(q.ei, q.el, q.u + du, q.v),
                self.layout.local_basis(q.ei, q.el, q.u - du, q.v),
                self.layout.local_basis(q.ei, q.el, q.u, q.v + dv),
                self.layout.local_basis(q.ei, q.el, q.u, q.v - dv),
            ];
            let lb0 = &lbs[0];
            elem_dofs.copy_from_slice(&lb0.dof);
            // Chart vectors of each local dof at each stencil point.
            let mut e = [[C2::ZERO; 32]; 5];
            for s in 0..5 {
                let a = &q.a[s];
                let lb = &lbs[s];
                for j in 0..16 {
                    e[s][j] = a[0] * lb.dphi[j] + a[1] * lb.dt[j];
                    e[s][16 + j] = a[2] * lb.dphi[j] + a[3] * lb.dt[j];
                }
            }
            let inv2h = 0.5 / h;
            let mut y = q.x;
            let mut yp = q.xp;
            let mut yt = q.xt;
            for j in 0..32 {
                let c = if j < 16 { uc[lb0.dof[j]] } else { vc[lb0.dof[j - 16]] };
                if c == 0.0 {
                    continue;
                }
                y += e[0][j] * c;
                yp += (e[1][j] - e[2][j]) * (c * inv2h);
                yt += (e[3][j] - e[4][j]) * (c * inv2h);
            }
            // Boundary trace corrections.
            let mut bterms: Vec<(f64, f64, usize)> = Vec::new();
            for i in 0..2 {
                let (b, db) = blend(i, q.t, k);
                if b == 0.0 && db == 0.0 {
                    continue;
                }
                let base = self.bindex(i, q.ei, q.g, 0);
                let (qc, _) = bq[base].as_ref().expect("boundary row");
                let (qpl, _) = bq[base + 1].as_ref().expect("boundary row");
                let (qmi, _) = bq[base + 2].as_ref().expect("boundary row");
                y += *qc * b;
                yp += (*qpl - *qmi) * (b * inv2h);
                yt += *qc * db;
                bterms.push((b, db, base));
            }
            let (f, gf) = self.ambient.density_jet2(&y)?;
            let det = yp.det(&yt);
            let om = f * det;
            min_im = min_im.min(om.im);
            let wom = yp.omega(&yt);
            for j in 0..16 {
                rf[lb0.dof[j]] += q.w * om.re * lb0.val[j];
                rw[lb0.dof[j]] += q.w * wom * lb0.val[j];
            }
            if let Some(fr) = frames.as_mut() {
                fr.push((y, yp, yt));
            }
            if jac {
                for j in 0..32 {
                    let mut dy = e[0][j];
                    let mut dyp = (e[1][j] - e[2][j]) * inv2h;
                    let mut dyt = (e[3][j] - e[4][j]) * inv2h;
                    for &(b, db, base) in &bterms {
                        let dqc = bq[base].as_ref().expect("boundary row").1[j];
                        let dqp = bq[base + 1].as_ref().expect("boundary row").1[j];
                        let dqm = bq[base + 2].as_ref().expect("boundary row").1[j];
                        dy += dqc * b;
                        dyp += (dqp - dqm) * (b * inv2h);
                        dyt += dqc * db;
                    }
                    let dfy = gf[0] * dy[0] + gf[1] * dy[1];
                    let dom = dfy * det + f * (dyp.det(&yt) + yp.det(&dyt));
                    let dw = dyp.omega(&yt) + yp.omega(&dyt);
                    for a in 0..16 {
                        let wb = q.w * lb0.val[a];
                        elem[a][j] += wb * dom.re;
                        elem[16 + a][j] += wb * dw;
                    }
                }
                if qi % 16 == 15 {
                    let tr = trips.as_mut().expect("jacobian requested");
                    for a in 0..32 {
                        let row = if a < 16 { self.u_unknown(elem_dofs[a]) } else { self.v_unknown(elem_dofs[a - 16]) };
                        let Some(row) = row else { continue };
                        for j in 0..32 {
                            let col = if j < 16 { self.u_unknown(elem_dofs[j]) } else { self.v_unknown(elem_dofs[j - 16]) };
                            if let Some(col) = col {
                                if elem[a][j] != 0.0 {
                                    tr.push((row, col, elem[a][j]));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Evaluation { rf, rw, min_im, jac: trips, frames })
    }

    /// The embedded point of the chart at `(phi, t)` for coefficient vectors.
    fn embed_at(&self, uc: &[f64], vc: &[f64], phi: f64, t: f64, frames: [&BoundaryFrame; 2]) -> Result<C2> {
        let (x, xp, xt) = self.base.point(phi, t)?;
        let alpha = (1.0 - t) * frames[0].alpha + t * frames[1].alpha;
        let a = chart_vectors(&xp, &xt, alpha).ok_or(Error::DegenerateElement { element: 0, det: 0.0 })?;
        let (ei, el, u, v) = self.layout.locate(phi, t);
        let lb = self.layout.local_basis(ei, el, u, v);
        let mut y = x;
        for j in 0..lb.n {
            y += (a[0] * lb.dphi[j] + a[1] * lb.dt[j]) * uc[lb.dof[j]];
            y += (a[2] * lb.dphi[j] + a[3] * lb.dt[j]) * vc[lb.dof[j]];
        }
        for i in 0..2 {
            let (b, _) = blend(i, t, self.k);
            if b == 0.0 {
                continue;
            }
            let elb = if i == 0 { 0 } else { self.k - 1 };
            let lbb = self.layout.local_basis(ei, elb, u, i as f64);
            let (q, _) = self.boundary_q(i, frames[i], &lbb, uc, vc, false)?;
            y += q * b;
        }
        Ok(y)
    }

    /// Mesh nodes of the chart image.
    fn embed_nodes(&self, uc: &[f64], vc: &[f64]) -> Result<Vec<C2>> {
        let dphi = 2.0 * PI / self.m as f64;
        let mut out = Vec::with_capacity(self.m * (self.k + 1));
        for l in 0..=self.k {
            let t = l as f64 / self.k as f64;
            for i in 0..self.m {
                let fr = [&self.node_frames[i], &self.node_frames[self.m + i]];
                out.push(self.embed_at(uc, vc, i as f64 * dphi, t, fr)?);
            }
        }
        Ok(out)
    }

    fn base_nodes(&self) -> Result<Vec<C2>> {
        let dphi = 2.0 * PI / self.m as f64;
        let mut out = Vec::with_capacity(self.m * (self.k + 1));
        for l in 0..=self.k {
            for i in 0..self.m {
                out.push(self.base.point(i as f64 * dphi, l as f64 / self.k as f64)?.0);
            }
        }
        Ok(out)
    }

    fn check_field(&self, u: &ScalarField) -> Result<()> {
        if u.disc != Discretization::Spline || u.values.len() != self.layout.len() {
            return Err(Error::Invalid("chart potentials are spline fields of the chart resolution".into()));
        }
        if u.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite potential".into()));
        }
        Ok(())
    }

    /// Largest node displacement relative to the chart radius; errors when exceeded.
    fn check_radius(&self, nodes: &[C2], base: &[C2], radius: f64) -> Result<f64> {
        let disp = nodes.iter().zip(base).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        if disp > radius * self.length_scale {
            return Err(Error::ChartOverflow(format!(
                "node displacement {disp:.3e} exceeds {:.3e}",
                radius * self.length_scale
            )));
        }
        Ok(disp)
    }

    /// The stiffness of the chart image `(u, v)`, weighted by
    /// `Im Omega(Y_phi, Y_t) / sqrt(det g)`.
    pub fn image_stiffness(&self, u: &ScalarField, v: &[f64]) -> Result<WeightedStiffness> {
        self.check_field(u)?;
        let ev = self.evaluate(&u.values, v, false, true)?;
        assemble_frames(
            ev.frames.as_ref().expect("frames requested"),
            &self.ambient,
            self.layout.clone(),
            Weight::Calibrated,
        )
    }

    /// The Galerkin special residual `int b_a Re Omega(Y_phi, Y_t)` on every
    /// spline test function, for potentials `(u, v)`.
    pub fn special_projection(&self, u: &ScalarField, v: &[f64]) -> Result<Vec<f64>> {
        self.check_field(u)?;
        Ok(self.evaluate(&u.values, v, false, false)?.rf)
    }

    /// Scaled residual norm of the chart equations at `(u, v)`.
    pub fn residual_norm(&self, u: &ScalarField, v: &[f64]) -> Result<f64> {
        self.check_field(u)?;
        Ok(self.scaled_norm(&self.evaluate(&u.values, v, false, false)?))
    }
}

fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// The chart image of a potential `u` (with `v = 0`).
pub fn chart_embed(chart: &WeinsteinChart, u: &ScalarField) -> Result<CylinderMesh> {
    chart.check_field(u)?;
    let zero = vec![0.0; chart.layout.len()];
    let nodes = chart.embed_nodes(&u.values, &zero)?;
    CylinderMesh::new(chart.ambient.clone(), chart.m, chart.k, nodes)
}

/// The chart image of a potential pair `(u, v)`.
pub fn chart_embed_pair(chart: &WeinsteinChart, u: &ScalarField, v: &[f64]) -> Result<CylinderMesh> {
    chart.check_field(u)?;
    let nodes = chart.embed_nodes(&u.values, v)?;
    CylinderMesh::new(chart.ambient.clone(), chart.m, chart.k, nodes)
}

/// Per-node special residual `Re Omega / dvol` of a mesh (bilinear
/// geometry), averaged against the nodal hat functions.
pub fn special_residual(ambient: &AmbientStructure, mesh: &CylinderMesh) -> Result<ScalarField> {
    let layout = DofLayout::new(mesh, Discretization::Bilinear);
    let surf = mesh.surface(Discretization::Bilinear)?;
    let mut num = vec![0.0; layout.len()];
    let mut den = vec![0.0; layout.len()];
    for q in layout.quadrature() {
        let (x, xp, xt) = surf.point(q.phi, q.t)?;
        let (re, vol) = if mesh.dim() == 1 {
            let f = ambient.holomorphic_volume(&[x[0]], &[&[xt[0]]])?;
            (f.re, xt.norm())
        } else {
            let g = metric(&xp, &xt);
            let det = g[0] * g[2] - g[1] * g[1];
            if !(det > 0.0) {
                return Err(Error::DegenerateElement { element: q.elem, det });
            }
            (ambient.omega2(&x, &xp, &xt).re, det.sqrt())
        };
        let lb = layout.local_basis(q.ei, q.el, q.u, q.v);
        for j in 0..lb.n {
            num[lb.dof[j]] += q.w * lb.val[j] * re;
            den[lb.dof[j]] += q.w * lb.val[j] * vol;
        }
    }
    let values = num.iter().zip(&den).map(|(a, b)| a / b).collect();
    Ok(ScalarField::free(Discretization::Bilinear, values))
}

/// Outcome of a Newton correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonResult {
    /// Potential `u` (spline coefficients).
    pub u: ScalarField,
    /// Potential `v` (spline coefficients).
    pub v: Vec<f64>,
    /// Newton steps taken.
    pub iterations: usize,
    /// Scaled residual before each step and after the last.
    pub history: Vec<f64>,
    /// Smallest `Im Omega(Y_phi, Y_t)` over the quadrature points.
    pub min_im_omega: f64,
    /// Largest node displacement from the reference.
    pub displacement: f64,
}

/// Newton's method for the chart equations with the `C1` constant of `u`
/// fixed at `fixed_component`, starting from `u0` (and `v = 0`).
pub fn newton_correct(chart: &WeinsteinChart, u0: &ScalarField, fixed_component: f64, opts: &NewtonOptions) -> Result<NewtonResult> {
    newton_from(chart, u0, None, fixed_component, opts)
}

/// Newton's method from a potential pair.
pub fn newton_from(
    chart: &WeinsteinChart,
    u0: &ScalarField,
    v0: Option<&[f64]>,
    fixed_component: f64,
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    chart.check_field(u0)?;
    let zero = vec![0.0; chart.layout.len()];
    let mut x = chart.pack(&u0.values, v0.unwrap_or(&zero));
    let base = chart.base_nodes()?;
    let mut history = Vec::new();
    let (mut uc, mut vc) = chart.unpack(&x, fixed_component);
    let mut ev = chart.evaluate(&uc, &vc, true, false)?;
    let mut norm = chart.scaled_norm(&ev);
    history.push(norm);
    let mut iterations = 0;
    while !(norm < opts.tol) {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence(format!(
                "Newton residual {norm:.3e} after {iterations} iterations"
            )));
        }
        let n = chart.unknowns();
        let jm = CsrMatrix::from_triplets(n, n, ev.jac.as_ref().expect("jacobian requested"));
        let r = chart.equations(&ev);
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = SparseLu::new(&jm)?.solve(&neg)?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + lambda * b).collect();
            let (ut, vt) = chart.unpack(&xt, fixed_component);
            match chart.evaluate(&ut, &vt, true, false) {
                Ok(e) => {
                    let nn = chart.scaled_norm(&e);
                    if nn < norm || nn < opts.tol {
                        accepted = Some((xt, ut, vt, e, nn));
                        break;
                    }
                }
                Err(Error::ChartOverflow(_)) | Err(Error::Domain(_)) | Err(Error::NoConvergence(_)) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        let Some((xn, un, vn, en, nn)) = accepted else {
            if norm < opts.floor {
                break;
            }
            return Err(Error::Divergence { iterations, residual: norm });
        };
        x = xn;
        uc = un;
        vc = vn;
        ev = en;
        norm = nn;
        history.push(norm);
        iterations += 1;
    }
    let nodes = chart.embed_nodes(&uc, &vc)?;
    let displacement = chart.check_radius(&nodes, &base, opts.chart_radius)?;
    Ok(NewtonResult {
        u: ScalarField { disc: Discretization::Spline, tag: SpaceTag::ZeroC0ConstC1, values: uc },
        v: vc,
        iterations,
        history,
        min_im_omega: ev.min_im,
        displacement,
    })
}

/// An imaginary special Lagrangian cylinder produced by a solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslCylinder {
    /// Nodes of the solution.
    pub mesh: CylinderMesh,
    /// Algebraic residual of the solve.
    pub residual_norm: f64,
    /// Relative flux from the family anchor.
    pub flux_coordinate: f64,
    /// Newton steps of the solve.
    pub iterations: usize,
    /// Smallest `Im Omega` pullback density at the quadrature points.
    pub min_im_omega: f64,
}

impl IslCylinder {
    /// Wraps a Newton result of a chart.
    pub fn from_newton(chart: &WeinsteinChart, res: &NewtonResult, flux_coordinate: f64) -> Result<Self> {
        let mesh = chart_embed_pair(chart, &res.u, &res.v)?;
        if !(res.min_im_omega > 0.0) {
            return Err(Error::Positivity { phase: PI / 2.0, index: 0 });
        }
        Ok(IslCylinder {
            mesh,
            residual_norm: *res.history.last().unwrap_or(&f64::NAN),
            flux_coordinate,
            iterations: res.iterations,
            min_im_omega: res.min_im_omega,
        })
    }

    /// An exact cylinder given by nodes, accepted after a residual check of
    /// its special residual.
    pub fn from_exact(mesh: CylinderMesh, flux_coordinate: f64) -> Result<Self> {
        let f = special_residual(&mesh.ambient, &mesh)?;
        let residual_norm = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(IslCylinder { mesh, residual_norm, flux_coordinate, iterations: 0, min_im_omega: f64::NAN })
    }
}

/// Solves the cylinder near `base` between `lags` with `C1` constant `ell`
/// (zero: the cylinder of the same flux as the reference).
pub fn solve_near(
    ambient: &AmbientStructure,
    base: ChartBase,
    lags: [BoundaryLagrangian; 2],
    m: usize,
    k: usize,
    ell: f64,
    opts: &NewtonOptions,
) -> Result<IslCylinder> {
    let chart = WeinsteinChart::new(ambient.clone(), base, lags, m, k)?;
    let u0 = if ell == 0.0 {
        ScalarField { disc: Discretization::Spline, tag: SpaceTag::ZeroC0ConstC1, values: vec![0.0; chart.layout.len()] }
    } else {
        let mut s = chart_tangent(&chart)?;
        s.values.iter_mut().for_each(|v| *v *= ell);
        s
    };
    let res = newton_correct(&chart, &u0, ell, opts)?;
    IslCylinder::from_newton(&chart, &res, 0.0)
}

/// Fundamental harmonic of the chart reference (spline, calibrated weight).
fn chart_tangent(chart: &WeinsteinChart) -> Result<ScalarField> {
    let frames = chart
        .layout
        .quadrature()
        .iter()
        .map(|q| chart.base.point(q.phi, q.t))
        .collect::<Result<Vec<_>>>()?;
    let st = assemble_frames(&frames, &chart.ambient, chart.layout.clone(), Weight::Calibrated)?;
    fundamental_harmonic(&st)
}

/// The tangent of the solution family at a cylinder: its fundamental
/// harmonic (spline discretization, calibrated weight), `C1` value 1.
pub fn tangent_direction(isl: &IslCylinder) -> Result<ScalarField> {
    if isl.mesh.dim() == 1 {
        let st = assemble_with(&isl.mesh, Discretization::Bilinear, Weight::Calibrated)?;
        return fundamental_harmonic(&st);
    }
    let st = assemble_with(&isl.mesh, Discretization::Spline, Weight::Calibrated)?;
    fundamental_harmonic(&st)
}

/// Symplectic area of the ruled strips between two cylinders, averaged over
/// the cross paths `p = const`: `int int omega(g_t, g_s) dt ds` for
/// `g = (1 - s) a + s b`.
pub fn strip_flux(a: &CylinderMesh, b: &CylinderMesh) -> Result<f64> {
    if a.m != b.m || a.k != b.k || a.dim() != b.dim() {
        return Err(Error::Invalid("strip flux needs matching resolutions".into()));
    }
    let mut total = 0.0;
    for i in 0..a.m {
        total += strip_path(
            &(0..=a.k).map(|l| a.node(i, l)).collect::<Vec<_>>(),
            &(0..=b.k).map(|l| b.node(i, l)).collect::<Vec<_>>(),
        );
    }
    Ok(total / a.m as f64)
}

/// Exact `int int omega(g_t, g_s)` of the bilinear strip between two polylines.
pub fn strip_path(a: &[C2], b: &[C2]) -> f64 {
    let mut s = 0.0;
    for l in 0..a.len() - 1 {
        let tang = ((a[l + 1] - a[l]) + (b[l + 1] - b[l])) * 0.5;
        let dsv = ((b[l] - a[l]) + (b[l + 1] - a[l + 1])) * 0.5;
        s += tang.omega(&dsv);
    }
    s
}

/// A continued family with the reason it stopped early, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    /// Accepted cylinders, starting with the seed.
    pub cylinders: Vec<IslCylinder>,
    /// Why the family ended before `count` steps.
    pub truncation: Option<String>,
    /// Steps actually used (after halvings).
    pub steps: Vec<f64>,
}

/// Continues a family from `seed` by `count` steps of relative flux `step`.
///
/// Each step re-charts at the current cylinder, predicts `-step * sigma`
/// (`sigma` its fundamental harmonic) and corrects with the `C1` constant of
/// `u` fixed at `-step`. Divergent steps are halved down to [`MIN_STEP`].
/// Cylinders whose diameter drops below [`END_THRESHOLD`] of the seed's end
/// the family (hand-off to the end solver).
pub fn continue_family(
    ambient: &AmbientStructure,
    seed: &IslCylinder,
    step: f64,
    count: usize,
    lags: &[BoundaryLagrangian; 2],
    opts: &NewtonOptions,
) -> Result<ContinuationResult> {
    if seed.mesh.dim() == 1 {
        return Err(Error::Invalid("segment families use continue_segments".into()));
    }
    let mut out = ContinuationResult { cylinders: vec![seed.clone()], truncation: None, steps: Vec::new() };
    if step == 0.0 {
        for _ in 0..count {
            out.cylinders.push(seed.clone());
            out.steps.push(0.0);
        }
        return Ok(out);
    }
    let d0 = seed.mesh.diameter();
    let mut current = seed.clone();
    let mut h = step;
    let mut done = 0;
    while done < count {
        let mut mesh = current.mesh.clone();
        mesh.ambient = ambient.clone();
        let attempt = (|| -> Result<IslCylinder> {
            let chart = WeinsteinChart::around(&mesh, lags.clone())?;
            let mut u0 = chart_tangent(&chart)?;
            u0.values.iter_mut().for_each(|v| *v *= -h);
            let res = newton_correct(&chart, &u0, -h, opts)?;
            let mut c = IslCylinder::from_newton(&chart, &res, 0.0)?;
            c.flux_coordinate = current.flux_coordinate + strip_flux(&current.mesh, &c.mesh)?;
            Ok(c)
        })();
        match attempt {
            Ok(c) => {
                let small = c.mesh.diameter() < END_THRESHOLD * d0;
                current = c.clone();
                out.cylinders.push(c);
                out.steps.push(h);
                done += 1;
                if small {
                    out.truncation = Some("end reached: diameter below the end threshold".into());
                    break;
                }
            }
            Err(e) => {
                h *= 0.5;
                if h.abs() < MIN_STEP {
                    out.truncation = Some(format!("corrector failed at flux {:.6}: {e}", current.flux_coordinate));
                    break;
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Segments (n = 1)

/// The constraint that fixes a segment within its family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentConstraint {
    /// `C0` endpoint at this parameter of the first line.
    Anchor(f64),
    /// Strip flux from `previous` equals `flux`.
    Flux {
        /// Previous segment nodes.
        previous: Vec<Complex64>,
        /// Target flux.
        flux: f64,
    },
}

fn segment_equations(ambient: &AmbientStructure, lines: &[Line1; 2], z: &[Complex64], c: &SegmentConstraint) -> Result<Vec<f64>> {
    let k = z.len() - 1;
    let kf = k as f64;
    let mut r = Vec::with_capacity(2 * k + 2);
    for l in 0..k {
        let mid = (z[l] + z[l + 1]) * 0.5;
        let f = ambient.holomorphic_volume(&[mid], &[&[Complex64::new(1.0, 0.0)]])?;
        r.push((f * (z[l + 1] - z[l])).re * kf);
    }
    for (i, zi) in [(0, z[0]), (1, z[k])] {
        let ln = &lines[i];
        r.push((ln.direction.conj() * (zi - ln.origin)).im / ln.direction.norm());
    }
    for l in 0..k - 1 {
        r.push(((z[l + 2] - z[l + 1]).norm_sqr() - (z[l + 1] - z[l]).norm_sqr()) * kf * kf);
    }
    r.push(match c {
        SegmentConstraint::Anchor(x) => lines[0].project(z[0]) - x,
        SegmentConstraint::Flux { previous, flux } => {
            let a: Vec<C2> = previous.iter().map(|w| C2::new(*w, Complex64::new(0.0, 0.0))).collect();
            let b: Vec<C2> = z.iter().map(|w| C2::new(*w, Complex64::new(0.0, 0.0))).collect();
            strip_path(&a, &b) - flux
        }
    });
    Ok(r)
}

/// Solves for the discrete ISL segment (equal node spacing, midpoint
/// special condition on every interval) between two lines in C.
pub fn solve_segment(
    ambient: &AmbientStructure,
    lines: &[Line1; 2],
    guess: &[Complex64],
    constraint: &SegmentConstraint,
    opts: &NewtonOptions,
) -> Result<(Vec<Complex64>, NewtonResultSegment)> {
    if ambient.n != 1 {
        return Err(Error::Invalid("segments live in n = 1".into()));
    }
    if guess.len() < 3 {
        return Err(Error::Invalid("segments need at least 2 intervals".into()));
    }
    let n = 2 * guess.len();
    let to_z = |x: &[f64]| -> Vec<Complex64> { x.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect() };
    let mut x: Vec<f64> = guess.iter().flat_map(|z| [z.re, z.im]).collect();
    let mut history = Vec::new();
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut r = segment_equations(ambient, lines, &to_z(&x), constraint)?;
    history.push(norm(&r));
    let mut iterations = 0;
    while !(norm(&r) < opts.tol) {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence(format!("segment residual {:.3e}", norm(&r))));
        }
        let h = 1e-7;
        let mut jm = vec![0.0; n * n];
        for c in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            let rp = segment_equations(ambient, lines, &to_z(&xp), constraint)?;
            let rm = segment_equations(ambient, lines, &to_z(&xm), constraint)?;
            for row in 0..n {
                jm[row * n + c] = (rp[row] - rm[row]) / (2.0 * h);
            }
        }
        let dx = solve_dense(jm, r.iter().map(|v| -v).collect(), n)
            .ok_or_else(|| Error::Solver("singular segment Jacobian".into()))?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + lambda * b).collect();
            let rt = segment_equations(ambient, lines, &to_z(&xt), constraint)?;
            if norm(&rt) < norm(&r) || norm(&rt) < opts.tol {
                accepted = Some((xt, rt));
                break;
            }
            lambda *= 0.5;
        }
        let Some((xn, rn)) = accepted else {
            return Err(Error::Divergence { iterations, residual: norm(&r) });
        };
        x = xn;
        r = rn;
        history.push(norm(&r));
        iterations += 1;
    }
    let z = to_z(&x);
    let k = z.len() - 1;
    let im_ok = (0..k).all(|l| {
        let mid = (z[l] + z[l + 1]) * 0.5;
        ambient
            .holomorphic_volume(&[mid], &[&[z[l + 1] - z[l]]])
            .map(|f| f.im > 0.0)
            .unwrap_or(false)
    });
    if !im_ok {
        return Err(Error::Positivity { phase: PI / 2.0, index: 0 });
    }
    Ok((z, NewtonResultSegment { iterations, history }))
}

/// Iteration record of a segment solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonResultSegment {
    /// Newton steps.
    pub iterations: usize,
    /// Residual history.
    pub history: Vec<f64>,
}

fn segment_cylinder(ambient: &AmbientStructure, z: &[Complex64], rec: &NewtonResultSegment, flux: f64) -> Result<IslCylinder> {
    let nodes = z.iter().map(|w| C2::new(*w, Complex64::new(0.0, 0.0))).collect();
    Ok(IslCylinder {
        mesh: CylinderMesh::new(ambient.clone(), 1, z.len() - 1, nodes)?,
        residual_norm: *rec.history.last().unwrap_or(&f64::NAN),
        flux_coordinate: flux,
        iterations: rec.iterations,
        min_im_omega: f64::NAN,
    })
}

/// The segment family seed with `C0` endpoint at parameter `x0` of `lines[0]`.
pub fn seed_segment(
    ambient: &AmbientStructure,
    lines: &[Line1; 2],
    x0: f64,
    k: usize,
    opts: &NewtonOptions,
) -> Result<IslCylinder> {
    let z0 = lines[0].at(x0);
    let z1 = lines[1].at(lines[1].project(z0));
    let guess: Vec<Complex64> = (0..=k).map(|l| z0 + (z1 - z0) * (l as f64 / k as f64)).collect();
    let (z, rec) = solve_segment(ambient, lines, &guess, &SegmentConstraint::Anchor(x0), opts)?;
    segment_cylinder(ambient, &z, &rec, 0.0)
}

/// Continues a segment family by steps of strip flux.
pub fn continue_segments(
    ambient: &AmbientStructure,
    lines: &[Line1; 2],
    seed: &IslCylinder,
    step: f64,
    count: usize,
    opts: &NewtonOptions,
) -> Result<ContinuationResult> {
    let mut out = ContinuationResult { cylinders: vec![seed.clone()], truncation: None, steps: Vec::new() };
    let mut current = seed.clone();
    let mut h = step;
    let mut done = 0;
    while done < count {
        let prev: Vec<Complex64> = current.mesh.nodes.iter().map(|z| z[0]).collect();
        if step == 0.0 {
            out.cylinders.push(seed.clone());
            out.steps.push(0.0);
            done += 1;
            continue;
        }
        let c = SegmentConstraint::Flux { previous: prev.clone(), flux: h };
        match solve_segment(ambient, lines, &prev, &c, opts) {
            Ok((z, rec)) => {
                let cyl = segment_cylinder(ambient, &z, &rec, current.flux_coordinate + h)?;
                current = cyl.clone();
                out.cylinders.push(cyl);
                out.steps.push(h);
                done += 1;
            }
            Err(e) => {
                h *= 0.5;
                if h.abs() < MIN_STEP {
                    out.truncation = Some(format!("segment corrector failed: {e}"));
                    break;
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Ends

/// A cylinder solved for the rescaled problem about a cone point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndSolution {
    /// Rescaling factor.
    pub s: f64,
    /// Cone point.
    pub q: C2,
    /// Solution in rescaled coordinates.
    pub psi: IslCylinder,
    /// `q + s Psi` in the original coordinates.
    pub phi_nodes: Vec<C2>,
}

/// Solves the cylinder problem for `ambient` rescaled by `s` about `q`
/// between the rescaled boundary Lagrangians (their tangent planes at `q`
/// when `s = 0`), charted at `seed` (a cylinder in rescaled coordinates),
/// with `C1` constant zero.
pub fn end_rescale_solve(
    ambient: &AmbientStructure,
    lags: &[BoundaryLagrangian; 2],
    q: &C2,
    s: f64,
    seed: &CylinderMesh,
    opts: &NewtonOptions,
) -> Result<EndSolution> {
    if !(0.0..=END_S_MAX).contains(&s) {
        return Err(Error::Invalid(format!("rescaling factor {s} outside [0, {END_S_MAX}]")));
    }
    let mut anchors = [[0.0; 2]; 2];
    for i in 0..2 {
        let x = lags[i].closest_param(q, lags[i].initial_guess(q))?;
        let d = (lags[i].first(x)?.0 - *q).norm();
        if d > 1e-8 {
            return Err(Error::Domain(format!("cone point is {d:.2e} away from boundary {i}")));
        }
        anchors[i] = x;
    }
    let scaled = ambient.rescaled(s, q.as_slice());
    let rl = [lags[0].rescaled(anchors[0], s), lags[1].rescaled(anchors[1], s)];
    let mut base = seed.clone();
    base.ambient = scaled.clone();
    let psi = solve_near(&scaled, ChartBase::Mesh { mesh: base }, rl, seed.m, seed.k, 0.0, opts)?;
    let phi_nodes = psi.mesh.nodes.iter().map(|z| *q + *z * s).collect();
    Ok(EndSolution { s, q: *q, psi, phi_nodes })
}

/// Result of an Euler-tangency check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerReport {
    /// The position vector is nowhere within `tol_euler` of a tangent plane.
    pub nowhere_tangent: bool,
    /// Smallest angle between the position vector and the tangent planes.
    pub min_angle: f64,
}

/// Smallest angle between the position vector (Euler field about the
/// origin) and the tangent planes of a cylinder, at its nodes.
pub fn euler_tangency_check(mesh: &CylinderMesh, tol_euler: f64) -> Result<EulerReport> {
    let disc = if mesh.k >= 3 { Discretization::Spline } else { Discretization::Bilinear };
    let surf = mesh.surface(disc)?;
    let mut min_angle = f64::INFINITY;
    for l in 0..=mesh.k {
        for i in 0..mesh.m {
            let (phi, t) = (i as f64 * mesh.dphi(), l as f64 / mesh.k as f64);
            let (x, xp, xt) = surf.point(phi, t)?;
            let norm = x.norm();
            if norm == 0.0 {
                min_angle = 0.0;
                continue;
            }
            let perp = crate::geom::reject_from_plane(&x, &xp, &xt)
                .ok_or(Error::DegenerateElement { element: l * mesh.m + i, det: 0.0 })?;
            min_angle = min_angle.min((perp.norm() / norm).clamp(0.0, 1.0).asin());
        }
    }
    Ok(EulerReport { nowhere_tangent: min_angle > tol_euler, min_angle })
}

/// Checks on one end of a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndCheck {
    /// Euler tangency of the flat-cone solution.
    pub euler: EulerReport,
    /// Smallest normalized singular value of `(Psi_phi, Psi_t, Psi)`.
    pub immersion_margin: f64,
}

/// Euler tangency and the immersion of `(p, t, s) -> q + s Psi(p, t)` at
/// `s = 0` for a flat-cone cylinder in rescaled coordinates.
pub fn end_check(psi: &CylinderMesh, tol_euler: f64) -> Result<EndCheck> {
    let euler = euler_tangency_check(psi, tol_euler)?;
    let surf = psi.surface(Discretization::Spline)?;
    let mut margin = f64::INFINITY;
    for l in 0..=psi.k {
        for i in 0..psi.m {
            let (x, xp, xt) = surf.point(i as f64 * psi.dphi(), l as f64 / psi.k as f64)?;
            let cols = [xp * (1.0 / xp.norm()), xt * (1.0 / xt.norm()), x * (1.0 / x.norm())];
            let mut gram = [0.0; 9];
            for a in 0..3 {
                for b in 0..3 {
                    gram[a * 3 + b] = cols[a].dot(&cols[b]);
                }
            }
            let s = crate::sparse::singular_values(&gram, 3, 3)?;
            margin = margin.min(s[2].max(0.0).sqrt());
        }
    }
    Ok(EndCheck { euler, immersion_margin: margin })
}

/// Regularity verdict of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Interior and both ends regular.
    Regular,
    /// Interior regular; at least one end missing.
    InteriorRegularOnly {
        /// Which ends are missing.
        missing: Vec<usize>,
    },
    /// A check failed.
    NotRegular {
        /// `harmonics`, `boundary` or `end`.
        cause: String,
    },
}

/// Report of [`classify_regularity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// Every fundamental harmonic is free of critical points.
    pub harmonics_regular: bool,
    /// Index of the first cylinder with a critical harmonic.
    pub first_critical: Option<usize>,
    /// Boundary curves of consecutive cylinders are disjoint and move monotonically.
    pub boundaries_monotone: bool,
    /// End checks (`None` when the end is missing).
    pub ends: [Option<EndCheck>; 2],
    /// Aggregate verdict.
    pub verdict: Verdict,
}

/// Classifies a family ordered by flux, with optional end checks at its two ends.
pub fn classify_regularity(
    family: &[IslCylinder],
    ends: [Option<EndCheck>; 2],
    tol_crit: f64,
    tol_euler: f64,
) -> Result<RegularityReport> {
    let mut first_critical = None;
    for (n, c) in family.iter().enumerate() {
        let disc = Discretization::Bilinear;
        let st = assemble_with(&c.mesh, disc, Weight::Calibrated)?;
        let sigma = fundamental_harmonic(&st)?;
        if crate::elliptic::critical_point_scan(&c.mesh, &sigma, tol_crit)?.has_critical_points {
            first_critical = Some(n);
            break;
        }
    }
    let boundaries_monotone = boundaries_monotone(family);
    let harmonics_regular = first_critical.is_none();
    let ends_ok = ends
        .iter()
        .all(|e| e.map(|e| e.euler.min_angle > tol_euler && e.immersion_margin > tol_euler).unwrap_or(true));
    let missing: Vec<usize> = (0..2).filter(|i| ends[*i].is_none()).collect();
    let verdict = if !harmonics_regular {
        Verdict::NotRegular { cause: "harmonics".into() }
    } else if !boundaries_monotone {
        Verdict::NotRegular { cause: "boundary".into() }
    } else if !ends_ok {
        Verdict::NotRegular { cause: "end".into() }
    } else if !missing.is_empty() {
        Verdict::InteriorRegularOnly { missing }
    } else {
        Verdict::Regular
    };
    Ok(RegularityReport { harmonics_regular, first_critical, boundaries_monotone, ends, verdict })
}

fn boundaries_monotone(family: &[IslCylinder]) -> bool {
    for w in family.windows(3) {
        for which in 0..2 {
            let (a, b, c) = (w[0].mesh.boundary(which), w[1].mesh.boundary(which), w[2].mesh.boundary(which));
            for i in 0..a.len() {
                let (d1, d2) = (b[i] - a[i], c[i] - b[i]);
                if !(d1.dot(&d2) > 0.0) {
                    return false;
                }
            }
        }
    }
    for w in family.windows(2) {
        for which in 0..2 {
            let (a, b) = (w[0].mesh.boundary(which), w[1].mesh.boundary(which));
            if a.iter().zip(&b).any(|(p, q)| (*p - *q).norm() == 0.0) {
                return false;
            }
        }
    }
    true
}

/// Finite-difference linearization of the special residual against the
/// weighted Laplacian of the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    /// Largest `|D + A w|` over interior tests, relative to `max |A w|`, after
    /// Richardson extrapolation.
    pub relative_mismatch: f64,
    /// The same for the smaller step alone.
    pub plain_mismatch: f64,
}

/// Compares the one-sided differences `(F(eps w) - F(0)) / eps` of the
/// Galerkin special residual at `eps1` and `eps2`, Richardson-extrapolated,
/// with `-A w` for the calibrated stiffness `A` of the reference.
/// `w` must vanish on both boundary rows.
pub fn linearization_check(chart: &WeinsteinChart, w: &ScalarField, eps: [f64; 2]) -> Result<LinearizationReport> {
    chart.check_field(w)?;
    let lay = chart.layout();
    if lay.c0().into_iter().chain(lay.c1()).any(|d| w.values[d] != 0.0) {
        return Err(Error::Invalid("direction must vanish on the boundary".into()));
    }
    let zero = vec![0.0; lay.len()];
    let base_field = ScalarField::free(Discretization::Spline, zero.clone());
    let f0 = chart.special_projection(&base_field, &zero)?;
    let aw = chart.image_stiffness(&base_field, &zero)?.a.matvec(&w.values);
    let diff = |e: f64| -> Result<Vec<f64>> {
        let u = ScalarField::free(Discretization::Spline, w.values.iter().map(|x| x * e).collect());
        let r = chart.special_projection(&u, &zero)?;
        Ok(r.iter().zip(&f0).map(|(a, b)| (a - b) / e).collect())
    };
    let (d1, d2) = (diff(eps[0])?, diff(eps[1])?);
    let (mut rich, mut plain, mut scale) = (0.0f64, 0.0f64, 0.0f64);
    for a in lay.interior() {
        let r = (eps[0] * d2[a] - eps[1] * d1[a]) / (eps[0] - eps[1]);
        rich = rich.max((r + aw[a]).abs());
        plain = plain.max((d2[a] + aw[a]).abs());
        scale = scale.max(aw[a].abs());
    }
    Ok(LinearizationReport { relative_mismatch: rich / scale, plain_mismatch: plain / scale })
}

/// Symmetric Hausdorff distance between two cylinders: node-to-surface
/// distances on the spline surfaces, both ways.
pub fn hausdorff(a: &CylinderMesh, b: &CylinderMesh) -> Result<f64> {
    Ok(directed_distance(a, b)?.max(directed_distance(b, a)?))
}

fn directed_distance(a: &CylinderMesh, b: &CylinderMesh) -> Result<f64> {
    let ax0 = crate::spline::Axis { origin: 0.0, h: b.dphi(), n: b.m, kind: crate::spline::EndCondition::Periodic };
    let ax1 = crate::spline::Axis {
        origin: 0.0,
        h: 1.0 / b.k as f64,
        n: b.k + 1,
        kind: crate::spline::EndCondition::NotAKnot,
    };
    let sp = Spline2::new(ax0, ax1, b.nodes.clone());
    let mut worst = 0.0f64;
    for z in &a.nodes {
        let (mut best, mut arg) = (f64::INFINITY, 0usize);
        for (j, w) in b.nodes.iter().enumerate() {
            let d = (*w - *z).norm_sqr();
            if d < best {
                best = d;
                arg = j;
            }
        }
        let mut x = [(arg % b.m) as f64 * b.dphi(), (arg / b.m) as f64 / b.k as f64];
        let mut dist = best.sqrt();
        for _ in 0..30 {
            let j = sp.eval(x[0], x[1]);
            let r = j.v - *z;
            dist = dist.min(r.norm());
            let g = [[j.d0.dot(&j.d0), j.d0.dot(&j.d1)], [j.d0.dot(&j.d1), j.d1.dot(&j.d1)]];
            let rhs = [j.d0.dot(&r), j.d1.dot(&r)];
            let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
            if !(det > 0.0) {
                break;
            }
            let dx = [(rhs[0] * g[1][1] - g[0][1] * rhs[1]) / det, (g[0][0] * rhs[1] - rhs[0] * g[1][0]) / det];
            x = [x[0] - dx[0], (x[1] - dx[1]).clamp(0.0, 1.0)];
            if dx[0].abs() + dx[1].abs() < 1e-13 {
                break;
            }
        }
        dist = dist.min((sp.eval(x[0], x[1]).v - *z).norm());
        worst = worst.max(dist);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orbit() -> OrbitCylinder {
        OrbitCylinder::between(1.0, 0.3, -0.2).unwrap()
    }

    #[test]
    fn orbit_is_exact_and_chart_is_identity_at_zero() {
        let o = orbit();
        let chart = WeinsteinChart::orbit(o, 16, 8).unwrap();
        let zero = ScalarField::free(Discretization::Spline, vec![0.0; chart.layout().len()]);
        let mesh = chart_embed(&chart, &zero).unwrap();
        let exact = o.mesh(16, 8).unwrap();
        for (a, b) in mesh.nodes.iter().zip(&exact.nodes) {
            assert!((*a - *b).norm() < 1e-14);
        }
        assert!(chart.residual_norm(&zero, &vec![0.0; chart.layout().len()]).unwrap() < 1e-13);
        let worst = |m: usize, k: usize| {
            let f = special_residual(&AmbientStructure::flat(2), &o.mesh(m, k).unwrap()).unwrap();
            f.values[m..m * k].iter().fold(0.0f64, |a, v| a.max(v.abs()))
        };
        let (e1, e2) = (worst(16, 8), worst(32, 16));
        assert!(e2 < 0.3 * e1, "{e1} {e2}");
    }

    #[test]
    fn boundary_stays_on_planes() {
        let o = orbit();
        let chart = WeinsteinChart::orbit(o, 16, 8).unwrap();
        let lay = chart.layout().clone();
        let mut u = vec![0.0; lay.len()];
        for (d, val) in u.iter_mut().enumerate() {
            let (l, i) = (d / 16, d % 16);
            *val = 0.02 * (l as f64 / 10.0) * (1.0 + 0.3 * (i as f64).sin());
        }
        for d in lay.c0() {
            u[d] = 0.0;
        }
        for d in lay.c1() {
            u[d] = 0.03;
        }
        let field = ScalarField { disc: Discretization::Spline, tag: SpaceTag::ZeroC0ConstC1, values: u };
        let mesh = chart_embed(&chart, &field).unwrap();
        let lags = o.boundaries();
        assert!(mesh.boundary_distance(&lags[0], 0).unwrap() < 1e-12);
        assert!(mesh.boundary_distance(&lags[1], 1).unwrap() < 1e-12);
    }

    #[test]
    fn newton_converges_quadratically_from_a_bump() {
        let chart = WeinsteinChart::orbit(orbit(), 16, 8).unwrap();
        let lay = chart.layout().clone();
        let mut u = vec![0.0; lay.len()];
        for (d, val) in u.iter_mut().enumerate() {
            let (l, i) = (d / 16, d % 16);
            if l >= 1 && l <= 9 {
                *val = 1e-3 * (PI * l as f64 / 10.0).sin() * (1.0 + 0.5 * (i as f64 * 0.7).cos());
            }
        }
        let u0 = ScalarField { disc: Discretization::Spline, tag: SpaceTag::DirichletZeroBoth, values: u };
        let res = newton_correct(&chart, &u0, 0.0, &NewtonOptions::default()).unwrap();
        assert!(res.iterations <= 6, "{:?}", res.history);
        assert!(*res.history.last().unwrap() < 1e-11);
        assert!(res.u.values.iter().all(|v| v.abs() < 1e-9), "{:?}", res.history);
    }

    #[test]
    fn linearization_is_minus_the_weighted_laplacian() {
        let chart = WeinsteinChart::orbit(OrbitCylinder::between(0.7, 0.2, -0.35).unwrap(), 16, 8).unwrap();
        let lay = chart.layout().clone();
        let mut w = vec![0.0; lay.len()];
        for d in lay.interior() {
            let (l, i) = (d / 16, d % 16);
            w[d] = (0.3 * l as f64).sin() * (1.0 + 0.4 * (i as f64 * 0.9).cos());
        }
        let rep = linearization_check(&chart, &ScalarField::free(Discretization::Spline, w), [1e-3, 1e-4]).unwrap();
        assert!(rep.relative_mismatch < 1e-6, "{rep:?}");
        assert!(rep.plain_mismatch > 10.0 * rep.relative_mismatch);
    }

    #[test]
    fn continuation_stays_in_the_orbit_family() {
        let o = orbit();
        let seed = IslCylinder::from_exact(o.mesh(16, 8).unwrap(), 0.0).unwrap();
        let fam =
            continue_family(&AmbientStructure::flat(2), &seed, 0.05, 3, &o.boundaries(), &NewtonOptions::default())
                .unwrap();
        assert!(fam.truncation.is_none());
        let mut last = 1.0;
        for c in &fam.cylinders[1..] {
            assert!(c.residual_norm < 1e-11 && c.iterations <= 4);
            let re: Vec<f64> = c.mesh.nodes.iter().map(|z| (z[0] * z[0] + z[1] * z[1]).re).collect();
            let (lo, hi) = re.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            assert!(hi - lo < 1e-4, "{lo} {hi}");
            assert!(lo > last);
            last = hi;
        }
        let fl: Vec<f64> = fam.cylinders.iter().map(|c| c.flux_coordinate).collect();
        assert!(fl.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn end_solve_with_weight_and_euler_check() {
        let o = orbit();
        let amb = AmbientStructure::with_density(2, crate::ambient::Density::exp_linear(2, 0, Complex64::new(0.1, 0.0)));
        let lags = o.boundaries();
        let seed = o.mesh(16, 8).unwrap();
        let flat_end = end_rescale_solve(&amb, &lags, &C2::ZERO, 0.0, &seed, &NewtonOptions::default()).unwrap();
        let flat = solve_near(
            &AmbientStructure::flat(2),
            ChartBase::Mesh { mesh: seed.clone() },
            lags.clone(),
            16,
            8,
            0.0,
            &NewtonOptions::default(),
        )
        .unwrap();
        for ((a, b), c) in flat_end.psi.mesh.nodes.iter().zip(&flat.mesh.nodes).zip(&seed.nodes) {
            assert!((*a - *b).norm() < 1e-12);
            assert!((*a - *c).norm() < 1e-3);
        }
        let end = end_rescale_solve(&amb, &lags, &C2::ZERO, 0.2, &seed, &NewtonOptions::default()).unwrap();
        assert!(end.psi.residual_norm < 1e-11);
        let moved = end.psi.mesh.nodes.iter().zip(&flat.mesh.nodes).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
        assert!(moved > 1e-4 && moved < 0.1, "{moved}");
        for (p, z) in end.phi_nodes.iter().zip(&end.psi.mesh.nodes) {
            assert!((*p - *z * 0.2).norm() < 1e-15);
        }
        let chk = end_check(&flat_end.psi.mesh, 1e-3).unwrap();
        assert!(chk.euler.nowhere_tangent && chk.immersion_margin > 1e-2, "{chk:?}");
    }

    #[test]
    fn segment_family_follows_the_area_law() {
        let amb = AmbientStructure::flat(1);
        let lines = [
            Line1 { origin: Complex64::new(0.0, 0.0), direction: Complex64::new(1.0, 0.0) },
            Line1 { origin: Complex64::new(0.0, 1.0), direction: Complex64::new(1.0, 1.0) },
        ];
        let opts = NewtonOptions::default();
        let seed = seed_segment(&amb, &lines, 0.0, 8, &opts).unwrap();
        let fam = continue_segments(&amb, &lines, &seed, -0.1, 5, &opts).unwrap();
        for c in &fam.cylinders {
            let x = c.mesh.nodes[0][0].re;
            assert!((c.flux_coordinate + x + x * x / 2.0).abs() < 1e-10);
            assert!((c.mesh.nodes[8][0] - Complex64::new(x, 1.0 + x)).norm() < 1e-12);
        }
    }
}


