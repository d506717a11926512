//! Cylinder meshes, scalar fields and the weighted Laplacian
//! `Delta_rho u = *d(rho *du)`: assembly, Dirichlet solves, fundamental
//! harmonics, kernel diagnostics and gradient scans.
//!
//! A cylinder `S^1 x [0, 1]` is sampled on `M` uniform angles and `K + 1`
//! uniform `t`-levels; node `(i, l)` is stored at `l * M + i`. The degenerate
//! `n = 1` mode is a segment (`M = 1`). Two discretizations are available:
//!
//! * [`Discretization::Bilinear`]: nodal bilinear elements on the bilinear
//!   interpolant of the nodes, 2x2 Gauss (linear elements with 4-point Gauss
//!   on segments).
//! * [`Discretization::Spline`]: periodic cubic B-splines in the angle times
//!   clamped cubic B-splines in `t` on the cubic-spline interpolant of the
//!   nodes, 4x4 Gauss. Degrees of freedom are B-spline coefficients; row
//!   `l = 0` carries the `C0` trace and row `l = K + 2` the `C1` trace.

use crate::ambient::AmbientStructure;
use crate::error::{Error, Result};
use crate::geom::C2;
use crate::lagrangian::BoundaryLagrangian;
use crate::sparse::{relative_residual, singular_values, CsrMatrix, SparseLu};
use crate::spline::{gauss01, periodic_bspline, Axis, ClampedBasis, EndCondition, Spline1, Spline2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Element type of a scalar discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Nodal bilinear (segments: linear) elements.
    Bilinear,
    /// Tensor cubic B-splines.
    Spline,
}

/// Function-space constraint carried by a [`ScalarField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceTag {
    /// No boundary constraint.
    Free,
    /// Zero on both boundary circles.
    DirichletZeroBoth,
    /// Zero on `C0` and constant on `C1`.
    ZeroC0ConstC1,
}

/// Weight function of the assembled Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// `rho` of the ambient structure at the embedded point.
    Density,
    /// `|Im Omega(X_phi, X_t)| / sqrt(det g)`, which equals `rho` on
    /// imaginary special Lagrangian surfaces.
    Calibrated,
}

/// A parameterized surface (or curve) with first derivatives.
pub trait SurfaceGeometry {
    /// `X`, `dX/dphi`, `dX/dt` at `(phi, t)`.
    fn point(&self, phi: f64, t: f64) -> Result<(C2, C2, C2)>;
}

/// A discretized cylinder between two boundary Lagrangians.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CylinderMesh {
    /// The ambient structure the cylinder lives in (`n` is the dimension).
    pub ambient: AmbientStructure,
    /// Number of angles (1 for segments).
    pub m: usize,
    /// Number of `t`-intervals.
    pub k: usize,
    /// Embedded nodes, `l * m + i` (segments use the first component only).
    pub nodes: Vec<C2>,
    #[serde(skip)]
    spline: OnceLock<Spline2<C2>>,
    #[serde(skip)]
    spline1: OnceLock<Spline1<C2>>,
}

impl PartialEq for CylinderMesh {
    fn eq(&self, other: &Self) -> bool {
        self.ambient == other.ambient && self.m == other.m && self.k == other.k && self.nodes == other.nodes
    }
}

impl CylinderMesh {
    /// A mesh from its nodes.
    pub fn new(ambient: AmbientStructure, m: usize, k: usize, nodes: Vec<C2>) -> Result<Self> {
        match ambient.n {
            1 if m != 1 => return Err(Error::Invalid("segments have a single angle".into())),
            2 if m < 4 => return Err(Error::Invalid("cylinders need at least 4 angles".into())),
            1 | 2 => {}
            n => return Err(Error::Invalid(format!("dimension {n} is not supported"))),
        }
        if k < 2 {
            return Err(Error::Invalid("at least 2 t-intervals are required".into()));
        }
        if nodes.len() != m * (k + 1) {
            return Err(Error::Invalid(format!(
                "expected {} nodes, got {}",
                m * (k + 1),
                nodes.len()
            )));
        }
        if nodes.iter().any(|z| !z.is_finite()) {
            return Err(Error::Invalid("non-finite node".into()));
        }
        Ok(CylinderMesh { ambient, m, k, nodes, spline: OnceLock::new(), spline1: OnceLock::new() })
    }

    /// Samples `f(phi, t)` on the node grid.
    pub fn from_map(ambient: AmbientStructure, m: usize, k: usize, f: impl Fn(f64, f64) -> C2) -> Result<Self> {
        let dphi = 2.0 * PI / m as f64;
        let mut nodes = Vec::with_capacity(m * (k + 1));
        for l in 0..=k {
            for i in 0..m {
                nodes.push(f(i as f64 * dphi, l as f64 / k as f64));
            }
        }
        Self::new(ambient, m, k, nodes)
    }

    /// `(e^{i phi}, t)` in flat C^2: a Lagrangian product cylinder with the
    /// product metric and `rho = 1`.
    pub fn flat_product(m: usize, k: usize) -> Result<Self> {
        Self::from_map(AmbientStructure::flat(2), m, k, |p, t| {
            C2::new(Complex64::from_polar(1.0, p), Complex64::new(t, 0.0))
        })
    }

    /// The annulus `r0 <= |x| <= r1` of `R^2` inside flat C^2, radius linear in `t`.
    pub fn annulus(m: usize, k: usize, r0: f64, r1: f64) -> Result<Self> {
        Self::from_map(AmbientStructure::flat(2), m, k, |p, t| {
            let r = r0 + t * (r1 - r0);
            C2::real(r * p.cos(), r * p.sin())
        })
    }

    /// The straight segment from `z0` to `z1` in the given one-dimensional ambient.
    pub fn segment(ambient: AmbientStructure, k: usize, z0: Complex64, z1: Complex64) -> Result<Self> {
        Self::from_map(ambient, 1, k, |_, t| C2::new(z0 + (z1 - z0) * t, Complex64::new(0.0, 0.0)))
    }

    /// Dimension `n`.
    pub fn dim(&self) -> usize {
        self.ambient.n
    }

    /// Storage index of node `(i, l)`.
    #[inline]
    pub fn index(&self, i: usize, l: usize) -> usize {
        l * self.m + i
    }

    /// Node `(i, l)`.
    pub fn node(&self, i: usize, l: usize) -> C2 {
        self.nodes[self.index(i, l)]
    }

    /// Angle spacing.
    pub fn dphi(&self) -> f64 {
        2.0 * PI / self.m as f64
    }

    /// Nodes of `C0` (`which = 0`) or `C1` (`which = 1`).
    pub fn boundary(&self, which: usize) -> Vec<C2> {
        let l = if which == 0 { 0 } else { self.k };
        (0..self.m).map(|i| self.node(i, l)).collect()
    }

    /// The mesh with other nodes and the same ambient and resolution.
    pub fn with_nodes(&self, nodes: Vec<C2>) -> Result<Self> {
        Self::new(self.ambient.clone(), self.m, self.k, nodes)
    }

    /// Largest distance between two nodes (bounding-box diagonal).
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for z in &self.nodes {
            let r = z.to_real4();
            for d in 0..4 {
                lo[d] = lo[d].min(r[d]);
                hi[d] = hi[d].max(r[d]);
            }
        }
        (0..4).map(|d| (hi[d] - lo[d]).powi(2)).sum::<f64>().sqrt()
    }

    /// The geometry used by a discretization.
    pub fn surface(&self, disc: Discretization) -> Result<MeshSurface<'_>> {
        match (disc, self.dim()) {
            (Discretization::Bilinear, _) => Ok(MeshSurface { mesh: self, disc }),
            (Discretization::Spline, 2) if self.k >= 3 => {
                self.spline2();
                Ok(MeshSurface { mesh: self, disc })
            }
            (Discretization::Spline, 1) if self.k >= 3 => {
                self.spline1();
                Ok(MeshSurface { mesh: self, disc })
            }
            _ => Err(Error::Invalid("spline geometry needs at least 3 t-intervals".into())),
        }
    }

    fn spline2(&self) -> &Spline2<C2> {
        self.spline.get_or_init(|| {
            let ax0 = Axis { origin: 0.0, h: self.dphi(), n: self.m, kind: EndCondition::Periodic };
            let ax1 = Axis { origin: 0.0, h: 1.0 / self.k as f64, n: self.k + 1, kind: EndCondition::NotAKnot };
            Spline2::new(ax0, ax1, self.nodes.clone())
        })
    }

    fn spline1(&self) -> &Spline1<C2> {
        self.spline1.get_or_init(|| {
            let ax = Axis { origin: 0.0, h: 1.0 / self.k as f64, n: self.k + 1, kind: EndCondition::NotAKnot };
            Spline1::new(ax, self.nodes.clone())
        })
    }

    /// Checks that every quadrature point of the discretization has a
    /// positive definite pullback metric; returns the smallest
    /// `det g / (|X_phi|^2 |X_t|^2)`.
    pub fn check_immersion(&self, disc: Discretization) -> Result<f64> {
        let surf = self.surface(disc)?;
        let layout = DofLayout::new(self, disc);
        let mut worst = f64::INFINITY;
        for q in layout.quadrature() {
            let (_, xp, xt) = surf.point(q.phi, q.t)?;
            let ratio = if self.dim() == 1 {
                if xt.norm_sqr() > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                let g = metric(&xp, &xt);
                (g[0] * g[2] - g[1] * g[1]) / (g[0] * g[2]).max(1e-300)
            };
            if !(ratio > 1e-12) {
                return Err(Error::DegenerateElement { element: q.elem, det: ratio });
            }
            worst = worst.min(ratio);
        }
        Ok(worst)
    }

    /// Largest normalized `|omega(X_phi, X_t)| / sqrt(det g)` over element
    /// centers, with derivatives of the given geometry.
    pub fn omega_defect(&self, disc: Discretization) -> Result<f64> {
        if self.dim() == 1 {
            return Ok(0.0);
        }
        let surf = self.surface(disc)?;
        let mut worst = 0.0f64;
        for l in 0..self.k {
            for i in 0..self.m {
                let (phi, t) = ((i as f64 + 0.5) * self.dphi(), (l as f64 + 0.5) / self.k as f64);
                let (_, xp, xt) = surf.point(phi, t)?;
                let g = metric(&xp, &xt);
                worst = worst.max(xp.omega(&xt).abs() / (g[0] * g[2] - g[1] * g[1]).max(1e-300).sqrt());
            }
        }
        Ok(worst)
    }

    /// Largest distance from the nodes of `C_which` to `lag`.
    pub fn boundary_distance(&self, lag: &BoundaryLagrangian, which: usize) -> Result<f64> {
        let mut worst = 0.0f64;
        for z in self.boundary(which) {
            worst = worst.max(lag.distance(&z)?);
        }
        Ok(worst)
    }
}

/// `[g11, g12, g22]` of a tangent frame.
#[inline]
pub fn metric(a: &C2, b: &C2) -> [f64; 3] {
    [a.dot(a), a.dot(b), b.dot(b)]
}

/// The interpolated geometry of a mesh under a discretization.
#[derive(Debug, Clone, Copy)]
pub struct MeshSurface<'a> {
    mesh: &'a CylinderMesh,
    disc: Discretization,
}

impl SurfaceGeometry for MeshSurface<'_> {
    fn point(&self, phi: f64, t: f64) -> Result<(C2, C2, C2)> {
        let mesh = self.mesh;
        let k = mesh.k as f64;
        if mesh.dim() == 1 {
            return Ok(match self.disc {
                Discretization::Bilinear => {
                    let l = ((t * k).floor().max(0.0) as usize).min(mesh.k - 1);
                    let v = t * k - l as f64;
                    let (a, b) = (mesh.nodes[l], mesh.nodes[l + 1]);
                    (a * (1.0 - v) + b * v, C2::ZERO, (b - a) * k)
                }
                Discretization::Spline => {
                    let (v, d, _) = mesh.spline1().eval(t);
                    (v, C2::ZERO, d)
                }
            });
        }
        match self.disc {
            Discretization::Bilinear => {
                let dphi = mesh.dphi();
                let w = (phi / dphi).rem_euclid(mesh.m as f64);
                let i = (w.floor() as usize).min(mesh.m - 1);
                let u = w - i as f64;
                let l = ((t * k).floor().max(0.0) as usize).min(mesh.k - 1);
                let v = t * k - l as f64;
                let i1 = (i + 1) % mesh.m;
                let (a, b, c, d) = (mesh.node(i, l), mesh.node(i1, l), mesh.node(i, l + 1), mesh.node(i1, l + 1));
                let x = a * ((1.0 - u) * (1.0 - v)) + b * (u * (1.0 - v)) + c * ((1.0 - u) * v) + d * (u * v);
                let xu = (b - a) * (1.0 - v) + (d - c) * v;
                let xv = (c - a) * (1.0 - u) + (d - b) * u;
                Ok((x, xu * (1.0 / dphi), xv * k))
            }
            Discretization::Spline => {
                let j = mesh.spline2().eval(phi, t);
                Ok((j.v, j.d0, j.d1))
            }
        }
    }
}

/// A quadrature point of a discretization.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    /// Element index `l * M + i` (`l` for segments).
    pub elem: usize,
    /// Element column.
    pub ei: usize,
    /// Element row.
    pub el: usize,
    /// Local coordinates in the element.
    pub u: f64,
    /// Local `t` coordinate.
    pub v: f64,
    /// Angle.
    pub phi: f64,
    /// Time parameter.
    pub t: f64,
    /// Parameter-space weight (`dphi dt` measure).
    pub w: f64,
}

/// Basis functions nonzero at a point: dof, value, `d/dphi`, `d/dt`.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    /// Number of entries.
    pub n: usize,
    /// Degree-of-freedom indices.
    pub dof: [usize; 16],
    /// Values.
    pub val: [f64; 16],
    /// Angle derivatives.
    pub dphi: [f64; 16],
    /// Time derivatives.
    pub dt: [f64; 16],
}

/// Degree-of-freedom layout of a discretization on a mesh resolution.
#[derive(Debug, Clone)]
pub struct DofLayout {
    /// Discretization.
    pub disc: Discretization,
    /// Dimension (1 or 2).
    pub dim: usize,
    /// Angles.
    pub m: usize,
    /// Intervals.
    pub k: usize,
    clamped: Option<ClampedBasis>,
}

impl DofLayout {
    /// Layout for a mesh.
    pub fn new(mesh: &CylinderMesh, disc: Discretization) -> Self {
        Self::for_resolution(mesh.dim(), mesh.m, mesh.k, disc)
    }

    /// Layout for a resolution.
    pub fn for_resolution(dim: usize, m: usize, k: usize, disc: Discretization) -> Self {
        let clamped = (disc == Discretization::Spline).then(|| ClampedBasis::new(k));
        DofLayout { disc, dim, m, k, clamped }
    }

    /// Number of rows of dofs in `t`.
    pub fn rows(&self) -> usize {
        match self.disc {
            Discretization::Bilinear => self.k + 1,
            Discretization::Spline => self.k + 3,
        }
    }

    /// Number of dofs.
    pub fn len(&self) -> usize {
        self.m * self.rows()
    }

    /// Always false.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Dofs carrying the `C0` trace.
    pub fn c0(&self) -> Vec<usize> {
        (0..self.m).collect()
    }

    /// Dofs carrying the `C1` trace.
    pub fn c1(&self) -> Vec<usize> {
        let r = self.rows() - 1;
        (0..self.m).map(|i| r * self.m + i).collect()
    }

    /// Dofs off both traces.
    pub fn interior(&self) -> Vec<usize> {
        (self.m..self.len() - self.m).collect()
    }

    fn rule(&self) -> (Vec<f64>, Vec<f64>) {
        match (self.disc, self.dim) {
            (Discretization::Bilinear, 2) => gauss01(2),
            _ => gauss01(4),
        }
    }

    /// All quadrature points in deterministic order.
    pub fn quadrature(&self) -> Vec<QuadPoint> {
        let (x, w) = self.rule();
        let kf = self.k as f64;
        let mut out = Vec::new();
        if self.dim == 1 {
            for el in 0..self.k {
                for (v, wv) in x.iter().zip(&w) {
                    out.push(QuadPoint { elem: el, ei: 0, el, u: 0.0, v: *v, phi: 0.0, t: (el as f64 + v) / kf, w: wv / kf });
                }
            }
            return out;
        }
        let dphi = 2.0 * PI / self.m as f64;
        for el in 0..self.k {
            for ei in 0..self.m {
                for (v, wv) in x.iter().zip(&w) {
                    for (u, wu) in x.iter().zip(&w) {
                        out.push(QuadPoint {
                            elem: el * self.m + ei,
                            ei,
                            el,
                            u: *u,
                            v: *v,
                            phi: (ei as f64 + u) * dphi,
                            t: (el as f64 + v) / kf,
                            w: wu * wv * dphi / kf,
                        });
                    }
                }
            }
        }
        out
    }

    /// Element and local coordinates of `(phi, t)`.
    pub fn locate(&self, phi: f64, t: f64) -> (usize, usize, f64, f64) {
        let kf = self.k as f64;
        let el = ((t * kf).floor().max(0.0) as usize).min(self.k - 1);
        let v = t * kf - el as f64;
        if self.dim == 1 {
            return (0, el, 0.0, v);
        }
        let dphi = 2.0 * PI / self.m as f64;
        let w = (phi / dphi).rem_euclid(self.m as f64);
        let ei = (w.floor() as usize).min(self.m - 1);
        (ei, el, w - ei as f64, v)
    }

    /// Basis functions nonzero in element `(ei, el)` at local `(u, v)`.
    pub fn local_basis(&self, ei: usize, el: usize, u: f64, v: f64) -> LocalBasis {
        let mut lb = LocalBasis { n: 0, dof: [0; 16], val: [0.0; 16], dphi: [0.0; 16], dt: [0.0; 16] };
        let kf = self.k as f64;
        let m = self.m;
        let push = |lb: &mut LocalBasis, d: usize, a: f64, p: f64, q: f64| {
            let j = lb.n;
            lb.dof[j] = d;
            lb.val[j] = a;
            lb.dphi[j] = p;
            lb.dt[j] = q;
            lb.n += 1;
        };
        match (self.disc, self.dim) {
            (Discretization::Bilinear, 1) => {
                push(&mut lb, el, 1.0 - v, 0.0, -kf);
                push(&mut lb, el + 1, v, 0.0, kf);
            }
            (Discretization::Bilinear, _) => {
                let dphi = 2.0 * PI / m as f64;
                let i1 = (ei + 1) % m;
                let tu = [(1.0 - u, -1.0 / dphi, ei), (u, 1.0 / dphi, i1)];
                let tv = [(1.0 - v, -kf, el), (v, kf, el + 1)];
                for (bv, dv, l) in tv {
                    for (bu, du, i) in tu {
                        push(&mut lb, l * m + i, bu * bv, du * bv, bu * dv);
                    }
                }
            }
            (Discretization::Spline, 1) => {
                let cb = self.clamped.as_ref().expect("spline layout has a clamped basis");
                let t = (el as f64 + v) / kf;
                let (bv, bd) = cb.eval(el, t);
                for q in 0..4 {
                    push(&mut lb, el + q, bv[q], 0.0, bd[q]);
                }
            }
            (Discretization::Spline, _) => {
                let cb = self.clamped.as_ref().expect("spline layout has a clamped basis");
                let dphi = 2.0 * PI / m as f64;
                let t = (el as f64 + v) / kf;
                let (pv, pd) = periodic_bspline(u);
                let (bv, bd) = cb.eval(el, t);
                for q in 0..4 {
                    for p in 0..4 {
                        let i = (ei + m + p - 1) % m;
                        push(&mut lb, (el + q) * m + i, pv[p] * bv[q], pd[p] / dphi * bv[q], pv[p] * bd[q]);
                    }
                }
            }
        }
        lb
    }

    /// Basis at a parameter point.
    pub fn basis_at(&self, phi: f64, t: f64) -> LocalBasis {
        let (ei, el, u, v) = self.locate(phi, t);
        self.local_basis(ei, el, u, v)
    }

    /// Value and parameter derivatives of a dof vector at `(phi, t)`.
    pub fn eval(&self, dofs: &[f64], phi: f64, t: f64) -> (f64, f64, f64) {
        let lb = self.basis_at(phi, t);
        let mut out = (0.0, 0.0, 0.0);
        for j in 0..lb.n {
            let c = dofs[lb.dof[j]];
            out.0 += c * lb.val[j];
            out.1 += c * lb.dphi[j];
            out.2 += c * lb.dt[j];
        }
        out
    }

    /// Values at the mesh nodes.
    pub fn nodal(&self, dofs: &[f64]) -> Vec<f64> {
        match self.disc {
            Discretization::Bilinear => dofs.to_vec(),
            Discretization::Spline => {
                let dphi = 2.0 * PI / self.m as f64;
                let mut out = Vec::with_capacity(self.m * (self.k + 1));
                for l in 0..=self.k {
                    for i in 0..self.m {
                        out.push(self.eval(dofs, i as f64 * dphi, l as f64 / self.k as f64).0);
                    }
                }
                out
            }
        }
    }

    /// Dofs of a boundary row from nodal values on that boundary.
    pub fn boundary_dofs(&self, nodal: &[f64]) -> Result<Vec<f64>> {
        if nodal.len() != self.m {
            return Err(Error::Invalid(format!("expected {} boundary values, got {}", self.m, nodal.len())));
        }
        if self.disc == Discretization::Bilinear || self.dim == 1 {
            return Ok(nodal.to_vec());
        }
        // Periodic B-spline interpolation: (c_{i-1} + 4 c_i + c_{i+1}) / 6 = y_i.
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for i in 0..m {
            a[i * m + (i + m - 1) % m] += 1.0 / 6.0;
            a[i * m + i] += 4.0 / 6.0;
            a[i * m + (i + 1) % m] += 1.0 / 6.0;
        }
        crate::geom::solve_dense(a, nodal.to_vec(), m)
            .ok_or_else(|| Error::Solver("boundary interpolation is singular".into()))
    }
}

/// A discrete scalar field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    /// Discretization of the dofs.
    pub disc: Discretization,
    /// Space constraint.
    pub tag: SpaceTag,
    /// Dofs: nodal values (bilinear) or B-spline coefficients (spline).
    pub values: Vec<f64>,
}

impl ScalarField {
    /// A field with the `Free` tag.
    pub fn free(disc: Discretization, values: Vec<f64>) -> Self {
        ScalarField { disc, tag: SpaceTag::Free, values }
    }

    /// Checks the space constraint exactly on the boundary dofs.
    pub fn satisfies_tag(&self, layout: &DofLayout) -> bool {
        let v = &self.values;
        match self.tag {
            SpaceTag::Free => true,
            SpaceTag::DirichletZeroBoth => {
                layout.c0().iter().chain(layout.c1().iter()).all(|&i| v[i] == 0.0)
            }
            SpaceTag::ZeroC0ConstC1 => {
                let c1 = layout.c1();
                layout.c0().iter().all(|&i| v[i] == 0.0) && c1.iter().all(|&i| v[i] == v[c1[0]])
            }
        }
    }

    /// Samples a function of `(phi, t)` at the nodes (bilinear only).
    pub fn from_nodes(mesh: &CylinderMesh, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(mesh.nodes.len());
        for l in 0..=mesh.k {
            for i in 0..mesh.m {
                values.push(f(i as f64 * mesh.dphi(), l as f64 / mesh.k as f64));
            }
        }
        ScalarField::free(Discretization::Bilinear, values)
    }
}

/// Boundary data for a Dirichlet solve: nodal values on `C0` and `C1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValues {
    /// Values on `C0`.
    pub c0: Vec<f64>,
    /// Values on `C1`.
    pub c1: Vec<f64>,
}

impl BoundaryValues {
    /// Constant values.
    pub fn constant(m: usize, c0: f64, c1: f64) -> Self {
        BoundaryValues { c0: vec![c0; m], c1: vec![c1; m] }
    }
}

/// The assembled weighted stiffness `A[i][j] = int rho <d phi_i, d phi_j> dvol`.
#[derive(Debug, Clone)]
pub struct WeightedStiffness {
    /// Dof layout.
    pub layout: DofLayout,
    /// Stiffness matrix.
    pub a: CsrMatrix,
    /// Lumped mass `int phi_i dvol`.
    pub mass: Vec<f64>,
    /// Weight used.
    pub weight: Weight,
}

impl WeightedStiffness {
    /// `C0` dofs.
    pub fn c0(&self) -> Vec<usize> {
        self.layout.c0()
    }

    /// `C1` dofs.
    pub fn c1(&self) -> Vec<usize> {
        self.layout.c1()
    }

    /// Interior dofs.
    pub fn interior(&self) -> Vec<usize> {
        self.layout.interior()
    }

    /// `(Delta_rho u)` per dof, `-(A u)_i / mass_i`, zero on boundary dofs.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let au = self.a.matvec(u);
        let mut out = vec![0.0; u.len()];
        for i in self.interior() {
            out[i] = -au[i] / self.mass[i];
        }
        out
    }
}

/// Assembles the weighted stiffness of a mesh with the ambient density.
pub fn assemble(mesh: &CylinderMesh, disc: Discretization) -> Result<WeightedStiffness> {
    assemble_with(mesh, disc, Weight::Density)
}

/// Assembles the weighted stiffness of a mesh with the given weight.
pub fn assemble_with(mesh: &CylinderMesh, disc: Discretization, weight: Weight) -> Result<WeightedStiffness> {
    let surf = mesh.surface(disc)?;
    assemble_surface(&surf, &mesh.ambient, DofLayout::new(mesh, disc), weight)
}

/// Assembles the weighted stiffness of an arbitrary parameterized surface.
pub fn assemble_surface(
    surf: &dyn SurfaceGeometry,
    ambient: &AmbientStructure,
    layout: DofLayout,
    weight: Weight,
) -> Result<WeightedStiffness> {
    let frames = layout
        .quadrature()
        .iter()
        .map(|q| surf.point(q.phi, q.t))
        .collect::<Result<Vec<_>>>()?;
    assemble_frames(&frames, ambient, layout, weight)
}

/// Assembles the weighted stiffness from surface frames `(X, X_phi, X_t)`
/// tabulated at the quadrature points of `layout`, in [`DofLayout::quadrature`] order.
pub fn assemble_frames(
    frames: &[(C2, C2, C2)],
    ambient: &AmbientStructure,
    layout: DofLayout,
    weight: Weight,
) -> Result<WeightedStiffness> {
    let n = layout.len();
    let quad = layout.quadrature();
    if frames.len() != quad.len() {
        return Err(Error::Invalid("frame table does not match the quadrature".into()));
    }
    let mut trips = Vec::new();
    let mut mass = vec![0.0; n];
    for (q, (x, xp, xt)) in quad.iter().zip(frames) {
        let lb = layout.local_basis(q.ei, q.el, q.u, q.v);
        let (sqrtg, gi) = if layout.dim == 1 {
            let g = xt.norm_sqr();
            if !(g > 1e-300) {
                return Err(Error::DegenerateElement { element: q.elem, det: g });
            }
            (g.sqrt(), [0.0, 0.0, 1.0 / g])
        } else {
            let g = metric(xp, xt);
            let det = g[0] * g[2] - g[1] * g[1];
            if !(det > 1e-14 * g[0] * g[2]) {
                return Err(Error::DegenerateElement { element: q.elem, det });
            }
            (det.sqrt(), [g[2] / det, -g[1] / det, g[0] / det])
        };
        let rho = match weight {
            Weight::Density => {
                if layout.dim == 1 {
                    ambient.rho_at(&[x[0]])?
                } else {
                    ambient.rho_at(x.as_slice())?
                }
            }
            Weight::Calibrated => {
                if layout.dim == 1 {
                    let f = ambient.holomorphic_volume(&[x[0]], &[&[xt[0]]])?;
                    f.im.abs() / sqrtg
                } else {
                    ambient.omega2(x, xp, xt).im.abs() / sqrtg
                }
            }
        };
        let wq = q.w * sqrtg;
        for a in 0..lb.n {
            mass[lb.dof[a]] += wq * lb.val[a];
            for b in 0..lb.n {
                let val = rho
                    * wq
                    * (gi[0] * lb.dphi[a] * lb.dphi[b]
                        + gi[1] * (lb.dphi[a] * lb.dt[b] + lb.dt[a] * lb.dphi[b])
                        + gi[2] * lb.dt[a] * lb.dt[b]);
                trips.push((lb.dof[a], lb.dof[b], val));
            }
        }
    }
    Ok(WeightedStiffness { a: CsrMatrix::from_triplets(n, n, &trips), mass, layout, weight })
}

/// Diagnostics of a Dirichlet solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Relative residual of the reduced system.
    pub relative_residual: f64,
    /// Ratio of the largest to the smallest diagonal entry (a cheap condition indicator).
    pub diagonal_ratio: f64,
}

/// Solves `Delta_rho u = rhs` with Dirichlet data on both boundaries.
pub fn solve_dirichlet(
    stiffness: &WeightedStiffness,
    rhs: &ScalarField,
    bc: &BoundaryValues,
) -> Result<(ScalarField, SolveReport)> {
    let layout = &stiffness.layout;
    if rhs.values.len() != layout.len() {
        return Err(Error::Invalid("rhs does not match the stiffness".into()));
    }
    if rhs.values.iter().chain(&bc.c0).chain(&bc.c1).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite rhs or boundary data".into()));
    }
    let mut u = vec![0.0; layout.len()];
    for (d, v) in layout.c0().into_iter().zip(layout.boundary_dofs(&bc.c0)?) {
        u[d] = v;
    }
    for (d, v) in layout.c1().into_iter().zip(layout.boundary_dofs(&bc.c1)?) {
        u[d] = v;
    }
    let interior = layout.interior();
    let au = stiffness.a.matvec(&u);
    let b: Vec<f64> = interior
        .iter()
        .map(|&i| -stiffness.mass[i] * rhs.values[i] - au[i])
        .collect();
    let aii = stiffness.a.submatrix(&interior, &interior);
    let diag: Vec<f64> = (0..interior.len()).map(|i| aii.get(i, i).abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let diagonal_ratio = dmax / dmin.max(1e-300);
    let x = SparseLu::new(&aii)
        .and_then(|lu| lu.solve(&b))
        .map_err(|e| Error::Solver(format!("{e} (diagonal ratio {diagonal_ratio:.3e})")))?;
    let rel = relative_residual(&aii, &x, &b);
    if !(rel < 1e-10) {
        return Err(Error::Solver(format!(
            "relative residual {rel:.3e} (diagonal ratio {diagonal_ratio:.3e})"
        )));
    }
    for (k, &i) in interior.iter().enumerate() {
        u[i] = x[k];
    }
    let zero0 = bc.c0.iter().all(|v| *v == 0.0);
    let const1 = bc.c1.iter().all(|v| *v == bc.c1[0]);
    let tag = match (zero0, const1, bc.c1[0] == 0.0) {
        (true, true, true) => SpaceTag::DirichletZeroBoth,
        (true, true, false) => SpaceTag::ZeroC0ConstC1,
        _ => SpaceTag::Free,
    };
    let mut field = ScalarField { disc: layout.disc, tag, values: u };
    if tag == SpaceTag::ZeroC0ConstC1 {
        // Boundary rows are exact by construction; pin them bitwise.
        let c = bc.c1[0];
        for d in layout.c1() {
            field.values[d] = c;
        }
    }
    Ok((field, SolveReport { relative_residual: rel, diagonal_ratio }))
}

/// The fundamental harmonic: `Delta_rho sigma = 0`, `sigma = 0` on `C0`,
/// `sigma = 1` on `C1`, with the discrete maximum principle asserted at the nodes.
pub fn fundamental_harmonic(stiffness: &WeightedStiffness) -> Result<ScalarField> {
    let layout = &stiffness.layout;
    let zero = ScalarField::free(layout.disc, vec![0.0; layout.len()]);
    let (sigma, _) = solve_dirichlet(stiffness, &zero, &BoundaryValues::constant(layout.m, 0.0, 1.0))?;
    let nodal = layout.nodal(&sigma.values);
    let (lo, hi) = nodal.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if lo < -1e-9 || hi > 1.0 + 1e-9 {
        return Err(Error::Regularity(format!(
            "maximum principle violated: sigma in [{lo:.3e}, {hi:.6}]"
        )));
    }
    Ok(sigma)
}

/// Fundamental harmonic of a mesh with the density weight.
pub fn fundamental_harmonic_of(mesh: &CylinderMesh, disc: Discretization) -> Result<ScalarField> {
    fundamental_harmonic(&assemble(mesh, disc)?)
}

/// Result of a kernel estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    /// Number of singular values below `threshold`.
    pub dim_estimate: usize,
    /// Smallest singular value above the threshold over the largest below it.
    pub gap: Option<f64>,
    /// `1e-10` times the largest singular value.
    pub threshold: f64,
    /// The smallest few singular values, increasing.
    pub smallest: Vec<f64>,
}

/// Kernel dimension of the constrained operator, by dense SVD.
///
/// * `ZeroC0ConstC1`: columns are the interior dofs plus the `C1` constant,
///   rows are the interior equations (expected dimension 1).
/// * `DirichletZeroBoth`: the interior block (expected dimension 0).
/// * `Free`: the whole matrix (constants, dimension 1).
pub fn kernel_report(stiffness: &WeightedStiffness, constraint: SpaceTag, tol_kernel: f64) -> Result<KernelReport> {
    let interior = stiffness.interior();
    let c1 = stiffness.c1();
    let (dense, rows, cols) = match constraint {
        SpaceTag::Free => {
            let n = stiffness.layout.len();
            (stiffness.a.to_dense(), n, n)
        }
        SpaceTag::DirichletZeroBoth => {
            let sub = stiffness.a.submatrix(&interior, &interior);
            (sub.to_dense(), interior.len(), interior.len())
        }
        SpaceTag::ZeroC0ConstC1 => {
            let ni = interior.len();
            let sub = stiffness.a.submatrix(&interior, &interior);
            let side = stiffness.a.submatrix(&interior, &c1);
            // Square (ni + 1) x (ni + 1): an appended zero row keeps the SVD square.
            let n = ni + 1;
            let mut d = vec![0.0; n * n];
            for r in 0..ni {
                for (c, v) in sub.row(r) {
                    d[r * n + c] = v;
                }
                d[r * n + ni] = side.row(r).map(|(_, v)| v).sum();
            }
            (d, n, n)
        }
    };
    let s = singular_values(&dense, rows, cols)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let threshold = tol_kernel * smax;
    let dim_estimate = s.iter().filter(|v| **v < threshold).count();
    let above = s.iter().filter(|v| **v >= threshold).cloned().fold(f64::INFINITY, f64::min);
    let below = s.iter().filter(|v| **v < threshold).cloned().fold(0.0, f64::max);
    let gap = (dim_estimate > 0).then(|| above / below.max(f64::MIN_POSITIVE));
    let mut smallest: Vec<f64> = s.iter().rev().take(4).cloned().collect();
    smallest.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(KernelReport { dim_estimate, gap, threshold, smallest })
}

/// Metric gradient of a field at each element center, as ambient vectors.
pub fn gradient_field(mesh: &CylinderMesh, field: &ScalarField) -> Result<Vec<C2>> {
    let layout = DofLayout::new(mesh, field.disc);
    let surf = mesh.surface(field.disc)?;
    let mut out = Vec::with_capacity(mesh.m * mesh.k);
    for el in 0..mesh.k {
        for ei in 0..mesh.m {
            let phi = (ei as f64 + 0.5) * mesh.dphi();
            let t = (el as f64 + 0.5) / mesh.k as f64;
            out.push(gradient_at(&surf, &layout, &field.values, phi, t, el * mesh.m + ei)?);
        }
    }
    Ok(out)
}

/// Metric gradient of a dof vector at one parameter point.
pub fn gradient_at(
    surf: &dyn SurfaceGeometry,
    layout: &DofLayout,
    dofs: &[f64],
    phi: f64,
    t: f64,
    elem: usize,
) -> Result<C2> {
    let (_, xp, xt) = surf.point(phi, t)?;
    let (_, up, ut) = layout.eval(dofs, phi, t);
    if layout.dim == 1 {
        let g = xt.norm_sqr();
        if !(g > 0.0) {
            return Err(Error::DegenerateElement { element: elem, det: g });
        }
        return Ok(xt * (ut / g));
    }
    let g = metric(&xp, &xt);
    let det = g[0] * g[2] - g[1] * g[1];
    if !(det > 0.0) {
        return Err(Error::DegenerateElement { element: elem, det });
    }
    let a = (g[2] * up - g[1] * ut) / det;
    let b = (-g[1] * up + g[0] * ut) / det;
    Ok(xp * a + xt * b)
}

/// Result of a critical-point scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalScan {
    /// Some element was flagged.
    pub has_critical_points: bool,
    /// Smallest gradient norm at element centers and across interior edges.
    pub min_gradient: f64,
    /// Threshold used (`tol_crit * range / diameter`).
    pub threshold: f64,
    /// Flagged elements.
    pub flagged: Vec<usize>,
}

/// Flags elements where the gradient is below the threshold, or where the
/// gradients of neighboring elements point in opposite directions (the
/// gradient vanishes on their common edge).
pub fn critical_point_scan(mesh: &CylinderMesh, field: &ScalarField, tol_crit: f64) -> Result<CriticalScan> {
    let grads = gradient_field(mesh, field)?;
    let layout = DofLayout::new(mesh, field.disc);
    let nodal = layout.nodal(&field.values);
    let (lo, hi) = nodal.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let threshold = tol_crit * (hi - lo) / mesh.diameter().max(f64::MIN_POSITIVE);
    let (m, k) = (mesh.m, mesh.k);
    let mut flagged = vec![false; grads.len()];
    let mut min_gradient = f64::INFINITY;
    for (e, g) in grads.iter().enumerate() {
        let n = g.norm();
        min_gradient = min_gradient.min(n);
        if n < threshold {
            flagged[e] = true;
        }
    }
    let mut check = |a: usize, b: usize, flagged: &mut Vec<bool>| {
        let (ga, gb) = (grads[a], grads[b]);
        let mid = ((ga + gb) * 0.5).norm();
        min_gradient = min_gradient.min(mid);
        if ga.dot(&gb) < 0.0 || mid < threshold {
            flagged[a] = true;
            flagged[b] = true;
        }
    };
    for el in 0..k {
        for ei in 0..m {
            let e = el * m + ei;
            if el + 1 < k {
                check(e, e + m, &mut flagged);
            }
            if m > 1 {
                check(e, el * m + (ei + 1) % m, &mut flagged);
            }
        }
    }
    let flagged: Vec<usize> = flagged.iter().enumerate().filter(|(_, f)| **f).map(|(e, _)| e).collect();
    Ok(CriticalScan { has_critical_points: !flagged.is_empty(), min_gradient, threshold, flagged })
}

/// Per-node `Delta_rho` of nodal data on the bilinear discretization
/// (interior nodes; zero on the boundary rows).
pub fn nodal_laplacian(mesh: &CylinderMesh, values: &[f64]) -> Result<Vec<f64>> {
    let st = assemble(mesh, Discretization::Bilinear)?;
    Ok(st.laplacian(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_product_row_sums_and_linear_solution() {
        let mesh = CylinderMesh::flat_product(16, 8).unwrap();
        for disc in [Discretization::Bilinear, Discretization::Spline] {
            let st = assemble(&mesh, disc).unwrap();
            let ones = vec![1.0; st.layout.len()];
            let r = st.a.matvec(&ones);
            assert!(r.iter().all(|v| v.abs() < 1e-13), "{disc:?}");
            let sigma = fundamental_harmonic(&st).unwrap();
            assert_eq!(sigma.tag, SpaceTag::ZeroC0ConstC1);
            let nodal = st.layout.nodal(&sigma.values);
            for l in 0..=8 {
                for i in 0..16 {
                    assert!((nodal[l * 16 + i] - l as f64 / 8.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn critical_band_is_detected() {
        let mesh = CylinderMesh::flat_product(16, 8).unwrap();
        let f = ScalarField::from_nodes(&mesh, |_, t| (t - 0.5).powi(2));
        let scan = critical_point_scan(&mesh, &f, 1e-6).unwrap();
        assert!(scan.has_critical_points);
        let g = ScalarField::from_nodes(&mesh, |_, t| t);
        assert!(!critical_point_scan(&mesh, &g, 1e-6).unwrap().has_critical_points);
    }

    #[test]
    fn annulus_harmonic_is_logarithmic() {
        let mesh = CylinderMesh::annulus(64, 32, 1.0, 2.0).unwrap();
        for disc in [Discretization::Bilinear, Discretization::Spline] {
            let sigma = fundamental_harmonic_of(&mesh, disc).unwrap();
            let nodal = DofLayout::new(&mesh, disc).nodal(&sigma.values);
            let mut worst = 0.0f64;
            for l in 0..=32 {
                let r = 1.0 + l as f64 / 32.0;
                for i in 0..64 {
                    worst = worst.max((nodal[l * 64 + i] - r.ln() / 2f64.ln()).abs());
                }
            }
            assert!(worst < 2e-3, "{disc:?}: {worst}");
        }
    }

    #[test]
    fn weighted_segment_harmonic() {
        let a = 0.8;
        let amb = AmbientStructure::with_density(1, crate::ambient::Density::exp_linear(1, 0, Complex64::new(a, 0.0)));
        let mesh = CylinderMesh::segment(amb, 16, Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
        let st = assemble(&mesh, Discretization::Bilinear).unwrap();
        let sigma = fundamental_harmonic(&st).unwrap();
        for l in 0..=16 {
            let x = l as f64 / 16.0;
            let exact = (1.0 - (-a * x).exp()) / (1.0 - (-a).exp());
            assert!((sigma.values[l] - exact).abs() < 1e-3, "{l}");
        }
    }

    #[test]
    fn kernel_dimensions_on_flat_product() {
        let mesh = CylinderMesh::flat_product(8, 6).unwrap();
        let st = assemble(&mesh, Discretization::Bilinear).unwrap();
        assert_eq!(kernel_report(&st, SpaceTag::DirichletZeroBoth, 1e-10).unwrap().dim_estimate, 0);
        let r = kernel_report(&st, SpaceTag::ZeroC0ConstC1, 1e-10).unwrap();
        assert_eq!(r.dim_estimate, 1);
        assert!(r.gap.unwrap() > 1e6);
        assert_eq!(kernel_report(&st, SpaceTag::Free, 1e-10).unwrap().dim_estimate, 1);
    }
}
