//! Geodesics of positive Lagrangians and their cylindrical transforms.
//!
//! A [`GeodesicPath`] stores a lifting `Psi_t` of a family of Lagrangians on a
//! fixed parameter grid together with one nodal Hamiltonian `h`. The IVP
//! generator moves every node with `-J grad h - tan(theta) grad h`, so
//! `h o Psi_t` is constant by construction. The forward transform cuts the
//! path along level sets of `h`: the level-`c` loop swept over time is an
//! imaginary special Lagrangian cylinder whose time function is harmonic. The
//! inverse transform reassembles a path from such a family, with `h` given by
//! relative flux.
//!
//! Two parameter domains are supported: polar discs (`n = 2`, the pole is the
//! cone point) and segments of a line (`n = 1`).

use crate::ambient::{AmbientStructure, Density};
use crate::elliptic::{
    assemble_with, fundamental_harmonic, metric, CylinderMesh, Discretization, DofLayout,
    SurfaceGeometry, Weight,
};
use crate::error::{Error, Result};
use crate::geom::{C2, I};
use crate::grid::{LineGrid, PolarGrid};
use crate::lagrangian::{
    perturb_graph, positivity_report, BoundaryLagrangian, LagrangianMesh, Potential, PositivityTarget,
};
use crate::slc::{
    classify_regularity, end_check, end_rescale_solve, special_residual, strip_path, EndCheck, IslCylinder,
    NewtonOptions, RegularityReport, Verdict,
};
use crate::spline::{gauss01, Axis, ClampedBasis, EndCondition, Spline1};
use crate::tolerances::Tolerances;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Parameter domain of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PathDomain {
    /// A polar disc (`n = 2`).
    Polar {
        /// The grid.
        grid: PolarGrid,
    },
    /// A segment (`n = 1`).
    Line {
        /// The grid.
        grid: LineGrid,
    },
}

impl PathDomain {
    /// Number of nodes.
    pub fn len(&self) -> usize {
        match self {
            PathDomain::Polar { grid } => grid.len(),
            PathDomain::Line { grid } => grid.len(),
        }
    }

    /// Always false.
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A marked node where every `Lambda_t` passes through the same point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConePoint {
    /// Node index (the pole is node 0).
    pub node: usize,
    /// Ambient image.
    pub q: C2,
}

/// Where the additive constant of `h` was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianAnchor {
    /// Family member (level-set index) where `h` takes `value`.
    pub member: usize,
    /// The value.
    pub value: f64,
}

/// A discretized geodesic: `T + 1` snapshots on a shared node set and a
/// time-independent nodal Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPath {
    /// Ambient structure.
    pub ambient: AmbientStructure,
    /// Parameter domain.
    pub domain: PathDomain,
    /// Number of time steps `T`.
    pub t_steps: usize,
    /// Nodes of `Lambda_t` at `t = l / T`, `l = 0..=T` (n = 1 uses the first component).
    pub levels: Vec<Vec<C2>>,
    /// Hamiltonian at the nodes.
    pub h: Vec<f64>,
    /// Cone points.
    pub cone_points: Vec<ConePoint>,
    /// Orientation of the parameter order relative to `Lambda_t`.
    pub orientation: i8,
    /// Additive constant of `h`, when it came from relative flux.
    pub anchor: Option<HamiltonianAnchor>,
}

impl GeodesicPath {
    /// Time of level `l`.
    pub fn time(&self, l: usize) -> f64 {
        l as f64 / self.t_steps as f64
    }

    /// The polar grid (errors for line paths).
    pub fn polar_grid(&self) -> Result<PolarGrid> {
        match self.domain {
            PathDomain::Polar { grid } => Ok(grid),
            PathDomain::Line { .. } => Err(Error::Invalid("operation needs a polar path".into())),
        }
    }

    /// `Lambda_t` at level `l` as a mesh (polar paths).
    pub fn level_mesh(&self, l: usize) -> Result<LagrangianMesh> {
        Ok(LagrangianMesh { grid: self.polar_grid()?, nodes: self.levels[l].clone(), orientation: self.orientation })
    }

    /// `Lambda_0` and `Lambda_1` as tabulated boundary Lagrangians (polar paths).
    pub fn endpoints(&self) -> Result<[BoundaryLagrangian; 2]> {
        Ok([self.level_mesh(0)?.to_boundary(), self.level_mesh(self.t_steps)?.to_boundary()])
    }

    /// The path run backwards in time, with `h` negated so the geodesic
    /// equations keep their form.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.levels.reverse();
        out.h.iter_mut().for_each(|v| *v = -*v);
        out.anchor = out.anchor.map(|a| HamiltonianAnchor { member: a.member, value: -a.value });
        out
    }

    /// Largest node distance to another path on the same domain.
    pub fn distance(&self, other: &GeodesicPath) -> Result<f64> {
        if self.domain != other.domain || self.t_steps != other.t_steps {
            return Err(Error::Invalid("paths live on different grids".into()));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.levels.iter().zip(&other.levels) {
            for (p, q) in a.iter().zip(b) {
                worst = worst.max((*p - *q).norm());
            }
        }
        Ok(worst)
    }
}

/// Density magnitude `|f|` at `z`.
fn density_norm(ambient: &AmbientStructure, z: &C2) -> Result<f64> {
    if ambient.n == 1 {
        Ok(ambient.holomorphic_volume(&[z[0]], &[&[Complex64::new(1.0, 0.0)]])?.norm())
    } else {
        Ok(ambient.rho2(z))
    }
}

/// `-J W - tan(theta) W` for a gradient `W` and phase `theta`.
fn horizontal(w: C2, theta: f64) -> C2 {
    w.cscale(-I) - w * theta.tan()
}

struct PolarDerivs {
    hr: Vec<f64>,
    hp: Vec<f64>,
}

fn polar_velocity(
    ambient: &AmbientStructure,
    grid: &PolarGrid,
    nodes: &[C2],
    dh: &PolarDerivs,
    orientation: i8,
    delta_phase: f64,
) -> Result<Vec<C2>> {
    let er = grid.d_rho(nodes);
    let ep = grid.d_phi(nodes);
    let mut v = vec![C2::ZERO; nodes.len()];
    let s = orientation as f64;
    for j in 1..=grid.r {
        for k in 0..grid.m {
            let i = grid.index(j, k);
            let g = metric(&er[i], &ep[i]);
            let det = g[0] * g[2] - g[1] * g[1];
            if !(det > 1e-14 * g[0] * g[2]) {
                return Err(Error::DegenerateElement { element: i, det });
            }
            let a = (g[2] * dh.hr[i] - g[1] * dh.hp[i]) / det;
            let b = (-g[1] * dh.hr[i] + g[0] * dh.hp[i]) / det;
            let w = er[i] * a + ep[i] * b;
            let theta = (ambient.omega2(&nodes[i], &er[i], &ep[i]) * s).arg();
            if theta.abs() >= FRAC_PI_2 - delta_phase {
                return Err(Error::Positivity { phase: theta, index: i });
            }
            v[i] = horizontal(w, theta);
        }
    }
    Ok(v)
}

fn line_velocity(
    ambient: &AmbientStructure,
    grid: &LineGrid,
    nodes: &[C2],
    hx: &[f64],
    orientation: i8,
    delta_phase: f64,
) -> Result<Vec<C2>> {
    let e = grid.d(nodes);
    let mut v = vec![C2::ZERO; nodes.len()];
    for i in 0..nodes.len() {
        let g = e[i].norm_sqr();
        if !(g > 0.0) {
            return Err(Error::DegenerateElement { element: i, det: g });
        }
        let w = e[i] * (hx[i] / g);
        let theta = (ambient.holomorphic_volume(&[nodes[i][0]], &[&[e[i][0]]])? * orientation as f64).arg();
        if theta.abs() >= FRAC_PI_2 - delta_phase {
            return Err(Error::Positivity { phase: theta, index: i });
        }
        v[i] = horizontal(w, theta);
    }
    Ok(v)
}

fn rk4(nodes: &[C2], dt: f64, f: &dyn Fn(&[C2]) -> Result<Vec<C2>>) -> Result<Vec<C2>> {
    let axpy = |a: &[C2], k: &[C2], s: f64| -> Vec<C2> { a.iter().zip(k).map(|(x, y)| *x + *y * s).collect() };
    let k1 = f(nodes)?;
    let k2 = f(&axpy(nodes, &k1, dt / 2.0))?;
    let k3 = f(&axpy(nodes, &k2, dt / 2.0))?;
    let k4 = f(&axpy(nodes, &k3, dt))?;
    Ok((0..nodes.len())
        .map(|i| nodes[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0))
        .collect())
}

/// Integrates the geodesic flow from a polar Lagrangian disc with nodal
/// Hamiltonian `h` by `t_steps` RK4 steps on `[0, 1]`. The pole must be a
/// critical point of `h`; it is marked as a cone point and stays fixed.
pub fn geodesic_ivp(
    ambient: &AmbientStructure,
    start: &LagrangianMesh,
    h: &[f64],
    t_steps: usize,
    tol: &Tolerances,
) -> Result<GeodesicPath> {
    let grid = start.grid;
    if ambient.n != 2 || h.len() != grid.len() || t_steps < 4 {
        return Err(Error::Invalid("polar IVP needs n = 2, a nodal h and at least 4 steps".into()));
    }
    let dh = PolarDerivs { hr: grid.d_rho(h), hp: grid.d_phi(h) };
    let pole_slope = (0..grid.m).map(|k| dh.hr[k].abs()).fold(0.0, f64::max);
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if pole_slope > tol.tol_crit * scale / grid.rho_max() {
        return Err(Error::Invalid(format!("the pole is not a critical point of h (slope {pole_slope:.3e})")));
    }
    let dt = 1.0 / t_steps as f64;
    let mut levels = vec![start.nodes.clone()];
    let f = |x: &[C2]| polar_velocity(ambient, &grid, x, &dh, start.orientation, tol.delta_phase);
    for _ in 0..t_steps {
        let next = rk4(levels.last().expect("initial level"), dt, &f)?;
        if next.iter().any(|z| !z.is_finite()) {
            return Err(Error::Domain("geodesic flow produced non-finite nodes".into()));
        }
        levels.push(next);
    }
    let q = start.nodes[0];
    Ok(GeodesicPath {
        ambient: ambient.clone(),
        domain: PathDomain::Polar { grid },
        t_steps,
        levels,
        h: h.to_vec(),
        cone_points: vec![ConePoint { node: 0, q }],
        orientation: start.orientation,
        anchor: None,
    })
}

/// Integrates the geodesic flow of a curve in C (n = 1) sampled on `grid`.
pub fn geodesic_ivp_line(
    ambient: &AmbientStructure,
    grid: LineGrid,
    start: &[Complex64],
    h: &[f64],
    t_steps: usize,
    tol: &Tolerances,
) -> Result<GeodesicPath> {
    if ambient.n != 1 || start.len() != grid.len() || h.len() != grid.len() || grid.n < 4 || t_steps < 4 {
        return Err(Error::Invalid("line IVP needs n = 1, matching samples, 4 intervals and 4 steps".into()));
    }
    let hx = grid.d(h);
    let dt = 1.0 / t_steps as f64;
    let zero = Complex64::new(0.0, 0.0);
    let mut levels = vec![start.iter().map(|z| C2::new(*z, zero)).collect::<Vec<_>>()];
    let f = |x: &[C2]| line_velocity(ambient, &grid, x, &hx, 1, tol.delta_phase);
    for _ in 0..t_steps {
        let next = rk4(levels.last().expect("initial level"), dt, &f)?;
        levels.push(next);
    }
    Ok(GeodesicPath {
        ambient: ambient.clone(),
        domain: PathDomain::Line { grid },
        t_steps,
        levels,
        h: h.to_vec(),
        cone_points: Vec::new(),
        orientation: 1,
        anchor: None,
    })
}

/// The bent-graph disc used throughout the examples: `Lambda_0` is the graph
/// of the gradient of `0.15 (x1^3 / 3 - x1 x2^2)` over the parameter map
/// `x = (xi1 + 0.15 xi2^2, 0.8 xi2 + 0.15 xi1 xi2)` of the unit disc,
/// `h = 0.2 |xi|^2` and the density is `exp(0.1 z1)`.
pub fn disc_fixture_start(m: usize, r: usize) -> (AmbientStructure, LagrangianMesh, Vec<f64>) {
    let grid = PolarGrid::new(m, r, 1.0);
    let psi = Potential::harmonic_cubic(0.15);
    let start = LagrangianMesh::from_map(grid, |xi| {
        let x = [xi[0] + 0.15 * xi[1] * xi[1], 0.8 * xi[1] + 0.15 * xi[0] * xi[1]];
        let (_, g, _) = psi.eval(x);
        C2::from_parts(x, g)
    });
    let h = grid.sample(|xi| 0.2 * (xi[0] * xi[0] + xi[1] * xi[1]));
    let ambient = AmbientStructure::with_density(2, Density::exp_linear(2, 0, Complex64::new(0.1, 0.0)));
    (ambient, start, h)
}

/// The geodesic from [`disc_fixture_start`] on an `m x r` polar grid with `t_steps` steps.
pub fn disc_fixture(m: usize, r: usize, t_steps: usize) -> Result<GeodesicPath> {
    let (ambient, start, h) = disc_fixture_start(m, r);
    geodesic_ivp(&ambient, &start, &h, t_steps, &Tolerances::default())
}

/// The closed-form line geodesic: `Lambda_0 = {y = 0}` over `x in [0.5, 2]`
/// with `h = -x^2 / 2`, whose flow is `Lambda_t = {y = t x}`.
pub fn line_fixture(n: usize, t_steps: usize) -> Result<GeodesicPath> {
    let grid = LineGrid { x0: 0.5, x1: 2.0, n };
    let start: Vec<Complex64> = (0..=n).map(|i| Complex64::new(grid.x(i), 0.0)).collect();
    let h: Vec<f64> = (0..=n).map(|i| -grid.x(i) * grid.x(i) / 2.0).collect();
    geodesic_ivp_line(&AmbientStructure::flat(1), grid, &start, &h, t_steps, &Tolerances::default())
}

/// Sup-norms of the three geodesic equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicResidual {
    /// `|Re Omega(d_t Psi, a)| / (|f| |a|)` over tangent vectors `a`.
    pub horizontality: f64,
    /// `|omega(d_t Psi, a) - dh(a)| / |a|`.
    pub hamiltonian: f64,
    /// `|h_t - h|`, with `h_t` the primitive of `omega(d_t Psi, .)` on
    /// `Lambda_t` (integrated from the pole, or the first node of a segment).
    pub constancy: f64,
}

/// Evaluates the geodesic equations by fourth-order differences in `t` and
/// in the parameters.
pub fn geodesic_residual(path: &GeodesicPath) -> Result<GeodesicResidual> {
    let nn = path.domain.len();
    let tg = LineGrid { x0: 0.0, x1: 1.0, n: path.t_steps };
    let mut vel = vec![vec![C2::ZERO; nn]; path.t_steps + 1];
    for i in 0..nn {
        let series: Vec<C2> = path.levels.iter().map(|lv| lv[i]).collect();
        for (l, v) in tg.d(&series).into_iter().enumerate() {
            vel[l][i] = v;
        }
    }
    let amb = &path.ambient;
    let mut res = GeodesicResidual { horizontality: 0.0, hamiltonian: 0.0, constancy: 0.0 };
    match path.domain {
        PathDomain::Polar { grid } => {
            let hr = grid.d_rho(&path.h);
            let hp = grid.d_phi(&path.h);
            for (l, nodes) in path.levels.iter().enumerate() {
                let er = grid.d_rho(nodes);
                let ep = grid.d_phi(nodes);
                let v = &vel[l];
                for j in 1..=grid.r {
                    let rho = grid.rho(j);
                    for k in 0..grid.m {
                        let i = grid.index(j, k);
                        let f = density_norm(amb, &nodes[i])?;
                        for (a, dha) in [(er[i], hr[i]), (ep[i] * (1.0 / rho), hp[i] / rho)] {
                            let an = a.norm();
                            let om = amb.omega2(&nodes[i], &v[i], &a);
                            res.horizontality = res.horizontality.max(om.re.abs() / (f * an));
                            res.hamiltonian = res.hamiltonian.max((v[i].omega(&a) - dha).abs() / an);
                        }
                    }
                }
                let dr = grid.dr();
                for k in 0..grid.m {
                    let mut acc = path.h[grid.index(0, k)];
                    let mut prev = v[grid.index(0, k)].omega(&er[grid.index(0, k)]);
                    for j in 1..=grid.r {
                        let i = grid.index(j, k);
                        let cur = v[i].omega(&er[i]);
                        acc += 0.5 * dr * (prev + cur);
                        prev = cur;
                        res.constancy = res.constancy.max((acc - path.h[i]).abs());
                    }
                }
            }
        }
        PathDomain::Line { grid } => {
            let hx = grid.d(&path.h);
            for (l, nodes) in path.levels.iter().enumerate() {
                let e = grid.d(nodes);
                let v = &vel[l];
                let mut acc = path.h[0];
                let mut prev = v[0].omega(&e[0]);
                for i in 0..nodes.len() {
                    let f = density_norm(amb, &nodes[i])?;
                    let an = e[i].norm();
                    let ov = amb.holomorphic_volume(&[nodes[i][0]], &[&[v[i][0]]])?;
                    res.horizontality = res.horizontality.max(ov.re.abs() / f);
                    res.hamiltonian = res.hamiltonian.max((v[i].omega(&e[i]) - hx[i]).abs() / an);
                    if i > 0 {
                        let cur = v[i].omega(&e[i]);
                        acc += 0.5 * grid.h() * (prev + cur);
                        prev = cur;
                        res.constancy = res.constancy.max((acc - path.h[i]).abs());
                    }
                }
            }
        }
    }
    Ok(res)
}

// ---------------------------------------------------------------------------
// Level sets

/// Splines of a polar path along every spoke (on the double cover).
struct PolarSplines {
    grid: PolarGrid,
    h: Vec<Spline1<f64>>,
    /// `[l * m + k]`.
    psi: Vec<Spline1<C2>>,
}

impl PolarSplines {
    fn new(path: &GeodesicPath, grid: PolarGrid) -> Self {
        let op = grid.line_operator();
        let h = (0..grid.m).map(|k| grid.line_spline(&path.h, k, &op)).collect();
        let mut psi = Vec::with_capacity((path.t_steps + 1) * grid.m);
        for lv in &path.levels {
            for k in 0..grid.m {
                psi.push(grid.line_spline(lv, k, &op));
            }
        }
        PolarSplines { grid, h, psi }
    }
}

/// First crossing of `c` by a spline of `h` along `[0, x_end]` (or its
/// mirrored axis for segments), refined by safeguarded Newton.
fn crossing(sp: &Spline1<f64>, c: f64, nodes: &[f64]) -> Option<f64> {
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (sp.eval(a).0 - c, sp.eval(b).0 - c);
        let eps = 1e-13 * (1.0 + c.abs());
        if fa.abs() <= eps {
            return Some(a);
        }
        if fb.abs() <= eps {
            return Some(b);
        }
        if fa * fb > 0.0 {
            continue;
        }
        let (mut lo, mut hi) = if fa < 0.0 { (a, b) } else { (b, a) };
        let mut x = 0.5 * (a + b);
        for _ in 0..100 {
            let (v, d, _) = sp.eval(x);
            let f = v - c;
            if f.abs() < 1e-15 * (1.0 + c.abs()) || (hi - lo).abs() < 1e-15 {
                break;
            }
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - f / d;
            let (l, u) = if lo < hi { (lo, hi) } else { (hi, lo) };
            x = if d != 0.0 && newton >= l && newton <= u { newton } else { 0.5 * (lo + hi) };
        }
        return Some(x);
    }
    None
}

/// Radii of the level-`c` loop along every spoke, `None` when `c` is outside
/// the range of `h`.
fn polar_level_radii(sp: &PolarSplines, c: f64, tol_crit: f64) -> Result<Option<Vec<f64>>> {
    let g = sp.grid;
    let nodes: Vec<f64> = (0..=g.r).map(|j| g.rho(j)).collect();
    let radii: Vec<Option<f64>> = sp.h.iter().map(|s| crossing(s, c, &nodes)).collect();
    let found = radii.iter().filter(|r| r.is_some()).count();
    if found == 0 {
        return Ok(None);
    }
    if found < g.m {
        return Err(Error::Level { level: c, reason: "level loop leaves the parameter disc".into() });
    }
    let radii: Vec<f64> = radii.into_iter().map(|r| r.expect("all spokes cross")).collect();
    for (k, r) in radii.iter().enumerate() {
        let slope = sp.h[k].eval(*r).1;
        if slope.abs() < tol_crit {
            return Err(Error::Level { level: c, reason: format!("critical point near spoke {k}") });
        }
    }
    Ok(Some(radii))
}

fn polar_level_cylinder(path: &GeodesicPath, sp: &PolarSplines, radii: &[f64]) -> Result<CylinderMesh> {
    let m = sp.grid.m;
    let mut nodes = Vec::with_capacity(m * (path.t_steps + 1));
    for l in 0..=path.t_steps {
        for k in 0..m {
            nodes.push(sp.psi[l * m + k].eval(radii[k]).0);
        }
    }
    CylinderMesh::new(path.ambient.clone(), m, path.t_steps, nodes)
}

fn line_splines(path: &GeodesicPath, grid: &LineGrid) -> (Spline1<f64>, Vec<Spline1<C2>>) {
    let axis = Axis { origin: grid.x0, h: grid.h(), n: grid.len(), kind: EndCondition::NotAKnot };
    let h = Spline1::new(axis.clone(), path.h.clone());
    let psi = path.levels.iter().map(|lv| Spline1::new(axis.clone(), lv.clone())).collect();
    (h, psi)
}

/// A cylinder cut from a path at one level of `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardCylinder {
    /// The level.
    pub c: f64,
    /// The cylinder `Phi_c(p, t) = Psi_t(p)`; its flux coordinate is `c`.
    pub isl: IslCylinder,
    /// Time function at the nodes (`t`).
    pub sigma: Vec<f64>,
    /// Sup of the special residual over interior nodes.
    pub special_sup: f64,
    /// Sup of the discrete `Delta_rho sigma` over interior dofs.
    pub laplacian_sup: f64,
    /// Sup difference between `sigma` and the solved fundamental harmonic.
    pub harmonic_difference: f64,
    /// Parameter location of the level loop: radius per spoke, or the station.
    pub params: Vec<f64>,
}

/// Rejects levels within `3 dr^2` of the Hamiltonian value at a cone point.
fn cone_guard(path: &GeodesicPath, c: f64) -> Result<()> {
    if let PathDomain::Polar { grid } = path.domain {
        let guard = 3.0 * grid.dr() * grid.dr();
        for cp in &path.cone_points {
            if (c - path.h[cp.node]).abs() <= guard {
                return Err(Error::Level { level: c, reason: format!("within {guard:.3e} of a cone value") });
            }
        }
    }
    Ok(())
}

fn check_cylinder(c: f64, mesh: CylinderMesh, params: Vec<f64>) -> Result<ForwardCylinder> {
    let (m, k) = (mesh.m, mesh.k);
    let sigma: Vec<f64> = (0..=k).flat_map(|l| std::iter::repeat(l as f64 / k as f64).take(m)).collect();
    let special = special_residual(&mesh.ambient, &mesh)?;
    let special_sup = special.values[m..m * k].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // Surfaces use the spline discretization, where `t` is represented
    // exactly by its Greville coefficients; segments use linear elements.
    let disc = if mesh.dim() == 1 { Discretization::Bilinear } else { Discretization::Spline };
    let st = assemble_with(&mesh, disc, Weight::Density)?;
    let dofs: Vec<f64> = if mesh.dim() == 1 {
        sigma.clone()
    } else {
        ClampedBasis::new(k).greville().iter().flat_map(|g| std::iter::repeat(*g).take(m)).collect()
    };
    let laplacian_sup = st.laplacian(&dofs).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let solved = fundamental_harmonic(&st)?;
    let mut harmonic_difference = 0.0f64;
    for l in 0..=k {
        for i in 0..m {
            let t = l as f64 / k as f64;
            let v = st.layout.eval(&solved.values, i as f64 * mesh.dphi(), t).0;
            harmonic_difference = harmonic_difference.max((v - t).abs());
        }
    }
    let mut isl = IslCylinder::from_exact(mesh, c)?;
    isl.residual_norm = special_sup;
    Ok(ForwardCylinder { c, isl, sigma, special_sup, laplacian_sup, harmonic_difference, params })
}

/// Cuts the path along the given levels of `h`. Levels outside the range of
/// `h` give `None`; levels near a cone value are rejected.
pub fn forward_transform(path: &GeodesicPath, levels: &[f64], tol: &Tolerances) -> Result<Vec<Option<ForwardCylinder>>> {
    let mut out = Vec::with_capacity(levels.len());
    match path.domain {
        PathDomain::Polar { grid } => {
            let sp = PolarSplines::new(path, grid);
            for &c in levels {
                let Some(radii) = polar_level_radii(&sp, c, tol.tol_crit)? else {
                    out.push(None);
                    continue;
                };
                cone_guard(path, c)?;
                let mesh = polar_level_cylinder(path, &sp, &radii)?;
                out.push(Some(check_cylinder(c, mesh, radii)?));
            }
        }
        PathDomain::Line { grid } => {
            let (hs, psi) = line_splines(path, &grid);
            let nodes: Vec<f64> = (0..=grid.n).map(|i| grid.x(i)).collect();
            for &c in levels {
                let Some(x) = crossing(&hs, c, &nodes) else {
                    out.push(None);
                    continue;
                };
                if hs.eval(x).1.abs() < tol.tol_crit {
                    return Err(Error::Level { level: c, reason: "critical station".into() });
                }
                let pts: Vec<C2> = psi.iter().map(|s| s.eval(x).0).collect();
                let mesh = CylinderMesh::new(path.ambient.clone(), 1, path.t_steps, pts)?;
                out.push(Some(check_cylinder(c, mesh, vec![x])?));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Cone points

/// Cone-Hessian estimate at a cone point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeHessian {
    /// Smallest sampled `|grad_v dh|` over unit tangent vectors `v`.
    pub min_action: f64,
    /// Largest sampled action.
    pub max_action: f64,
    /// `min_action > tol_hess`.
    pub nondegenerate: bool,
    /// `h` has a strict local minimum (+1), maximum (-1) or neither (0) there.
    pub extremum: i8,
}

/// Second derivative of `h` along every spoke at the pole, from the spoke
/// averages `e_j = (h(j, k) + h(j, k + m/2)) / 2 - h(0)` on rings 1 and 2
/// (odd terms cancel, the quartic term is removed by extrapolation), and the
/// Cartesian Hessian fitted to them.
fn pole_hessian(path: &GeodesicPath, grid: &PolarGrid) -> ([[f64; 2]; 2], Vec<f64>) {
    let h0 = path.h[grid.index(0, 0)];
    let half = grid.m / 2;
    let dr2 = grid.dr() * grid.dr();
    let dd: Vec<f64> = (0..grid.m)
        .map(|k| {
            let e = |j: usize| 0.5 * (path.h[grid.index(j, k)] + path.h[grid.index(j, (k + half) % grid.m)]) - h0;
            (16.0 * e(1) - e(2)) / (6.0 * dr2)
        })
        .collect();
    // Least squares for a cos^2 + 2 b cos sin + d sin^2.
    let mut n = [0.0; 9];
    let mut r = [0.0; 3];
    for (k, v) in dd.iter().enumerate() {
        let p = grid.phi(k);
        let row = [p.cos() * p.cos(), 2.0 * p.cos() * p.sin(), p.sin() * p.sin()];
        for a in 0..3 {
            r[a] += row[a] * v;
            for b in 0..3 {
                n[a * 3 + b] += row[a] * row[b];
            }
        }
    }
    let x = crate::geom::solve_dense(n.to_vec(), r.to_vec(), 3).unwrap_or(vec![0.0; 3]);
    ([[x[0], x[1]], [x[1], x[2]]], dd)
}

/// Samples the cone Hessian `v -> grad_v dh` at a cone point, with `v` unit
/// in the tangent planes of `Lambda_0` and `Lambda_1` there.
pub fn cone_hessian_check(path: &GeodesicPath, which: usize, tol_hess: f64) -> Result<ConeHessian> {
    let grid = path.polar_grid()?;
    let cp = path.cone_points.get(which).ok_or_else(|| Error::Invalid(format!("no cone point {which}")))?;
    if cp.node != 0 {
        return Err(Error::Invalid("cone points of polar paths sit at the pole".into()));
    }
    if grid.r < 4 {
        return Err(Error::Invalid("insufficient resolution near the cone point".into()));
    }
    let (hess, _) = pole_hessian(path, &grid);
    let h0 = path.h[cp.node];
    let ring = &path.h[grid.index(1, 0)..grid.index(2, 0)];
    let extremum = if ring.iter().all(|v| *v > h0) {
        1
    } else if ring.iter().all(|v| *v < h0) {
        -1
    } else {
        0
    };
    let mut min_action = f64::INFINITY;
    let mut max_action = 0.0f64;
    for l in [0, path.t_steps] {
        let d = grid.d_rho(&path.levels[l]);
        let (e1, e2) = (d[grid.index(0, 0)], d[grid.index(0, grid.m / 4)]);
        let g = metric(&e1, &e2);
        let det = g[0] * g[2] - g[1] * g[1];
        if !(det > 0.0) {
            return Err(Error::DegenerateElement { element: 0, det });
        }
        let gi = [g[2] / det, -g[1] / det, g[0] / det];
        for s in 0..64 {
            let a = s as f64 * std::f64::consts::PI / 64.0;
            let mut v = [a.cos(), a.sin()];
            let len = (g[0] * v[0] * v[0] + 2.0 * g[1] * v[0] * v[1] + g[2] * v[1] * v[1]).sqrt();
            v = [v[0] / len, v[1] / len];
            let w = [hess[0][0] * v[0] + hess[0][1] * v[1], hess[1][0] * v[0] + hess[1][1] * v[1]];
            let act = (gi[0] * w[0] * w[0] + 2.0 * gi[1] * w[0] * w[1] + gi[2] * w[1] * w[1]).sqrt();
            min_action = min_action.min(act);
            max_action = max_action.max(act);
        }
    }
    Ok(ConeHessian { min_action, max_action, nondegenerate: min_action > tol_hess, extremum })
}

/// Level loops about a cone point at `h = h(q) + e s^2` (`e = +1` at a
/// minimum, `-1` at a maximum), swept over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarLevelChart {
    /// Cone point.
    pub q: C2,
    /// `h(q)`.
    pub c_crit: f64,
    /// `+1` or `-1`.
    pub extremum: i8,
    /// Radii `s_k`.
    pub s: Vec<f64>,
    /// Spoke radii of each loop.
    pub radii: Vec<Vec<f64>>,
    /// Each loop swept over time.
    pub loops: Vec<CylinderMesh>,
}

/// Extracts the level loops `h = h(q) + e s^2` for the given radii `s`.
pub fn polar_level_chart(path: &GeodesicPath, which: usize, s: &[f64], tol: &Tolerances) -> Result<PolarLevelChart> {
    let grid = path.polar_grid()?;
    let hess = cone_hessian_check(path, which, tol.tol_hess)?;
    if !hess.nondegenerate {
        return Err(Error::Regularity(format!("degenerate cone point (action {:.3e})", hess.min_action)));
    }
    if hess.extremum == 0 {
        return Err(Error::Regularity("cone point is not a local extremum of h".into()));
    }
    let cp = path.cone_points[which];
    let c_crit = path.h[cp.node];
    let sp = PolarSplines::new(path, grid);
    let mut radii = Vec::with_capacity(s.len());
    let mut loops = Vec::with_capacity(s.len());
    for &sk in s {
        let c = c_crit + hess.extremum as f64 * sk * sk;
        let r = polar_level_radii(&sp, c, tol.tol_crit)?
            .ok_or_else(|| Error::Level { level: c, reason: "loop outside the parameter disc".into() })?;
        loops.push(polar_level_cylinder(path, &sp, &r)?);
        radii.push(r);
    }
    Ok(PolarLevelChart { q: cp.q, c_crit, extremum: hess.extremum, s: s.to_vec(), radii, loops })
}

/// The flat-cone seed at a cone point: `DPsi_t(0) e_k sqrt(2 / h_kk)` along
/// spoke `k` at every time, in rescaled coordinates.
pub fn flat_cone_seed(path: &GeodesicPath) -> Result<CylinderMesh> {
    let grid = path.polar_grid()?;
    let (_, dd) = pole_hessian(path, &grid);
    let mut nodes = Vec::with_capacity(grid.m * (path.t_steps + 1));
    for lv in &path.levels {
        let d = grid.d_rho(lv);
        for k in 0..grid.m {
            if !(dd[k].abs() > 0.0) {
                return Err(Error::Regularity("flat second derivative at the cone point".into()));
            }
            nodes.push(d[grid.index(0, k)] * (2.0 / dd[k].abs()).sqrt());
        }
    }
    CylinderMesh::new(path.ambient.clone(), grid.m, path.t_steps, nodes)
}

// ---------------------------------------------------------------------------
// Families

/// How a family member was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MemberSource {
    /// Cut directly from the path.
    Forward,
    /// Solved by rescaling about the cone point with factor `s`.
    End {
        /// Rescaling factor.
        s: f64,
    },
}

/// One level cylinder of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    /// Level of `h`.
    pub c: f64,
    /// Origin.
    pub source: MemberSource,
    /// The cylinder.
    pub isl: IslCylinder,
}

/// The ring family of a polar path: one cylinder per ring level, from the
/// end solver inside the cone guard and from the forward transform outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingFamily {
    /// Members in ring order.
    pub members: Vec<FamilyMember>,
    /// Cone point.
    pub q: C2,
    /// `h` at the cone point.
    pub c_crit: f64,
    /// Checks of the flat-cone end.
    pub end: EndCheck,
    /// The rim end is a boundary of the disc, not a cone point.
    pub rim_truncated: bool,
}

/// Builds the ring family of a polar path between `lags` (usually its endpoints).
pub fn ring_family(path: &GeodesicPath, lags: &[BoundaryLagrangian; 2], opts: &NewtonOptions, tol: &Tolerances) -> Result<RingFamily> {
    let grid = path.polar_grid()?;
    if path.cone_points.len() != 1 {
        return Err(Error::Invalid("ring families need exactly one cone point".into()));
    }
    let cp = path.cone_points[0];
    let c_crit = path.h[cp.node];
    let guard = 3.0 * grid.dr() * grid.dr();
    let seed0 = flat_cone_seed(path)?;
    let flat = end_rescale_solve(&path.ambient, lags, &cp.q, 0.0, &seed0, opts)?;
    let end = end_check(&flat.psi.mesh, tol.tol_euler)?;
    let sp = PolarSplines::new(path, grid);
    let mut members = Vec::with_capacity(grid.r);
    for j in 1..=grid.r {
        let c = path.h[grid.index(j, 0)];
        if (c - c_crit).abs() <= guard {
            let hess = cone_hessian_check(path, 0, tol.tol_hess)?;
            let s = (hess.extremum as f64 * (c - c_crit)).max(0.0).sqrt();
            let chart = polar_level_chart(path, 0, &[s], tol)?;
            let seed_nodes: Vec<C2> = chart.loops[0].nodes.iter().map(|z| (*z - cp.q) * (1.0 / s)).collect();
            let seed = chart.loops[0].with_nodes(seed_nodes)?;
            let sol = end_rescale_solve(&path.ambient, lags, &cp.q, s, &seed, opts)?;
            let mesh = CylinderMesh::new(path.ambient.clone(), grid.m, path.t_steps, sol.phi_nodes)?;
            let mut isl = sol.psi.clone();
            isl.mesh = mesh;
            isl.flux_coordinate = c;
            members.push(FamilyMember { c, source: MemberSource::End { s }, isl });
        } else {
            let radii = polar_level_radii(&sp, c, tol.tol_crit)?
                .ok_or_else(|| Error::Level { level: c, reason: "ring level outside the range of h".into() })?;
            let mesh = polar_level_cylinder(path, &sp, &radii)?;
            let fc = check_cylinder(c, mesh, radii)?;
            members.push(FamilyMember { c, source: MemberSource::Forward, isl: fc.isl });
        }
    }
    Ok(RingFamily { members, q: cp.q, c_crit, end, rim_truncated: true })
}

/// Regularity of a ring family with the cone-Hessian check at its cone end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingRegularity {
    /// Family classification; the cone end is end 0, the rim end is end 1.
    pub report: RegularityReport,
    /// Cone-Hessian check at the cone point.
    pub cone: ConeHessian,
}

/// Classifies a ring family. The rim end is a boundary of the parameter disc
/// and carries no end check.
pub fn ring_regularity(path: &GeodesicPath, family: &RingFamily, tol: &Tolerances) -> Result<RingRegularity> {
    let cone = cone_hessian_check(path, 0, tol.tol_hess)?;
    let isl: Vec<IslCylinder> = family.members.iter().map(|m| m.isl.clone()).collect();
    let mut report = classify_regularity(&isl, [Some(family.end), None], tol.tol_crit, tol.tol_euler)?;
    if !cone.nondegenerate {
        report.verdict = Verdict::NotRegular { cause: "end".into() };
    }
    Ok(RingRegularity { report, cone })
}

/// A family of cylinders over a grid of family parameters `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParameterization {
    /// Members at increasing `s`.
    pub members: Vec<CylinderMesh>,
    /// Family parameters.
    pub s: Vec<f64>,
    /// The `t`-parameter of every member is its harmonic time function.
    pub compatible: bool,
    /// Worst `|sigma_s(Phi(p, t, s)) - t|` after harmonization.
    pub compat_error: Option<f64>,
}

impl FamilyParameterization {
    /// A raw family.
    pub fn new(members: Vec<CylinderMesh>, s: Vec<f64>) -> Result<Self> {
        if members.len() != s.len() || members.is_empty() {
            return Err(Error::Invalid("one family parameter per member".into()));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("family parameters must increase".into()));
        }
        let (m, k) = (members[0].m, members[0].k);
        if members.iter().any(|c| c.m != m || c.k != k) {
            return Err(Error::Invalid("family members need a common grid".into()));
        }
        Ok(FamilyParameterization { members, s, compatible: false, compat_error: None })
    }

    fn index_of(&self, s: f64) -> Result<usize> {
        self.s
            .iter()
            .position(|v| (v - s).abs() <= 1e-12 * (1.0 + s.abs()))
            .ok_or_else(|| Error::Invalid(format!("{s} is not a family parameter")))
    }
}

/// The two bookkeepings of relative flux between two family members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    /// `int int omega(g_t, g_s)` along the cross path through angle node 0.
    pub strip_integral: f64,
    /// `-int A_s ds`, with `A_s` the `C1` constant of the variation 1-form
    /// (its integral along a cross path, averaged over all cross paths).
    pub boundary_integral: f64,
    /// `strip_integral - boundary_integral`.
    pub mismatch: f64,
}

/// Gauss points per interval of the flux quadrature.
const FLUX_GAUSS: usize = 4;

/// Lagrange weights (value and derivative) at `x` on the given abscissae.
fn lagrange(xs: &[f64], x: f64) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len();
    let mut w = vec![0.0; n];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut denom = 1.0;
        for m in 0..n {
            if m != j {
                denom *= xs[j] - xs[m];
            }
        }
        let mut prod = 1.0;
        for m in 0..n {
            if m != j {
                prod *= x - xs[m];
            }
        }
        w[j] = prod / denom;
        let mut sum = 0.0;
        for a in 0..n {
            if a == j {
                continue;
            }
            let mut p = 1.0;
            for m in 0..n {
                if m != j && m != a {
                    p *= x - xs[m];
                }
            }
            sum += p;
        }
        d[j] = sum / denom;
    }
    (w, d)
}

/// `int int omega(g_t, g_s) dt ds` over members `lo..=hi` along the cross
/// path through angle node `i`: cubic splines in `t` and four-point Lagrange
/// interpolation across members, with Gauss quadrature on every cell.
fn strip_column(family: &FamilyParameterization, i: usize, lo: usize, hi: usize) -> f64 {
    let mems = &family.members;
    let k = mems[0].k;
    let axis = Axis { origin: 0.0, h: 1.0 / k as f64, n: k + 1, kind: EndCondition::NotAKnot };
    let splines: Vec<Spline1<C2>> =
        mems.iter().map(|c| Spline1::new(axis.clone(), (0..=k).map(|l| c.node(i, l)).collect())).collect();
    let (gx, gw) = gauss01(FLUX_GAUSS);
    let n = mems.len();
    let mut total = 0.0;
    for j in lo..hi {
        let first = j.saturating_sub(1).min(n - 4);
        let stencil: Vec<usize> = (first..first + 4).collect();
        let xs: Vec<f64> = stencil.iter().map(|&a| family.s[a]).collect();
        let ds = family.s[j + 1] - family.s[j];
        for (xa, wa) in gx.iter().zip(&gw) {
            let s = family.s[j] + xa * ds;
            let (ls, ld) = lagrange(&xs, s);
            for e in 0..k {
                for (xb, wb) in gx.iter().zip(&gw) {
                    let t = (e as f64 + xb) / k as f64;
                    let mut gt = C2::ZERO;
                    let mut gs = C2::ZERO;
                    for (q, &a) in stencil.iter().enumerate() {
                        let (v, d, _) = splines[a].eval(t);
                        gt += d * ls[q];
                        gs += v * ld[q];
                    }
                    total += wa * wb * ds / k as f64 * gt.omega(&gs);
                }
            }
        }
    }
    total
}

/// Relative flux of a family between parameters `s0` and `s1` (both
/// members). Families of four or more members use cubic quadrature; smaller
/// ones use composite bilinear strips.
pub fn relative_flux(family: &FamilyParameterization, s0: f64, s1: f64) -> Result<FluxReport> {
    let (i0, i1) = (family.index_of(s0)?, family.index_of(s1)?);
    let (lo, hi, sign) = if i0 <= i1 { (i0, i1, 1.0) } else { (i1, i0, -1.0) };
    let m = family.members[0].m;
    let column: Box<dyn Fn(usize) -> f64> = if family.members.len() >= 4 && family.members[0].k >= 3 {
        Box::new(|i| strip_column(family, i, lo, hi))
    } else {
        Box::new(|i| {
            family.members[lo..=hi]
                .windows(2)
                .map(|w| {
                    let col = |c: &CylinderMesh| (0..=c.k).map(|l| c.node(i, l)).collect::<Vec<_>>();
                    strip_path(&col(&w[0]), &col(&w[1]))
                })
                .sum()
        })
    };
    let strip = sign * column(0);
    // A_s ds is minus the strip element of any cross path; averaging over
    // all of them gives -int A_s ds.
    let boundary = sign * (0..m).map(|i| column(i)).sum::<f64>() / m as f64;
    Ok(FluxReport { strip_integral: strip, boundary_integral: boundary, mismatch: strip - boundary })
}

/// Substeps per `t`-interval of the gradient tracing in [`harmonize`].
const TRACE_SUBSTEPS: usize = 8;

fn harmonize_member(mesh: &CylinderMesh) -> Result<(CylinderMesh, f64)> {
    if mesh.dim() == 1 {
        let st = assemble_with(mesh, Discretization::Bilinear, Weight::Density)?;
        let sigma = fundamental_harmonic(&st)?.values;
        if sigma.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Regularity("time function is not monotone along the segment".into()));
        }
        let k = mesh.k;
        let mut nodes = Vec::with_capacity(k + 1);
        for l in 0..=k {
            let tau = l as f64 / k as f64;
            let e = sigma.partition_point(|v| *v < tau).clamp(1, k);
            let u = (tau - sigma[e - 1]) / (sigma[e] - sigma[e - 1]);
            nodes.push(mesh.nodes[e - 1] * (1.0 - u) + mesh.nodes[e] * u);
        }
        return Ok((mesh.with_nodes(nodes)?, 0.0));
    }
    let st = assemble_with(mesh, Discretization::Spline, Weight::Density)?;
    let sigma = fundamental_harmonic(&st)?;
    let layout = DofLayout::new(mesh, Discretization::Spline);
    let surf = mesh.surface(Discretization::Spline)?;
    let rhs = |y: [f64; 2]| -> Result<[f64; 2]> {
        let t = y[1].clamp(0.0, 1.0);
        let (_, xp, xt) = surf.point(y[0], t)?;
        let (_, sp, stt) = layout.eval(&sigma.values, y[0], t);
        let g = metric(&xp, &xt);
        let det = g[0] * g[2] - g[1] * g[1];
        if !(det > 0.0) {
            return Err(Error::DegenerateElement { element: 0, det });
        }
        let a = (g[2] * sp - g[1] * stt) / det;
        let b = (-g[1] * sp + g[0] * stt) / det;
        let n2 = a * sp + b * stt;
        if !(n2 > 0.0) {
            return Err(Error::Regularity("critical point of the harmonic during tracing".into()));
        }
        Ok([a / n2, b / n2])
    };
    let (m, k) = (mesh.m, mesh.k);
    let mut out = vec![C2::ZERO; m * (k + 1)];
    let mut worst = 0.0f64;
    let dtau = 1.0 / (k * TRACE_SUBSTEPS) as f64;
    for i in 0..m {
        let mut y = [i as f64 * mesh.dphi(), 0.0];
        out[i] = mesh.node(i, 0);
        for l in 1..=k {
            for _ in 0..TRACE_SUBSTEPS {
                let k1 = rhs(y)?;
                let k2 = rhs([y[0] + 0.5 * dtau * k1[0], y[1] + 0.5 * dtau * k1[1]])?;
                let k3 = rhs([y[0] + 0.5 * dtau * k2[0], y[1] + 0.5 * dtau * k2[1]])?;
                let k4 = rhs([y[0] + dtau * k3[0], y[1] + dtau * k3[1]])?;
                for c in 0..2 {
                    y[c] += dtau / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
            }
            if y[1] > 1.0 + 1e-6 || y[1] < -1e-6 {
                return Err(Error::Regularity(format!("trace left the cylinder (t = {:.6})", y[1])));
            }
            let tau = l as f64 / k as f64;
            let t = if l == k { 1.0 } else { y[1].clamp(0.0, 1.0) };
            worst = worst.max((layout.eval(&sigma.values, y[0], y[1].clamp(0.0, 1.0)).0 - tau).abs());
            out[l * m + i] = surf.point(y[0], t)?.0;
        }
    }
    Ok((mesh.with_nodes(out)?, worst))
}

/// Re-parameterizes every member so that its `t`-coordinate is its harmonic
/// time function: nodes are traced from the `C0` nodes along
/// `grad sigma / |grad sigma|^2`.
pub fn harmonize(family: &FamilyParameterization) -> Result<FamilyParameterization> {
    let mut members = Vec::with_capacity(family.members.len());
    let mut worst = 0.0f64;
    for mesh in &family.members {
        let (h, e) = harmonize_member(mesh)?;
        worst = worst.max(e);
        members.push(h);
    }
    Ok(FamilyParameterization { members, s: family.s.clone(), compatible: true, compat_error: Some(worst) })
}

/// Input of [`inverse_transform`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseInput {
    /// Members ordered by increasing flux.
    pub members: Vec<CylinderMesh>,
    /// Cone point before the first member (polar output), if any.
    pub cone: Option<C2>,
    /// Member where `h` takes `anchor_value`.
    pub anchor: usize,
    /// The anchor value.
    pub anchor_value: f64,
}

/// A reassembled path with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseResult {
    /// The path.
    pub path: GeodesicPath,
    /// Worst compatibility error of the harmonization.
    pub compat_error: f64,
    /// Largest `|phase|` over every `Lambda_t`.
    pub max_abs_phase: f64,
    /// Relative flux of each member from the anchor.
    pub fluxes: Vec<f64>,
}

/// Reassembles a geodesic from a family: `Lambda_t` is the `t`-slice of the
/// harmonized family, and `h` on a member is the anchor value plus the
/// relative flux from the anchor member. A polar family needs its cone point.
pub fn inverse_transform(ambient: &AmbientStructure, input: &InverseInput, tol: &Tolerances) -> Result<InverseResult> {
    if input.members.len() < 2 {
        return Err(Error::Invalid("insufficient family: at least two cylinders are needed".into()));
    }
    if input.anchor >= input.members.len() {
        return Err(Error::Invalid("anchor outside the family".into()));
    }
    let n_mem = input.members.len();
    let raw = FamilyParameterization::new(input.members.clone(), (0..n_mem).map(|i| i as f64).collect())?;
    let fam = harmonize(&raw)?;
    let (m, k) = (fam.members[0].m, fam.members[0].k);
    let dim = fam.members[0].dim();
    // Cumulative flux, with the cone point as a degenerate first member.
    let mut chain: Vec<CylinderMesh> = Vec::with_capacity(n_mem + 1);
    if let Some(q) = input.cone {
        chain.push(fam.members[0].with_nodes(vec![q; m * (k + 1)])?);
    }
    chain.extend(fam.members.iter().cloned());
    let chain_fam = FamilyParameterization {
        s: (0..chain.len()).map(|i| i as f64).collect(),
        members: chain,
        compatible: true,
        compat_error: None,
    };
    let off = input.cone.is_some() as usize;
    let a = (input.anchor + off) as f64;
    let mut values = Vec::with_capacity(chain_fam.members.len());
    for i in 0..chain_fam.members.len() {
        let fl = if (i as f64) == a { 0.0 } else { relative_flux(&chain_fam, a, i as f64)?.boundary_integral };
        values.push(input.anchor_value + fl);
    }
    let fluxes = values[off..].iter().map(|v| v - input.anchor_value).collect();
    let mut levels = Vec::with_capacity(k + 1);
    let (domain, h, cone_points) = if dim == 2 {
        let q = input.cone.ok_or_else(|| Error::Invalid("a polar family needs its cone point".into()))?;
        if m % 2 != 0 || m < 8 || n_mem < 4 {
            return Err(Error::Invalid("polar output needs an even number >= 8 of angles and 4 members".into()));
        }
        let grid = PolarGrid::new(m, n_mem, 1.0);
        for l in 0..=k {
            let mut nodes = vec![q; m];
            for mem in &fam.members {
                nodes.extend((0..m).map(|i| mem.node(i, l)));
            }
            levels.push(nodes);
        }
        let h: Vec<f64> = (0..=n_mem).flat_map(|j| std::iter::repeat(values[j]).take(m)).collect();
        (PathDomain::Polar { grid }, h, vec![ConePoint { node: 0, q }])
    } else {
        if n_mem < 5 {
            return Err(Error::Invalid("line output needs at least 5 members".into()));
        }
        let grid = LineGrid { x0: 0.0, x1: 1.0, n: n_mem - 1 };
        for l in 0..=k {
            levels.push(fam.members.iter().map(|mem| mem.nodes[l]).collect());
        }
        (PathDomain::Line { grid }, values[off..].to_vec(), Vec::new())
    };
    let path = GeodesicPath {
        ambient: ambient.clone(),
        domain,
        t_steps: k,
        levels,
        h,
        cone_points,
        orientation: 1,
        anchor: Some(HamiltonianAnchor { member: input.anchor, value: input.anchor_value }),
    };
    let mut max_abs_phase = 0.0f64;
    for l in 0..=k {
        let phase = match path.domain {
            PathDomain::Polar { grid } => {
                let lm = path.level_mesh(l)?;
                let rep = positivity_report(ambient, PositivityTarget::Mesh(&lm), grid.len(), tol.delta_phase)?;
                rep.max_abs_phase
            }
            PathDomain::Line { grid } => {
                let e = grid.d(&path.levels[l]);
                let mut worst = 0.0f64;
                for (z, d) in path.levels[l].iter().zip(&e) {
                    worst = worst.max(ambient.holomorphic_volume(&[z[0]], &[&[d[0]]])?.arg().abs());
                }
                worst
            }
        };
        if phase >= FRAC_PI_2 {
            return Err(Error::Positivity { phase, index: l });
        }
        max_abs_phase = max_abs_phase.max(phase);
    }
    Ok(InverseResult { path, compat_error: fam.compat_error.unwrap_or(0.0), max_abs_phase, fluxes })
}

/// The inverse input of a ring family, anchored at the cone value.
pub fn ring_inverse_input(family: &RingFamily) -> Result<InverseInput> {
    let first = family.members.first().ok_or_else(|| Error::Invalid("empty family".into()))?;
    Ok(InverseInput {
        members: family.members.iter().map(|m| m.isl.mesh.clone()).collect(),
        cone: Some(family.q),
        anchor: 0,
        anchor_value: first.c,
    })
}

// ---------------------------------------------------------------------------
// Perturbation

/// Result of [`perturb_and_resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbResult {
    /// The perturbed path.
    pub path: GeodesicPath,
    /// Largest node displacement from the input path.
    pub displacement: f64,
    /// Largest distance of a re-solved `C1` node from `Lambda_{1,h}`.
    pub boundary_distance: f64,
    /// Largest Newton residual of the re-solved cylinders.
    pub residual: f64,
}

/// Re-solves the ring family of `path` against `Lambda_{1,h}`, the graph of
/// `d h_pert` over `Lambda_1`, and returns `path + IT(F_h) - IT(F_0)`, where
/// `F_0` are the cylinders re-solved against `Lambda_1` and `F_h` against
/// `Lambda_{1,h}`.
pub fn perturb_and_resolve(
    path: &GeodesicPath,
    h_pert: &Potential,
    opts: &NewtonOptions,
    tol: &Tolerances,
) -> Result<PerturbResult> {
    let lags = path.endpoints()?;
    let lag1h = perturb_graph(&lags[1], h_pert, 64)?;
    let lags_h = [lags[0].clone(), lag1h.clone()];
    let base = ring_family(path, &lags, opts, tol)?;
    let resolve = |l: &[BoundaryLagrangian; 2]| -> Result<(Vec<CylinderMesh>, f64)> {
        let mut out = Vec::with_capacity(base.members.len());
        let mut worst = 0.0f64;
        for (j, mem) in base.members.iter().enumerate() {
            let res = match mem.source {
                MemberSource::Forward => crate::slc::solve_near(
                    &path.ambient,
                    crate::slc::ChartBase::Mesh { mesh: mem.isl.mesh.clone() },
                    l.clone(),
                    mem.isl.mesh.m,
                    mem.isl.mesh.k,
                    0.0,
                    opts,
                )
                .map(|c| (c.mesh, c.residual_norm)),
                MemberSource::End { s } => {
                    let seed_nodes: Vec<C2> = mem.isl.mesh.nodes.iter().map(|z| (*z - base.q) * (1.0 / s)).collect();
                    let seed = mem.isl.mesh.with_nodes(seed_nodes)?;
                    end_rescale_solve(&path.ambient, l, &base.q, s, &seed, opts).and_then(|e| {
                        Ok((mem.isl.mesh.with_nodes(e.phi_nodes)?, e.psi.residual_norm))
                    })
                }
            };
            let (mesh, r) = res.map_err(|e| match e {
                Error::Divergence { .. } | Error::NoConvergence(_) | Error::ChartOverflow(_) => {
                    Error::Divergence { iterations: j, residual: f64::NAN }
                }
                other => other,
            })?;
            worst = worst.max(r);
            out.push(mesh);
        }
        Ok((out, worst))
    };
    let (f0, r0) = resolve(&lags)?;
    let (fh, rh) = if h_pert.is_locally_constant() { (f0.clone(), r0) } else { resolve(&lags_h)? };
    let mut boundary_distance = 0.0f64;
    for mesh in &fh {
        boundary_distance = boundary_distance.max(mesh.boundary_distance(&lag1h, 1)?);
    }
    let mk = |members: Vec<CylinderMesh>| InverseInput {
        members,
        cone: Some(base.q),
        anchor: 0,
        anchor_value: base.members[0].c,
    };
    let it0 = inverse_transform(&path.ambient, &mk(f0), tol)?.path;
    let ith = inverse_transform(&path.ambient, &mk(fh), tol)?.path;
    let mut out = path.clone();
    for l in 0..=path.t_steps {
        for i in 0..out.levels[l].len() {
            out.levels[l][i] += ith.levels[l][i] - it0.levels[l][i];
        }
    }
    for i in 0..out.h.len() {
        out.h[i] += ith.h[i] - it0.h[i];
    }
    let displacement = out.distance(path)?;
    Ok(PerturbResult { path: out, displacement, boundary_distance, residual: r0.max(rh) })
}

/// A bump potential on the parameter disc of `Lambda_1` scaled to the given
/// `C^2` norm (sampled on the disc).
pub fn scaled_bump(center: [f64; 2], radius: f64, c2_norm: f64) -> Potential {
    let unit = Potential::Bump { amplitude: 1.0, center, radius };
    let samples: Vec<[f64; 2]> = (0..4096)
        .map(|i| {
            let r = (crate::lagrangian::halton(i + 1, 2)).sqrt();
            let a = 2.0 * std::f64::consts::PI * crate::lagrangian::halton(i + 1, 3);
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let n = unit.c2_norm(&samples);
    unit.scaled(c2_norm / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_geodesic_is_the_closed_form() {
        let path = line_fixture(12, 8).unwrap();
        let grid = match path.domain {
            PathDomain::Line { grid } => grid,
            _ => unreachable!(),
        };
        for (l, lv) in path.levels.iter().enumerate() {
            let t = path.time(l);
            for (i, z) in lv.iter().enumerate() {
                let x = grid.x(i);
                assert!((z[0] - Complex64::new(x, t * x)).norm() < 1e-13);
            }
        }
        let r = geodesic_residual(&path).unwrap();
        assert!(r.horizontality < 1e-12 && r.hamiltonian < 1e-12 && r.constancy < 1e-12, "{r:?}");
        let rev = geodesic_residual(&path.reversed()).unwrap();
        assert!(rev.horizontality < 1e-12 && rev.hamiltonian < 1e-12 && rev.constancy < 1e-12, "{rev:?}");
    }

    #[test]
    fn line_forward_cylinders_are_vertical_segments() {
        let path = line_fixture(12, 8).unwrap();
        let levels = [-1.5, -0.5, 3.0];
        let out = forward_transform(&path, &levels, &Tolerances::default()).unwrap();
        assert!(out[2].is_none());
        for fc in out[..2].iter().map(|f| f.as_ref().unwrap()) {
            let x = (-2.0 * fc.c).sqrt();
            assert!((fc.params[0] - x).abs() < 1e-12);
            for (l, z) in fc.isl.mesh.nodes.iter().enumerate() {
                assert!((z[0] - Complex64::new(x, x * l as f64 / 8.0)).norm() < 1e-12);
            }
            assert!(fc.special_sup < 1e-12 && fc.laplacian_sup < 1e-12);
        }
    }

    #[test]
    fn disc_ivp_residuals_shrink() {
        let coarse = geodesic_residual(&disc_fixture(16, 8, 8).unwrap()).unwrap();
        let fine = geodesic_residual(&disc_fixture(32, 16, 16).unwrap()).unwrap();
        assert!(fine.horizontality < coarse.horizontality / 3.0, "{coarse:?} {fine:?}");
        assert!(fine.hamiltonian < 1e-2 && fine.constancy < 1e-2, "{fine:?}");
    }

    #[test]
    fn model_cone_hessian() {
        let grid = PolarGrid::new(16, 8, 1.0);
        let start = LagrangianMesh::from_map(grid, |x| C2::real(x[0], x[1]));
        let h = grid.sample(|x| 0.5 * (x[0] * x[0] + x[1] * x[1]));
        let path = geodesic_ivp(&AmbientStructure::flat(2), &start, &h, 4, &Tolerances::default()).unwrap();
        let c = cone_hessian_check(&path, 0, 1e-3).unwrap();
        assert!(c.nondegenerate && c.extremum == 1);
        let chart = polar_level_chart(&path, 0, &[0.2, 0.3], &Tolerances::default()).unwrap();
        for (s, r) in chart.s.iter().zip(&chart.radii) {
            assert!(r.iter().all(|v| (v - s * 2f64.sqrt()).abs() < 1e-10));
        }
        let h4 = grid.sample(|x| (x[0] * x[0] + x[1] * x[1]).powi(2));
        let mut flat = path.clone();
        flat.h = h4;
        assert!(!cone_hessian_check(&flat, 0, 1e-3).unwrap().nondegenerate);
        assert!(polar_level_chart(&flat, 0, &[0.2], &Tolerances::default()).is_err());
    }

    #[test]
    fn closed_form_segment_family_flux_and_inverse() {
        let b = 0.8;
        let n = 8;
        let members: Vec<CylinderMesh> = (0..=n)
            .map(|i| {
                let x = b * i as f64 / n as f64;
                CylinderMesh::segment(AmbientStructure::flat(1), 6, Complex64::new(x, 0.0), Complex64::new(x, 1.0 + x))
                    .unwrap()
            })
            .collect();
        let s: Vec<f64> = (0..=n).map(|i| b * i as f64 / n as f64).collect();
        let fam = FamilyParameterization::new(members.clone(), s.clone()).unwrap();
        let r = relative_flux(&fam, 0.0, b).unwrap();
        assert!((r.strip_integral + b + b * b / 2.0).abs() < 1e-10);
        assert!(r.mismatch.abs() < 1e-14);
        let split = relative_flux(&fam, 0.0, s[3]).unwrap().strip_integral
            + relative_flux(&fam, s[3], b).unwrap().strip_integral;
        assert!((split - r.strip_integral).abs() < 1e-12);
        let inp = InverseInput { members, cone: None, anchor: 0, anchor_value: 0.0 };
        let inv = inverse_transform(&AmbientStructure::flat(1), &inp, &Tolerances::default()).unwrap();
        for (l, lv) in inv.path.levels.iter().enumerate() {
            let t = l as f64 / 6.0;
            for (i, z) in lv.iter().enumerate() {
                let x = s[i];
                assert!((z[0] - Complex64::new(x, t * (1.0 + x))).norm() < 1e-12);
            }
        }
        let single = InverseInput { members: vec![fam.members[0].clone()], cone: None, anchor: 0, anchor_value: 0.0 };
        assert!(inverse_transform(&AmbientStructure::flat(1), &single, &Tolerances::default()).is_err());
    }

    #[test]
    fn disc_forward_family_is_special_harmonic_and_carries_the_flux() {
        let path = disc_fixture(32, 16, 16).unwrap();
        let cs: Vec<f64> = (0..9).map(|i| 0.04 + 0.016 * i as f64).collect();
        let out = forward_transform(&path, &cs, &Tolerances::default()).unwrap();
        let members: Vec<ForwardCylinder> = out.into_iter().map(|f| f.unwrap()).collect();
        for f in &members {
            assert!(f.special_sup < 5e-3 && f.laplacian_sup < 5e-3 && f.harmonic_difference < 5e-3, "{}", f.c);
            let r = (f.c / 0.2).sqrt();
            assert!(f.params.iter().all(|p| (p - r).abs() < 1e-12));
        }
        assert!(forward_transform(&path, &[1.0], &Tolerances::default()).unwrap()[0].is_none());
        assert!(forward_transform(&path, &[1e-4], &Tolerances::default()).is_err());
        let fam = FamilyParameterization::new(members.iter().map(|f| f.isl.mesh.clone()).collect(), cs.clone()).unwrap();
        for w in cs.windows(2) {
            let r = relative_flux(&fam, w[0], w[1]).unwrap();
            assert!((r.boundary_integral - (w[1] - w[0])).abs() < 1e-3);
            assert!(r.mismatch.abs() < 1e-6, "{r:?}");
        }
        let back = relative_flux(&fam, cs[8], cs[0]).unwrap();
        let fwd = relative_flux(&fam, cs[0], cs[8]).unwrap();
        assert!((back.strip_integral + fwd.strip_integral).abs() < 1e-14);
        let h = harmonize(&fam).unwrap();
        assert!(h.compatible && h.compat_error.unwrap() < 1e-8);
        for (a, b) in h.members.iter().zip(&fam.members) {
            let d = a.nodes.iter().zip(&b.nodes).fold(0.0f64, |w, (p, q)| w.max((*p - *q).norm()));
            assert!(d < 1e-3, "{d}");
        }
    }

    #[test]
    fn disc_round_trip_and_regular_flat_end() {
        let path = disc_fixture(32, 16, 16).unwrap();
        let lags = path.endpoints().unwrap();
        let tol = Tolerances::default();
        let fam = ring_family(&path, &lags, &NewtonOptions::default(), &tol).unwrap();
        assert!(matches!(fam.members[0].source, MemberSource::End { .. }));
        assert!(matches!(fam.members.last().unwrap().source, MemberSource::Forward));
        assert!(fam.end.euler.nowhere_tangent && fam.end.euler.min_angle > tol.tol_euler);
        let inv = inverse_transform(&path.ambient, &ring_inverse_input(&fam).unwrap(), &tol).unwrap();
        assert!(inv.path.distance(&path).unwrap() < 1e-3);
        let dh = inv.path.h.iter().zip(&path.h).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(dh < 1e-3, "{dh}");
        assert!(inv.max_abs_phase < FRAC_PI_2);
        let reg = ring_regularity(&path, &fam, &tol).unwrap();
        assert!(reg.cone.nondegenerate && reg.report.harmonics_regular && reg.report.boundaries_monotone);
        assert_eq!(reg.report.verdict, Verdict::InteriorRegularOnly { missing: vec![1] });
    }

    #[test]
    fn reversed_path_solves_the_same_equations() {
        let path = disc_fixture(32, 16, 16).unwrap();
        let a = geodesic_residual(&path).unwrap();
        let b = geodesic_residual(&path.reversed()).unwrap();
        assert!((a.horizontality - b.horizontality).abs() < 1e-12);
        assert!((a.hamiltonian - b.hamiltonian).abs() < 1e-12);
        assert_eq!(path.reversed().reversed(), path);
    }

    #[test]
    fn lagrange_weights_reproduce_cubics() {
        let xs = [0.0, 0.3, 0.7, 1.2];
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let df = |x: f64| -2.0 + 1.5 * x * x;
        let (w, d) = lagrange(&xs, 0.45);
        let v: f64 = w.iter().zip(&xs).map(|(a, x)| a * f(*x)).sum();
        let dv: f64 = d.iter().zip(&xs).map(|(a, x)| a * f(*x)).sum();
        assert!((v - f(0.45)).abs() < 1e-14 && (dv - df(0.45)).abs() < 1e-13);
    }
}
