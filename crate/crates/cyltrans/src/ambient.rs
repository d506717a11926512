//! The flat Calabi-Yau ambient: C^n with the standard `omega` and `J`, a
//! holomorphic volume form `Omega = f(z) dz^1 ^ ... ^ dz^n` with `f = exp(P)`
//! for a complex polynomial `P`, optional rescaling about a center, and an
//! optional cutoff Hamiltonian deformation acting by pullback.
//!
//! The positive density `rho` is defined by
//! `rho^2 omega^n / n! = (-1)^{n(n-1)/2} (i/2)^n Omega ^ conj(Omega)`, which
//! for the flat structure is `|f|`. A structure pulled back by a
//! symplectomorphism `phi` has `rho(phi(z))`, and the rescaled structure
//! `Omega_s = s^{-n} M_s^* Omega` with `M_s(z) = q + s z` has
//! density `f(q + s z)`.

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, C2, I};
use crate::lagrangian::{BoundaryLagrangian, Potential};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// One monomial `coeff * z^powers` of the exponent polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    /// Exponent of each coordinate.
    pub powers: Vec<u32>,
    /// Complex coefficient, serialized as `[re, im]`.
    pub coeff: Complex64,
}

/// Holomorphic density of the volume form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Density {
    /// `f = 1`.
    Const,
    /// `f = exp(sum coeffs)`.
    ExpPoly {
        /// Monomials of the exponent.
        coeffs: Vec<Monomial>,
    },
}

impl Density {
    /// `exp(a z_k)` for a single coordinate.
    pub fn exp_linear(n: usize, k: usize, a: Complex64) -> Self {
        let mut powers = vec![0; n];
        powers[k] = 1;
        Density::ExpPoly { coeffs: vec![Monomial { powers, coeff: a }] }
    }

    /// The exponent polynomial `P(z)`.
    pub fn log_value(&self, z: &[Complex64]) -> Complex64 {
        match self {
            Density::Const => Complex64::new(0.0, 0.0),
            Density::ExpPoly { coeffs } => coeffs
                .iter()
                .map(|m| {
                    m.powers
                        .iter()
                        .zip(z)
                        .fold(m.coeff, |acc, (p, zk)| acc * zk.powu(*p))
                })
                .sum(),
        }
    }

    /// `f(z)`.
    pub fn value(&self, z: &[Complex64]) -> Complex64 {
        match self {
            Density::Const => Complex64::new(1.0, 0.0),
            _ => self.log_value(z).exp(),
        }
    }

    /// True for the constant density.
    pub fn is_const(&self) -> bool {
        matches!(self, Density::Const)
    }

    /// Complex gradient of the exponent, `dP/dz_k`.
    pub fn log_gradient(&self, z: &[Complex64]) -> Vec<Complex64> {
        let mut g = vec![Complex64::new(0.0, 0.0); z.len()];
        if let Density::ExpPoly { coeffs } = self {
            for m in coeffs {
                for k in 0..z.len() {
                    let pk = m.powers.get(k).copied().unwrap_or(0);
                    if pk == 0 {
                        continue;
                    }
                    let mut term = m.coeff * pk as f64;
                    for (j, (p, zj)) in m.powers.iter().zip(z).enumerate() {
                        let e = if j == k { p - 1 } else { *p };
                        term *= zj.powu(e);
                    }
                    g[k] += term;
                }
            }
        }
        g
    }
}

/// The forms that [`AmbientStructure::pullback_form`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormKind {
    /// Real part of the holomorphic volume form (degree n).
    ReOmega,
    /// Imaginary part of the holomorphic volume form (degree n).
    ImOmega,
    /// The symplectic form (degree 2).
    Omega,
    /// The Riemannian metric (symmetric, two arguments).
    Metric,
}

/// Direction of a cutoff flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowDirection {
    /// Time +1.
    Forward,
    /// Time -1.
    Inverse,
}

/// Time-1 Hamiltonian flow of `chi(r) * h(pi(z))`, where `pi` and `r` are
/// the base point and fiber distance of the vertical tubular chart of a
/// two-dimensional base Lagrangian, and `chi` is a quintic C2 bump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFlow {
    /// Base Lagrangian carrying the tubular chart.
    pub base_lagrangian: BoundaryLagrangian,
    /// Potential on the base parameters.
    pub potential: Potential,
    /// Fiber radius on which `chi = 1`.
    pub plateau_radius: f64,
    /// Fiber radius beyond which `chi = 0`.
    pub support_radius: f64,
    /// RK4 steps for the unit-time flow.
    #[serde(default = "default_flow_steps")]
    pub steps: usize,
}

fn default_flow_steps() -> usize {
    64
}

/// The C2 cutoff profile: 1 on `[0, a]`, 0 on `[b, inf)`, quintic in between.
/// Returns value and derivative.
pub fn cutoff_profile(r: f64, a: f64, b: f64) -> (f64, f64) {
    if r <= a {
        (1.0, 0.0)
    } else if r >= b {
        (0.0, 0.0)
    } else {
        let w = b - a;
        let s = (r - a) / w;
        let s2 = s * s;
        let smooth = s2 * s * (10.0 - 15.0 * s + 6.0 * s2);
        let dsmooth = 30.0 * s2 * (1.0 - s) * (1.0 - s);
        (1.0 - smooth, -dsmooth / w)
    }
}

impl CutoffFlow {
    /// Builds a flow with the default step count.
    pub fn new(base: BoundaryLagrangian, potential: Potential, plateau: f64, support: f64) -> Self {
        CutoffFlow {
            base_lagrangian: base,
            potential,
            plateau_radius: plateau,
            support_radius: support,
            steps: default_flow_steps(),
        }
    }

    /// Hamiltonian vector field `J grad H` at `z`, so that `i_X omega = -dH`.
    /// Zero outside the chart and outside the support tube.
    pub fn vector_field(&self, z: &C2) -> std::result::Result<C2, ()> {
        let Ok(x) = self.base_lagrangian.vertical_projection(z) else {
            return Err(());
        };
        let Ok(jet) = self.base_lagrangian.jet(x) else {
            return Err(());
        };
        let y = C2::real(z.im()[0], z.im()[1]);
        let yf = C2::real(jet.v.im()[0], jet.v.im()[1]);
        let dy = y - yf;
        let r = dy.norm();
        let (chi, dchi) = cutoff_profile(r, self.plateau_radius, self.support_radius);
        if chi == 0.0 && dchi == 0.0 {
            return Ok(C2::ZERO);
        }
        // Real parameter Jacobians of Re f and Im f (columns are x-derivatives).
        let re = [jet.d[0].re(), jet.d[1].re()];
        let im = [jet.d[0].im(), jet.d[1].im()];
        let (inv, det) = inv2(re);
        if det.abs() < 1e-14 {
            return Err(());
        }
        let (hv, hg, _) = self.potential.eval(x);
        // grad_a of h o (Re f)^{-1} = (D Re f)^{-T} grad_x h.
        let gh = mul_t(inv, hg);
        // Fiber offset derivatives: Y(a) = Im f(pi(a)), DY = D Im f (D Re f)^{-1}.
        let dyv = [dy.re()[0], dy.re()[1]];
        let mut grad_x = [chi * gh[0], chi * gh[1]];
        let mut grad_y = [0.0; 2];
        if dchi != 0.0 && r > 0.0 {
            let unit = [dyv[0] / r, dyv[1] / r];
            let dy_mat = mul(im, inv);
            // d r / d a = -DY^T unit ; d r / d y = unit.
            let dr_da = mul_t(dy_mat, unit);
            grad_x[0] -= dchi * hv * dr_da[0];
            grad_x[1] -= dchi * hv * dr_da[1];
            grad_y = [dchi * hv * unit[0], dchi * hv * unit[1]];
        }
        let grad = C2::from_parts(grad_x, grad_y);
        Ok(grad.j())
    }

    /// Time-`dir` flow of the point, by fixed-step RK4.
    pub fn apply(&self, z: &C2, direction: FlowDirection) -> Result<C2> {
        let sign = match direction {
            FlowDirection::Forward => 1.0,
            FlowDirection::Inverse => -1.0,
        };
        let steps = self.steps.max(1);
        let dt = sign / steps as f64;
        let mut p = *z;
        let field = |q: &C2, started: bool| -> Result<C2> {
            match self.vector_field(q) {
                Ok(v) => Ok(v),
                Err(()) if !started => Ok(C2::ZERO),
                Err(()) => Err(Error::ChartOverflow(format!(
                    "trajectory from {z:?} left the tubular chart"
                ))),
            }
        };
        let inside = self.vector_field(z).is_ok_and(|v| v != C2::ZERO);
        if !inside {
            // Identity outside the support tube and outside the chart.
            return Ok(*z);
        }
        for _ in 0..steps {
            let k1 = field(&p, true)?;
            let k2 = field(&(p + k1 * (0.5 * dt)), true)?;
            let k3 = field(&(p + k2 * (0.5 * dt)), true)?;
            let k4 = field(&(p + k3 * dt), true)?;
            p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        Ok(p)
    }

    /// Real differential of the forward flow at `z` applied to `v`, by
    /// central differences.
    pub fn differential(&self, z: &C2, v: &C2) -> Result<C2> {
        let h = 1e-5 * (1.0 + z.norm()) / v.norm().max(1e-300);
        let fp = self.apply(&(*z + *v * h), FlowDirection::Forward)?;
        let fm = self.apply(&(*z - *v * h), FlowDirection::Forward)?;
        Ok((fp - fm) * (0.5 / h))
    }
}

fn inv2(m: [[f64; 2]; 2]) -> ([[f64; 2]; 2], f64) {
    // m[k] is column k.
    let (a, b, c, d) = (m[0][0], m[1][0], m[0][1], m[1][1]);
    let det = a * d - b * c;
    ([[d / det, -c / det], [-b / det, a / det]], det)
}

fn mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    // Column-major product a * b.
    let mut out = [[0.0; 2]; 2];
    for (k, col) in out.iter_mut().enumerate() {
        for (r, entry) in col.iter_mut().enumerate() {
            *entry = a[0][r] * b[k][0] + a[1][r] * b[k][1];
        }
    }
    out
}

fn mul_t(a: [[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    // a^T v for column-major a.
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Applies a cutoff flow to a point (see [`CutoffFlow::apply`]).
pub fn apply_cutoff_flow(flow: &CutoffFlow, z: &C2, direction: FlowDirection) -> Result<C2> {
    flow.apply(z, direction)
}

/// An oriented Lagrangian plane with its phase.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedLagrangianPlane {
    /// Base point.
    pub basepoint: Vec<Complex64>,
    /// Ordered basis.
    pub basis: Vec<Vec<Complex64>>,
    /// Phase `arg Omega(v_1, ..., v_n)` in `(-pi, pi]`.
    pub phase: f64,
}

impl OrientedLagrangianPlane {
    /// Validates the Lagrangian condition and computes the phase.
    pub fn new(
        ambient: &AmbientStructure,
        basepoint: Vec<Complex64>,
        basis: Vec<Vec<Complex64>>,
        tol_lag: f64,
    ) -> Result<Self> {
        let mut plane = OrientedLagrangianPlane { basepoint, basis, phase: 0.0 };
        plane.phase = ambient.phase_of(&plane, tol_lag)?;
        Ok(plane)
    }

    /// True when the phase lies in `(-pi/2, pi/2)`.
    pub fn is_positive(&self) -> bool {
        self.phase.abs() < FRAC_PI_2
    }
}

/// The ambient Calabi-Yau structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientStructure {
    /// Complex dimension.
    pub n: usize,
    /// Holomorphic density of the volume form.
    pub density: Density,
    /// Rescaling factor `s` of `M_s(z) = q + s z`.
    pub rescale_s: Option<f64>,
    /// Rescaling center `q` (origin when absent).
    #[serde(default)]
    pub rescale_center: Option<Vec<Complex64>>,
    /// Hamiltonian deformation acting by pullback.
    pub deformation: Option<CutoffFlow>,
}

impl AmbientStructure {
    /// Flat C^n with `Omega = dz`.
    pub fn flat(n: usize) -> Self {
        AmbientStructure {
            n,
            density: Density::Const,
            rescale_s: None,
            rescale_center: None,
            deformation: None,
        }
    }

    /// Flat C^n with the given density.
    pub fn with_density(n: usize, density: Density) -> Self {
        AmbientStructure { density, ..Self::flat(n) }
    }

    /// The rescaled structure `s^{-n} M_s^*` of this one about `center`.
    ///
    /// Rescaling an already rescaled structure composes the two maps.
    pub fn rescaled(&self, s: f64, center: &[Complex64]) -> Self {
        let (s0, q0) = self.rescale_parts();
        // M_{s0, q0} o M_{s, center}: z -> q0 + s0 (center + s z).
        let q: Vec<Complex64> = q0.iter().zip(center).map(|(a, b)| a + b * s0).collect();
        AmbientStructure {
            rescale_s: Some(s0 * s),
            rescale_center: Some(q),
            ..self.clone()
        }
    }

    fn rescale_parts(&self) -> (f64, Vec<Complex64>) {
        let s = self.rescale_s.unwrap_or(1.0);
        let q = self
            .rescale_center
            .clone()
            .unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); self.n]);
        (s, q)
    }

    fn check_point(&self, z: &[Complex64]) -> Result<()> {
        if z.len() != self.n {
            return Err(Error::Degree { expected: self.n, got: z.len() });
        }
        if z.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::Domain("non-finite point".into()));
        }
        Ok(())
    }

    /// The point of the original (unscaled, undeformed) ambient that `z`
    /// represents.
    pub fn structure_point(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_point(z)?;
        let (s, q) = self.rescale_parts();
        let w: Vec<Complex64> = z.iter().zip(&q).map(|(zk, qk)| qk + zk * s).collect();
        match &self.deformation {
            None => Ok(w),
            Some(flow) => {
                let c2 = to_c2(&w)?;
                match flow.apply(&c2, FlowDirection::Forward) {
                    Ok(p) => Ok(p.0.to_vec()),
                    Err(_) => Err(Error::Domain("point outside deformation chart".into())),
                }
            }
        }
    }

    /// `rho(z)`.
    pub fn rho_at(&self, z: &[Complex64]) -> Result<f64> {
        if self.density.is_const() && self.deformation.is_none() {
            self.check_point(z)?;
            return Ok(1.0);
        }
        let w = self.structure_point(z)?;
        Ok(self.density.value(&w).norm())
    }

    /// `Omega(v_1, ..., v_n)` at `z`, including rescaling and deformation.
    pub fn holomorphic_volume(&self, z: &[Complex64], frame: &[&[Complex64]]) -> Result<Complex64> {
        self.check_point(z)?;
        if frame.len() != self.n {
            return Err(Error::Degree { expected: self.n, got: frame.len() });
        }
        if frame.iter().any(|v| v.len() != self.n) {
            return Err(Error::Degree { expected: self.n, got: frame[0].len() });
        }
        match &self.deformation {
            None => {
                let w = self.structure_point(z)?;
                Ok(self.density.value(&w) * det_c(frame))
            }
            Some(flow) => {
                let (s, q) = self.rescale_parts();
                let w: Vec<Complex64> = z.iter().zip(&q).map(|(zk, qk)| qk + zk * s).collect();
                let wc = to_c2(&w)?;
                let mapped = flow.apply(&wc, FlowDirection::Forward)?;
                let mut cols = Vec::with_capacity(self.n);
                for v in frame {
                    cols.push(flow.differential(&wc, &to_c2(v)?)?);
                }
                let refs: Vec<&[Complex64]> = cols.iter().map(|c| c.as_slice()).collect();
                Ok(self.density.value(mapped.as_slice()) * det_c(&refs))
            }
        }
    }

    /// Fast path for n = 2: `Omega(a, b)` at `z`.
    #[inline]
    pub fn omega2(&self, z: &C2, a: &C2, b: &C2) -> Complex64 {
        if self.deformation.is_none() {
            let f = match (&self.density, self.rescale_s) {
                (Density::Const, _) => Complex64::new(1.0, 0.0),
                (d, None) => d.value(z.as_slice()),
                (d, Some(_)) => {
                    let (s, q) = self.rescale_parts();
                    d.value(&[q[0] + z[0] * s, q[1] + z[1] * s])
                }
            };
            f * a.det(b)
        } else {
            self.holomorphic_volume(z.as_slice(), &[a.as_slice(), b.as_slice()])
                .unwrap_or(Complex64::new(f64::NAN, f64::NAN))
        }
    }

    /// Density `f` at `z` and its complex gradient in `z` (n = 2, including
    /// rescaling; deformed structures are not supported).
    pub fn density_jet2(&self, z: &C2) -> Result<(Complex64, [Complex64; 2])> {
        if self.deformation.is_some() {
            return Err(Error::Invalid("density gradient of a deformed structure".into()));
        }
        if self.density.is_const() {
            let zero = Complex64::new(0.0, 0.0);
            return Ok((Complex64::new(1.0, 0.0), [zero, zero]));
        }
        let (s, q) = self.rescale_parts();
        let w = [q[0] + z[0] * s, q[1] + z[1] * s];
        let f = self.density.value(&w);
        let g = self.density.log_gradient(&w);
        Ok((f, [f * g[0] * s, f * g[1] * s]))
    }

    /// Fast path for n = 2: `rho(z)`.
    #[inline]
    pub fn rho2(&self, z: &C2) -> f64 {
        self.omega2(z, &C2::real(1.0, 0.0), &C2::real(0.0, 1.0)).norm()
    }

    /// Exact multilinear evaluation of a form on a frame at `z`.
    pub fn pullback_form(&self, z: &[Complex64], frame: &[&[Complex64]], which: FormKind) -> Result<f64> {
        match which {
            FormKind::ReOmega | FormKind::ImOmega => {
                let val = self.holomorphic_volume(z, frame)?;
                Ok(if which == FormKind::ReOmega { val.re } else { val.im })
            }
            FormKind::Omega | FormKind::Metric => {
                if frame.len() != 2 {
                    return Err(Error::Degree { expected: 2, got: frame.len() });
                }
                self.check_point(z)?;
                let (a, b) = self.pushed_pair(z, frame[0], frame[1])?;
                let h: Complex64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
                Ok(if which == FormKind::Omega { h.im } else { h.re })
            }
        }
    }

    fn pushed_pair(
        &self,
        z: &[Complex64],
        a: &[Complex64],
        b: &[Complex64],
    ) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
        if a.len() != self.n || b.len() != self.n {
            return Err(Error::Degree { expected: self.n, got: a.len().min(b.len()) });
        }
        match &self.deformation {
            None => Ok((a.to_vec(), b.to_vec())),
            Some(flow) => {
                let (s, q) = self.rescale_parts();
                let w: Vec<Complex64> = z.iter().zip(&q).map(|(zk, qk)| qk + zk * s).collect();
                let wc = to_c2(&w)?;
                let pa = flow.differential(&wc, &to_c2(a)?)?;
                let pb = flow.differential(&wc, &to_c2(b)?)?;
                Ok((pa.0.to_vec(), pb.0.to_vec()))
            }
        }
    }

    /// Phase of an oriented Lagrangian plane, wrapped to `(-pi, pi]`.
    pub fn phase_of(&self, plane: &OrientedLagrangianPlane, tol_lag: f64) -> Result<f64> {
        let refs: Vec<&[Complex64]> = plane.basis.iter().map(|v| v.as_slice()).collect();
        let residual = lagrangian_residual(&refs);
        if residual > tol_lag {
            return Err(Error::NotLagrangian { residual });
        }
        let val = self.holomorphic_volume(&plane.basepoint, &refs)?;
        if val.norm() == 0.0 {
            return Err(Error::Invalid("degenerate basis".into()));
        }
        Ok(wrap_angle(val.arg()))
    }

    /// True when `|phase| > pi/2 - delta_phase`.
    pub fn near_degenerate(phase: f64, delta_phase: f64) -> bool {
        phase.abs() > FRAC_PI_2 - delta_phase
    }
}

/// Largest `|omega(v_i, v_j)| / (|v_i| |v_j|)` over pairs of a frame.
pub fn lagrangian_residual(frame: &[&[Complex64]]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..frame.len() {
        for j in i + 1..frame.len() {
            let h: Complex64 = frame[i].iter().zip(frame[j]).map(|(a, b)| a.conj() * b).sum();
            let ni: f64 = frame[i].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            let nj: f64 = frame[j].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(h.im.abs() / (ni * nj).max(1e-300));
        }
    }
    worst
}

/// Riemannian volume of a real frame, `sqrt(det Gram)`.
pub fn frame_volume(frame: &[&[Complex64]]) -> f64 {
    let k = frame.len();
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let h: Complex64 = frame[i].iter().zip(frame[j]).map(|(a, b)| a.conj() * b).sum();
            gram[i * k + j] = h.re;
        }
    }
    det_real(gram, k).max(0.0).sqrt()
}

/// Complex determinant of the matrix whose columns are `cols`.
pub fn det_c(cols: &[&[Complex64]]) -> Complex64 {
    let n = cols.len();
    if n == 1 {
        return cols[0][0];
    }
    if n == 2 {
        return cols[0][0] * cols[1][1] - cols[0][1] * cols[1][0];
    }
    let mut a: Vec<Complex64> = Vec::with_capacity(n * n);
    for r in 0..n {
        for col in cols {
            a.push(col[r]);
        }
    }
    let mut det = Complex64::new(1.0, 0.0);
    for c in 0..n {
        let mut piv = c;
        for r in c + 1..n {
            if a[r * n + c].norm() > a[piv * n + c].norm() {
                piv = r;
            }
        }
        if a[piv * n + c].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != c {
            for k in 0..n {
                a.swap(c * n + k, piv * n + k);
            }
            det = -det;
        }
        let p = a[c * n + c];
        det *= p;
        for r in c + 1..n {
            let f = a[r * n + c] / p;
            for k in c..n {
                let v = a[c * n + k];
                a[r * n + k] -= f * v;
            }
        }
    }
    det
}

fn det_real(mut a: Vec<f64>, n: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..n {
        let mut piv = c;
        for r in c + 1..n {
            if a[r * n + c].abs() > a[piv * n + c].abs() {
                piv = r;
            }
        }
        if a[piv * n + c] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for k in 0..n {
                a.swap(c * n + k, piv * n + k);
            }
            det = -det;
        }
        let p = a[c * n + c];
        det *= p;
        for r in c + 1..n {
            let f = a[r * n + c] / p;
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    det
}

fn to_c2(z: &[Complex64]) -> Result<C2> {
    if z.len() != 2 {
        return Err(Error::Domain("cutoff deformations are defined for n = 2".into()));
    }
    Ok(C2([z[0], z[1]]))
}

/// `e^{i a} v` for a real vector `v`.
pub fn rotate(v: &C2, a: f64) -> C2 {
    v.cscale((I * a).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::c;

    #[test]
    fn flat_rho_is_one_and_exp_density_gives_modulus() {
        let flat = AmbientStructure::flat(2);
        assert_eq!(flat.rho_at(&[c(0.3, 0.2), c(-1.0, 4.0)]).unwrap(), 1.0);
        let amb = AmbientStructure::with_density(2, Density::exp_linear(2, 0, c(1.0, 0.0)));
        let r = amb.rho_at(&[c(0.3, 0.7), c(5.0, -2.0)]).unwrap();
        assert!((r - 0.3f64.exp()).abs() < 1e-15);
        let resc = flat.rescaled(0.25, &[c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(resc.rho_at(&[c(1.0, 1.0), c(2.0, 0.0)]).unwrap(), 1.0);
    }

    #[test]
    fn phase_examples() {
        let amb = AmbientStructure::flat(2);
        let o = vec![c(0.0, 0.0); 2];
        let plane = |b: Vec<Vec<Complex64>>| OrientedLagrangianPlane::new(&amb, o.clone(), b, 1e-10);
        let p = plane(vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]]).unwrap();
        assert_eq!(p.phase, 0.0);
        let (al, be) = (0.4, 1.1);
        let p = plane(vec![vec![c(0.0, al).exp(), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, be).exp()]])
            .unwrap();
        assert!((p.phase - (al + be)).abs() < 1e-15);
        let p = plane(vec![vec![c(0.0, 1.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 1.0)]]).unwrap();
        assert!((p.phase - std::f64::consts::PI).abs() < 1e-15);
        assert!(!p.is_positive());
    }

    #[test]
    fn pullback_form_examples() {
        let amb = AmbientStructure::flat(2);
        let z = [c(0.1, 0.2), c(0.3, 0.4)];
        let e1 = [c(1.0, 0.0), c(0.0, 0.0)];
        let ie1 = [c(0.0, 1.0), c(0.0, 0.0)];
        let e2 = [c(0.0, 0.0), c(1.0, 0.0)];
        assert_eq!(amb.pullback_form(&z, &[&e1, &ie1], FormKind::Omega).unwrap(), 1.0);
        assert_eq!(amb.pullback_form(&z, &[&ie1, &e2], FormKind::ReOmega).unwrap(), 0.0);
        assert_eq!(amb.pullback_form(&z, &[&e1, &e2], FormKind::ImOmega).unwrap(), 0.0);
        assert!(matches!(
            amb.pullback_form(&z, &[&e1], FormKind::ReOmega),
            Err(Error::Degree { .. })
        ));
    }

    #[test]
    fn cutoff_profile_is_c1_and_bounded() {
        let (a, b) = (0.2, 0.5);
        for k in 0..100 {
            let r = 0.6 * k as f64 / 100.0;
            let (v, d) = cutoff_profile(r, a, b);
            assert!((0.0..=1.0).contains(&v));
            let h = 1e-6;
            let fd = (cutoff_profile(r + h, a, b).0 - cutoff_profile(r - h, a, b).0) / (2.0 * h);
            assert!((fd - d).abs() < 1e-5);
        }
    }

    #[test]
    fn density_gradient_matches_differences() {
        let d = Density::ExpPoly {
            coeffs: vec![
                Monomial { powers: vec![1, 0], coeff: Complex64::new(0.1, 0.0) },
                Monomial { powers: vec![1, 2], coeff: Complex64::new(0.03, -0.02) },
            ],
        };
        let q = [Complex64::new(0.2, 0.1), Complex64::new(-0.3, 0.4)];
        let amb = AmbientStructure::with_density(2, d).rescaled(0.5, &q);
        let z = C2::new(Complex64::new(0.3, -0.2), Complex64::new(0.1, 0.7));
        let (f, g) = amb.density_jet2(&z).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[k] += Complex64::new(h, 0.0);
            zm[k] -= Complex64::new(h, 0.0);
            let fd = (amb.density_jet2(&zp).unwrap().0 - amb.density_jet2(&zm).unwrap().0) / (2.0 * h);
            assert!((fd - g[k]).norm() < 1e-9);
        }
        let expect = amb.omega2(&z, &C2::real(1.0, 0.0), &C2::real(0.0, 1.0));
        assert!((f - expect).norm() < 1e-15);
    }
}
