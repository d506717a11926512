//! Central record of every named tolerance.
//!
//! Each field has a default matching the documented behaviour of the
//! operation that consumes it. Every field can be overridden from a run
//! configuration.

use serde::{Deserialize, Serialize};

/// Named tolerances used across modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Omega-pullback bound for analytic boundary Lagrangians.
    pub tol_lag: f64,
    /// Omega-pullback bound for graph-kind boundary Lagrangians.
    pub tol_lag_graph: f64,
    /// Omega-pullback bound per mesh face, relative to the face area scale.
    pub tol_lag_mesh: f64,
    /// Distance of boundary nodes to their boundary Lagrangian.
    pub tol_bc: f64,
    /// Smallest principal angle for a transverse intersection.
    pub tol_transverse: f64,
    /// Margin below pi/2 at which positivity is reported as near-degenerate.
    pub delta_phase: f64,
    /// Relative gradient threshold for critical points of a field.
    pub tol_crit: f64,
    /// Sup bound of the special residual on an accepted cylinder.
    pub tol_isl: f64,
    /// Algebraic Newton residual target.
    pub tol_newton: f64,
    /// Minimum Euler-tangency angle (radians).
    pub tol_euler: f64,
    /// Minimum cone-Hessian action.
    pub tol_hess: f64,
    /// Compatibility of a harmonized family, sigma(Phi(p, t)) = t.
    pub tol_compat: f64,
    /// Relative singular value threshold in kernel reports.
    pub tol_kernel: f64,
    /// Bound on horizontality residual of a geodesic.
    pub tol_horiz: f64,
    /// Bound on the Hamiltonian residual of a geodesic.
    pub tol_geo: f64,
    /// Integrator tolerance used to scale flow checks.
    pub tol_integrator: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_lag: 1e-10,
            tol_lag_graph: 1e-8,
            tol_lag_mesh: 1e-6,
            tol_bc: 1e-9,
            tol_transverse: 1e-6,
            delta_phase: 0.05,
            tol_crit: 1e-6,
            tol_isl: 1e-9,
            tol_newton: 1e-11,
            tol_euler: 1e-3,
            tol_hess: 1e-3,
            tol_compat: 1e-6,
            tol_kernel: 1e-10,
            tol_horiz: 1e-3,
            tol_geo: 1e-3,
            tol_integrator: 1e-9,
        }
    }
}

impl Tolerances {
    /// Names and values of all fields, in declaration order.
    pub fn entries(&self) -> [(&'static str, f64); 16] {
        [
            ("tol_lag", self.tol_lag),
            ("tol_lag_graph", self.tol_lag_graph),
            ("tol_lag_mesh", self.tol_lag_mesh),
            ("tol_bc", self.tol_bc),
            ("tol_transverse", self.tol_transverse),
            ("delta_phase", self.delta_phase),
            ("tol_crit", self.tol_crit),
            ("tol_isl", self.tol_isl),
            ("tol_newton", self.tol_newton),
            ("tol_euler", self.tol_euler),
            ("tol_hess", self.tol_hess),
            ("tol_compat", self.tol_compat),
            ("tol_kernel", self.tol_kernel),
            ("tol_horiz", self.tol_horiz),
            ("tol_geo", self.tol_geo),
            ("tol_integrator", self.tol_integrator),
        ]
    }

    /// True when every tolerance is finite and strictly positive.
    pub fn all_positive(&self) -> bool {
        self.entries().iter().all(|(_, v)| v.is_finite() && *v > 0.0)
    }
}
