//! Library values against references computed independently by
//! `tests/oracle/derive.py` and frozen in `tests/oracle/frozen.json`.

use cyltrans::ambient::{AmbientStructure, CutoffFlow, Density, FlowDirection, OrientedLagrangianPlane};
use cyltrans::elliptic::{fundamental_harmonic_of, CylinderMesh, Discretization};
use cyltrans::geom::C2;
use cyltrans::lagrangian::{BoundaryLagrangian, Potential};
use cyltrans::slc::{special_residual, OrbitCylinder};
use cyltrans::transform::{relative_flux, FamilyParameterization};
use num_complex::Complex64;
use serde_json::Value;

fn frozen() -> Value {
    serde_json::from_str(include_str!("oracle/frozen.json")).expect("frozen oracle parses")
}

fn f(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

fn exp_z1() -> AmbientStructure {
    AmbientStructure::with_density(2, Density::exp_linear(2, 0, Complex64::new(1.0, 0.0)))
}

#[test]
fn density_modulus_matches_the_wedge_ratio() {
    let o = &frozen()["rho_exp_density"];
    let z = [Complex64::new(f(&o["z1"][0]), f(&o["z1"][1])), Complex64::new(0.2, -0.1)];
    let rho = exp_z1().rho_at(&z).unwrap();
    assert!((rho - f(&o["rho"])).abs() < 1e-14, "{rho}");
}

#[test]
fn phases_match_the_determinant() {
    let v = frozen();
    let o = &v["phase_diagonal_frame"];
    let z = vec![Complex64::new(f(&o["z1"][0]), f(&o["z1"][1])), Complex64::new(0.0, 0.0)];
    let (a, b) = (f(&o["alpha"]), f(&o["beta"]));
    let zero = Complex64::new(0.0, 0.0);
    let basis = vec![vec![Complex64::from_polar(1.0, a), zero], vec![zero, Complex64::from_polar(1.0, b)]];
    let p = OrientedLagrangianPlane::new(&exp_z1(), z, basis, 1e-10).unwrap();
    assert!((p.phase - f(&o["phase"])).abs() < 1e-13, "{}", p.phase);

    let o = &v["phase_nonpositive_frame"];
    let e = Complex64::from_polar(1.0, f(&o["angle"]));
    let basis = vec![vec![e, zero], vec![zero, e]];
    let p = OrientedLagrangianPlane::new(&AmbientStructure::flat(2), vec![zero, zero], basis, 1e-10).unwrap();
    assert!((p.phase - f(&o["phase"])).abs() < 1e-13);
    assert!(!p.is_positive());
}

#[test]
fn weighted_segment_harmonic_matches_the_ode_solution() {
    let o = &frozen()["weighted_segment_sigma"];
    let k = o["k"].as_u64().unwrap() as usize;
    let amb = AmbientStructure::with_density(1, Density::exp_linear(1, 0, Complex64::new(1.0, 0.0)));
    let mesh = CylinderMesh::segment(amb, k, Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)).unwrap();
    let sigma = fundamental_harmonic_of(&mesh, Discretization::Bilinear).unwrap();
    for (l, want) in o["sigma"].as_array().unwrap().iter().enumerate() {
        assert!((sigma.values[l] - f(want)).abs() < 1e-12, "node {l}: {} vs {}", sigma.values[l], f(want));
    }
}

#[test]
fn cutoff_flow_on_the_plateau_matches_a_fine_integrator() {
    let o = &frozen()["cutoff_flow_plateau"];
    let a = [[f(&o["a"][0][0]), f(&o["a"][0][1])], [f(&o["a"][1][0]), f(&o["a"][1][1])]];
    let flow = CutoffFlow::new(BoundaryLagrangian::real_plane(), Potential::quadratic(a), 1.0, 2.0);
    let pt = |v: &Value| C2::new(Complex64::new(f(&v[0][0]), f(&v[0][1])), Complex64::new(f(&v[1][0]), f(&v[1][1])));
    let start = pt(&o["start"]);
    let end = flow.apply(&start, FlowDirection::Forward).unwrap();
    assert!((end - pt(&o["end"])).norm() < 1e-9, "{end:?}");
    let back = flow.apply(&end, FlowDirection::Inverse).unwrap();
    assert!((back - start).norm() < 1e-9);
}

#[test]
fn orbit_boundary_parameters_match() {
    let o = &frozen()["orbit_boundary_parameters"];
    let c = OrbitCylinder::between(f(&o["a"]), f(&o["alpha"][0]), f(&o["alpha"][1])).unwrap();
    assert!((c.s0 - f(&o["s"][0])).abs() < 1e-14);
    assert!((c.s1 - f(&o["s"][1])).abs() < 1e-14);
}

#[test]
fn segment_family_strip_matches_quadrature() {
    let o = &frozen()["segment_strip"];
    let b = f(&o["b"]);
    let s: Vec<f64> = (0..=8).map(|i| b * i as f64 / 8.0).collect();
    let members = s
        .iter()
        .map(|&x| CylinderMesh::segment(AmbientStructure::flat(1), 8, Complex64::new(x, 0.0), Complex64::new(x, 1.0 + x)))
        .collect::<Result<Vec<_>, _>>()
        .unwrap();
    let r = relative_flux(&FamilyParameterization::new(members, s).unwrap(), 0.0, b).unwrap();
    assert!((r.strip_integral - f(&o["strip"])).abs() < 1e-10, "{}", r.strip_integral);
}

#[test]
fn tilted_segment_residual_matches_the_pullback() {
    let o = &frozen()["tilted_segment_residual"];
    let end = Complex64::new(f(&o["end"][0]), f(&o["end"][1]));
    let mesh = CylinderMesh::segment(AmbientStructure::flat(1), 4, Complex64::new(0.0, 0.0), end).unwrap();
    let r = special_residual(&mesh.ambient, &mesh).unwrap();
    for v in &r.values {
        assert!((v - f(&o["value"])).abs() < 1e-13, "{v}");
    }
}

#[test]
fn annulus_harmonic_matches_separation_of_variables() {
    let o = &frozen()["annulus_sigma"];
    let (m, k) = (64, 32);
    let mesh = CylinderMesh::annulus(m, k, f(&o["r"][0]), f(&o["r"][1])).unwrap();
    let sigma = fundamental_harmonic_of(&mesh, Discretization::Bilinear).unwrap();
    for s in o["samples"].as_array().unwrap() {
        let l = ((f(&s[0]) - 1.0) * k as f64).round() as usize;
        for i in 0..m {
            assert!((sigma.values[l * m + i] - f(&s[1])).abs() < 2e-3);
        }
    }
}
