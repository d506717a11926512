//! Property tests of the invariants each module promises.

use cyltrans::ambient::{frame_volume, AmbientStructure, CutoffFlow, Density, FlowDirection, OrientedLagrangianPlane};
use cyltrans::elliptic::{
    assemble, fundamental_harmonic, solve_dirichlet, BoundaryValues, CylinderMesh, Discretization, ScalarField,
};
use cyltrans::geom::{wrap_angle, C2};
use cyltrans::lagrangian::{perturb_graph, BoundaryLagrangian, Potential};
use cyltrans::transform::{
    disc_fixture, forward_transform, relative_flux, FamilyParameterization, GeodesicPath,
};
use cyltrans::tolerances::Tolerances;
use num_complex::Complex64;
use proptest::prelude::*;
use std::sync::OnceLock;

fn cplx() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

/// Orientation-preserving real 2x2 matrices with determinant at least 0.2.
fn gl_plus() -> impl Strategy<Value = [[f64; 2]; 2]> {
    [[-2.0..2.0f64, -2.0..2.0f64], [-2.0..2.0f64, -2.0..2.0f64]]
        .prop_filter("det >= 0.2", |m| m[0][0] * m[1][1] - m[0][1] * m[1][0] >= 0.2)
}

/// A unitary frame from an angle pair and a Hermitian mixing angle.
fn unitary() -> impl Strategy<Value = [[Complex64; 2]; 2]> {
    (0.0..6.3f64, 0.0..6.3f64, 0.0..1.6f64, 0.0..6.3f64).prop_map(|(a, b, t, p)| {
        let (c, s) = (t.cos(), t.sin());
        let e = |x: f64| Complex64::from_polar(1.0, x);
        [[e(a) * c, e(a + p) * s], [-e(b - p) * s, e(b) * c]]
    })
}

fn frame(u: &[[Complex64; 2]; 2], a: &[[f64; 2]; 2]) -> Vec<Vec<Complex64>> {
    (0..2).map(|j| (0..2).map(|r| u[0][r] * a[0][j] + u[1][r] * a[1][j]).collect()).collect()
}

fn density() -> AmbientStructure {
    AmbientStructure::with_density(2, Density::exp_linear(2, 0, Complex64::new(0.1, 0.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flat_density_is_exactly_one(z0 in cplx(), z1 in cplx()) {
        prop_assert_eq!(AmbientStructure::flat(2).rho_at(&[z0, z1]).unwrap(), 1.0);
    }

    #[test]
    fn volume_form_modulus_is_rho_times_volume(z0 in cplx(), z1 in cplx(), u in unitary(), a in gl_plus()) {
        let f = frame(&u, &a);
        let refs: Vec<&[Complex64]> = f.iter().map(|v| v.as_slice()).collect();
        let amb = density();
        let om = amb.holomorphic_volume(&[z0, z1], &refs).unwrap();
        let rv = amb.rho_at(&[z0, z1]).unwrap() * frame_volume(&refs);
        prop_assert!((om.norm() - rv).abs() <= 1e-12 * rv);
    }

    #[test]
    fn phase_is_invariant_under_orientation_preserving_changes(
        z0 in cplx(), u in unitary(), a in gl_plus(), p in gl_plus()
    ) {
        let f = frame(&u, &a);
        let g: Vec<Vec<Complex64>> =
            (0..2).map(|j| (0..2).map(|r| f[0][r] * p[0][j] + f[1][r] * p[1][j]).collect()).collect();
        let z = vec![z0, Complex64::new(0.3, -0.2)];
        let pa = OrientedLagrangianPlane::new(&density(), z.clone(), f, 1e-8).unwrap();
        let pb = OrientedLagrangianPlane::new(&density(), z, g, 1e-8).unwrap();
        prop_assert!(wrap_angle(pa.phase - pb.phase).abs() < 1e-12);
    }

    #[test]
    fn cutoff_flow_preserves_omega_on_the_plateau(
        x in [-0.5..0.5f64, -0.5..0.5f64], y in [-0.3..0.3f64, -0.3..0.3f64],
        v in [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64],
        w in [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64],
    ) {
        let flow = CutoffFlow::new(BoundaryLagrangian::real_plane(), Potential::harmonic_cubic(0.3), 1.0, 2.0);
        let z = C2::from_parts(x, y);
        let (a, b) = (C2::from_real4(v), C2::from_real4(w));
        let da = flow.differential(&z, &a).unwrap();
        let db = flow.differential(&z, &b).unwrap();
        prop_assert!((da.omega(&db) - a.omega(&b)).abs() < 10.0 * Tolerances::default().tol_integrator);
        let there = flow.apply(&z, FlowDirection::Forward).unwrap();
        prop_assert!((flow.apply(&there, FlowDirection::Inverse).unwrap() - z).norm() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn graph_perturbation_is_linear_at_zero(c in [-1.0..1.0f64, -1.0..1.0f64], amp in 0.05..0.2f64) {
        let base = BoundaryLagrangian::rotated_plane(0.2);
        let h = Potential::Bump { amplitude: amp, center: c, radius: 0.8 };
        let params = base.sample_params(32);
        let dist = |s: f64| -> f64 {
            let g = perturb_graph(&base, &h.scaled(s), 32).unwrap();
            params.iter().fold(0.0, |m, x| m.max((g.first(*x).unwrap().0 - base.first(*x).unwrap().0).norm()))
        };
        let d: Vec<f64> = (0..4).map(|k| dist(0.5f64.powi(k))).collect();
        prop_assume!(d[0] > 1e-8);
        for w in d.windows(2) {
            prop_assert!((w[1] / w[0] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn stiffness_is_self_adjoint(u in prop::collection::vec(-1.0..1.0f64, 16 * 9), v in prop::collection::vec(-1.0..1.0f64, 16 * 9)) {
        let st = assemble(&CylinderMesh::annulus(16, 8, 1.0, 2.0).unwrap(), Discretization::Bilinear).unwrap();
        let au = st.a.matvec(&u);
        let av = st.a.matvec(&v);
        let (uav, vau): (f64, f64) = (u.iter().zip(&av).map(|(a, b)| a * b).sum(), v.iter().zip(&au).map(|(a, b)| a * b).sum());
        prop_assert!((uav - vau).abs() <= 1e-13 * (1.0 + uav.abs()));
    }

    #[test]
    fn dirichlet_solutions_obey_the_maximum_principle(
        c0 in prop::collection::vec(-1.0..1.0f64, 16), c1 in prop::collection::vec(-1.0..1.0f64, 16)
    ) {
        let mesh = CylinderMesh::annulus(16, 8, 1.0, 2.0).unwrap();
        let st = assemble(&mesh, Discretization::Bilinear).unwrap();
        let rhs = ScalarField::free(Discretization::Bilinear, vec![0.0; st.layout.len()]);
        let (u, _) = solve_dirichlet(&st, &rhs, &BoundaryValues { c0: c0.clone(), c1: c1.clone() }).unwrap();
        let lo = c0.iter().chain(&c1).cloned().fold(f64::INFINITY, f64::min);
        let hi = c0.iter().chain(&c1).cloned().fold(f64::NEG_INFINITY, f64::max);
        for x in &u.values {
            prop_assert!(*x >= lo - 1e-12 && *x <= hi + 1e-12);
        }
    }

    #[test]
    fn fundamental_harmonic_has_exact_boundary_values(r1 in 1.2..3.0f64, m in 3usize..6) {
        let mesh = CylinderMesh::annulus(4 * m, 6, 1.0, r1).unwrap();
        let st = assemble(&mesh, Discretization::Bilinear).unwrap();
        let s = fundamental_harmonic(&st).unwrap();
        for i in st.c0() {
            prop_assert_eq!(s.values[i], 0.0);
        }
        for i in st.c1() {
            prop_assert_eq!(s.values[i], 1.0);
        }
    }

    #[test]
    fn segment_flux_is_additive_and_follows_the_area_law(b in 0.2..1.5f64, split in 1usize..8) {
        let s: Vec<f64> = (0..=8).map(|i| b * i as f64 / 8.0).collect();
        let members = s
            .iter()
            .map(|&x| CylinderMesh::segment(AmbientStructure::flat(1), 8, Complex64::new(x, 0.0), Complex64::new(x, 1.0 + x)))
            .collect::<Result<Vec<_>, _>>()
            .unwrap();
        let fam = FamilyParameterization::new(members, s.clone()).unwrap();
        let whole = relative_flux(&fam, 0.0, b).unwrap();
        let parts = relative_flux(&fam, 0.0, s[split]).unwrap().strip_integral
            + relative_flux(&fam, s[split], b).unwrap().strip_integral;
        prop_assert!((whole.strip_integral + b + b * b / 2.0).abs() < 1e-10);
        prop_assert!((parts - whole.strip_integral).abs() < 1e-12);
        prop_assert!(whole.mismatch.abs() < 1e-12);
    }
}

fn disc() -> &'static GeodesicPath {
    static PATH: OnceLock<GeodesicPath> = OnceLock::new();
    PATH.get_or_init(|| disc_fixture(32, 16, 16).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn forward_flux_equals_the_level_gap(lo in 0.03..0.09f64, gap in 0.02..0.08f64) {
        let levels: Vec<f64> = (0..5).map(|i| lo + gap * i as f64 / 4.0).collect();
        let fam = forward_transform(disc(), &levels, &Tolerances::default()).unwrap();
        let members: Vec<CylinderMesh> = fam.into_iter().map(|c| c.unwrap().isl.mesh).collect();
        let p = FamilyParameterization::new(members, levels.clone()).unwrap();
        let r = relative_flux(&p, levels[0], levels[4]).unwrap();
        prop_assert!((r.boundary_integral - gap).abs() < 1e-3);
        prop_assert!(r.mismatch.abs() < 1e-6);
    }
}
