use std::sync::OnceLock;

use proptest::prelude::*;
use solitonlab::ambient::dot;
use solitonlab::operators::{cutoff_bump, gradient, hamiltonian_field, stability_operator};
use solitonlab::patch::project;
use solitonlab::sampling::{random_unit_vector, stream_rng};
use solitonlab::variation::{
    canonical_potential, commutation_residual, default_cutoff, ibp_residual, jacobi_residuals, random_potential,
    Tolerances,
};
use solitonlab::{Backend, Error, ImmersedPatch, ScalarField, SolitonSpec, Support, WeightedMeasure};

fn cylinder(res: usize) -> SolitonSpec {
    SolitonSpec::grim_reaper_cylinder(2).window(vec![(-1.0, 1.0), (0.0, 1.0)]).resolution(res)
}

fn product(res: usize) -> SolitonSpec {
    SolitonSpec::grim_reaper_product(vec![1.0, 2.0]).window(vec![(-0.7, 0.7); 2]).resolution(res)
}

fn cylinder_128() -> &'static (ImmersedPatch, Vec<f64>) {
    static CELL: OnceLock<(ImmersedPatch, Vec<f64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let spec = cylinder(128);
        (spec.build(Backend::Analytic).unwrap(), spec.translation())
    })
}

fn weighted(patch: &ImmersedPatch, t: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let m = WeightedMeasure::new(patch, t);
    m.integrate(&a.iter().zip(b).map(|(x, y)| dot(x, y)).collect::<Vec<_>>())
}

#[test]
fn constant_normals_and_mean_curvature_are_jacobi_fields() {
    let tol = Tolerances::default();
    for spec in [cylinder(64), product(64)] {
        let patch = spec.build(Backend::Analytic).unwrap();
        let t = spec.translation();
        let r = jacobi_residuals(&patch, &t, &t, &tol).unwrap();
        assert!(r.lh.0 <= 1e-6 && r.drift.0 <= 1e-6, "{r:?}");
        let mut rng = stream_rng(7, 0);
        for _ in 0..5 {
            let y = random_unit_vector(&mut rng, t.len());
            let r = jacobi_residuals(&patch, &t, &y, &tol).unwrap();
            assert!(r.ly_perp.0 <= 1e-6, "{r:?}");
        }
    }
}

#[test]
fn flat_plane_identities_are_trivial() {
    let spec = SolitonSpec::flat_plane(2, vec![1.0, 0.5]).resolution(24);
    let patch = spec.build(Backend::Analytic).unwrap();
    let r = jacobi_residuals(&patch, &spec.translation(), &[0.3, -0.2, 0.9, 0.1], &Tolerances::default()).unwrap();
    assert!(r.sup() <= 1e-10, "{r:?}");
}

#[test]
fn integration_by_parts_with_the_bump() {
    let (patch, t) = cylinder_128();
    let bump = default_cutoff(patch).unwrap();
    let (rel, _) = ibp_residual(patch, t, &bump, &bump).unwrap();
    assert!(rel <= 1e-6, "{rel:e}");

    let mut rng = stream_rng(11, 0);
    for _ in 0..5 {
        let u = random_potential(patch, &mut rng, &bump).unwrap();
        let v = random_potential(patch, &mut rng, &ScalarField::constant(patch, 1.0)).unwrap();
        let (rel, _) = ibp_residual(patch, t, &u, &v).unwrap();
        assert!(rel <= 1e-6, "{rel:e}");
    }
}

#[test]
fn coordinate_functions_cross_check_the_drift() {
    // 𝓛x^A = T^A turns the identity into ∫u T^A e = −∫⟨∇u, ∇x^A⟩ e
    let (patch, t) = cylinder_128();
    let u = default_cutoff(patch).unwrap();
    let m = WeightedMeasure::new(patch, t);
    let gu = gradient(patch, &u).unwrap().values();
    for (axis, &ta) in t.iter().enumerate() {
        let x = ScalarField::ambient_coordinate(patch, axis);
        let gx = gradient(patch, &x).unwrap().values();
        let lhs = m.integrate(&u.values().iter().map(|v| v * ta).collect::<Vec<_>>());
        let rhs = -weighted(patch, t, &gu, &gx);
        let size =
            m.integrate(&gu.iter().zip(&gx).map(|(a, b)| dot(a, a).sqrt() * dot(b, b).sqrt()).collect::<Vec<_>>());
        assert!((lhs - rhs).abs() <= 1e-6 * size.max(1.0), "axis {axis}: {lhs} vs {rhs}");
    }
}

#[test]
fn integration_by_parts_needs_compact_support() {
    let (patch, t) = cylinder_128();
    let one = ScalarField::constant(patch, 1.0);
    assert!(matches!(ibp_residual(patch, t, &one, &one), Err(Error::Hypothesis(_))));
}

#[test]
fn commutation_on_the_cylinder() {
    let spec = cylinder(64);
    let patch = spec.build(Backend::Analytic).unwrap();
    let t = spec.translation();
    let bump = default_cutoff(&patch).unwrap();
    let (sup, _) = commutation_residual(&patch, &t, &canonical_potential(&patch, &bump).unwrap()).unwrap();
    assert!(sup <= 1e-6, "{sup:e}");
}

fn potential(patch: &ImmersedPatch, seed: u64) -> ScalarField {
    let bump = default_cutoff(patch).unwrap();
    random_potential(patch, &mut stream_rng(seed, 0), &bump).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn projection_is_idempotent(seed in any::<u64>()) {
        let (patch, _) = cylinder_128();
        let mut rng = stream_rng(seed, 0);
        let field: Vec<Vec<f64>> = (0..patch.len()).map(|_| random_unit_vector(&mut rng, 4)).collect();
        let (tan, nor) = project(patch, &field).unwrap();
        let (tan2, nor2) = project(patch, &nor).unwrap();
        let (tan3, _) = project(patch, &tan).unwrap();
        for p in (0..patch.len()).step_by(97) {
            for k in 0..4 {
                prop_assert!((tan[p][k] + nor[p][k] - field[p][k]).abs() < 1e-13);
                prop_assert!((nor2[p][k] - nor[p][k]).abs() < 1e-12);
                prop_assert!(tan2[p][k].abs() < 1e-12);
                prop_assert!((tan3[p][k] - tan[p][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hamiltonian_fields_are_normal(seed in any::<u64>()) {
        let (patch, _) = cylinder_128();
        let v = hamiltonian_field(patch, &potential(patch, seed)).unwrap();
        prop_assert!(v.tangential_ratio(patch) <= 1e-12);
    }

    #[test]
    fn integration_by_parts_is_symmetric(a in any::<u64>(), b in any::<u64>()) {
        let (patch, t) = cylinder_128();
        let (u, v) = (potential(patch, a), potential(patch, b));
        let m = WeightedMeasure::new(patch, t);
        let lu = solitonlab::operators::drifted_laplacian(patch, t, &u).unwrap().values();
        let lv = solitonlab::operators::drifted_laplacian(patch, t, &v).unwrap().values();
        let ulv = m.integrate(&u.values().iter().zip(&lv).map(|(x, y)| x * y).collect::<Vec<_>>());
        let vlu = m.integrate(&v.values().iter().zip(&lu).map(|(x, y)| x * y).collect::<Vec<_>>());
        let size = m.integrate(&u.values().iter().zip(&lv).map(|(x, y)| (x * y).abs()).collect::<Vec<_>>());
        prop_assert!((ulv - vlu).abs() <= 1e-6 * size, "{} vs {}", ulv, vlu);
    }

    #[test]
    fn stability_operator_is_symmetric_on_hamiltonian_pairs(a in any::<u64>(), b in any::<u64>()) {
        let (patch, t) = cylinder_128();
        let v = hamiltonian_field(patch, &potential(patch, a)).unwrap();
        let w = hamiltonian_field(patch, &potential(patch, b)).unwrap();
        let lv = stability_operator(patch, t, &v).unwrap().values();
        let lw = stability_operator(patch, t, &w).unwrap().values();
        let lhs = weighted(patch, t, &lv, &w.values());
        let rhs = weighted(patch, t, &v.values(), &lw);
        let size = weighted(patch, t, &lv, &lv).sqrt() * weighted(patch, t, &w.values(), &w.values()).sqrt();
        prop_assert!((lhs - rhs).abs() <= 1e-6 * size, "{} vs {} (size {})", lhs, rhs, size);
    }
}

#[test]
fn bumps_vanish_on_their_margin() {
    let (patch, _) = cylinder_128();
    let bump = cutoff_bump(patch.grid(), 3).unwrap();
    assert_eq!(bump.support(), Support::Compact { margin: 3 });
    for (idx, v) in patch.nodes().iter().zip(bump.values()) {
        if patch.grid().layers_from_face(idx) < 3 {
            assert_eq!(v, 0.0);
        }
    }
}
