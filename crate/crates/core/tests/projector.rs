use std::sync::Arc;

use feec_core::elements::{ElementFamily, FamilyTag};
use feec_core::fields::{poly_input, CartesianPoly, FieldSource, InputField};
use feec_core::mesh::{structured_mesh, SimplexId};
use feec_core::poly::BaryPoly;
use feec_core::projector::{locality_radius, CommutingProjector, InputMoments, ProjectorConfig};
use feec_core::verify::{check_commutation, check_locality, check_projection, Tolerances};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn projector(tag: FamilyTag, k: usize, dim: usize, n: usize) -> CommutingProjector {
    let mesh = Arc::new(structured_mesh(dim, n));
    CommutingProjector::build(mesh, ElementFamily::new(tag, k).unwrap(), ProjectorConfig::default()).unwrap()
}

fn constant(dim: usize, arity: usize, values: &[f64]) -> CartesianPoly {
    CartesianPoly { dim, components: (0..arity).map(|c| vec![(values[c], vec![0; dim])]).collect() }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn projection_and_commutation() {
    let tol = Tolerances::default();
    for (tag, k, dim, n) in [(FamilyTag::Lrt, 2, 2, 2), (FamilyTag::Hs, 3, 2, 2), (FamilyTag::Whitney3d, 1, 3, 1)] {
        let p = projector(tag, k, dim, n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rec = check_projection(&p, 10, &mut rng, &tol);
        assert!(rec.passed(), "{}", rec.data);
        let rec = check_commutation(&p, 3, &mut rng, &tol).unwrap();
        assert!(rec.passed(), "{}", rec.data);
    }
}

#[test]
fn constants_are_reproduced() {
    for (tag, k, dim) in [(FamilyTag::Lrt, 2, 2), (FamilyTag::Hs, 3, 2), (FamilyTag::Whitney3d, 1, 3)] {
        let p = projector(tag, k, dim, 2);
        let sp = &p.cx.spaces[0];
        let out = p.project0(&poly_input(&constant(dim, 1, &[1.7]), 0)).unwrap();
        let want = sp.interpolate(|_, _| BaryPoly::constant(dim, 1.7));
        assert!(max_diff(&out.coeffs, &want.coeffs) < 1e-12);
    }
}

#[test]
fn quadratic_in_space_is_reproduced() {
    let p = projector(FamilyTag::Lrt, 2, 2, 2);
    let x2 = CartesianPoly { dim: 2, components: vec![vec![(1.0, vec![2, 0])]] };
    let out = p.project0(&poly_input(&x2, 0)).unwrap();
    let want = p.cx.spaces[0].interpolate(|_, g| x2.on_cell(g));
    assert!(max_diff(&out.coeffs, &want.coeffs) < 1e-11);
}

#[test]
fn whitney_constant_field_has_exact_edge_integrals() {
    let p = projector(FamilyTag::Whitney3d, 1, 3, 2);
    let xi = [0.3, -1.2, 0.7];
    let out = p.project1(&poly_input(&constant(3, 3, &xi), 1)).unwrap();
    let mesh = &p.cx.mesh;
    for e in 0..mesh.num(1) {
        let g = mesh.geom(SimplexId::new(1, e));
        let t = g.tangent();
        let want = (xi[0] * t[0] + xi[1] * t[1] + xi[2] * t[2]) * g.measure;
        assert!((out.coeffs[e] - want).abs() < 1e-12, "edge {e}: {} vs {want}", out.coeffs[e]);
    }
}

#[test]
fn top_slot_constants() {
    for (tag, k, dim) in [(FamilyTag::Lbdm, 2, 2), (FamilyTag::Afn, 5, 2), (FamilyTag::Whitney3d, 1, 3)] {
        let p = projector(tag, k, dim, 2);
        let out = p.project(dim, &poly_input(&constant(dim, 1, &[1.0]), dim)).unwrap();
        let sp = &p.cx.spaces[dim];
        let mut total = 0.0;
        for c in 0..p.cx.mesh.num_cells() {
            let g = p.cx.mesh.cell_geom(c);
            let q = sp.cell_poly(c, &out.coeffs);
            assert!((q.eval(&vec![0.2; dim])[0] - 1.0).abs() < 1e-11);
            total += q.integrate(g.measure)[0];
        }
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn commutation_in_space_and_smooth() {
    let p = projector(FamilyTag::Lrt, 3, 2, 2);
    let x3y = CartesianPoly { dim: 2, components: vec![vec![(1.0, vec![3, 1])]] };
    assert!(p.commutation_residual(0, &poly_input(&x3y, 0)).unwrap() < 1e-9);

    let mesh = Arc::new(structured_mesh(2, 2));
    let fam = ElementFamily::new(FamilyTag::Hs, 3).unwrap();
    let p = CommutingProjector::build(mesh, fam, ProjectorConfig { quad_bump: 6 }).unwrap();
    let u = InputField {
        arity: 1,
        value: FieldSource::Analytic { f: Arc::new(|x| vec![(x[0] + 0.5 * x[1]).exp()]), degree_hint: 6 },
        diff: Some(FieldSource::Analytic {
            f: Arc::new(|x| {
                let e = (x[0] + 0.5 * x[1]).exp();
                vec![0.5 * e, -e]
            }),
            degree_hint: 6,
        }),
    };
    let r = p.commutation_residual(0, &u).unwrap();
    assert!(r < 1e-8, "{r:e}");
}

#[test]
fn simplified_correction_matches_harmonic_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (tag, k, dim, n) in [(FamilyTag::Lrt, 3, 2, 2), (FamilyTag::Hs, 4, 2, 2), (FamilyTag::Whitney3d, 1, 3, 2)] {
        let p = projector(tag, k, dim, n);
        let fam = p.cx.family;
        for slot in 0..dim {
            let poly = CartesianPoly::random(&mut rng, dim, fam.arity(slot), fam.k + 2);
            let mo = p.input_moments(slot, &poly_input(&poly, slot)).unwrap();
            let full = p.project_moments(slot, &mo).coeffs;
            let hat = p.project_hat(slot, &mo.value).coeffs;
            let sp = &p.cx.spaces[slot];
            let scale = full.iter().fold(1.0f64, |a, b| a.max(b.abs()));
            let mut checked = 0;
            for m in 0..=dim {
                for s in 0..p.cx.mesh.num(m) {
                    let sigma = SimplexId::new(m, s);
                    if sp.dofs_on(sigma).is_empty() {
                        continue;
                    }
                    for (g, correction) in p.harmonic_form_correction(slot, sigma, &mo).unwrap() {
                        let got = full[g] - hat[g];
                        assert!((got - correction).abs() < 1e-9 * scale, "{} slot {slot} dof {g}: {got:e} vs {correction:e}", fam.label());
                        checked += 1;
                    }
                }
            }
            assert_eq!(checked, sp.dim());
        }
    }
}

#[test]
fn locality_radii() {
    assert_eq!((0..3).map(|k| locality_radius(2, k)).collect::<Vec<_>>(), vec![1, 2, 2]);
    assert_eq!((0..4).map(|k| locality_radius(3, k)).collect::<Vec<_>>(), vec![1, 2, 3, 3]);
    let p = projector(FamilyTag::Lrt, 2, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    assert!(check_locality(&p, &mut rng).passed());
}

#[test]
fn projection_of_zero_differential_input() {
    let p = projector(FamilyTag::Lbdm, 2, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sp = &p.cx.spaces[2];
    let u: Vec<f64> = (0..sp.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let out = p.project_moments(2, &InputMoments { value: p.fe_moments(2, &u), diff: None });
    assert!(max_diff(&out.coeffs, &u) < 1e-10);
}

mod invariants {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use std::sync::OnceLock;

    fn shared() -> &'static CommutingProjector {
        static P: OnceLock<CommutingProjector> = OnceLock::new();
        P.get_or_init(|| projector(FamilyTag::Lbdm, 3, 2, 2))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn projects_and_commutes(seed in 0u64..100_000, slot in 0usize..3, degree in 1usize..5) {
            let p = shared();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sp = &p.cx.spaces[slot];
            let u: Vec<f64> = (0..sp.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let out = p.project_moments(slot, &p.fe_input_moments(slot, &u)).coeffs;
            let nrm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let err = out.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prop_assert!(err < 1e-9 * nrm, "slot {slot}: {err:e}");
            if slot < 2 {
                let poly = CartesianPoly::random(&mut rng, 2, p.cx.family.arity(slot), degree);
                let r = p.commutation_residual(slot, &poly_input(&poly, slot)).unwrap();
                prop_assert!(r < 1e-9, "slot {slot} degree {degree}: {r:e}");
            }
        }
    }
}
