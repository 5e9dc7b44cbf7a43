use std::sync::Arc;

use feec_core::elements::{ElementFamily, FamilyTag};
use feec_core::fields::{moments, poly_input, CartesianPoly, MomentLayout};
use feec_core::mesh::{h_patch, structured_mesh, SimplexId};
use feec_core::weights::*;
use rand::SeedableRng;

#[test]
fn double_complex_commutes() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for (dim, fam) in [(2, ElementFamily::new(FamilyTag::Lrt, 2).unwrap()), (3, ElementFamily::new(FamilyTag::Whitney3d, 1).unwrap())] {
        for n in 1..=3 {
            let mesh = Arc::new(structured_mesh(dim, n));
            let aux = auxiliary_complex(&mesh).unwrap();
            let ws = build_all_weights(&mesh).unwrap();
            let sm: Vec<_> = (0..=dim).map(|k| build_smoother(&aux, &ws[k], &fam, k)).collect();
            for k in 0..dim {
                let ar = fam.arity(k);
                let p = CartesianPoly::random(&mut rng, dim, ar, 2);
                let inp = poly_input(&p, k);
                let lk = MomentLayout { dim, arity: ar, degree: fam.moment_degree(k) };
                let lk1 = MomentLayout { dim, arity: fam.arity(k + 1), degree: fam.moment_degree(k + 1) };
                let a = sm[k].apply_cochain(&moments(&mesh, lk, &inp.value, 2));
                let lhs = coboundary(&mesh, k, &a);
                let rhs = sm[k + 1].apply_cochain(&moments(&mesh, lk1, inp.diff.as_ref().unwrap(), 2));
                let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let sc = rhs.iter().map(|a| a.abs()).fold(0.0, f64::max);
                println!("dim {dim} n {n} k {k}: err {err:.3e} scale {sc:.3e}");
                assert!(err < 1e-10 * sc.max(1.0));
            }
        }
    }
}

fn weight_integral(aux: &feec_core::elements::FeComplex, w: &WeightFunction) -> Vec<f64> {
    let mesh = &aux.mesh;
    let mut acc = vec![0.0; mesh.dim()];
    for &c in &w.patch.cells {
        let v = weight_field(aux, w, c).integrate(mesh.cell_geom(c).measure);
        for (a, b) in acc.iter_mut().zip(v) {
            *a += b;
        }
    }
    acc
}

#[test]
fn vertex_weights_are_normalised_indicators() {
    for (dim, n) in [(2, 2), (3, 1)] {
        let mesh = Arc::new(structured_mesh(dim, n));
        let aux = auxiliary_complex(&mesh).unwrap();
        for w in build_weights(&mesh, 0).unwrap() {
            assert!((weight_integral(&aux, &w)[0] - 1.0).abs() < 1e-14);
            let vol = w.patch.measure(&mesh);
            for &c in &w.patch.cells {
                let f = weight_field(&aux, &w, c);
                assert!((f.eval(&vec![0.25; dim])[0] - 1.0 / vol).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn weight_residuals_and_supports() {
    for (dim, n) in [(2, 2), (2, 3), (3, 1), (3, 2)] {
        let mesh = Arc::new(structured_mesh(dim, n));
        let all = build_all_weights(&mesh).unwrap();
        for (k, ws) in all.iter().enumerate() {
            assert_eq!(ws.len(), mesh.num(k));
            for w in ws {
                assert!(w.residual < 1e-11, "dim {dim} n {n} slot {k}: {:e}", w.residual);
                let h = h_patch(&mesh, w.sigma).unwrap();
                assert!(w.patch.cells.iter().all(|c| h.contains_cell(*c)));
                if k > 0 {
                    let m = dim - k;
                    let closure = h.closure(&mesh, m);
                    let flags = h.boundary_flags(&mesh, m);
                    for &(s, _) in &w.cochain {
                        let i = closure.binary_search(&s).expect("weight supported in the h-patch");
                        assert!(!flags[i], "nonzero trace on the patch boundary");
                    }
                }
            }
        }
    }
}

#[test]
fn edge_weights_solve_the_rot_equation() {
    let mesh = Arc::new(structured_mesh(2, 2));
    let aux = auxiliary_complex(&mesh).unwrap();
    let all = build_all_weights(&mesh).unwrap();
    let star_vol: Vec<f64> = all[0].iter().map(|w| w.patch.measure(&mesh)).collect();
    let mut checked = 0;
    for w in &all[1] {
        let vs = mesh.vertices_of(w.sigma).to_vec();
        for &c in &w.patch.cells {
            let g = mesh.cell_geom(c);
            let z = weight_field(&aux, w, c);
            // rot is the adjoint of curl u = (∂y u, −∂x u) for fields with zero trace.
            let rot = feec_core::poly::diff(feec_core::poly::DiffOp::Rot2d, &z, &g).unwrap().eval(&[0.3, 0.3])[0];
            let ind = |v: usize| if mesh.cells_of(SimplexId::new(0, v)).contains(&c) { 1.0 / star_vol[v] } else { 0.0 };
            let rhs = ind(vs[1]) - ind(vs[0]);
            assert!((rot - rhs).abs() < 1e-11 * (1.0 + rhs.abs()), "edge {:?} cell {c}: {rot} vs {rhs}", w.sigma);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn smoother_reproduces_constants_in_the_distinguished_span() {
    for (dim, fam) in [(2, ElementFamily::new(FamilyTag::Hs, 3).unwrap()), (3, ElementFamily::new(FamilyTag::Whitney3d, 1).unwrap())] {
        let mesh = Arc::new(structured_mesh(dim, 2));
        let aux = auxiliary_complex(&mesh).unwrap();
        let ws = build_weights(&mesh, 0).unwrap();
        let m0 = build_smoother(&aux, &ws, &fam, 0);
        let one = CartesianPoly { dim, components: vec![vec![(1.0, vec![0; dim])]] };
        let inp = poly_input(&one, 0);
        let lay = MomentLayout { dim, arity: 1, degree: fam.moment_degree(0) };
        let mom = moments(&mesh, lay, &inp.value, 2);
        assert!(m0.apply_cochain(&mom).iter().all(|c| (c - 1.0).abs() < 1e-13));
        let space = feec_core::elements::assemble_space(mesh.clone(), fam, 0).unwrap();
        let u = m0.apply(&space, &mom);
        for (g, info) in space.dofs.iter().enumerate() {
            if !info.distinguished {
                assert_eq!(u.coeffs[g], 0.0);
            }
        }
    }
}

#[test]
fn three_dimensional_commutation_examples() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mesh = Arc::new(structured_mesh(3, 2));
    let fam = ElementFamily::new(FamilyTag::Whitney3d, 1).unwrap();
    let aux = auxiliary_complex(&mesh).unwrap();
    let ws = build_all_weights(&mesh).unwrap();
    let sm: Vec<_> = (0..=3).map(|k| build_smoother(&aux, &ws[k], &fam, k)).collect();
    for (k, degree) in [(0, 2), (2, 1)] {
        let p = CartesianPoly::random(&mut rng, 3, fam.arity(k), degree);
        let inp = poly_input(&p, k);
        let lk = MomentLayout { dim: 3, arity: fam.arity(k), degree: fam.moment_degree(k) };
        let lk1 = MomentLayout { dim: 3, arity: fam.arity(k + 1), degree: fam.moment_degree(k + 1) };
        let lhs = coboundary(&mesh, k, &sm[k].apply_cochain(&moments(&mesh, lk, &inp.value, 2)));
        let rhs = sm[k + 1].apply_cochain(&moments(&mesh, lk1, inp.diff.as_ref().unwrap(), 2));
        let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-11, "slot {k}: {err:e}");
    }
}
