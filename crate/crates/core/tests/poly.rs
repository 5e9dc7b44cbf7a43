use feec_core::mesh::SimplexGeom;
use feec_core::poly::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fact(n: u32) -> f64 {
    (1..=n).fold(1.0, |a, i| a * i as f64)
}

// ∫_T λ^α = d! |T| ∏ α_i! / (|α| + d)!
fn bary_integral(d: usize, alpha: &[u32], measure: f64) -> f64 {
    let s: u32 = alpha.iter().sum();
    fact(d as u32) * measure * alpha.iter().map(|&a| fact(a)).product::<f64>() / fact(s + d as u32)
}

fn triangle() -> SimplexGeom {
    SimplexGeom::new(2, vec![[0.2, -0.1, 0.0], [1.3, 0.4, 0.0], [0.1, 0.9, 0.0]])
}

fn tetrahedron() -> SimplexGeom {
    SimplexGeom::new(3, vec![[0.0, 0.0, 0.0], [1.2, 0.1, 0.0], [0.3, 0.8, 0.1], [0.2, 0.3, 1.1]])
}

fn reference_triangle() -> SimplexGeom {
    SimplexGeom::new(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
}

fn random_poly(rng: &mut ChaCha8Rng, d: usize, degree: usize, arity: usize) -> BaryPoly {
    let mut p = BaryPoly::zeros(d, degree, arity);
    for c in &mut p.coeffs {
        *c = rng.gen_range(-1.0..1.0);
    }
    p
}

fn assert_zero(p: &BaryPoly, tol: f64) {
    assert!(p.max_abs() < tol, "max coefficient {:e}", p.max_abs());
}

#[test]
fn triangle_integrals() {
    let t = triangle();
    let l0 = BaryPoly::bary(2, 0).integrate(t.measure)[0];
    assert!((l0 - t.measure / 3.0).abs() < 1e-15);
    let b = BaryPoly::bary_monomial(2, &[1, 1, 1]).integrate(t.measure)[0];
    assert!((b - t.measure / 60.0).abs() < 1e-15);
}

#[test]
fn tetrahedron_bubble_integral() {
    let k = tetrahedron();
    let exact = k.measure / 840.0;
    let p = BaryPoly::bary_monomial(3, &[1, 1, 1, 1]);
    assert!((p.integrate(k.measure)[0] - exact).abs() < 1e-15);
    assert!((bary_integral(3, &[1, 1, 1, 1], k.measure) - exact).abs() < 1e-15);

    // Monte-Carlo sanity check of the closed form with uniform barycentrics.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let mut e: Vec<f64> = (0..4).map(|_| -rng.gen::<f64>().ln()).collect();
        let s: f64 = e.iter().sum();
        e.iter_mut().for_each(|x| *x /= s);
        acc += e.iter().product::<f64>();
    }
    let mc = k.measure * acc / n as f64;
    assert!((mc - exact).abs() < 0.02 * exact, "{mc} vs {exact}");
}

#[test]
fn quadrature_rejects_low_degree() {
    let p = BaryPoly::bary_monomial(2, &[2, 1, 0]);
    let rule = QuadratureRule::new(2, 2);
    assert!(matches!(integrate(&p, &triangle(), Some(&rule)), Err(PolyError::RuleDegree { .. })));
    let rule = QuadratureRule::new(2, 3);
    let v = integrate(&p, &triangle(), Some(&rule)).unwrap()[0];
    assert!((v - bary_integral(2, &[2, 1, 0], triangle().measure)).abs() < 1e-14);
}

#[test]
fn gradient_of_barycentric() {
    let g = diff(DiffOp::Grad, &BaryPoly::bary(2, 0), &reference_triangle()).unwrap();
    let v = g.eval(&[0.3, 0.2]);
    assert!((v[0] + 1.0).abs() < 1e-15 && (v[1] + 1.0).abs() < 1e-15);
    assert!(matches!(diff(DiffOp::Div2d, &BaryPoly::bary(2, 0), &triangle()), Err(PolyError::Arity { .. })));
}

#[test]
fn trace_examples() {
    let e01 = [0, 1];
    assert_zero(&BaryPoly::bary(2, 2).trace(&e01).unwrap(), 1e-15);
    let t = BaryPoly::bary(2, 0).trace(&e01).unwrap();
    let l0 = BaryPoly::bary(1, 0);
    assert_zero(&t.sub(&l0), 1e-15);
    let bubble = BaryPoly::bary_monomial(2, &[1, 1, 1]);
    for e in [[0, 1], [0, 2], [1, 2]] {
        assert_zero(&bubble.trace(&e).unwrap(), 1e-15);
    }
    assert!(BaryPoly::bary(2, 0).trace(&[1, 0]).is_err());
}

#[test]
fn tangential_part_of_normal_vanishes() {
    let face = SimplexGeom::new(3, vec![[0.1, 0.0, 0.2], [1.0, 0.3, 0.1], [0.2, 0.9, 0.7]]);
    let (_, _, n) = face.face_frame();
    let parts: Vec<BaryPoly> = n.iter().map(|&c| BaryPoly::constant(2, c)).collect();
    let e = surface_op(SurfaceOp::TangentialPart, &face, &BaryPoly::from_components(&parts)).unwrap();
    assert_zero(&e, 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadrature_matches_factorial_formula(d in 1usize..=3, a in prop::collection::vec(0u32..4, 4)) {
        let alpha = &a[..=d];
        let deg: u32 = alpha.iter().sum();
        let rule = QuadratureRule::new(d, deg as usize);
        let wsum: f64 = rule.weights.iter().sum();
        prop_assert!((wsum - 1.0 / fact(d as u32)).abs() < 1e-14);
        let q: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(b, w)| w * b.iter().zip(alpha).map(|(x, &e)| x.powi(e as i32)).product::<f64>())
            .sum();
        let exact = bary_integral(d, alpha, 1.0 / fact(d as u32));
        prop_assert!((q - exact).abs() < 1e-14 * exact.max(1e-3), "{q} vs {exact}");
        let p = BaryPoly::bary_monomial(d, alpha);
        prop_assert!((p.integrate(1.0 / fact(d as u32))[0] - exact).abs() < 1e-15);
    }

    #[test]
    fn curl_div_2d(seed in 0u64..1000, degree in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_poly(&mut rng, 2, degree, 1);
        let t = triangle();
        let c = diff(DiffOp::Curl2d, &p, &t).unwrap();
        assert_zero(&diff(DiffOp::Div2d, &c, &t).unwrap(), 1e-12);
        let g = diff(DiffOp::Grad, &p, &t).unwrap();
        assert_zero(&diff(DiffOp::Rot2d, &g, &t).unwrap(), 1e-12);
    }

    #[test]
    fn curl_grad_and_div_curl_3d(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = tetrahedron();
        let q = random_poly(&mut rng, 3, 3, 1);
        let g = diff(DiffOp::Grad3d, &q, &k).unwrap();
        assert_zero(&diff(DiffOp::Curl3d, &g, &k).unwrap(), 1e-13);
        let v = random_poly(&mut rng, 3, 3, 3);
        let c = diff(DiffOp::Curl3d, &v, &k).unwrap();
        assert_zero(&diff(DiffOp::Div3d, &c, &k).unwrap(), 1e-12);
    }

    #[test]
    fn surface_complex(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let face = SimplexGeom::new(3, vec![[0.1, 0.0, 0.2], [1.0, 0.3, 0.1], [0.2, 0.9, 0.7]]);
        let u = random_poly(&mut rng, 2, 2, 1);
        let g = surface_op(SurfaceOp::GradF, &face, &u).unwrap();
        assert_zero(&surface_op(SurfaceOp::RotF, &face, &g).unwrap(), 1e-12);
        let c = surface_op(SurfaceOp::CurlF, &face, &u).unwrap();
        assert_zero(&surface_op(SurfaceOp::DivF, &face, &c).unwrap(), 1e-12);
    }

    #[test]
    fn trace_commutes_with_evaluation(seed in 0u64..1000, t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_poly(&mut rng, 2, 3, 1);
        // Edge {0, 2}: local coordinates (λ0, λ2) = (t, 1 - t).
        let tr = p.trace(&[0, 2]).unwrap();
        let lhs = tr.eval(&[t])[0];
        let rhs = p.eval(&[t, 0.0])[0];
        prop_assert!((lhs - rhs).abs() < 1e-13);
    }
}
