use std::collections::BTreeMap;
use std::sync::Arc;

use feec_core::elements::{
    analyse_bubble_spaces, assemble_complex, build_reference, check_unisolvency, BubbleComplex, ElementFamily, FamilyTag,
    FeComplex,
};
use feec_core::mesh::{structured_mesh, SimplexId};
use feec_core::projector::{CommutingProjector, ProjectorConfig};
use feec_core::verify::*;
use feec_core::weights::{auxiliary_complex, build_all_weights, build_smoother};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn complex(tag: FamilyTag, k: usize, dim: usize, n: usize) -> FeComplex {
    let mesh = Arc::new(structured_mesh(dim, n));
    assemble_complex(mesh, ElementFamily::new(tag, k).unwrap()).unwrap()
}

fn projector(tag: FamilyTag, k: usize, dim: usize, n: usize) -> CommutingProjector {
    let mesh = Arc::new(structured_mesh(dim, n));
    CommutingProjector::build(mesh, ElementFamily::new(tag, k).unwrap(), ProjectorConfig::default()).unwrap()
}

fn record<'a>(recs: &'a [CheckRecord], suffix: &str) -> &'a CheckRecord {
    recs.iter().find(|r| r.name.ends_with(suffix)).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Adds `v` to entry (r, c) of every sparse row set, creating it if needed.
fn bump(rows: &mut Vec<(usize, f64)>, c: usize, v: f64) {
    match rows.iter().position(|e| e.0 == c) {
        Some(p) => rows[p].1 += v,
        None => {
            rows.push((c, v));
            rows.sort_by_key(|e| e.0);
        }
    }
}

#[test]
fn lrt1_global_rank_identities() {
    let cx = complex(FamilyTag::Lrt, 1, 2, 2);
    let tol = Tolerances::default();
    let dims: Vec<usize> = cx.spaces.iter().map(|s| s.dim()).collect();
    assert_eq!(dims, vec![9, 16, 8]);
    let r = rank_identities(&normalized_differentials(&cx), &dims, &tol);
    assert_eq!(r.alternating_sum, 1);
    assert_eq!(r.kernels, vec![1, 8, 8]);
    assert!(r.exact && r.dd < 1e-12);
}

#[test]
fn local_exactness_examples() {
    let tol = Tolerances::default();
    for cx in [complex(FamilyTag::Lrt, 2, 2, 2), complex(FamilyTag::Whitney3d, 1, 3, 1)] {
        let recs = verify_exactness(&cx, &tol);
        assert!(recs.iter().all(CheckRecord::passed), "{:?}", recs.iter().map(|r| &r.data).collect::<Vec<_>>());
    }
}

#[test]
fn exactness_mutant_is_rejected() {
    let mut cx = complex(FamilyTag::Lrt, 1, 2, 2);
    // A perturbed gradient entry breaks d ∘ d = 0.
    cx.d[0].rows[0][0].1 += 0.5;
    let recs = verify_exactness(&cx, &Tolerances::default());
    assert!(!record(&recs, "exactness.global").passed());
    assert!(!record(&recs, "exactness.patches").passed());
}

#[test]
fn assumptions_hold_for_hs3_and_afn5() {
    let tol = Tolerances::default();
    for cx in [complex(FamilyTag::Hs, 3, 2, 2), complex(FamilyTag::Afn, 5, 2, 1)] {
        let recs = verify_assumptions(&cx, &tol, &mut rng(3), Timer::default());
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert!(r.passed(), "{} {}: {}", cx.family.label(), r.name, r.data);
        }
    }
}

#[test]
fn distinguished_and_constants_mutants_are_rejected() {
    let tol = Tolerances::default();
    let mut cx = complex(FamilyTag::Hs, 3, 2, 2);
    let g = cx.spaces[0].distinguished(SimplexId::new(0, 4)).unwrap();
    assert!(check_distinguished(&cx).passed() && check_constants(&cx, &tol).passed());
    cx.spaces[0].dofs[g].distinguished = false;
    assert!(!check_distinguished(&cx).passed());
    assert!(!check_constants(&cx, &tol).passed());

    let mut cx = complex(FamilyTag::Lrt, 2, 2, 1);
    let e = cx.spaces[1].distinguished(SimplexId::new(1, 0)).unwrap();
    cx.spaces[1].dofs[e + 1].distinguished = true;
    assert!(!check_distinguished(&cx).passed());
}

#[test]
fn span_mutant_is_rejected() {
    let tol = Tolerances::default();
    for (tag, k) in [(FamilyTag::Hs, 3), (FamilyTag::Lbdm, 2)] {
        let cx = complex(tag, k, 2, 2);
        assert!(check_span(&cx, &tol).passed());
        let m = span_mutant(&cx, 0).expect("mixing candidate");
        assert!(!check_span(&m, &tol).passed());
    }
}

#[test]
fn local_support_mutant_is_rejected() {
    let mut cx = complex(FamilyTag::Lrt, 2, 2, 2);
    assert!(check_local_support(&cx, &mut rng(5)).passed());
    let far = cx.spaces[0].distinguished(SimplexId::new(0, cx.mesh.num(0) - 1)).unwrap();
    let c = (0..cx.mesh.num_cells()).find(|&c| !cx.spaces[0].cells[c].dofs.contains(&far)).unwrap();
    cx.spaces[0].cells[c].dofs[0] = far;
    let r = check_local_support(&cx, &mut rng(5));
    assert!(!r.passed());
    assert!(r.data["support_violations"].as_u64().unwrap() > 0);
}

#[test]
fn unisolvency_and_duplicated_dof() {
    let tol = Tolerances::default();
    for (tag, k) in [(FamilyTag::Lrt, 2), (FamilyTag::Hs, 3), (FamilyTag::Whitney3d, 1)] {
        let recs = check_unisolvency_family(&ElementFamily::new(tag, k).unwrap(), &tol);
        assert!(recs.iter().all(CheckRecord::passed));
    }
    let re = build_reference(&ElementFamily::new(FamilyTag::Lrt, 2).unwrap(), 0).unwrap();
    let m = check_unisolvency(&re.with_duplicated_dof(0, 1));
    assert!(m.sigma_min <= tol.unisolvency * m.sigma_max);
}

#[test]
fn bubbles_and_their_mutants() {
    for bc in [BubbleComplex::ArgyrisFace { k: 5 }, BubbleComplex::NeilanFace { k: 9 }, BubbleComplex::LagrangeEdge { k: 3 }] {
        assert!(check_bubble(bc).passed(), "{}", bc.name());
    }
    assert!(!check_bubble(BubbleComplex::NeilanFace { k: 8 }).passed());
    assert!(check_bubbles(&ElementFamily::new(FamilyTag::Whitney3d, 1).unwrap())[0].status == Status::Skipped);

    let bc = BubbleComplex::ArgyrisFace { k: 5 };
    let mut spaces = bc.spaces();
    spaces[1].basis.pop();
    let r = analyse_bubble_spaces(bc.name(), &spaces, &bc.maps(), bc.integer_identity());
    assert!(!bubble_record(bc.name(), &r).passed());

    let mut spaces = bc.spaces();
    let extra = spaces[1].basis[0].scale(2.0);
    spaces[1].basis.push(extra);
    let r = analyse_bubble_spaces(bc.name(), &spaces, &bc.maps(), bc.integer_identity());
    assert!(!r.exact);
}

#[test]
fn double_complex_and_its_mutant() {
    let tol = Tolerances::default();
    let mesh = Arc::new(structured_mesh(2, 2));
    let fam = ElementFamily::new(FamilyTag::Lrt, 2).unwrap();
    assert!(check_double_complex(&mesh, &fam, 5, 3, &mut rng(1), &tol).unwrap().passed());

    let aux = auxiliary_complex(&mesh).unwrap();
    let ws = build_all_weights(&mesh).unwrap();
    let mut sm: Vec<_> = (0..=2).map(|k| build_smoother(&aux, &ws[k], &fam, k)).collect();
    assert!(double_complex_record(&mesh, &fam, &sm, 5, 3, &mut rng(1), &tol).passed());
    let row = &mut sm[1].rows.rows[3];
    let c = row[0].0;
    bump(row, c, 0.1);
    assert!(!double_complex_record(&mesh, &fam, &sm, 5, 3, &mut rng(1), &tol).passed());
}

#[test]
fn projection_commutation_locality_mutants() {
    let tol = Tolerances::default();
    let p = projector(FamilyTag::Lrt, 2, 2, 3);
    assert!(check_projection(&p, 5, &mut rng(2), &tol).passed());
    assert!(check_commutation(&p, 2, &mut rng(2), &tol).unwrap().passed());
    assert!(check_locality(&p, &mut rng(2)).passed());

    let mut q = p.clone();
    let c = q.p_hat[1].rows[0][0].0;
    bump(&mut q.p_hat[1].rows[0], c, 1e-3);
    assert!(!check_projection(&q, 5, &mut rng(2), &tol).passed());

    let mut q = p.clone();
    let r = q.a[0].rows.iter().position(|row| !row.is_empty()).unwrap();
    let c = q.a[0].rows[r][0].0;
    bump(&mut q.a[0].rows[r], c, 1e-3);
    assert!(!check_commutation(&q, 2, &mut rng(2), &tol).unwrap().passed());

    let mut q = p.clone();
    let last = q.p_hat[0].ncols - 1;
    let v = q.cx.spaces[0].distinguished(SimplexId::new(0, 0)).unwrap();
    bump(&mut q.p_hat[0].rows[v], last, 1e-3);
    assert!(!check_locality(&q, &mut rng(2)).passed());
}

#[test]
fn locality_probe_examples() {
    let p = projector(FamilyTag::Whitney3d, 1, 3, 2);
    let mut r = rng(8);
    for slot in 0..=3 {
        for cell in [0, 17, 47] {
            let probe = locality_probe(&p, slot, cell, &mut r);
            assert!(probe.outside_unchanged && probe.inside_changed, "{probe:?}");
        }
    }
}

#[test]
fn boundedness_is_mesh_independent_and_scale_invariant() {
    let tol = Tolerances::default();
    let fam = ElementFamily::new(FamilyTag::Lrt, 2).unwrap();
    let study = boundedness_study(&structured_mesh(2, 2), fam, 3, ProjectorConfig::default()).unwrap();
    assert_eq!(study.levels.len(), 4);
    assert!(check_boundedness(&study, &tol).passed(), "{:?}", study.drift);

    let mesh = structured_mesh(2, 2);
    let inputs = boundedness_inputs(2);
    let base = boundedness_level(&projector(FamilyTag::Lrt, 2, 2, 2), &inputs).unwrap();
    let big = CommutingProjector::build(Arc::new(mesh.scaled(2.0)), fam, ProjectorConfig::default()).unwrap();
    let scaled = boundedness_level(&big, &[dilate(&inputs[0], 2.0), dilate(&inputs[1], 2.0)]).unwrap();
    let pairs = [(&base.pi, &scaled.pi), (&base.smoother, &scaled.smoother), (&base.lift, &scaled.lift)];
    for (a, b) in pairs.into_iter().chain([(&base.harmonic_projection, &scaled.harmonic_projection)]) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn boundedness_mutant_is_rejected() {
    let fam = ElementFamily::new(FamilyTag::Lrt, 1).unwrap();
    let mut study = boundedness_study(&structured_mesh(2, 1), fam, 1, ProjectorConfig::default()).unwrap();
    // A statistic that triples under refinement.
    study.drift = BTreeMap::from([("pi0".to_string(), 3.0)]);
    study.max_drift = 3.0;
    assert!(!check_boundedness(&study, &Tolerances::default()).passed());
}

fn report(checks: Vec<CheckRecord>) -> VerificationReport {
    let mesh = structured_mesh(2, 1);
    let fam = ElementFamily::new(FamilyTag::Lrt, 1).unwrap();
    VerificationReport::new("verify", 7, 2, Tolerances::default(), MeshInfo::new("unit-square:1", 0, &mesh), (&fam).into(), checks)
}

#[test]
fn empty_report_is_valid_json() {
    let dir = std::env::temp_dir().join(format!("feec-verify-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("empty.json");
    emit_report(&report(vec![]), &path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["meta"]["passed"], 0);
    assert_eq!(v["meta"]["failed"], 0);
    assert_eq!(v["checks"].as_array().unwrap().len(), 0);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn reports_are_deterministic_and_counted() {
    let build = || {
        let cx = complex(FamilyTag::Lrt, 1, 2, 1);
        let tol = Tolerances::default();
        let mut checks = verify_exactness(&cx, &tol);
        checks.extend(verify_assumptions(&cx, &tol, &mut rng(7), Timer::default()));
        checks.push(CheckRecord::skipped("bubble", "none"));
        checks.push(CheckRecord::new("forced", false, serde_json::json!({}), None));
        report(checks)
    };
    let (a, b) = (build(), build());
    assert_eq!(a.to_json(), b.to_json());
    let m = &a.meta;
    assert_eq!(m.passed + m.failed + m.skipped, a.checks.len());
    assert_eq!((m.failed, m.skipped), (1, 1));
    assert!(!a.all_passed());
}
