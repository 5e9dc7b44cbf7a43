use std::collections::BTreeSet;

use feec_core::mesh::*;
use proptest::prelude::*;

fn vertex_at(mesh: &SimplicialMesh, p: [f64; 2]) -> usize {
    mesh.coords()
        .iter()
        .position(|c| (c[0] - p[0]).abs() < 1e-14 && (c[1] - p[1]).abs() < 1e-14)
        .unwrap()
}

fn subset(a: &[usize], b: &[usize]) -> bool {
    let b: BTreeSet<_> = b.iter().collect();
    a.iter().all(|c| b.contains(c))
}

fn total_volume(mesh: &SimplicialMesh) -> f64 {
    (0..mesh.num_cells()).map(|c| mesh.cell_geom(c).measure).sum()
}

// Brute-force counts of an n×n grid split along one diagonal per square.
fn grid_counts(n: usize) -> (usize, usize, usize) {
    let verts = (n + 1) * (n + 1);
    let edges = 2 * n * (n + 1) + n * n;
    (verts, edges, 2 * n * n)
}

#[test]
fn structured_counts() {
    let m = structured_mesh(2, 1);
    assert_eq!((m.num(0), m.num(1), m.num(2)), (4, 5, 2));
    let m = structured_mesh(2, 2);
    assert_eq!((m.num(0), m.num(1), m.num(2)), (9, 16, 8));
    for n in 1..=4 {
        let m = structured_mesh(2, n);
        assert_eq!((m.num(0), m.num(1), m.num(2)), grid_counts(n));
    }
    let m = structured_mesh(3, 1);
    assert_eq!((m.num(0), m.num(3)), (8, 6));
}

#[test]
fn euler_characteristic_of_contractible_domains() {
    for (d, n) in [(2, 1), (2, 3), (3, 1), (3, 2)] {
        assert_eq!(structured_mesh(d, n).euler_characteristic(), 1);
    }
}

#[test]
fn mesh_invariants() {
    for (d, n) in [(2, 1), (2, 3), (3, 1), (3, 2)] {
        let m = structured_mesh(d, n);
        for k in 1..=d {
            for s in 0..m.num(k) {
                let vs = m.vertices_of(SimplexId::new(k, s));
                assert!(vs.windows(2).all(|w| w[0] < w[1]));
                for f in m.faces_of(SimplexId::new(k, s), k - 1) {
                    assert!(m.find(m.vertices_of(SimplexId::new(k - 1, f))).is_some());
                }
            }
        }
        for f in 0..m.num(d - 1) {
            let id = SimplexId::new(d - 1, f);
            let nc = m.cells_of(id).len();
            assert_eq!(nc, if m.is_boundary(id) { 1 } else { 2 });
        }
        for c in 0..m.num_cells() {
            assert!(m.cell_geom(c).measure > 0.0);
        }
        assert!((total_volume(&m) - 1.0).abs() < 1e-13);
    }
}

#[test]
fn incidence_symmetry() {
    let m = structured_mesh(3, 2);
    for k in 0..3 {
        for s in 0..m.num(k) {
            let sid = SimplexId::new(k, s);
            for &c in m.cells_of(sid) {
                assert!(m.faces_of(SimplexId::new(3, c), k).contains(&s));
            }
        }
        for c in 0..m.num_cells() {
            for f in m.faces_of(SimplexId::new(3, c), k) {
                assert!(m.cells_of(SimplexId::new(k, f)).contains(&c));
            }
        }
    }
}

#[test]
fn star_patch_examples() {
    let m = structured_mesh(2, 2);
    let centre = vertex_at(&m, [0.5, 0.5]);
    assert_eq!(star_patch(&m, SimplexId::new(0, centre)).unwrap().cells.len(), 6);
    for f in 0..m.num_cells() {
        assert_eq!(star_patch(&m, SimplexId::new(2, f)).unwrap().cells, vec![f]);
    }
    let m1 = structured_mesh(2, 1);
    let corner = vertex_at(&m1, [0.0, 0.0]);
    assert_eq!(star_patch(&m1, SimplexId::new(0, corner)).unwrap().cells.len(), 2);
    assert!(matches!(star_patch(&m1, SimplexId::new(1, 99)), Err(MeshError::UnknownSimplex(_))));
}

#[test]
fn extended_patch_examples() {
    let m = structured_mesh(2, 2);
    let centre = SimplexId::new(0, vertex_at(&m, [0.5, 0.5]));
    assert_eq!(extended_patch(&m, centre, 0).unwrap().cells, star_patch(&m, centre).unwrap().cells);
    assert_eq!(extended_patch(&m, centre, 1).unwrap().cells.len(), 8);
    let m = structured_mesh(2, 3);
    let s = SimplexId::new(0, 0);
    let all: Vec<usize> = (0..m.num_cells()).collect();
    assert_eq!(extended_patch(&m, s, 10).unwrap().cells, all);
    assert_eq!(extended_patch(&m, s, 11).unwrap().cells, all);
}

#[test]
fn h_patch_examples() {
    let m = structured_mesh(2, 2);
    for v in 0..m.num(0) {
        let s = SimplexId::new(0, v);
        assert_eq!(h_patch(&m, s).unwrap().cells, star_patch(&m, s).unwrap().cells);
    }
    for e in 0..m.num(1) {
        let s = SimplexId::new(1, e);
        if m.is_boundary(s) {
            continue;
        }
        let mut union: BTreeSet<usize> = BTreeSet::new();
        for &v in m.vertices_of(s) {
            union.extend(star_patch(&m, SimplexId::new(0, v)).unwrap().cells);
        }
        assert_eq!(h_patch(&m, s).unwrap().cells, union.into_iter().collect::<Vec<_>>());
    }
}

#[test]
fn patch_sandwich_and_monotonicity() {
    for (d, n) in [(2, 3), (3, 2)] {
        let m = structured_mesh(d, n);
        for k in 0..=d {
            for s in 0..m.num(k) {
                let sid = SimplexId::new(k, s);
                let star = star_patch(&m, sid).unwrap();
                let h = h_patch(&m, sid).unwrap();
                let l1 = extended_patch(&m, sid, 1).unwrap();
                assert!(subset(&star.cells, &h.cells) && subset(&h.cells, &l1.cells));
                for &c in &star.cells {
                    assert!(m.faces_of(SimplexId::new(d, c), k).contains(&s));
                }
                for l in 0..3 {
                    let a = extended_patch(&m, sid, l).unwrap();
                    let b = extended_patch(&m, sid, l + 1).unwrap();
                    assert!(subset(&a.cells, &b.cells));
                }
            }
        }
    }
}

#[test]
fn shape_regularity_examples() {
    let base = structured_mesh(2, 1).shape_regularity().unwrap();
    for n in 2..=4 {
        assert!((structured_mesh(2, n).shape_regularity().unwrap() - base).abs() < 1e-12);
    }
    let refined = uniform_refine(&structured_mesh(2, 1)).shape_regularity().unwrap();
    assert!((refined - base).abs() < 1e-12);

    // Equilateral triangle: circumradius s/√3, inradius s/(2√3).
    let s3 = 3f64.sqrt();
    let eq = SimplicialMesh::from_cells(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, s3 / 2.0, 0.0]], vec![vec![0, 1, 2]]).unwrap();
    assert!((eq.shape_regularity().unwrap() - 2.0).abs() < 1e-13);

    let flat = SimplicialMesh::from_cells(2, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![vec![0, 1, 2]]);
    assert!(matches!(flat, Err(MeshError::Degenerate { .. })) || flat.unwrap().shape_regularity().is_err());
}

#[test]
fn refinement_examples() {
    assert_eq!(uniform_refine(&structured_mesh(2, 1)).num_cells(), 8);
    let r = uniform_refine(&structured_mesh(2, 2));
    assert_eq!(r.num(0), 25);
    assert!((total_volume(&r) - 1.0).abs() < 1e-14);
    let r3 = uniform_refine(&structured_mesh(3, 1));
    assert_eq!(r3.num_cells(), 48);
    assert_eq!(r3.num(0), 27);
    assert!((total_volume(&r3) - 1.0).abs() < 1e-14);
    assert_eq!(r3.euler_characteristic(), 1);
}

#[test]
fn frames_are_orthonormal() {
    let m = structured_mesh(3, 1);
    for f in 0..m.num(2) {
        let (t1, t2, n) = m.geom(SimplexId::new(2, f)).face_frame();
        let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        assert!(dot(&t1, &t2).abs() < 1e-14 && dot(&t1, &n).abs() < 1e-14 && dot(&t2, &n).abs() < 1e-14);
        for v in [t1, t2, n] {
            assert!((dot(&v, &v) - 1.0).abs() < 1e-14);
        }
    }
    let m = structured_mesh(2, 2);
    for e in 0..m.num(1) {
        let g = m.geom(SimplexId::new(1, e));
        let (t, n) = (g.tangent(), g.normal());
        assert!((n[0] - t[1]).abs() < 1e-15 && (n[1] + t[0]).abs() < 1e-15);
    }
}

#[test]
fn mesh_file_round_trip() {
    let m = structured_mesh(2, 2);
    let dir = std::env::temp_dir().join(format!("feec-mesh-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.txt");
    m.write_to(&path).unwrap();
    let r = read_mesh(&path).unwrap();
    assert_eq!(r.cells(), m.cells());
    assert_eq!(r.coords(), m.coords());
    std::fs::remove_dir_all(&dir).unwrap();
    assert!(matches!(parse_mesh("2 3 1\n0 0\n1 0\n"), Err(MeshError::Parse { .. })));
    assert!(matches!(parse_mesh("4 1 1\n0\n0\n"), Err(MeshError::Parse { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn patches_nest_on_random_meshes(d in 2usize..=3, n in 1usize..=3, pick in 0usize..1000, k in 0usize..=3) {
        let m = structured_mesh(d, if d == 3 { n.min(2) } else { n });
        let k = k.min(d);
        let s = SimplexId::new(k, pick % m.num(k));
        let star = star_patch(&m, s).unwrap();
        let h = h_patch(&m, s).unwrap();
        prop_assert!(!star.cells.is_empty());
        prop_assert!(subset(&star.cells, &h.cells));
        let mut prev = star.cells.clone();
        for l in 1..4 {
            let next = extended_patch(&m, s, l).unwrap().cells;
            if l == 1 {
                prop_assert!(subset(&h.cells, &next));
            }
            prop_assert!(subset(&prev, &next));
            prev = next;
        }
    }

    #[test]
    fn refinement_preserves_volume_and_topology(d in 2usize..=3, n in 1usize..=2) {
        let m = structured_mesh(d, n);
        let r = uniform_refine(&m);
        prop_assert_eq!(r.num_cells(), m.num_cells() * (1 << d));
        prop_assert!((total_volume(&r) - total_volume(&m)).abs() < 1e-13);
        prop_assert_eq!(r.euler_characteristic(), 1);
    }
}
