//! Simplicial meshes of the unit square / unit cube, patches, orientation
//! frames and incidence numbers.
//!
//! Every simplex is stored as a sorted tuple of global vertex indices, which
//! fixes its canonical orientation: edges point from the lower to the higher
//! vertex, the 2D edge normal is the tangent rotated by -90 degrees, and a 3D
//! face `[a, b, c]` has normal `(x_b - x_a) x (x_c - x_a)`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub type Point = [f64; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("degenerate cell {cell}: volume {volume:e}")]
    Degenerate { cell: usize, volume: f64 },
    #[error("unknown simplex {0}")]
    UnknownSimplex(SimplexId),
    #[error("unsupported mesh dimension {0}")]
    Dimension(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SimplexId {
    pub dim: usize,
    pub index: usize,
}

impl SimplexId {
    pub fn new(dim: usize, index: usize) -> Self {
        SimplexId { dim, index }
    }
}

impl fmt::Display for SimplexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = ["vertex", "edge", "face", "cell"];
        write!(f, "{}#{}", tag.get(self.dim).unwrap_or(&"simplex"), self.index)
    }
}

/// All `(m+1)`-element subsets of `0..=d`, lexicographically ordered.
pub fn local_subsets(d: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(m + 1);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, d + 1, m + 1, &mut cur, &mut out);
    out
}

pub(crate) fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: &Point, b: &Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn scale(a: &Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn centroid(pts: &[Point]) -> Point {
    let mut c = [0.0; 3];
    for p in pts {
        for i in 0..3 {
            c[i] += p[i];
        }
    }
    scale(&c, 1.0 / pts.len() as f64)
}

/// Affine geometry of an `m`-simplex embedded in `R^ambient`.
#[derive(Clone, Debug)]
pub struct SimplexGeom {
    pub ambient: usize,
    pub verts: Vec<Point>,
    /// Length, area or volume.
    pub measure: f64,
    /// Gradients of the barycentric coordinates within the affine hull.
    pub grad_bary: Vec<Point>,
}

impl SimplexGeom {
    pub fn new(ambient: usize, verts: Vec<Point>) -> Self {
        let m = verts.len() - 1;
        if m == 0 {
            return SimplexGeom { ambient, verts, measure: 1.0, grad_bary: vec![[0.0; 3]] };
        }
        let e: Vec<Point> = (1..=m).map(|i| sub(&verts[i], &verts[0])).collect();
        let mut g = nalgebra::DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                g[(i, j)] = dot(&e[i], &e[j]);
            }
        }
        let det = g.determinant();
        let fact: f64 = (1..=m).map(|i| i as f64).product();
        let measure = det.max(0.0).sqrt() / fact;
        let ginv = g.try_inverse().unwrap_or_else(|| nalgebra::DMatrix::zeros(m, m));
        let mut grad_bary = vec![[0.0; 3]; m + 1];
        for i in 0..m {
            let mut v = [0.0; 3];
            for j in 0..m {
                v = [
                    v[0] + ginv[(j, i)] * e[j][0],
                    v[1] + ginv[(j, i)] * e[j][1],
                    v[2] + ginv[(j, i)] * e[j][2],
                ];
            }
            grad_bary[i + 1] = v;
        }
        let mut g0 = [0.0; 3];
        for v in grad_bary.iter().skip(1) {
            g0 = sub(&g0, v);
        }
        grad_bary[0] = g0;
        SimplexGeom { ambient, verts, measure, grad_bary }
    }

    pub fn dim(&self) -> usize {
        self.verts.len() - 1
    }

    pub fn centroid(&self) -> Point {
        centroid(&self.verts)
    }

    /// Physical point of a barycentric tuple.
    pub fn point(&self, bary: &[f64]) -> Point {
        let mut p = [0.0; 3];
        for (l, v) in bary.iter().zip(&self.verts) {
            for i in 0..3 {
                p[i] += l * v[i];
            }
        }
        p
    }

    /// Unit tangent of an edge, from its first to its second vertex.
    pub fn tangent(&self) -> Point {
        let t = sub(&self.verts[1], &self.verts[0]);
        scale(&t, 1.0 / norm(&t))
    }

    /// Unit normal of a facet: tangent rotated by -90 degrees in 2D,
    /// `(x_1 - x_0) x (x_2 - x_0)` normalized in 3D.
    pub fn normal(&self) -> Point {
        match self.ambient {
            2 => {
                let t = self.tangent();
                [t[1], -t[0], 0.0]
            }
            _ => {
                let n = cross(&sub(&self.verts[1], &self.verts[0]), &sub(&self.verts[2], &self.verts[0]));
                scale(&n, 1.0 / norm(&n))
            }
        }
    }

    /// Orthonormal tangents `t1 ⊥ t2` and normal of a 3D face.
    pub fn face_frame(&self) -> (Point, Point, Point) {
        let n = self.normal();
        let t1 = self.tangent();
        let t2 = cross(&n, &t1);
        (t1, t2, n)
    }

    /// Diameter of the circumscribed ball.
    pub fn circumdiameter(&self) -> f64 {
        let m = self.dim();
        let e: Vec<Point> = (1..=m).map(|i| sub(&self.verts[i], &self.verts[0])).collect();
        let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut b = nalgebra::DVector::<f64>::zeros(m);
        for i in 0..m {
            for j in 0..m {
                a[(i, j)] = 2.0 * dot(&e[i], &e[j]);
            }
            b[i] = dot(&e[i], &e[i]);
        }
        match a.lu().solve(&b) {
            Some(c) => {
                let mut p = [0.0; 3];
                for j in 0..m {
                    p = [p[0] + c[j] * e[j][0], p[1] + c[j] * e[j][1], p[2] + c[j] * e[j][2]];
                }
                2.0 * norm(&p)
            }
            None => f64::INFINITY,
        }
    }

    /// Diameter of the inscribed ball: `2 d |T| / sum of facet measures`.
    pub fn indiameter(&self) -> f64 {
        let m = self.dim();
        let facets: f64 = (0..=m)
            .map(|skip| {
                let vs: Vec<Point> = (0..=m).filter(|&i| i != skip).map(|i| self.verts[i]).collect();
                SimplexGeom::new(self.ambient, vs).measure
            })
            .sum();
        2.0 * m as f64 * self.measure / facets
    }
}

#[derive(Clone, Debug)]
pub struct SimplicialMesh {
    dim: usize,
    coords: Vec<Point>,
    simplices: Vec<Vec<Vec<usize>>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
    cell_subs: Vec<Vec<Vec<usize>>>,
    star: Vec<Vec<Vec<usize>>>,
    boundary: Vec<Vec<bool>>,
}

impl SimplicialMesh {
    /// Builds a mesh from vertex coordinates and cells (vertex tuples in any order).
    pub fn from_cells(dim: usize, coords: Vec<Point>, cells: Vec<Vec<usize>>) -> Result<Self, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::Dimension(dim));
        }
        let cells: Vec<Vec<usize>> = cells
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        for (ci, c) in cells.iter().enumerate() {
            let g = SimplexGeom::new(dim, c.iter().map(|&v| coords[v]).collect());
            let diam = (1..c.len())
                .map(|i| norm(&sub(&coords[c[i]], &coords[c[0]])))
                .fold(0.0, f64::max);
            if !(g.measure > 1e-12 * diam.powi(dim as i32)) {
                return Err(MeshError::Degenerate { cell: ci, volume: g.measure });
            }
        }
        let mut simplices: Vec<Vec<Vec<usize>>> = vec![Vec::new(); dim + 1];
        let mut lookup: Vec<HashMap<Vec<usize>, usize>> = vec![HashMap::new(); dim + 1];
        let mut cell_subs: Vec<Vec<Vec<usize>>> = vec![Vec::with_capacity(cells.len()); dim + 1];
        let mut used = vec![false; coords.len()];
        for c in &cells {
            for &v in c {
                used[v] = true;
            }
        }
        // vertices keep their global numbering
        for v in 0..coords.len() {
            simplices[0].push(vec![v]);
            lookup[0].insert(vec![v], v);
        }
        for c in &cells {
            for m in 0..=dim {
                let mut ids = Vec::new();
                for loc in local_subsets(dim, m) {
                    let key: Vec<usize> = loc.iter().map(|&i| c[i]).collect();
                    let n = simplices[m].len();
                    let id = *lookup[m].entry(key.clone()).or_insert(n);
                    if id == n {
                        simplices[m].push(key);
                    }
                    ids.push(id);
                }
                cell_subs[m].push(ids);
            }
        }
        if used.iter().any(|u| !u) {
            let line = used.iter().position(|u| !u).unwrap();
            return Err(MeshError::Parse { line: 0, msg: format!("vertex {line} is not used by any cell") });
        }
        let mut star: Vec<Vec<Vec<usize>>> = (0..=dim).map(|m| vec![Vec::new(); simplices[m].len()]).collect();
        for (ci, _) in cells.iter().enumerate() {
            for m in 0..=dim {
                for &s in &cell_subs[m][ci] {
                    star[m][s].push(ci);
                }
            }
        }
        let mut boundary: Vec<Vec<bool>> = (0..=dim).map(|m| vec![false; simplices[m].len()]).collect();
        for f in 0..simplices[dim - 1].len() {
            if star[dim - 1][f].len() == 1 {
                let verts = simplices[dim - 1][f].clone();
                for m in 0..dim {
                    for loc in local_subsets(dim - 1, m) {
                        let key: Vec<usize> = loc.iter().map(|&i| verts[i]).collect();
                        boundary[m][lookup[m][&key]] = true;
                    }
                }
            }
        }
        Ok(SimplicialMesh { dim, coords, simplices, lookup, cell_subs, star, boundary })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num(&self, m: usize) -> usize {
        self.simplices[m].len()
    }

    pub fn num_cells(&self) -> usize {
        self.simplices[self.dim].len()
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn vertices_of(&self, s: SimplexId) -> &[usize] {
        &self.simplices[s.dim][s.index]
    }

    pub fn check(&self, s: SimplexId) -> Result<(), MeshError> {
        if s.dim > self.dim || s.index >= self.num(s.dim) {
            Err(MeshError::UnknownSimplex(s))
        } else {
            Ok(())
        }
    }

    pub fn find(&self, verts: &[usize]) -> Option<SimplexId> {
        let mut key = verts.to_vec();
        key.sort_unstable();
        let m = key.len().checked_sub(1)?;
        if m > self.dim {
            return None;
        }
        self.lookup[m].get(&key).map(|&i| SimplexId::new(m, i))
    }

    /// Ids of the `m`-subsimplices of a cell, ordered as `local_subsets(dim, m)`.
    pub fn cell_sub(&self, cell: usize, m: usize) -> &[usize] {
        &self.cell_subs[m][cell]
    }

    /// Cells whose closure contains `s`.
    pub fn cells_of(&self, s: SimplexId) -> &[usize] {
        &self.star[s.dim][s.index]
    }

    pub fn is_boundary(&self, s: SimplexId) -> bool {
        self.boundary[s.dim][s.index]
    }

    pub fn geom(&self, s: SimplexId) -> SimplexGeom {
        SimplexGeom::new(self.dim, self.vertices_of(s).iter().map(|&v| self.coords[v]).collect())
    }

    pub fn cell_geom(&self, c: usize) -> SimplexGeom {
        self.geom(SimplexId::new(self.dim, c))
    }

    pub fn euler_characteristic(&self) -> i64 {
        (0..=self.dim).map(|m| if m % 2 == 0 { self.num(m) as i64 } else { -(self.num(m) as i64) }).sum()
    }

    /// Sub-simplices of dimension `m` contained in the closure of `s`.
    pub fn faces_of(&self, s: SimplexId, m: usize) -> Vec<usize> {
        let v = self.vertices_of(s);
        if m > s.dim {
            return Vec::new();
        }
        local_subsets(s.dim, m)
            .into_iter()
            .map(|loc| {
                let key: Vec<usize> = loc.iter().map(|&i| v[i]).collect();
                self.lookup[m][&key]
            })
            .collect()
    }

    /// Signed incidence `[σ : τ]` between `(m+1)`-simplices σ (rows) and
    /// their `m`-faces τ, matching Stokes' theorem for the canonical
    /// distinguished degrees of freedom.
    pub fn incidence(&self, m: usize) -> Vec<Vec<(usize, f64)>> {
        let d = self.dim;
        (0..self.num(m + 1))
            .map(|i| {
                let sid = SimplexId::new(m + 1, i);
                let faces = self.faces_of(sid, m);
                let mut row: Vec<(usize, f64)> = match (d, m) {
                    (_, 0) => vec![(faces[0], -1.0), (faces[1], 1.0)],
                    (3, 1) => vec![(faces[0], 1.0), (faces[1], -1.0), (faces[2], 1.0)],
                    _ => {
                        let c = self.geom(sid).centroid();
                        faces
                            .iter()
                            .map(|&f| {
                                let g = self.geom(SimplexId::new(m, f));
                                let s = dot(&g.normal(), &sub(&g.centroid(), &c));
                                (f, if s > 0.0 { 1.0 } else { -1.0 })
                            })
                            .collect()
                    }
                };
                row.sort_by_key(|e| e.0);
                row
            })
            .collect()
    }

    pub fn shape_regularity(&self) -> Result<f64, MeshError> {
        let mut worst: f64 = 0.0;
        for c in 0..self.num_cells() {
            let g = self.cell_geom(c);
            if !(g.measure > 0.0) {
                return Err(MeshError::Degenerate { cell: c, volume: g.measure });
            }
            let r = g.circumdiameter() / g.indiameter();
            if !r.is_finite() {
                return Err(MeshError::Degenerate { cell: c, volume: g.measure });
            }
            worst = worst.max(r);
        }
        Ok(worst)
    }

    pub fn cells(&self) -> Vec<Vec<usize>> {
        self.simplices[self.dim].clone()
    }

    /// Largest cell diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num(1))
            .map(|e| self.geom(SimplexId::new(1, e)).measure)
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> SimplicialMesh {
        let coords = self.coords.iter().map(|p| scale(p, factor)).collect();
        SimplicialMesh::from_cells(self.dim, coords, self.cells()).expect("scaling preserves validity")
    }

    pub fn write_to(&self, path: &Path) -> Result<(), MeshError> {
        let mut s = format!("{} {} {}\n", self.dim, self.coords.len(), self.num_cells());
        for p in &self.coords {
            let parts: Vec<String> = p[..self.dim].iter().map(|x| format!("{x:.17e}")).collect();
            s.push_str(&parts.join(" "));
            s.push('\n');
        }
        for c in &self.simplices[self.dim] {
            let parts: Vec<String> = c.iter().map(|x| x.to_string()).collect();
            s.push_str(&parts.join(" "));
            s.push('\n');
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Parses the plain mesh format: `dim nv nc`, then `nv` coordinate lines,
/// then `nc` lines of `dim + 1` zero-based vertex indices.
pub fn parse_mesh(text: &str) -> Result<SimplicialMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let perr = |line: usize, msg: &str| MeshError::Parse { line, msg: msg.to_string() };
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty mesh file"))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| perr(hl, "header must be `dim nv nc`"))?;
    if head.len() != 3 {
        return Err(perr(hl, "header must be `dim nv nc`"));
    }
    let (dim, nv, nc) = (head[0], head[1], head[2]);
    if dim != 2 && dim != 3 {
        return Err(perr(hl, "dimension must be 2 or 3"));
    }
    let mut coords = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| perr(hl, "missing coordinate lines"))?;
        let xs: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| perr(ln, "bad coordinate"))?;
        if xs.len() != dim || xs.iter().any(|x| !x.is_finite()) {
            return Err(perr(ln, "expected `dim` finite coordinates"));
        }
        let mut p = [0.0; 3];
        p[..dim].copy_from_slice(&xs);
        coords.push(p);
    }
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = lines.next().ok_or_else(|| perr(hl, "missing cell lines"))?;
        let ids: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| perr(ln, "bad vertex index"))?;
        if ids.len() != dim + 1 || ids.iter().any(|&i| i >= nv) {
            return Err(perr(ln, "expected `dim + 1` valid vertex indices"));
        }
        if ids.iter().collect::<BTreeSet<_>>().len() != ids.len() {
            return Err(perr(ln, "repeated vertex in cell"));
        }
        cells.push(ids);
    }
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "trailing content"));
    }
    SimplicialMesh::from_cells(dim, coords, cells)
}

pub fn read_mesh(path: &Path) -> Result<SimplicialMesh, MeshError> {
    parse_mesh(&std::fs::read_to_string(path)?)
}

/// Unit square (each sub-square split along its `(i,j)-(i+1,j+1)` diagonal)
/// or unit cube (each sub-cube split into the 6 Kuhn tetrahedra).
pub fn structured_mesh(dim: usize, n: usize) -> SimplicialMesh {
    assert!(n >= 1, "structured mesh needs n >= 1");
    let h = 1.0 / n as f64;
    match dim {
        2 => {
            let id = |i: usize, j: usize| j * (n + 1) + i;
            let mut coords = Vec::new();
            for j in 0..=n {
                for i in 0..=n {
                    coords.push([i as f64 * h, j as f64 * h, 0.0]);
                }
            }
            let mut cells = Vec::new();
            for j in 0..n {
                for i in 0..n {
                    cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                    cells.push(vec![id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
                }
            }
            SimplicialMesh::from_cells(2, coords, cells).expect("structured mesh is valid")
        }
        3 => {
            let id = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
            let mut coords = Vec::new();
            for k in 0..=n {
                for j in 0..=n {
                    for i in 0..=n {
                        coords.push([i as f64 * h, j as f64 * h, k as f64 * h]);
                    }
                }
            }
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let mut cells = Vec::new();
            for k in 0..n {
                for j in 0..n {
                    for i in 0..n {
                        for p in &perms {
                            let mut cur = [i, j, k];
                            let mut tet = vec![id(cur[0], cur[1], cur[2])];
                            for &axis in p {
                                cur[axis] += 1;
                                tet.push(id(cur[0], cur[1], cur[2]));
                            }
                            cells.push(tet);
                        }
                    }
                }
            }
            SimplicialMesh::from_cells(3, coords, cells).expect("structured mesh is valid")
        }
        _ => panic!("structured mesh dimension must be 2 or 3"),
    }
}

/// Red refinement: 4 children per triangle, 8 per tetrahedron (interior
/// octahedron split along its shortest diagonal).
pub fn uniform_refine(mesh: &SimplicialMesh) -> SimplicialMesh {
    let mut coords = mesh.coords.clone();
    let nv = coords.len();
    for e in &mesh.simplices[1] {
        let (a, b) = (coords[e[0]], coords[e[1]]);
        coords.push(scale(&[a[0] + b[0], a[1] + b[1], a[2] + b[2]], 0.5));
    }
    let mid = |a: usize, b: usize| nv + mesh.lookup[1][&vec![a.min(b), a.max(b)]];
    let mut cells = Vec::new();
    for c in &mesh.simplices[mesh.dim] {
        if mesh.dim == 2 {
            let (a, b, cc) = (c[0], c[1], c[2]);
            let (ab, bc, ac) = (mid(a, b), mid(b, cc), mid(a, cc));
            cells.push(vec![a, ab, ac]);
            cells.push(vec![ab, b, bc]);
            cells.push(vec![ac, bc, cc]);
            cells.push(vec![ab, bc, ac]);
        } else {
            let m = |i: usize, j: usize| mid(c[i], c[j]);
            for corner in 0..4 {
                let mut t = vec![c[corner]];
                for other in 0..4 {
                    if other != corner {
                        t.push(m(corner, other));
                    }
                }
                cells.push(t);
            }
            let pairs = [((0, 2), (1, 3)), ((0, 1), (2, 3)), ((0, 3), (1, 2))];
            let len = |p: (usize, usize), q: (usize, usize)| norm(&sub(&coords[m(p.0, p.1)], &coords[m(q.0, q.1)]));
            let mut best = 0;
            for (i, pr) in pairs.iter().enumerate() {
                if len(pr.0, pr.1) < len(pairs[best].0, pairs[best].1) - 1e-12 {
                    best = i;
                }
            }
            let (p, q) = (m(pairs[best].0 .0, pairs[best].0 .1), m(pairs[best].1 .0, pairs[best].1 .1));
            let others: Vec<((usize, usize), (usize, usize))> =
                pairs.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, pr)| *pr).collect();
            let (a, a2) = (m(others[0].0 .0, others[0].0 .1), m(others[0].1 .0, others[0].1 .1));
            let (b, b2) = (m(others[1].0 .0, others[1].0 .1), m(others[1].1 .0, others[1].1 .1));
            for (u, v) in [(a, b), (b, a2), (a2, b2), (b2, a)] {
                cells.push(vec![p, q, u, v]);
            }
        }
    }
    SimplicialMesh::from_cells(mesh.dim, coords, cells).expect("refinement preserves validity")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum PatchKind {
    Star,
    HExtended,
    Layer(usize),
}

/// A set of top-dimensional cells attached to an owner simplex.
#[derive(Clone, Debug)]
pub struct Patch {
    pub owner: SimplexId,
    pub kind: PatchKind,
    /// Sorted global cell ids.
    pub cells: Vec<usize>,
}

impl Patch {
    pub fn contains_cell(&self, c: usize) -> bool {
        self.cells.binary_search(&c).is_ok()
    }

    /// Sorted global ids of the `m`-simplices in the closure of the patch.
    pub fn closure(&self, mesh: &SimplicialMesh, m: usize) -> Vec<usize> {
        let mut s: BTreeSet<usize> = BTreeSet::new();
        for &c in &self.cells {
            s.extend(mesh.cell_sub(c, m).iter().copied());
        }
        s.into_iter().collect()
    }

    /// Flags (indexed like `closure(m)`) marking simplices on the patch boundary.
    pub fn boundary_flags(&self, mesh: &SimplicialMesh, m: usize) -> Vec<bool> {
        let d = mesh.dim();
        let facets = self.closure(mesh, d - 1);
        let mut bset: BTreeSet<usize> = BTreeSet::new();
        for f in facets {
            let n_in = mesh
                .cells_of(SimplexId::new(d - 1, f))
                .iter()
                .filter(|&&c| self.contains_cell(c))
                .count();
            if n_in == 1 {
                if m == d - 1 {
                    bset.insert(f);
                } else if m < d - 1 {
                    bset.extend(mesh.faces_of(SimplexId::new(d - 1, f), m));
                }
            }
        }
        self.closure(mesh, m).iter().map(|s| bset.contains(s)).collect()
    }

    /// Local index of each global cell id within the patch.
    pub fn cell_index(&self) -> HashMap<usize, usize> {
        self.cells.iter().enumerate().map(|(i, &c)| (c, i)).collect()
    }

    pub fn measure(&self, mesh: &SimplicialMesh) -> f64 {
        self.cells.iter().map(|&c| mesh.cell_geom(c).measure).sum()
    }
}

/// ω_σ: cells whose closure contains σ.
pub fn star_patch(mesh: &SimplicialMesh, s: SimplexId) -> Result<Patch, MeshError> {
    mesh.check(s)?;
    let mut cells = mesh.cells_of(s).to_vec();
    cells.sort_unstable();
    Ok(Patch { owner: s, kind: PatchKind::Star, cells })
}

fn grow(mesh: &SimplicialMesh, cells: &[usize]) -> Vec<usize> {
    let mut out: BTreeSet<usize> = BTreeSet::new();
    let mut verts: BTreeSet<usize> = BTreeSet::new();
    for &c in cells {
        verts.extend(mesh.cell_sub(c, 0).iter().copied());
    }
    for v in verts {
        out.extend(mesh.cells_of(SimplexId::new(0, v)).iter().copied());
    }
    out.into_iter().collect()
}

/// ω_σ^[ℓ]: ℓ = 0 is the star, each further layer adds every cell whose
/// closure touches the closure of the previous layer.
pub fn extended_patch(mesh: &SimplicialMesh, s: SimplexId, layers: usize) -> Result<Patch, MeshError> {
    let mut p = star_patch(mesh, s)?;
    for _ in 0..layers {
        p.cells = grow(mesh, &p.cells);
    }
    p.kind = PatchKind::Layer(layers);
    Ok(p)
}

/// ω_σ^h: union of the vertex stars of the vertices of σ.
pub fn h_patch(mesh: &SimplicialMesh, s: SimplexId) -> Result<Patch, MeshError> {
    mesh.check(s)?;
    let mut out: BTreeSet<usize> = BTreeSet::new();
    for &v in mesh.vertices_of(s) {
        out.extend(mesh.cells_of(SimplexId::new(0, v)).iter().copied());
    }
    Ok(Patch { owner: s, kind: PatchKind::HExtended, cells: out.into_iter().collect() })
}

/// Layer-ℓ extension of an arbitrary cell set (used for radius probes of a single cell).
pub fn cell_neighbourhood(mesh: &SimplicialMesh, cell: usize, layers: usize) -> Vec<usize> {
    let mut cells = vec![cell];
    for _ in 0..layers {
        cells = grow(mesh, &cells);
    }
    cells
}
