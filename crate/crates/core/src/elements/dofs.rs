//! Element families, shape spaces and degree-of-freedom recipes.

use nalgebra::DMatrix;
use serde::Serialize;

use super::ElementError;
use crate::linalg;
use crate::mesh::{local_subsets, Point, SimplexGeom};
use crate::poly::{diff, dim_p, monomial_integral, monomials, BaryPoly, DiffOp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum FamilyTag {
    /// Lagrange – Raviart–Thomas – discontinuous P_{k-1}
    Lrt,
    /// Lagrange – BDM – discontinuous P_{k-2}
    Lbdm,
    /// Hermite – Stenberg – discontinuous P_{k-2}
    Hs,
    /// Argyris – Falk–Neilan Stokes pair
    Afn,
    /// Lowest-order Whitney forms in 3D
    Whitney3d,
}

impl FamilyTag {
    pub const ALL: [FamilyTag; 5] = [FamilyTag::Lrt, FamilyTag::Lbdm, FamilyTag::Hs, FamilyTag::Afn, FamilyTag::Whitney3d];

    pub fn name(self) -> &'static str {
        match self {
            FamilyTag::Lrt => "lrt",
            FamilyTag::Lbdm => "lbdm",
            FamilyTag::Hs => "hs",
            FamilyTag::Afn => "afn",
            FamilyTag::Whitney3d => "whitney3d",
        }
    }

    pub fn parse(s: &str) -> Option<FamilyTag> {
        FamilyTag::ALL.into_iter().find(|t| t.name() == s.to_ascii_lowercase())
    }

    pub fn min_degree(self) -> usize {
        match self {
            FamilyTag::Lrt | FamilyTag::Whitney3d => 1,
            FamilyTag::Lbdm => 2,
            FamilyTag::Hs => 3,
            FamilyTag::Afn => 5,
        }
    }

    pub fn max_degree(self) -> Option<usize> {
        match self {
            FamilyTag::Whitney3d => Some(1),
            _ => None,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            FamilyTag::Whitney3d => 3,
            _ => 2,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            FamilyTag::Lrt => "P_k -> RT_{k-1} -> P_{k-1} (Lagrange / Raviart-Thomas)",
            FamilyTag::Lbdm => "P_k -> BDM_{k-1} -> P_{k-2} (Lagrange / Brezzi-Douglas-Marini)",
            FamilyTag::Hs => "Hm_k -> St_{k-1} -> P_{k-2} (Hermite / Stenberg)",
            FamilyTag::Afn => "Ar_k -> FN^v_{k-1} -> FN^p_{k-2} (Argyris / Falk-Neilan)",
            FamilyTag::Whitney3d => "P_1 -> Ned_0 -> RT_0 -> P_0 (lowest-order Whitney forms)",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ElementFamily {
    pub tag: FamilyTag,
    pub k: usize,
}

impl ElementFamily {
    pub fn new(tag: FamilyTag, k: usize) -> Result<Self, ElementError> {
        let min = tag.min_degree();
        if k < min || tag.max_degree().is_some_and(|m| k > m) {
            return Err(ElementError::Degree { family: tag.name(), k, min });
        }
        Ok(ElementFamily { tag, k })
    }

    pub fn dim(&self) -> usize {
        self.tag.dim()
    }

    pub fn nslots(&self) -> usize {
        self.dim() + 1
    }

    pub fn arity(&self, slot: usize) -> usize {
        match (self.dim(), slot) {
            (2, 1) => 2,
            (3, 1) | (3, 2) => 3,
            _ => 1,
        }
    }

    /// Polynomial degree of the cell shape functions.
    pub fn shape_degree(&self, slot: usize) -> usize {
        let k = self.k;
        match self.tag {
            FamilyTag::Lrt => [k, k, k - 1][slot],
            FamilyTag::Whitney3d => [1, 1, 1, 0][slot],
            _ => [k, k - 1, k - 2][slot],
        }
    }

    /// Degree of the monomial layout used for coefficients and input moments.
    pub fn moment_degree(&self, slot: usize) -> usize {
        self.shape_degree(slot).max(1)
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.tag.name(), self.k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum DofKind {
    PointEval,
    PointDerivative,
    EdgeMoment,
    NormalMoment,
    TangentialMoment,
    HarmonicInnerProduct,
    CellMoment,
}

/// One step of the field operator applied before a DOF samples a field.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Partial(usize),
    Dir(Point),
    Curl,
    Div,
    Dot(Point),
    Component(usize),
}

#[derive(Clone, Debug)]
pub enum Term {
    /// Scalar value of the operated field at a local vertex.
    Point { vertex: usize, steps: Vec<Step> },
    /// `∫_τ (operated field)|_τ · test`, `τ` given by ascending local vertices.
    Moment { sub: Vec<usize>, steps: Vec<Step>, test: BaryPoly },
}

/// A degree of freedom on one cell, attached to a local subsimplex.
#[derive(Clone, Debug)]
pub struct Dof {
    pub attach_dim: usize,
    /// Index into `local_subsets(cell_dim, attach_dim)`.
    pub attach_local: usize,
    pub kind: DofKind,
    pub distinguished: bool,
    pub terms: Vec<Term>,
}

pub(crate) fn apply_steps(u: &BaryPoly, steps: &[Step], geom: &SimplexGeom) -> BaryPoly {
    let mut g = u.clone();
    for s in steps {
        g = match s {
            Step::Partial(a) => g.partial(geom, *a),
            Step::Dir(v) => g.dir_deriv(geom, v),
            Step::Curl => {
                let op = if geom.ambient == 2 { DiffOp::Curl2d } else { DiffOp::Curl3d };
                diff(op, &g, geom).expect("curl arity")
            }
            Step::Div => {
                let op = if geom.ambient == 2 { DiffOp::Div2d } else { DiffOp::Div3d };
                diff(op, &g, geom).expect("div arity")
            }
            Step::Dot(v) => g.dot_const(v),
            Step::Component(c) => g.component(*c),
        };
    }
    g
}

impl Dof {
    /// Applies the functional to a polynomial on the cell.
    pub fn eval(&self, u: &BaryPoly, geom: &SimplexGeom) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += match t {
                Term::Point { vertex, steps } => {
                    let g = apply_steps(u, steps, geom);
                    let mut b = vec![0.0; geom.dim()];
                    if *vertex < geom.dim() {
                        b[*vertex] = 1.0;
                    }
                    g.eval(&b)[0]
                }
                Term::Moment { sub, steps, test } => {
                    let g = apply_steps(u, steps, geom);
                    let tr = if sub.len() == geom.dim() + 1 { g } else { g.trace(sub).expect("incident subsimplex") };
                    let sg = SimplexGeom::new(geom.ambient, sub.iter().map(|&i| geom.verts[i]).collect());
                    tr.dot(test).integrate(sg.measure)[0]
                }
            };
        }
        acc
    }
}

fn sub_geom(cell: &SimplexGeom, sub: &[usize]) -> SimplexGeom {
    SimplexGeom::new(cell.ambient, sub.iter().map(|&i| cell.verts[i]).collect())
}

/// `(λ_0 ⋯ λ_d)^p · (homogeneous monomials of degree r)` on a `d`-simplex.
pub fn bubble_basis(d: usize, p: u32, r: i64) -> Vec<BaryPoly> {
    if r < 0 {
        return Vec::new();
    }
    let b = BaryPoly::bary_monomial(d, &vec![p; d + 1]);
    BaryPoly::homogeneous_basis(d, r as usize).iter().map(|m| b.mul(m)).collect()
}

/// Canonical monomials of degree `1..=m`, each minus its mean: a basis of `P_m / R`.
pub fn mean_zero_basis(d: usize, m: i64) -> Vec<BaryPoly> {
    if m < 1 {
        return Vec::new();
    }
    let mons = monomials(d, m as usize);
    mons.exps
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, e)| {
            let mut p = BaryPoly::zeros(d, m as usize, 1);
            p.coeffs[i] = 1.0;
            p.coeffs[0] = -monomial_integral(d, e);
            p
        })
        .collect()
}

/// Basis of `{q ∈ P_m(f) : q(x) = 0 at the vertices, ∫_f q = 0}` on a triangle.
pub fn vertex_free_mean_zero_basis(m: usize) -> Vec<BaryPoly> {
    let mons = monomials(2, m);
    let n = mons.len();
    let mut c = DMatrix::zeros(4, n);
    let verts: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
    for (j, e) in mons.exps.iter().enumerate() {
        for (v, b) in verts.iter().enumerate() {
            c[(v, j)] = b[0].powi(e[0] as i32) * b[1].powi(e[1] as i32);
        }
        c[(3, j)] = monomial_integral(2, e);
    }
    linalg::null_space(&c, 1e-11)
        .column_iter()
        .map(|col| BaryPoly { d: 2, degree: m, arity: 1, coeffs: col.iter().copied().collect() })
        .collect()
}

/// Basis of `B^BDM_r(f) = {v ∈ [P_r(f)]^2 : v·n = 0 on ∂f}` on a physical triangle.
pub fn bdm_bubble_basis(cell: &SimplexGeom, r: i64) -> Vec<BaryPoly> {
    if r < 0 {
        return Vec::new();
    }
    let r = r as usize;
    let n = monomials(2, r).len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for e in local_subsets(2, 1) {
        let nrm = sub_geom(cell, &e).normal();
        let ne = monomials(1, r).len();
        let mut block = vec![vec![0.0; 2 * n]; ne];
        for j in 0..2 * n {
            let mut u = BaryPoly::zeros(2, r, 2);
            u.coeffs[j] = 1.0;
            let tr = u.dot_const(&nrm).trace(&e).expect("edge of triangle").with_degree(r);
            for (i, row) in block.iter_mut().enumerate() {
                row[j] = tr.coeffs[i];
            }
        }
        rows.extend(block);
    }
    let c = DMatrix::from_fn(rows.len(), 2 * n, |i, j| rows[i][j]);
    linalg::null_space(&c, 1e-11)
        .column_iter()
        .map(|col| BaryPoly { d: 2, degree: r, arity: 2, coeffs: col.iter().copied().collect() })
        .collect()
}

/// L2(cell) projection of a vector field onto `span{curl c : c ∈ basis}`.
fn project_onto_curls(cell: &SimplexGeom, basis: &[BaryPoly], v: &BaryPoly) -> BaryPoly {
    if basis.is_empty() {
        return BaryPoly::zeros(2, 0, 2);
    }
    let curls: Vec<BaryPoly> = basis.iter().map(|c| diff(DiffOp::Curl2d, c, cell).unwrap()).collect();
    let n = curls.len();
    let g = DMatrix::from_fn(n, n, |i, j| curls[i].dot(&curls[j]).integrate(cell.measure)[0]);
    let rhs = nalgebra::DVector::from_fn(n, |i, _| curls[i].dot(v).integrate(cell.measure)[0]);
    let coef = g.cholesky().expect("curl basis is independent").solve(&rhs);
    let mut acc = BaryPoly::zeros(2, curls[0].degree, 2);
    for i in 0..n {
        acc = acc.add(&curls[i].scale(coef[i]));
    }
    acc
}

fn moment(attach_dim: usize, attach_local: usize, kind: DofKind, sub: Vec<usize>, steps: Vec<Step>, test: BaryPoly) -> Dof {
    Dof { attach_dim, attach_local, kind, distinguished: false, terms: vec![Term::Moment { sub, steps, test }] }
}

fn point(v: usize, kind: DofKind, steps: Vec<Step>) -> Dof {
    Dof { attach_dim: 0, attach_local: v, kind, distinguished: false, terms: vec![Term::Point { vertex: v, steps }] }
}

fn dist(mut d: Dof) -> Dof {
    d.distinguished = true;
    d
}

fn harmonic(cell: &SimplexGeom, curl_basis: &[BaryPoly], b: &BaryPoly) -> Dof {
    let all = vec![0, 1, 2];
    let pb = project_onto_curls(cell, curl_basis, b);
    let divb = diff(DiffOp::Div2d, b, cell).unwrap();
    Dof {
        attach_dim: 2,
        attach_local: 0,
        kind: DofKind::HarmonicInnerProduct,
        distinguished: false,
        terms: vec![
            Term::Moment { sub: all.clone(), steps: vec![], test: pb },
            Term::Moment { sub: all, steps: vec![Step::Div], test: divb },
        ],
    }
}

/// DOFs of one slot on a cell whose vertices are in canonical (ascending global) order.
/// The list is grouped by attachment dimension, then local subsimplex, with
/// the distinguished DOF first on its simplex.
pub fn cell_dofs(fam: &ElementFamily, slot: usize, cell: &SimplexGeom) -> Vec<Dof> {
    let k = fam.k as i64;
    let mut out = Vec::new();
    if fam.tag == FamilyTag::Whitney3d {
        match slot {
            0 => {
                for v in 0..4 {
                    out.push(dist(point(v, DofKind::PointEval, vec![])));
                }
            }
            1 => {
                for (i, e) in local_subsets(3, 1).into_iter().enumerate() {
                    let t = sub_geom(cell, &e).tangent();
                    out.push(dist(moment(1, i, DofKind::TangentialMoment, e, vec![Step::Dot(t)], BaryPoly::constant(1, 1.0))));
                }
            }
            2 => {
                for (i, f) in local_subsets(3, 2).into_iter().enumerate() {
                    let n = sub_geom(cell, &f).normal();
                    out.push(dist(moment(2, i, DofKind::NormalMoment, f, vec![Step::Dot(n)], BaryPoly::constant(2, 1.0))));
                }
            }
            _ => out.push(dist(moment(3, 0, DofKind::CellMoment, vec![0, 1, 2, 3], vec![], BaryPoly::constant(3, 1.0)))),
        }
        return out;
    }
    let edges = local_subsets(2, 1);
    let face = vec![0usize, 1, 2];
    let edge_t = |e: &Vec<usize>| sub_geom(cell, e).tangent();
    let edge_n = |e: &Vec<usize>| sub_geom(cell, e).normal();
    let dt_test = |e: &Vec<usize>, b: &BaryPoly| b.dir_deriv(&sub_geom(cell, e), &edge_t(e));
    let curl = |b: &BaryPoly| diff(DiffOp::Curl2d, b, cell).unwrap();
    // slot 2 spaces are all discontinuous P_m with mean-zero interior moments
    let slot2 = |m: i64, out: &mut Vec<Dof>| {
        out.push(dist(moment(2, 0, DofKind::CellMoment, face.clone(), vec![], BaryPoly::constant(2, 1.0))));
        for q in mean_zero_basis(2, m) {
            out.push(moment(2, 0, DofKind::CellMoment, face.clone(), vec![], q));
        }
    };
    match (fam.tag, slot) {
        (FamilyTag::Lrt, 0) | (FamilyTag::Lbdm, 0) => {
            for v in 0..3 {
                out.push(dist(point(v, DofKind::PointEval, vec![])));
            }
            for (i, e) in edges.iter().enumerate() {
                for b in bubble_basis(1, 1, k - 2) {
                    out.push(moment(1, i, DofKind::EdgeMoment, e.clone(), vec![Step::Dir(edge_t(e))], dt_test(e, &b)));
                }
            }
            for b in bubble_basis(2, 1, k - 3) {
                out.push(moment(2, 0, DofKind::CellMoment, face.clone(), vec![Step::Curl], curl(&b)));
            }
        }
        (FamilyTag::Lrt, 1) | (FamilyTag::Lbdm, 1) => {
            for (i, e) in edges.iter().enumerate() {
                let n = edge_n(e);
                out.push(dist(moment(1, i, DofKind::NormalMoment, e.clone(), vec![Step::Dot(n)], BaryPoly::constant(1, 1.0))));
                for b in bubble_basis(1, 1, k - 2) {
                    out.push(moment(1, i, DofKind::NormalMoment, e.clone(), vec![Step::Dot(n)], dt_test(e, &b)));
                }
            }
            for b in bubble_basis(2, 1, k - 3) {
                out.push(moment(2, 0, DofKind::CellMoment, face.clone(), vec![], curl(&b)));
            }
            let m = if fam.tag == FamilyTag::Lrt { k - 1 } else { k - 2 };
            for q in mean_zero_basis(2, m) {
                out.push(moment(2, 0, DofKind::CellMoment, face.clone(), vec![Step::Div], q));
            }
        }
        (FamilyTag::Lrt, _) => slot2(k - 1, &mut out),
        (FamilyTag::Lbdm, _) => slot2(k - 2, &mut out),
        (FamilyTag::Hs, 0) => {
            for v in 0..3 {
                out.push(dist(point(v, DofKind::PointEval, vec![])));
                out.push(point(v, DofKind::PointDerivative, vec![Step::Partial(0)]));
                out.push(point(v, DofKind::PointDerivative, vec![Step::Partial(1)]));
            }
            for (i, e) in edges.iter().enumerate() {
                for b in bubble_basis(1, 2, k - 4) {
                    out.push(moment(1, i, DofKind::EdgeMoment, e.clone(), vec![Step::Dir(edge_t(e))], dt_test(e, &b)));
                }
            }
            for b in bubble_basis(2, 1, k - 3) {
                out.push(moment(2, 0, DofKind::CellMoment, face.clone(), vec![Step::Curl], curl(&b)));
            }
        }
        (FamilyTag::Hs, 1) => {
            for v in 0..3 {
                out.push(point(v, DofKind::PointEval, vec![Step::Component(0)]));
                out.push(point(v, DofKind::PointEval, vec![Step::Component(1)]));
            }
            for (i, e) in edges.iter().enumerate() {
                let n = edge_n(e);
                out.push(dist(moment(1, i, DofKind::NormalMoment, e.clone(), vec![Step::Dot(n)], BaryPoly::constant(1, 1.0))));
                for b in bubble_basis(1, 2, k - 4) {
                    out.push(moment(1, i, DofKind::NormalMoment, e.clone(), vec![Step::Dot(n)], dt_test(e, &b)));
                }
            }
            let w = bubble_basis(2, 1, k - 3);
            for b in bdm_bubble_basis(cell, k - 1) {
                out.push(harmonic(cell, &w, &b));
            }
        }
        (FamilyTag::Hs, _) => slot2(k - 2, &mut out),
        (FamilyTag::Afn, 0) => {
            for v in 0..3 {
                out.push(dist(point(v, DofKind::PointEval, vec![])));
                for steps in [
                    vec![Step::Partial(0)],
                    vec![Step::Partial(1)],
                    vec![Step::Partial(0), Step::Partial(0)],
                    vec![Step::Partial(1), Step::Partial(1)],
                    vec![Step::Partial(0), Step::Partial(1)],
                ] {
                    out.push(point(v, DofKind::PointDerivative, steps));
                }
            }
            for (i, e) in edges.iter().enumerate() {
                for b in bubble_basis(1, 3, k - 6) {
                    out.push(moment(1, i, DofKind::EdgeMoment, e.clone(), vec![Step::Dir(edge_t(e))], dt_test(e, &b)));
                }
                for b in bubble_basis(1, 2, k - 5) {
                    out.push(moment(1, i, DofKind::EdgeMoment, e.clone(), vec![Step::Dir(edge_n(e))], b));
                }
            }
            for b in bubble_basis(2, 2, k - 6) {
                out.push(moment(2, 0, DofKind::CellMoment, face.clone(), vec![Step::Curl], curl(&b)));
            }
        }
        (FamilyTag::Afn, 1) => {
            for v in 0..3 {
                for c in 0..2 {
                    for a in 0..2 {
                        out.push(point(v, DofKind::PointDerivative, vec![Step::Component(c), Step::Partial(a)]));
                    }
                }
                out.push(point(v, DofKind::PointEval, vec![Step::Component(0)]));
                out.push(point(v, DofKind::PointEval, vec![Step::Component(1)]));
            }
            for (i, e) in edges.iter().enumerate() {
                let (n, t) = (edge_n(e), edge_t(e));
                out.push(dist(moment(1, i, DofKind::NormalMoment, e.clone(), vec![Step::Dot(n)], BaryPoly::constant(1, 1.0))));
                for b in bubble_basis(1, 3, k - 6) {
                    out.push(moment(1, i, DofKind::NormalMoment, e.clone(), vec![Step::Dot(n)], dt_test(e, &b)));
                }
                for b in bubble_basis(1, 2, k - 5) {
                    out.push(moment(1, i, DofKind::TangentialMoment, e.clone(), vec![Step::Dot(t)], b));
                }
            }
            let w = bubble_basis(2, 2, k - 6);
            for b in bubble_basis(2, 1, k - 4) {
                for c in 0..2 {
                    out.push(harmonic(cell, &w, &BaryPoly::unit_vector(&b, c, 2)));
                }
            }
        }
        (FamilyTag::Afn, _) => {
            for v in 0..3 {
                out.push(point(v, DofKind::PointEval, vec![]));
            }
            out.push(dist(moment(2, 0, DofKind::CellMoment, face.clone(), vec![], BaryPoly::constant(2, 1.0))));
            for q in vertex_free_mean_zero_basis((k - 2) as usize) {
                out.push(moment(2, 0, DofKind::CellMoment, face.clone(), vec![], q));
            }
        }
        (FamilyTag::Whitney3d, _) => unreachable!(),
    }
    out
}

/// Vector `x - c` as a linear polynomial on the cell.
fn position(cell: &SimplexGeom, c: &Point) -> BaryPoly {
    let d = cell.dim();
    let parts: Vec<BaryPoly> = (0..cell.ambient)
        .map(|i| {
            let mut acc = BaryPoly::zeros(d, 1, 1);
            for (j, v) in cell.verts.iter().enumerate() {
                acc = acc.add(&BaryPoly::bary(d, j).scale(v[i] - c[i]));
            }
            acc
        })
        .collect();
    BaryPoly::from_components(&parts)
}

/// Keeps the members of a spanning list that are independent of the ones kept before.
fn independent_subset(span: Vec<BaryPoly>, tol: f64) -> Vec<BaryPoly> {
    let mut kept: Vec<BaryPoly> = Vec::new();
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    let deg = span.iter().map(|p| p.degree).max().unwrap_or(0);
    for p in span {
        let v: Vec<f64> = p.with_degree(deg).coeffs;
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut w = v.clone();
        for _ in 0..2 {
            for o in &ortho {
                let s: f64 = w.iter().zip(o).map(|(a, b)| a * b).sum();
                for (wi, oi) in w.iter_mut().zip(o) {
                    *wi -= s * oi;
                }
            }
        }
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nw > tol * nv {
            ortho.push(w.iter().map(|x| x / nw).collect());
            kept.push(p);
        }
    }
    kept
}

/// Spanning basis of the shape space of a slot on a cell.
pub fn shape_basis(fam: &ElementFamily, slot: usize, cell: &SimplexGeom) -> Vec<BaryPoly> {
    let d = fam.dim();
    let arity = fam.arity(slot);
    let vec_of = |q: usize| -> Vec<BaryPoly> {
        let mut out = Vec::new();
        for c in 0..arity {
            for b in BaryPoly::homogeneous_basis(d, q) {
                out.push(BaryPoly::unit_vector(&b, c, arity));
            }
        }
        out
    };
    let raviart_thomas = |q: usize| -> Vec<BaryPoly> {
        let mut span = vec_of(q);
        let x = position(cell, &cell.centroid());
        for b in BaryPoly::homogeneous_basis(d, q) {
            span.push(x.mul(&b));
        }
        independent_subset(span, 1e-10)
    };
    match (fam.tag, slot) {
        (FamilyTag::Lrt, 1) => raviart_thomas(fam.k - 1),
        (FamilyTag::Whitney3d, 1) => {
            let x = position(cell, &cell.centroid());
            let mut out = vec_of(0);
            for i in 0..3 {
                // e_i × (x - c)
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                let mut parts = vec![BaryPoly::zeros(3, 1, 1); 3];
                parts[b] = x.component(a);
                parts[a] = x.component(b).scale(-1.0);
                out.push(BaryPoly::from_components(&parts));
            }
            out
        }
        (FamilyTag::Whitney3d, 2) => raviart_thomas(0),
        _ => vec_of(fam.shape_degree(slot)),
    }
}

/// Expected dimension of the shape space.
pub fn shape_dim(fam: &ElementFamily, slot: usize) -> usize {
    let k = fam.k as i64;
    match (fam.tag, slot) {
        (FamilyTag::Lrt, 1) => (k * (k + 2)) as usize,
        (FamilyTag::Whitney3d, 1) => 6,
        (FamilyTag::Whitney3d, 2) => 4,
        _ => fam.arity(slot) * dim_p(fam.dim(), fam.shape_degree(slot) as i64),
    }
}

/// Reference element: shape basis and DOF list on the reference simplex.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub family: ElementFamily,
    pub slot: usize,
    pub geom: SimplexGeom,
    pub shape: Vec<BaryPoly>,
    pub dofs: Vec<Dof>,
}

pub fn reference_simplex(d: usize) -> SimplexGeom {
    let mut verts = vec![[0.0; 3]];
    for i in 0..d {
        let mut p = [0.0; 3];
        p[i] = 1.0;
        verts.push(p);
    }
    SimplexGeom::new(d, verts)
}

pub fn build_reference(fam: &ElementFamily, slot: usize) -> Result<ReferenceElement, ElementError> {
    let fam = ElementFamily::new(fam.tag, fam.k)?;
    if slot > fam.dim() {
        return Err(ElementError::Slot(slot));
    }
    let geom = reference_simplex(fam.dim());
    Ok(ReferenceElement { family: fam, slot, shape: shape_basis(&fam, slot, &geom), dofs: cell_dofs(&fam, slot, &geom), geom })
}

impl ReferenceElement {
    /// Matrix `V[i][j] = dof_i(shape_j)`.
    pub fn dof_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dofs.len(), self.shape.len(), |i, j| self.dofs[i].eval(&self.shape[j], &self.geom))
    }

    /// Replaces DOF `target` by a copy of DOF `source` (mutant for tests).
    pub fn with_duplicated_dof(&self, source: usize, target: usize) -> ReferenceElement {
        let mut m = self.clone();
        m.dofs[target] = m.dofs[source].clone();
        m
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct UnisolvencyReport {
    pub invertible: bool,
    pub condition: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub ndofs: usize,
    pub shape_dim: usize,
}

pub fn check_unisolvency(re: &ReferenceElement) -> UnisolvencyReport {
    let v = re.dof_matrix();
    let (nd, ns) = (v.nrows(), v.ncols());
    let sv = v.singular_values();
    let smax = sv.iter().fold(0.0f64, |a, b| a.max(*b));
    let smin = if nd == ns { sv.iter().fold(f64::INFINITY, |a, b| a.min(*b)) } else { 0.0 };
    UnisolvencyReport {
        invertible: nd == ns && smin > 1e-10 * smax,
        condition: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        sigma_min: smin,
        sigma_max: smax,
        ndofs: nd,
        shape_dim: ns,
    }
}
