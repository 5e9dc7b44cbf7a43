//! Polynomials on simplices in barycentric form, exact integration,
//! quadrature, differential operators and traces.
//!
//! A [`BaryPoly`] on a `d`-simplex stores coefficients over the canonical
//! monomials `λ_0^α_0 ⋯ λ_{d-1}^α_{d-1}`, `|α| ≤ degree`; the last coordinate
//! is eliminated through `λ_d = 1 - Σ λ_i`, so the representation is unique.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::mesh::{dot, Point, SimplexGeom};

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("arity mismatch: operator {op} expects arity {expected}, got {got}")]
    Arity { op: &'static str, expected: usize, got: usize },
    #[error("quadrature of exactness {have} cannot integrate degree {need}")]
    RuleDegree { have: usize, need: usize },
    #[error("simplex is not incident: {0}")]
    NotIncident(String),
    #[error("input is not defined on a planar face")]
    NonPlanar,
}

/// Canonical monomial exponents in `d` variables up to total degree `q`,
/// graded then reverse-lexicographic.
#[derive(Debug)]
pub struct Monomials {
    pub d: usize,
    pub q: usize,
    pub exps: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl Monomials {
    fn build(d: usize, q: usize) -> Self {
        let mut exps = Vec::new();
        for deg in 0..=q {
            let mut cur = vec![0u32; d];
            fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
                if i + 1 == cur.len() {
                    cur[i] = left;
                    out.push(cur.clone());
                    return;
                }
                for a in (0..=left).rev() {
                    cur[i] = a;
                    rec(i + 1, left - a, cur, out);
                }
            }
            if d == 0 {
                if deg == 0 {
                    exps.push(Vec::new());
                }
                continue;
            }
            rec(0, deg as u32, &mut cur, &mut exps);
        }
        let index = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Monomials { d, q, exps, index }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn index_of(&self, e: &[u32]) -> Option<usize> {
        self.index.get(e).copied()
    }
}

pub fn monomials(d: usize, q: usize) -> Arc<Monomials> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Monomials>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = cache.lock().expect("monomial cache poisoned");
    g.entry((d, q)).or_insert_with(|| Arc::new(Monomials::build(d, q))).clone()
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r: usize = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// `dim P_q` on a `d`-simplex (zero for negative degree).
pub fn dim_p(d: usize, q: i64) -> usize {
    if q < 0 {
        0
    } else {
        binomial(q as usize + d, d)
    }
}

/// `∫_T λ^α / |T| = d! α! / (|α| + d)!` for canonical exponents.
pub fn monomial_integral(d: usize, e: &[u32]) -> f64 {
    let s: u32 = e.iter().sum();
    let num: f64 = e.iter().map(|&a| factorial(a)).product::<f64>() * factorial(d as u32);
    num / factorial(s + d as u32)
}

/// Gram matrix `(λ^a, λ^b)_T / |T|` of canonical monomials of degree ≤ q1 and ≤ q2.
pub fn monomial_gram(d: usize, q1: usize, q2: usize) -> Arc<DMatrix<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<DMatrix<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(g) = cache.lock().expect("gram cache poisoned").get(&(d, q1, q2)) {
        return g.clone();
    }
    let (m1, m2) = (monomials(d, q1), monomials(d, q2));
    let mut g = DMatrix::zeros(m1.len(), m2.len());
    for (i, a) in m1.exps.iter().enumerate() {
        for (j, b) in m2.exps.iter().enumerate() {
            let e: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
            g[(i, j)] = monomial_integral(d, &e);
        }
    }
    let g = Arc::new(g);
    cache.lock().expect("gram cache poisoned").insert((d, q1, q2), g.clone());
    g
}

/// Polynomial field on a `d`-simplex with `arity` components.
#[derive(Clone, Debug, PartialEq)]
pub struct BaryPoly {
    pub d: usize,
    pub degree: usize,
    pub arity: usize,
    /// `coeffs[c * n + m]` for component `c`, monomial `m`.
    pub coeffs: Vec<f64>,
}

impl BaryPoly {
    pub fn zeros(d: usize, degree: usize, arity: usize) -> Self {
        let n = monomials(d, degree).len();
        BaryPoly { d, degree, arity, coeffs: vec![0.0; n * arity] }
    }

    pub fn nmon(&self) -> usize {
        monomials(self.d, self.degree).len()
    }

    pub fn constant(d: usize, value: f64) -> Self {
        let mut p = Self::zeros(d, 0, 1);
        p.coeffs[0] = value;
        p
    }

    /// Barycentric coordinate `λ_i`, `0 ≤ i ≤ d`.
    pub fn bary(d: usize, i: usize) -> Self {
        let mut p = Self::zeros(d, 1, 1);
        let mons = monomials(d, 1);
        if i < d {
            let mut e = vec![0u32; d];
            e[i] = 1;
            p.coeffs[mons.index_of(&e).unwrap()] = 1.0;
        } else {
            p.coeffs[0] = 1.0;
            for j in 0..d {
                let mut e = vec![0u32; d];
                e[j] = 1;
                p.coeffs[mons.index_of(&e).unwrap()] = -1.0;
            }
        }
        p
    }

    /// Product `∏ λ_i^{e_i}` over all `d + 1` barycentric coordinates.
    pub fn bary_monomial(d: usize, e: &[u32]) -> Self {
        let mut p = Self::constant(d, 1.0);
        for (i, &a) in e.iter().enumerate() {
            for _ in 0..a {
                p = p.mul(&Self::bary(d, i));
            }
        }
        p
    }

    /// All homogeneous barycentric monomials of degree `q` (a basis of `P_q`).
    pub fn homogeneous_basis(d: usize, q: usize) -> Vec<BaryPoly> {
        let mut out = Vec::new();
        for e in &monomials(d + 1, q).exps {
            if e.iter().sum::<u32>() as usize == q {
                out.push(Self::bary_monomial(d, e));
            }
        }
        out
    }

    pub fn component(&self, c: usize) -> BaryPoly {
        let n = self.nmon();
        BaryPoly { d: self.d, degree: self.degree, arity: 1, coeffs: self.coeffs[c * n..(c + 1) * n].to_vec() }
    }

    pub fn from_components(parts: &[BaryPoly]) -> BaryPoly {
        let d = parts[0].d;
        let degree = parts.iter().map(|p| p.degree).max().unwrap();
        let mut coeffs = Vec::new();
        for p in parts {
            assert_eq!(p.arity, 1);
            coeffs.extend(p.with_degree(degree).coeffs);
        }
        BaryPoly { d, degree, arity: parts.len(), coeffs }
    }

    /// Scalar polynomial times unit vector `e_c` in `R^arity`.
    pub fn unit_vector(p: &BaryPoly, c: usize, arity: usize) -> BaryPoly {
        let z = BaryPoly::zeros(p.d, p.degree, 1);
        let parts: Vec<BaryPoly> = (0..arity).map(|i| if i == c { p.clone() } else { z.clone() }).collect();
        BaryPoly::from_components(&parts)
    }

    /// Re-expresses the polynomial with a different degree cap (≥ actual degree).
    pub fn with_degree(&self, degree: usize) -> BaryPoly {
        if degree == self.degree {
            return self.clone();
        }
        let from = monomials(self.d, self.degree);
        let to = monomials(self.d, degree);
        let mut out = BaryPoly::zeros(self.d, degree, self.arity);
        for c in 0..self.arity {
            for (m, e) in from.exps.iter().enumerate() {
                let v = self.coeffs[c * from.len() + m];
                if v != 0.0 {
                    let j = to.index_of(e).expect("degree cap below polynomial degree");
                    out.coeffs[c * to.len() + j] = v;
                }
            }
        }
        out
    }

    /// Actual total degree (ignoring exact zeros).
    pub fn true_degree(&self) -> usize {
        let mons = monomials(self.d, self.degree);
        let n = mons.len();
        let mut deg = 0;
        for c in 0..self.arity {
            for (m, e) in mons.exps.iter().enumerate() {
                if self.coeffs[c * n + m] != 0.0 {
                    deg = deg.max(e.iter().sum::<u32>() as usize);
                }
            }
        }
        deg
    }

    pub fn add(&self, o: &BaryPoly) -> BaryPoly {
        assert_eq!(self.arity, o.arity);
        let deg = self.degree.max(o.degree);
        let (a, b) = (self.with_degree(deg), o.with_degree(deg));
        BaryPoly { d: self.d, degree: deg, arity: self.arity, coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x + y).collect() }
    }

    pub fn sub(&self, o: &BaryPoly) -> BaryPoly {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> BaryPoly {
        BaryPoly { coeffs: self.coeffs.iter().map(|x| x * s).collect(), ..self.clone() }
    }

    /// Product; one factor must be scalar (the other may be a vector).
    pub fn mul(&self, o: &BaryPoly) -> BaryPoly {
        let (s, v) = if self.arity == 1 { (self, o) } else { (o, self) };
        assert_eq!(s.arity, 1, "product needs a scalar factor");
        let deg = s.degree + v.degree;
        let (ms, mv, mo) = (monomials(s.d, s.degree), monomials(v.d, v.degree), monomials(s.d, deg));
        let mut out = BaryPoly::zeros(s.d, deg, v.arity);
        let (ns, nv, no) = (ms.len(), mv.len(), mo.len());
        let mut e = vec![0u32; s.d];
        for i in 0..ns {
            let a = s.coeffs[i];
            if a == 0.0 {
                continue;
            }
            for j in 0..nv {
                for k in 0..s.d {
                    e[k] = ms.exps[i][k] + mv.exps[j][k];
                }
                let idx = mo.index_of(&e).unwrap();
                for c in 0..v.arity {
                    let b = v.coeffs[c * nv + j];
                    if b != 0.0 {
                        out.coeffs[c * no + idx] += a * b;
                    }
                }
            }
        }
        let _ = ns;
        out
    }

    /// Dot product of two vector fields of equal arity.
    pub fn dot(&self, o: &BaryPoly) -> BaryPoly {
        assert_eq!(self.arity, o.arity);
        let mut acc = BaryPoly::zeros(self.d, self.degree + o.degree, 1);
        for c in 0..self.arity {
            acc = acc.add(&self.component(c).mul(&o.component(c)));
        }
        acc
    }

    /// Contraction with a constant vector.
    pub fn dot_const(&self, v: &[f64]) -> BaryPoly {
        let mut acc = BaryPoly::zeros(self.d, self.degree, 1);
        for c in 0..self.arity {
            if v[c] != 0.0 {
                acc = acc.add(&self.component(c).scale(v[c]));
            }
        }
        acc
    }

    pub fn eval(&self, bary: &[f64]) -> Vec<f64> {
        let mons = monomials(self.d, self.degree);
        let n = mons.len();
        let mut out = vec![0.0; self.arity];
        for (m, e) in mons.exps.iter().enumerate() {
            let mut t = 1.0;
            for (k, &a) in e.iter().enumerate() {
                t *= bary[k].powi(a as i32);
            }
            for c in 0..self.arity {
                out[c] += self.coeffs[c * n + m] * t;
            }
        }
        out
    }

    /// Derivative with respect to the canonical coordinate `λ_i`, `i < d`.
    pub fn d_dlambda(&self, i: usize) -> BaryPoly {
        let nd = self.degree.saturating_sub(1);
        let (from, to) = (monomials(self.d, self.degree), monomials(self.d, nd));
        let mut out = BaryPoly::zeros(self.d, nd, self.arity);
        for (m, e) in from.exps.iter().enumerate() {
            if e[i] == 0 {
                continue;
            }
            let mut f = e.clone();
            f[i] -= 1;
            let j = to.index_of(&f).unwrap();
            for c in 0..self.arity {
                out.coeffs[c * to.len() + j] += e[i] as f64 * self.coeffs[c * from.len() + m];
            }
        }
        out
    }

    /// Directional derivative along a physical vector, using the simplex geometry.
    pub fn dir_deriv(&self, geom: &SimplexGeom, v: &Point) -> BaryPoly {
        let mut acc = BaryPoly::zeros(self.d, self.degree.saturating_sub(1), self.arity);
        for i in 0..self.d {
            let s = dot(&geom.grad_bary[i], v);
            if s != 0.0 {
                acc = acc.add(&self.d_dlambda(i).scale(s));
            }
        }
        acc
    }

    /// Partial derivative along Cartesian axis `axis`.
    pub fn partial(&self, geom: &SimplexGeom, axis: usize) -> BaryPoly {
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        self.dir_deriv(geom, &e)
    }

    /// `∫_T p` for each component.
    pub fn integrate(&self, measure: f64) -> Vec<f64> {
        let mons = monomials(self.d, self.degree);
        let n = mons.len();
        let w: Vec<f64> = mons.exps.iter().map(|e| monomial_integral(self.d, e)).collect();
        (0..self.arity)
            .map(|c| measure * (0..n).map(|m| self.coeffs[c * n + m] * w[m]).sum::<f64>())
            .collect()
    }

    /// Substitutes each canonical coordinate `λ_i` (i < d) by a scalar
    /// polynomial in another simplex's coordinates.
    pub fn compose(&self, subs: &[BaryPoly]) -> BaryPoly {
        let td = subs[0].d;
        let mons = monomials(self.d, self.degree);
        let n = mons.len();
        let maxdeg = subs.iter().map(|s| s.degree).max().unwrap_or(0);
        let mut out = BaryPoly::zeros(td, self.degree * maxdeg.max(1), self.arity);
        // powers[i][a] = subs[i]^a
        let mut powers: Vec<Vec<BaryPoly>> = Vec::new();
        for s in subs {
            let mut row = vec![BaryPoly::constant(td, 1.0)];
            for a in 1..=self.degree {
                let next = row[a - 1].mul(s);
                row.push(next);
            }
            powers.push(row);
        }
        for (m, e) in mons.exps.iter().enumerate() {
            if (0..self.arity).all(|c| self.coeffs[c * n + m] == 0.0) {
                continue;
            }
            let mut t = BaryPoly::constant(td, 1.0);
            for (i, &a) in e.iter().enumerate() {
                if a > 0 {
                    t = t.mul(&powers[i][a as usize]);
                }
            }
            let t = t.with_degree(out.degree);
            let nt = t.nmon();
            for c in 0..self.arity {
                let v = self.coeffs[c * n + m];
                if v != 0.0 {
                    for j in 0..nt {
                        out.coeffs[c * nt + j] += v * t.coeffs[j];
                    }
                }
            }
        }
        out
    }

    /// Restriction to the subsimplex spanned by the local vertices `verts`
    /// (ascending), expressed in the subsimplex's own barycentrics.
    pub fn trace(&self, verts: &[usize]) -> Result<BaryPoly, PolyError> {
        if verts.is_empty() || verts.iter().any(|&v| v > self.d) || verts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PolyError::NotIncident(format!("{verts:?} in a {}-simplex", self.d)));
        }
        let m = verts.len() - 1;
        let subs: Vec<BaryPoly> = (0..self.d)
            .map(|i| match verts.iter().position(|&v| v == i) {
                Some(l) => BaryPoly::bary(m, l),
                None => BaryPoly::zeros(m, 0, 1),
            })
            .collect();
        if self.d == 0 {
            return Ok(self.clone());
        }
        let mut t = self.compose(&subs);
        if m == 0 {
            // compose over zero variables keeps only the constant term
            t.degree = 0;
            t.coeffs = (0..self.arity).map(|c| self.eval_at_vertex(verts[0])[c]).collect();
            return Ok(t);
        }
        Ok(t.with_degree_trim(self.degree))
    }

    fn eval_at_vertex(&self, v: usize) -> Vec<f64> {
        let mut b = vec![0.0; self.d];
        if v < self.d {
            b[v] = 1.0;
        }
        self.eval(&b)
    }

    /// Lowers the degree cap, assuming all higher coefficients vanish.
    pub fn with_degree_trim(&self, degree: usize) -> BaryPoly {
        if degree >= self.degree {
            return self.with_degree(degree);
        }
        let from = monomials(self.d, self.degree);
        let to = monomials(self.d, degree);
        let mut out = BaryPoly::zeros(self.d, degree, self.arity);
        for c in 0..self.arity {
            for (m, e) in from.exps.iter().enumerate() {
                if let Some(j) = to.index_of(e) {
                    out.coeffs[c * to.len() + j] = self.coeffs[c * from.len() + m];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

/// Differential operators acting on polynomial fields on a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffOp {
    Grad,
    Curl2d,
    Div2d,
    Rot2d,
    Grad3d,
    Curl3d,
    Div3d,
}

pub fn diff(op: DiffOp, p: &BaryPoly, geom: &SimplexGeom) -> Result<BaryPoly, PolyError> {
    let need = |name: &'static str, a: usize| {
        if p.arity != a {
            Err(PolyError::Arity { op: name, expected: a, got: p.arity })
        } else {
            Ok(())
        }
    };
    let dx = |q: &BaryPoly, a: usize| q.partial(geom, a);
    Ok(match op {
        DiffOp::Grad => {
            need("grad", 1)?;
            let parts: Vec<BaryPoly> = (0..geom.ambient).map(|a| dx(p, a)).collect();
            BaryPoly::from_components(&parts)
        }
        DiffOp::Grad3d => {
            need("grad3d", 1)?;
            BaryPoly::from_components(&[dx(p, 0), dx(p, 1), dx(p, 2)])
        }
        DiffOp::Curl2d => {
            need("curl2d", 1)?;
            BaryPoly::from_components(&[dx(p, 1), dx(p, 0).scale(-1.0)])
        }
        DiffOp::Div2d => {
            need("div2d", 2)?;
            dx(&p.component(0), 0).add(&dx(&p.component(1), 1))
        }
        DiffOp::Rot2d => {
            need("rot2d", 2)?;
            dx(&p.component(1), 0).sub(&dx(&p.component(0), 1))
        }
        DiffOp::Curl3d => {
            need("curl3d", 3)?;
            let (u, v, w) = (p.component(0), p.component(1), p.component(2));
            BaryPoly::from_components(&[
                dx(&w, 1).sub(&dx(&v, 2)),
                dx(&u, 2).sub(&dx(&w, 0)),
                dx(&v, 0).sub(&dx(&u, 1)),
            ])
        }
        DiffOp::Div3d => {
            need("div3d", 3)?;
            dx(&p.component(0), 0).add(&dx(&p.component(1), 1)).add(&dx(&p.component(2), 2))
        }
    })
}

/// Surface operators on a planar face of a 3D mesh with frame `(t1, t2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceOp {
    /// `grad_f u = (∂u/∂t1, ∂u/∂t2)`
    GradF,
    /// `curl_f u = (-∂u/∂t2, ∂u/∂t1)`
    CurlF,
    /// `div_f v = ∂v1/∂t1 + ∂v2/∂t2`
    DivF,
    /// `rot_f v = -∂v2/∂t1 + ∂v1/∂t2`
    RotF,
    /// `E_f v = (v·t1, v·t2)` for a 3-vector field
    TangentialPart,
}

/// Applies a surface operator to a polynomial given in the face's own barycentrics.
pub fn surface_op(op: SurfaceOp, face: &SimplexGeom, p: &BaryPoly) -> Result<BaryPoly, PolyError> {
    if face.dim() != 2 || face.ambient != 3 || p.d != 2 {
        return Err(PolyError::NonPlanar);
    }
    let (t1, t2, _) = face.face_frame();
    let dt = |q: &BaryPoly, t: &Point| q.dir_deriv(face, t);
    let need = |name: &'static str, a: usize| {
        if p.arity != a {
            Err(PolyError::Arity { op: name, expected: a, got: p.arity })
        } else {
            Ok(())
        }
    };
    Ok(match op {
        SurfaceOp::GradF => {
            need("grad_f", 1)?;
            BaryPoly::from_components(&[dt(p, &t1), dt(p, &t2)])
        }
        SurfaceOp::CurlF => {
            need("curl_f", 1)?;
            BaryPoly::from_components(&[dt(p, &t2).scale(-1.0), dt(p, &t1)])
        }
        SurfaceOp::DivF => {
            need("div_f", 2)?;
            dt(&p.component(0), &t1).add(&dt(&p.component(1), &t2))
        }
        SurfaceOp::RotF => {
            need("rot_f", 2)?;
            dt(&p.component(0), &t2).sub(&dt(&p.component(1), &t1))
        }
        SurfaceOp::TangentialPart => {
            need("E_f", 3)?;
            BaryPoly::from_components(&[p.dot_const(&t1), p.dot_const(&t2)])
        }
    })
}

/// Exact integral of a polynomial over a physical simplex, optionally
/// through a quadrature rule (which must be exact for its degree).
pub fn integrate(p: &BaryPoly, geom: &SimplexGeom, rule: Option<&QuadratureRule>) -> Result<Vec<f64>, PolyError> {
    match rule {
        None => Ok(p.integrate(geom.measure)),
        Some(r) => {
            let need = p.true_degree();
            if r.degree < need {
                return Err(PolyError::RuleDegree { have: r.degree, need });
            }
            let scale = geom.measure * factorial(p.d as u32);
            let mut acc = vec![0.0; p.arity];
            for (b, w) in r.points.iter().zip(&r.weights) {
                let v = p.eval(&b[..p.d]);
                for c in 0..p.arity {
                    acc[c] += w * v[c] * scale;
                }
            }
            Ok(acc)
        }
    }
}

/// Conical-product (collapsed coordinate) quadrature on the reference simplex.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub d: usize,
    pub degree: usize,
    /// Barycentric tuples of length `d + 1`.
    pub points: Vec<Vec<f64>>,
    /// Sum to the reference volume `1/d!`.
    pub weights: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs.push(0.5 * (1.0 - x));
        ws.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    let mut pairs: Vec<(f64, f64)> = xs.into_iter().zip(ws).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

impl QuadratureRule {
    /// Rule exact for polynomials of total degree ≤ `degree` on a `d`-simplex.
    pub fn new(d: usize, degree: usize) -> Self {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), QuadratureRule>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(r) = cache.lock().expect("rule cache poisoned").get(&(d, degree)) {
            return r.clone();
        }
        let n = (degree + d).div_ceil(2).max(1);
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match d {
            0 => {
                points.push(vec![1.0]);
                weights.push(1.0);
            }
            1 => {
                for i in 0..n {
                    points.push(vec![x[i], 1.0 - x[i]]);
                    weights.push(w[i]);
                }
            }
            2 => {
                for i in 0..n {
                    for j in 0..n {
                        let (u, v) = (x[i], x[j]);
                        let (px, py) = (u * (1.0 - v), v);
                        points.push(vec![px, py, 1.0 - px - py]);
                        weights.push(w[i] * w[j] * (1.0 - v));
                    }
                }
            }
            3 => {
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let (u, v, s) = (x[i], x[j], x[k]);
                            let (px, py, pz) = (u * (1.0 - v) * (1.0 - s), v * (1.0 - s), s);
                            points.push(vec![px, py, pz, 1.0 - px - py - pz]);
                            weights.push(w[i] * w[j] * w[k] * (1.0 - v) * (1.0 - s) * (1.0 - s));
                        }
                    }
                }
            }
            _ => panic!("quadrature supports d <= 3"),
        }
        let r = QuadratureRule { d, degree, points, weights };
        cache.lock().expect("rule cache poisoned").insert((d, degree), r.clone());
        r
    }

    /// `∫_T f` over a physical simplex for a pointwise integrand.
    pub fn apply<F: FnMut(&Point, &[f64]) -> f64>(&self, geom: &SimplexGeom, mut f: F) -> f64 {
        let scale = geom.measure * factorial(self.d as u32);
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| w * f(&geom.point(b), b) * scale)
            .sum()
    }
}
