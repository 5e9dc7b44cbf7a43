//! Input fields and their cellwise moments against monomials.

use std::sync::Arc;

use nalgebra::DVector;

use crate::elements::{FeFunction, FeSpace};
use crate::mesh::{Point, SimplexGeom, SimplicialMesh};
use crate::poly::{factorial, monomial_gram, monomials, BaryPoly, QuadratureRule};

pub type PointFn = Arc<dyn Fn(&Point) -> Vec<f64> + Send + Sync>;
pub type CellFn = Arc<dyn Fn(usize, &SimplexGeom) -> BaryPoly + Send + Sync>;

/// How a field is sampled.
#[derive(Clone)]
pub enum FieldSource {
    /// Pointwise evaluator, integrated by quadrature.
    Analytic { f: PointFn, degree_hint: usize },
    /// Exact polynomial on every cell (polynomial or discrete inputs).
    Cellwise(CellFn),
}

impl std::fmt::Debug for FieldSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldSource::Analytic { degree_hint, .. } => write!(f, "Analytic(degree_hint={degree_hint})"),
            FieldSource::Cellwise(_) => write!(f, "Cellwise"),
        }
    }
}

/// A field together with its exterior derivative (absent for the last slot).
#[derive(Clone, Debug)]
pub struct InputField {
    pub arity: usize,
    pub value: FieldSource,
    pub diff: Option<FieldSource>,
}

/// Cartesian monomial `∏ x_i^{e_i}` as a polynomial on a cell.
pub fn cartesian_monomial(geom: &SimplexGeom, e: &[u32]) -> BaryPoly {
    let d = geom.dim();
    let mut p = BaryPoly::constant(d, 1.0);
    for (axis, &a) in e.iter().enumerate() {
        if a == 0 {
            continue;
        }
        let mut x = BaryPoly::zeros(d, 1, 1);
        for (j, v) in geom.verts.iter().enumerate() {
            x = x.add(&BaryPoly::bary(d, j).scale(v[axis]));
        }
        for _ in 0..a {
            p = p.mul(&x);
        }
    }
    p
}

/// A Cartesian polynomial given as `(coefficient, exponents)` terms per component.
#[derive(Clone, Debug, PartialEq)]
pub struct CartesianPoly {
    pub dim: usize,
    pub components: Vec<Vec<(f64, Vec<u32>)>>,
}

impl CartesianPoly {
    pub fn arity(&self) -> usize {
        self.components.len()
    }

    pub fn degree(&self) -> usize {
        self.components
            .iter()
            .flat_map(|c| c.iter().map(|t| t.1.iter().sum::<u32>() as usize))
            .max()
            .unwrap_or(0)
    }

    pub fn on_cell(&self, geom: &SimplexGeom) -> BaryPoly {
        let d = geom.dim();
        let deg = self.degree();
        let parts: Vec<BaryPoly> = self
            .components
            .iter()
            .map(|terms| {
                let mut acc = BaryPoly::zeros(d, deg, 1);
                for (c, e) in terms {
                    acc = acc.add(&cartesian_monomial(geom, e).scale(*c));
                }
                acc.with_degree(deg)
            })
            .collect();
        BaryPoly::from_components(&parts)
    }

    pub fn eval(&self, x: &Point) -> Vec<f64> {
        self.components
            .iter()
            .map(|terms| terms.iter().map(|(c, e)| c * e.iter().enumerate().map(|(i, &a)| x[i].powi(a as i32)).product::<f64>()).sum())
            .collect()
    }

    /// Random polynomial of total degree ≤ `degree` with coefficients in `[-1, 1]`.
    pub fn random<R: rand::Rng>(rng: &mut R, dim: usize, arity: usize, degree: usize) -> Self {
        let mons = monomials(dim, degree);
        let components = (0..arity)
            .map(|_| mons.exps.iter().map(|e| (rng.gen_range(-1.0..1.0), e.clone())).collect())
            .collect();
        CartesianPoly { dim, components }
    }
}

/// Moment layout of one slot: per cell, `arity × nmon(degree)` values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MomentLayout {
    pub dim: usize,
    pub arity: usize,
    pub degree: usize,
}

impl MomentLayout {
    pub fn block(&self) -> usize {
        self.arity * monomials(self.dim, self.degree).len()
    }

    pub fn column(&self, cell: usize, c: usize) -> usize {
        cell * self.block() + c
    }
}

/// `∫_K f · unit_c` for every cell `K` and monomial unit `c` of the layout.
pub fn moments(mesh: &SimplicialMesh, layout: MomentLayout, src: &FieldSource, quad_bump: usize) -> Vec<f64> {
    use rayon::prelude::*;
    let d = mesh.dim();
    let mons = monomials(d, layout.degree);
    let n = mons.len();
    let block = layout.block();
    let per_cell: Vec<Vec<f64>> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = mesh.cell_geom(c);
            match src {
                FieldSource::Cellwise(f) => {
                    let p = f(c, &geom);
                    assert_eq!(p.arity, layout.arity, "field arity");
                    let g = monomial_gram(d, layout.degree, p.degree);
                    let np = p.nmon();
                    let mut out = vec![0.0; block];
                    for comp in 0..layout.arity {
                        let pc = DVector::from_column_slice(&p.coeffs[comp * np..(comp + 1) * np]);
                        let m = g.as_ref() * pc * geom.measure;
                        out[comp * n..(comp + 1) * n].copy_from_slice(m.as_slice());
                    }
                    out
                }
                FieldSource::Analytic { f, degree_hint } => {
                    let rule = QuadratureRule::new(d, layout.degree + degree_hint + quad_bump);
                    let scale = geom.measure * factorial(d as u32);
                    let mut out = vec![0.0; block];
                    for (b, w) in rule.points.iter().zip(&rule.weights) {
                        let fx = f(&geom.point(b));
                        assert_eq!(fx.len(), layout.arity, "field arity");
                        for (m, e) in mons.exps.iter().enumerate() {
                            let mut t = w * scale;
                            for (k, &a) in e.iter().enumerate() {
                                t *= b[k].powi(a as i32);
                            }
                            for comp in 0..layout.arity {
                                out[comp * n + m] += t * fx[comp];
                            }
                        }
                    }
                    out
                }
            }
        })
        .collect();
    per_cell.concat()
}

/// Cellwise-polynomial source of a discrete function.
pub fn fe_source(space: &FeSpace, u: &FeFunction) -> FieldSource {
    let space = space.clone();
    let coeffs = u.coeffs.clone();
    FieldSource::Cellwise(Arc::new(move |c, _| space.cell_poly(c, &coeffs)))
}

/// Cellwise-polynomial source of a Cartesian polynomial.
pub fn poly_source(p: &CartesianPoly) -> FieldSource {
    let p = p.clone();
    FieldSource::Cellwise(Arc::new(move |_, g| p.on_cell(g)))
}

/// Input field for a discrete function together with its exact differential.
pub fn fe_input(cx: &crate::elements::FeComplex, u: &FeFunction) -> InputField {
    let s = u.slot;
    let space = &cx.spaces[s];
    let diff = (s < cx.family.dim()).then(|| fe_source(&cx.spaces[s + 1], &cx.apply_d(s, u)));
    InputField { arity: space.arity, value: fe_source(space, u), diff }
}

/// Input field for a Cartesian polynomial; the differential of slot `slot` is taken exactly.
pub fn poly_input(p: &CartesianPoly, slot: usize) -> InputField {
    let dim = p.dim;
    let diff = (slot < dim).then(|| {
        let p = p.clone();
        FieldSource::Cellwise(Arc::new(move |_, g: &SimplexGeom| {
            let q = p.on_cell(g);
            crate::poly::diff(differential(dim, slot), &q, g).expect("slot arity")
        }))
    });
    InputField { arity: p.arity(), value: poly_source(p), diff }
}

/// The exterior derivative acting on slot `slot` of a `dim`-dimensional complex.
pub fn differential(dim: usize, slot: usize) -> crate::poly::DiffOp {
    use crate::poly::DiffOp;
    match (dim, slot) {
        (2, 0) => DiffOp::Curl2d,
        (2, _) => DiffOp::Div2d,
        (_, 0) => DiffOp::Grad3d,
        (_, 1) => DiffOp::Curl3d,
        _ => DiffOp::Div3d,
    }
}

/// `‖f‖²_{L2(K)}` for every cell `K`.
pub fn cell_l2_sq(mesh: &SimplicialMesh, src: &FieldSource, quad_bump: usize) -> Vec<f64> {
    use rayon::prelude::*;
    let d = mesh.dim();
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let geom = mesh.cell_geom(c);
            match src {
                FieldSource::Cellwise(f) => {
                    let p = f(c, &geom);
                    let g = monomial_gram(d, p.degree, p.degree);
                    let np = p.nmon();
                    (0..p.arity)
                        .map(|comp| {
                            let pc = DVector::from_column_slice(&p.coeffs[comp * np..(comp + 1) * np]);
                            pc.dot(&(g.as_ref() * &pc))
                        })
                        .sum::<f64>()
                        * geom.measure
                }
                FieldSource::Analytic { f, degree_hint } => {
                    let rule = QuadratureRule::new(d, 2 * degree_hint + quad_bump);
                    let scale = geom.measure * factorial(d as u32);
                    rule.points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(b, w)| w * scale * f(&geom.point(b)).iter().map(|v| v * v).sum::<f64>())
                        .sum()
                }
            }
        })
        .collect()
}
