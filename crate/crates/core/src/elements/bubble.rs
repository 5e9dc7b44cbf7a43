//! Edge and face bubble spaces and the exactness of their complexes.

use nalgebra::DMatrix;
use serde::Serialize;

use super::dofs::{bdm_bubble_basis, bubble_basis, reference_simplex, vertex_free_mean_zero_basis, FamilyTag};
use super::ElementError;
use crate::linalg;
use crate::mesh::{local_subsets, SimplexGeom};
use crate::poly::{diff, dim_p, monomials, BaryPoly, DiffOp};

/// Which boundary trace a bubble must annihilate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BubbleKind {
    /// The value vanishes on the boundary.
    Value,
    /// The normal component vanishes on the boundary.
    Normal,
    /// No boundary condition (quotient or full polynomial spaces).
    Free,
}

/// A polynomial space on a reference edge or triangle given by a basis.
#[derive(Clone, Debug)]
pub struct BubbleSpace {
    pub host_dim: usize,
    pub kind: BubbleKind,
    pub description: String,
    pub basis: Vec<BaryPoly>,
}

impl BubbleSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Largest coefficient of the relevant boundary trace over all basis members.
    pub fn boundary_residual(&self) -> f64 {
        let geom = reference_simplex(self.host_dim);
        let mut worst: f64 = 0.0;
        for b in &self.basis {
            for f in local_subsets(self.host_dim, self.host_dim - 1) {
                let r = match self.kind {
                    BubbleKind::Value => b.trace(&f).expect("facet").max_abs(),
                    BubbleKind::Normal => {
                        let fg = SimplexGeom::new(geom.ambient, f.iter().map(|&i| geom.verts[i]).collect());
                        b.dot_const(&fg.normal()).trace(&f).expect("facet").max_abs()
                    }
                    BubbleKind::Free => 0.0,
                };
                worst = worst.max(r);
            }
        }
        worst
    }

    /// Restriction to the mean-zero subspace.
    pub fn mean_zero(&self) -> BubbleSpace {
        let n = self.basis.len();
        if n == 0 {
            return self.clone();
        }
        let means = DMatrix::from_fn(1, n, |_, j| self.basis[j].integrate(1.0)[0]);
        let null = linalg::null_space(&means, 1e-12);
        let basis = null
            .column_iter()
            .map(|c| {
                let mut acc = self.basis[0].scale(0.0);
                for (j, b) in self.basis.iter().enumerate() {
                    acc = acc.add(&b.scale(c[j]));
                }
                acc
            })
            .collect();
        BubbleSpace { basis, description: format!("{} / R", self.description), ..self.clone() }
    }
}

/// Named bubble complexes `0 → X → Y → Z/R → 0` (faces) or `0 → X → Y/R → 0` (edges).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BubbleComplex {
    /// `λ0λ1 P_{k-2} → P_{k-1}/R` by `∂/∂t` (LRT and LBDM edges).
    LagrangeEdge { k: usize },
    /// `(λ0λ1)² P_{k-4} → λ0λ1 P_{k-3}/R` (HS edges).
    HermiteEdge { k: usize },
    /// `(λ0λ1)³ P_{k-6} → (λ0λ1)² P_{k-5}/R` (AFN edges).
    ArgyrisEdge { k: usize },
    /// `b P_{k-3} → B^BDM_{k-1} → P_{k-2}/R` by curl, div (LBDM and HS faces).
    BdmFace { family: FamilyTag, k: usize },
    /// `b² P_{k-6} → [b P_{k-4}]² → P^{(0)}_{k-2}/R` (AFN faces).
    ArgyrisFace { k: usize },
    /// `b³ P_{k-9} → b² B^BDM_{k-7} → b² P_{k-8}/R` (Neilan face bubbles).
    NeilanFace { k: usize },
}

impl BubbleComplex {
    pub fn name(&self) -> String {
        match self {
            BubbleComplex::LagrangeEdge { k } => format!("lagrange-edge-k{k}"),
            BubbleComplex::HermiteEdge { k } => format!("hermite-edge-k{k}"),
            BubbleComplex::ArgyrisEdge { k } => format!("argyris-edge-k{k}"),
            BubbleComplex::BdmFace { family, k } => format!("{}-face-k{k}", family.name()),
            BubbleComplex::ArgyrisFace { k } => format!("afn-face-k{k}"),
            BubbleComplex::NeilanFace { k } => format!("neilan-face-k{k}"),
        }
    }

    fn min_degree(&self) -> usize {
        match self {
            BubbleComplex::LagrangeEdge { .. } => 1,
            BubbleComplex::HermiteEdge { .. } => 3,
            BubbleComplex::ArgyrisEdge { .. } | BubbleComplex::ArgyrisFace { .. } => 5,
            BubbleComplex::BdmFace { family, .. } => family.min_degree(),
            BubbleComplex::NeilanFace { .. } => 9,
        }
    }

    fn degree(&self) -> usize {
        match *self {
            BubbleComplex::LagrangeEdge { k }
            | BubbleComplex::HermiteEdge { k }
            | BubbleComplex::ArgyrisEdge { k }
            | BubbleComplex::BdmFace { k, .. }
            | BubbleComplex::ArgyrisFace { k }
            | BubbleComplex::NeilanFace { k } => k,
        }
    }

    /// Closed-form dimension identity `dim X + dim Z/R = dim Y` (faces) or
    /// `dim X = dim Y/R` (edges), evaluated in integers.
    pub fn integer_identity(&self) -> (Vec<i64>, bool) {
        let p = |d: usize, q: i64| dim_p(d, q) as i64;
        let k = self.degree() as i64;
        match self {
            BubbleComplex::LagrangeEdge { .. } => (vec![p(1, k - 2), p(1, k - 1) - 1], p(1, k - 2) == p(1, k - 1) - 1),
            BubbleComplex::HermiteEdge { .. } => (vec![p(1, k - 4), p(1, k - 3) - 1], p(1, k - 4) == p(1, k - 3) - 1),
            BubbleComplex::ArgyrisEdge { .. } => (vec![p(1, k - 6), p(1, k - 5) - 1], p(1, k - 6) == p(1, k - 5) - 1),
            BubbleComplex::BdmFace { .. } => {
                let y = k * (k - 2);
                (vec![p(2, k - 3), y, p(2, k - 2) - 1], p(2, k - 3) + p(2, k - 2) - 1 == y)
            }
            BubbleComplex::ArgyrisFace { .. } => {
                let z = p(2, k - 2) - 3 - 1;
                let y = 2 * p(2, k - 4);
                (vec![p(2, k - 6), y, z], p(2, k - 6) + z == (k - 2) * (k - 3) && (k - 2) * (k - 3) == y)
            }
            BubbleComplex::NeilanFace { .. } => {
                let y = (k - 6) * (k - 8);
                (vec![p(2, k - 9), y, p(2, k - 8) - 1], p(2, k - 9) + p(2, k - 8) - 1 == y)
            }
        }
    }

    /// Bubble spaces of the complex on the reference simplex.
    pub fn spaces(&self) -> Vec<BubbleSpace> {
        let k = self.degree() as i64;
        let sp = |host_dim, kind, description: String, basis| BubbleSpace { host_dim, kind, description, basis };
        let tri = reference_simplex(2);
        let b = BaryPoly::bary_monomial(2, &[1, 1, 1]);
        match self {
            BubbleComplex::LagrangeEdge { .. } => vec![
                sp(1, BubbleKind::Value, format!("λ0λ1 P_{}", k - 2), bubble_basis(1, 1, k - 2)),
                sp(1, BubbleKind::Free, format!("P_{}", k - 1), BaryPoly::homogeneous_basis(1, (k - 1) as usize))
                    .mean_zero(),
            ],
            BubbleComplex::HermiteEdge { .. } => vec![
                sp(1, BubbleKind::Value, format!("(λ0λ1)² P_{}", k - 4), bubble_basis(1, 2, k - 4)),
                sp(1, BubbleKind::Value, format!("λ0λ1 P_{}", k - 3), bubble_basis(1, 1, k - 3)).mean_zero(),
            ],
            BubbleComplex::ArgyrisEdge { .. } => vec![
                sp(1, BubbleKind::Value, format!("(λ0λ1)³ P_{}", k - 6), bubble_basis(1, 3, k - 6)),
                sp(1, BubbleKind::Value, format!("(λ0λ1)² P_{}", k - 5), bubble_basis(1, 2, k - 5)).mean_zero(),
            ],
            BubbleComplex::BdmFace { .. } => vec![
                sp(2, BubbleKind::Value, format!("b P_{}", k - 3), bubble_basis(2, 1, k - 3)),
                sp(2, BubbleKind::Normal, format!("B^BDM_{}", k - 1), bdm_bubble_basis(&tri, k - 1)),
                sp(2, BubbleKind::Free, format!("P_{}", k - 2), BaryPoly::homogeneous_basis(2, (k - 2) as usize))
                    .mean_zero(),
            ],
            BubbleComplex::ArgyrisFace { .. } => {
                let mut y = Vec::new();
                for c in 0..2 {
                    for q in bubble_basis(2, 1, k - 4) {
                        y.push(BaryPoly::unit_vector(&q, c, 2));
                    }
                }
                vec![
                    sp(2, BubbleKind::Value, format!("b² P_{}", k - 6), bubble_basis(2, 2, k - 6)),
                    sp(2, BubbleKind::Value, format!("[b P_{}]²", k - 4), y),
                    BubbleSpace {
                        host_dim: 2,
                        kind: BubbleKind::Free,
                        description: format!("P^(0)_{} / R", k - 2),
                        basis: vertex_free_mean_zero_basis((k - 2) as usize),
                    },
                ]
            }
            BubbleComplex::NeilanFace { .. } => {
                let b2 = b.mul(&b);
                let y = bdm_bubble_basis(&tri, k - 7).iter().map(|e| b2.mul(e)).collect();
                vec![
                    sp(2, BubbleKind::Value, format!("b³ P_{}", k - 9), bubble_basis(2, 3, k - 9)),
                    sp(2, BubbleKind::Value, format!("b² B^BDM_{}", k - 7), y),
                    sp(2, BubbleKind::Value, format!("b² P_{}", k - 8), bubble_basis(2, 2, k - 8)).mean_zero(),
                ]
            }
        }
    }

    pub fn maps(&self) -> Vec<DiffOp> {
        match self {
            BubbleComplex::LagrangeEdge { .. } | BubbleComplex::HermiteEdge { .. } | BubbleComplex::ArgyrisEdge { .. } => {
                vec![DiffOp::Grad]
            }
            _ => vec![DiffOp::Curl2d, DiffOp::Div2d],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BubbleComplexReport {
    pub name: String,
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub closed_form: Vec<i64>,
    pub identity_holds: bool,
    pub boundary_residual: f64,
    /// Distance of each map's image from its codomain span.
    pub membership_residual: f64,
    pub composition_norm: f64,
    pub is_complex: bool,
    pub exact: bool,
}

fn coeff_matrix(ps: &[BaryPoly], degree: usize) -> DMatrix<f64> {
    let n = ps.first().map(|p| p.arity * monomials(p.d, degree).len()).unwrap_or(0);
    DMatrix::from_fn(n, ps.len(), |i, j| ps[j].with_degree(degree).coeffs[i])
}

/// Degree cap large enough for every polynomial in the list.
fn cap(ps: &[BaryPoly]) -> usize {
    ps.iter().map(|p| p.degree).max().unwrap_or(0)
}

/// Applies the map to each basis member; for edges `∂/∂t` is the derivative along the reference edge.
fn apply(op: DiffOp, basis: &[BaryPoly], geom: &SimplexGeom) -> Vec<BaryPoly> {
    basis
        .iter()
        .map(|p| match op {
            DiffOp::Grad if p.d == 1 => p.dir_deriv(geom, &geom.tangent()),
            _ => diff(op, p, geom).expect("bubble map arity"),
        })
        .collect()
}

/// Expresses images in the codomain basis; returns the coefficient matrix
/// and the least-squares residual of the expansion.
fn expand(images: &[BaryPoly], codomain: &[BaryPoly]) -> (DMatrix<f64>, f64) {
    if images.is_empty() || codomain.is_empty() {
        let res = images.iter().map(|p| p.max_abs()).fold(0.0, f64::max);
        return (DMatrix::zeros(codomain.len(), images.len()), res);
    }
    let deg = cap(images).max(cap(codomain));
    let c = coeff_matrix(codomain, deg);
    let im = coeff_matrix(images, deg);
    let x = linalg::lstsq(&c, &im, 1e-12);
    let res = (&c * &x - &im).amax() / im.amax().max(1.0);
    (x, res)
}

/// Assembles the maps of a bubble complex and checks `d∘d = 0`, exactness and the dimension identity.
pub fn bubble_complex_check(cx: BubbleComplex) -> Result<BubbleComplexReport, ElementError> {
    let k = cx.degree();
    if k < cx.min_degree() {
        return Err(ElementError::Degree { family: "bubble complex", k, min: cx.min_degree() });
    }
    Ok(analyse_bubble_spaces(cx.name(), &cx.spaces(), &cx.maps(), cx.integer_identity()))
}

/// Complex and exactness analysis of explicit bubble spaces linked by `ops`.
pub fn analyse_bubble_spaces(name: String, spaces: &[BubbleSpace], ops: &[DiffOp], integer_identity: (Vec<i64>, bool)) -> BubbleComplexReport {
    let geom = reference_simplex(spaces[0].host_dim);
    let dims: Vec<usize> = spaces.iter().map(|s| s.dim()).collect();
    let (closed_form, identity) = integer_identity;
    let boundary_residual = spaces.iter().map(|s| s.boundary_residual()).fold(0.0, f64::max);
    let mut mats = Vec::new();
    let mut membership: f64 = 0.0;
    for (i, op) in ops.iter().enumerate() {
        let images = apply(*op, &spaces[i].basis, &geom);
        let (m, r) = expand(&images, &spaces[i + 1].basis);
        membership = membership.max(r);
        mats.push(m);
    }
    let ranks: Vec<usize> = mats.iter().map(|m| linalg::rank(m, 1e-10)).collect();
    let composition_norm = if mats.len() == 2 && mats[0].ncols() > 0 && mats[1].nrows() > 0 {
        (&mats[1] * &mats[0]).amax()
    } else {
        0.0
    };
    let is_complex = composition_norm < 1e-10 && membership < 1e-10;
    // exact: injective first map, kernel of each map equals image of the previous one, surjective last map
    let injective = ranks[0] == dims[0];
    let surjective = *ranks.last().unwrap() == *dims.last().unwrap();
    let middle = mats.len() < 2 || dims[1] - ranks[1] == ranks[0];
    let exact = is_complex && injective && surjective && middle;
    let dims_ok = dims.iter().zip(&closed_form).all(|(&a, &b)| a as i64 == b);
    BubbleComplexReport {
        name,
        dims,
        ranks,
        closed_form,
        identity_holds: identity && dims_ok,
        boundary_residual,
        membership_residual: membership,
        composition_norm,
        is_complex,
        exact,
    }
}
