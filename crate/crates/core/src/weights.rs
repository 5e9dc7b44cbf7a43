//! Weight functions on h-patches and the skeleton smoothers `M^k`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::elements::{assemble_complex, ElementError, ElementFamily, FamilyTag, FeComplex, FeFunction, FeSpace};
use crate::fields::MomentLayout;
use crate::linalg::{self, SparseRows};
use crate::mesh::{h_patch, star_patch, MeshError, Patch, SimplexId, SimplicialMesh};
use crate::poly::BaryPoly;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("weight problem for {sigma} is incompatible (relative residual {residual:.3e}); the patch is not contractible")]
    PatchTopology { sigma: SimplexId, residual: f64 },
    #[error("slot {0} exceeds the mesh dimension")]
    Slot(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Element(#[from] ElementError),
}

/// `z_σ^k` as a cochain of degree `D − k` on `ω_σ^h` (on `ω_x` for `k = 0`).
#[derive(Clone, Debug)]
pub struct WeightFunction {
    pub sigma: SimplexId,
    pub slot: usize,
    pub patch: Patch,
    /// `(simplex id, value)` pairs over `(D−k)`-simplices, sorted by id.
    pub cochain: Vec<(usize, f64)>,
    /// Relative residual of the defining cochain equation.
    pub residual: f64,
}

impl WeightFunction {
    pub fn value(&self, s: usize) -> f64 {
        self.cochain.binary_search_by_key(&s, |e| e.0).map(|i| self.cochain[i].1).unwrap_or(0.0)
    }
}

/// Lowest-order Whitney complex used to realize weight cochains as fields.
pub fn auxiliary_complex(mesh: &Arc<SimplicialMesh>) -> Result<FeComplex, ElementError> {
    let fam = if mesh.dim() == 2 {
        ElementFamily::new(FamilyTag::Lrt, 1)?
    } else {
        ElementFamily::new(FamilyTag::Whitney3d, 1)?
    };
    assemble_complex(mesh.clone(), fam)
}

/// Relative residual above which a weight problem is declared incompatible.
const COMPAT_TOL: f64 = 1e-9;

/// Sign `ε` in `ε δ z_σ = Σ_τ [σ:τ] z_τ`.
fn epsilon(dim: usize, k: usize) -> f64 {
    match (dim, k) {
        (3, 2) => 1.0,
        (3, _) => -1.0,
        (_, 1) => 1.0,
        _ => -1.0,
    }
}

/// Builds `z_σ^k` for every slot `k = 0..=D` and every `k`-simplex.
pub fn build_all_weights(mesh: &Arc<SimplicialMesh>) -> Result<Vec<Vec<WeightFunction>>, WeightError> {
    let d = mesh.dim();
    let mut all: Vec<Vec<WeightFunction>> = Vec::new();
    for k in 0..=d {
        let w = build_weights_from(mesh, k, all.last())?;
        all.push(w);
    }
    Ok(all)
}

/// Builds the weights of one slot (lower slots are built as needed).
pub fn build_weights(mesh: &Arc<SimplicialMesh>, k: usize) -> Result<Vec<WeightFunction>, WeightError> {
    if k > mesh.dim() {
        return Err(WeightError::Slot(k));
    }
    let mut prev: Option<Vec<WeightFunction>> = None;
    for j in 0..=k {
        prev = Some(build_weights_from(mesh, j, prev.as_ref())?);
    }
    Ok(prev.unwrap())
}

fn build_weights_from(
    mesh: &Arc<SimplicialMesh>,
    k: usize,
    prev: Option<&Vec<WeightFunction>>,
) -> Result<Vec<WeightFunction>, WeightError> {
    let d = mesh.dim();
    if k == 0 {
        return (0..mesh.num(0))
            .map(|x| {
                let sigma = SimplexId::new(0, x);
                let patch = star_patch(mesh, sigma)?;
                let total = patch.measure(mesh);
                let cochain = patch.cells.iter().map(|&c| (c, mesh.cell_geom(c).measure / total)).collect();
                Ok(WeightFunction { sigma, slot: 0, patch, cochain, residual: 0.0 })
            })
            .collect();
    }
    let prev = prev.expect("lower slot weights");
    let m = d - k;
    let incidence = mesh.incidence(k - 1);
    let delta = mesh.incidence(m);
    let eps = epsilon(d, k);
    (0..mesh.num(k))
        .into_par_iter()
        .map(|s| {
            let sigma = SimplexId::new(k, s);
            let patch = h_patch(mesh, sigma)?;
            let unknown_all = patch.closure(mesh, m);
            let bflags = patch.boundary_flags(mesh, m);
            let unknowns: Vec<usize> =
                unknown_all.iter().zip(&bflags).filter(|(_, &b)| !b).map(|(&u, _)| u).collect();
            let rows = patch.closure(mesh, m + 1);
            let col_of: HashMap<usize, usize> = unknowns.iter().enumerate().map(|(i, &u)| (u, i)).collect();
            let mut a = DMatrix::zeros(rows.len(), unknowns.len());
            let mut b: DVector<f64> = DVector::zeros(rows.len());
            let mut scale: DVector<f64> = DVector::zeros(rows.len());
            for (r, &rho) in rows.iter().enumerate() {
                for &(t, v) in &delta[rho] {
                    if let Some(&c) = col_of.get(&t) {
                        a[(r, c)] = eps * v;
                    }
                }
                for &(tau, v) in &incidence[s] {
                    let z = prev[tau].value(rho);
                    b[r] += v * z;
                    scale[r] += z.abs();
                }
            }
            let data = scale.norm().max(f64::MIN_POSITIVE);
            let x = linalg::lstsq(&a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()), 1e-12).column(0).into_owned();
            let res = (&a * &x - &b).norm() / data;
            if res > COMPAT_TOL {
                return Err(WeightError::PatchTopology { sigma, residual: res });
            }
            let mut cochain: Vec<(usize, f64)> = unknowns.iter().zip(x.iter()).map(|(&u, &v)| (u, v)).collect();
            cochain.sort_by_key(|e| e.0);
            Ok(WeightFunction { sigma, slot: k, patch, cochain, residual: res })
        })
        .collect()
}

/// The field of a weight on one cell, expressed in canonical monomials.
pub fn weight_field(aux: &FeComplex, w: &WeightFunction, cell: usize) -> BaryPoly {
    let mesh = &aux.mesh;
    let d = mesh.dim();
    let m = d - w.slot;
    let space: &FeSpace = &aux.spaces[m];
    let cb = &space.cells[cell];
    let mut acc = BaryPoly::zeros(d, space.degree, space.arity);
    for (l, &g) in cb.dofs.iter().enumerate() {
        let v = w.value(space.dofs[g].simplex.index);
        if v != 0.0 {
            acc = acc.add(&space.basis_poly(cell, l).scale(v));
        }
    }
    if d == 2 && w.slot == 1 {
        // rotate the flux field by +90 degrees
        let (vx, vy) = (acc.component(0), acc.component(1));
        return BaryPoly::from_components(&[vy.scale(-1.0), vx]);
    }
    acc
}

/// `M^k` as sparse rows over the moment columns of slot `k`, one row per `k`-simplex.
#[derive(Clone, Debug)]
pub struct SkeletonSmoother {
    pub slot: usize,
    pub layout: MomentLayout,
    pub rows: SparseRows,
}

/// Assembles `M^k` for a family: row `σ` holds the coefficients of `z_σ^k`
/// against the monomial moments of the input on each cell of its patch.
pub fn build_smoother(
    aux: &FeComplex,
    weights: &[WeightFunction],
    family: &ElementFamily,
    k: usize,
) -> SkeletonSmoother {
    let mesh = &aux.mesh;
    let layout = MomentLayout { dim: mesh.dim(), arity: family.arity(k), degree: family.moment_degree(k) };
    let block = layout.block();
    let rows: Vec<Vec<(usize, f64)>> = weights
        .par_iter()
        .map(|w| {
            let mut row = Vec::new();
            for &c in &w.patch.cells {
                let z = weight_field(aux, w, c).with_degree(layout.degree);
                for (i, &v) in z.coeffs.iter().enumerate() {
                    if v != 0.0 {
                        row.push((c * block + i, v));
                    }
                }
            }
            row.sort_by_key(|e| e.0);
            row
        })
        .collect();
    SkeletonSmoother { slot: k, layout, rows: SparseRows { ncols: mesh.num_cells() * block, rows } }
}

impl SkeletonSmoother {
    /// Coefficients `(u, z_σ^k)` for every `k`-simplex `σ`.
    pub fn apply_cochain(&self, moments: &[f64]) -> Vec<f64> {
        self.rows.mul_vec(moments)
    }

    /// `M^k u` as a function of the target space (distinguished DOFs only).
    pub fn apply(&self, space: &FeSpace, moments: &[f64]) -> FeFunction {
        let vals = self.apply_cochain(moments);
        let mut out = FeFunction::zeros(space);
        for (s, v) in vals.into_iter().enumerate() {
            let g = space.distinguished(SimplexId::new(self.slot, s)).expect("distinguished DOF");
            out.coeffs[g] = v;
        }
        out
    }
}

/// Applies the signed incidence `δ_k` to a `k`-cochain.
pub fn coboundary(mesh: &SimplicialMesh, k: usize, c: &[f64]) -> Vec<f64> {
    mesh.incidence(k).iter().map(|row| row.iter().map(|&(t, v)| v * c[t]).sum()).collect()
}
