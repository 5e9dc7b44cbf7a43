//! Global finite element spaces, differentials and DOF-level checks.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::dofs::{cell_dofs, shape_basis, Dof, DofKind, ElementFamily};
use super::ElementError;
use crate::linalg::SparseRows;
use crate::mesh::{local_subsets, SimplexGeom, SimplexId, SimplicialMesh};
use crate::poly::{diff, monomial_gram, monomials, BaryPoly, DiffOp};

/// Metadata of one global degree of freedom.
#[derive(Clone, Debug, Serialize)]
pub struct DofInfo {
    pub simplex: SimplexId,
    /// Position among the DOFs attached to the same simplex.
    pub order: usize,
    pub kind: DofKind,
    pub distinguished: bool,
}

/// Local data of one cell: DOF functionals and the dual basis.
#[derive(Clone, Debug)]
pub struct CellBasis {
    /// Local DOF index to global DOF index.
    pub dofs: Vec<usize>,
    pub local: Vec<Dof>,
    /// DOF functionals applied to monomial units (`nloc × ncoef`).
    pub funcs: DMatrix<f64>,
    /// Basis coefficients over monomial units (`ncoef × nloc`).
    pub basis: DMatrix<f64>,
}

/// One slot `Λ_h^k` of a discrete complex on a mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub mesh: Arc<SimplicialMesh>,
    pub family: ElementFamily,
    pub slot: usize,
    pub arity: usize,
    /// Degree of the monomial coefficient layout.
    pub degree: usize,
    /// Number of DOFs per simplex of each dimension.
    pub per_dim: Vec<usize>,
    pub offsets: Vec<usize>,
    pub dofs: Vec<DofInfo>,
    pub cells: Vec<CellBasis>,
}

/// Coefficient vector of a discrete field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeFunction {
    pub slot: usize,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(space: &FeSpace) -> Self {
        FeFunction { slot: space.slot, coeffs: vec![0.0; space.dim()] }
    }
}

fn unit(d: usize, degree: usize, arity: usize, j: usize) -> BaryPoly {
    let mut p = BaryPoly::zeros(d, degree, arity);
    p.coeffs[j] = 1.0;
    p
}

fn functional_matrix(dofs: &[Dof], geom: &SimplexGeom, degree: usize, arity: usize) -> DMatrix<f64> {
    let d = geom.dim();
    let ncoef = arity * monomials(d, degree).len();
    let units: Vec<BaryPoly> = (0..ncoef).map(|j| unit(d, degree, arity, j)).collect();
    DMatrix::from_fn(dofs.len(), ncoef, |i, j| dofs[i].eval(&units[j], geom))
}

fn build_cell(
    mesh: &SimplicialMesh,
    fam: &ElementFamily,
    slot: usize,
    cell: usize,
    degree: usize,
    arity: usize,
    dof_index: &(dyn Fn(usize, usize, usize) -> usize + Sync),
) -> Result<CellBasis, ElementError> {
    let geom = mesh.cell_geom(cell);
    let d = mesh.dim();
    let local = cell_dofs(fam, slot, &geom);
    let funcs = functional_matrix(&local, &geom, degree, arity);
    let shape = shape_basis(fam, slot, &geom);
    let ncoef = funcs.ncols();
    let s = DMatrix::from_fn(ncoef, shape.len(), |i, j| shape[j].with_degree(degree).coeffs[i]);
    let v = &funcs * &s;
    if v.nrows() != v.ncols() {
        return Err(ElementError::Unisolvency { cell, slot });
    }
    let vinv = v.try_inverse().ok_or(ElementError::Unisolvency { cell, slot })?;
    let basis = s * vinv;
    let dual = &funcs * &basis;
    let err = (dual - DMatrix::<f64>::identity(local.len(), local.len())).amax();
    if !(err < 1e-8) {
        return Err(ElementError::Unisolvency { cell, slot });
    }
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let dofs = local
        .iter()
        .map(|f| {
            let order = seen.entry((f.attach_dim, f.attach_local)).or_insert(0);
            let sid = mesh.cell_sub(cell, f.attach_dim)[f.attach_local];
            let g = dof_index(f.attach_dim, sid, *order);
            *order += 1;
            g
        })
        .collect();
    let _ = d;
    Ok(CellBasis { dofs, local, funcs, basis })
}

/// Assembles one slot of a family on a mesh.
pub fn assemble_space(mesh: Arc<SimplicialMesh>, family: ElementFamily, slot: usize) -> Result<FeSpace, ElementError> {
    let family = ElementFamily::new(family.tag, family.k)?;
    let d = mesh.dim();
    if d != family.dim() {
        return Err(ElementError::Dimension { mesh: d, family: family.dim() });
    }
    if slot > d {
        return Err(ElementError::Slot(slot));
    }
    let arity = family.arity(slot);
    let degree = family.moment_degree(slot);
    let sample = cell_dofs(&family, slot, &mesh.cell_geom(0));
    let per_dim: Vec<usize> = (0..=d)
        .map(|m| sample.iter().filter(|x| x.attach_dim == m).count() / local_subsets(d, m).len())
        .collect();
    let mut offsets = Vec::with_capacity(d + 1);
    let mut acc = 0;
    for m in 0..=d {
        offsets.push(acc);
        acc += per_dim[m] * mesh.num(m);
    }
    let index = |m: usize, s: usize, i: usize| offsets[m] + s * per_dim[m] + i;
    let cells: Vec<CellBasis> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| build_cell(&mesh, &family, slot, c, degree, arity, &index))
        .collect::<Result<_, _>>()?;
    let mut dofs: Vec<Option<DofInfo>> = vec![None; acc];
    for (c, cb) in cells.iter().enumerate() {
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for (l, f) in cb.local.iter().enumerate() {
            let order = seen.entry((f.attach_dim, f.attach_local)).or_insert(0);
            let sid = mesh.cell_sub(c, f.attach_dim)[f.attach_local];
            dofs[cb.dofs[l]] = Some(DofInfo {
                simplex: SimplexId::new(f.attach_dim, sid),
                order: *order,
                kind: f.kind,
                distinguished: f.distinguished,
            });
            *order += 1;
        }
    }
    let dofs = dofs.into_iter().map(|x| x.expect("every simplex lies in a cell")).collect();
    Ok(FeSpace { mesh, family, slot, arity, degree, per_dim, offsets, dofs, cells })
}

impl FeSpace {
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    /// Number of monomial coefficients per cell.
    pub fn ncoef(&self) -> usize {
        self.arity * monomials(self.mesh.dim(), self.degree).len()
    }

    pub fn index(&self, s: SimplexId, order: usize) -> usize {
        self.offsets[s.dim] + s.index * self.per_dim[s.dim] + order
    }

    /// Global indices of the DOFs attached to a simplex.
    pub fn dofs_on(&self, s: SimplexId) -> std::ops::Range<usize> {
        let a = self.index(s, 0);
        a..a + self.per_dim[s.dim]
    }

    /// Global index of the distinguished DOF at `s`, if there is one.
    pub fn distinguished(&self, s: SimplexId) -> Option<usize> {
        self.dofs_on(s).find(|&g| self.dofs[g].distinguished)
    }

    /// Cells carrying the basis function of a global DOF.
    pub fn support(&self, g: usize) -> &[usize] {
        self.mesh.cells_of(self.dofs[g].simplex)
    }

    pub fn local_coeffs(&self, cell: usize, u: &[f64]) -> Vec<f64> {
        self.cells[cell].dofs.iter().map(|&g| u[g]).collect()
    }

    /// The restriction of a discrete field to a cell as a polynomial.
    pub fn cell_poly(&self, cell: usize, u: &[f64]) -> BaryPoly {
        let cb = &self.cells[cell];
        let loc = nalgebra::DVector::from_vec(self.local_coeffs(cell, u));
        let c = &cb.basis * loc;
        BaryPoly { d: self.mesh.dim(), degree: self.degree, arity: self.arity, coeffs: c.iter().copied().collect() }
    }

    /// Local basis function `j` on a cell.
    pub fn basis_poly(&self, cell: usize, j: usize) -> BaryPoly {
        let b = &self.cells[cell].basis;
        BaryPoly { d: self.mesh.dim(), degree: self.degree, arity: self.arity, coeffs: b.column(j).iter().copied().collect() }
    }

    /// `|K| (I ⊗ G)`: Gram matrix of monomial units on a cell.
    pub fn unit_gram(&self, cell: usize) -> DMatrix<f64> {
        let g = monomial_gram(self.mesh.dim(), self.degree, self.degree);
        let n = g.nrows();
        let vol = self.mesh.cell_geom(cell).measure;
        let mut out = DMatrix::zeros(self.arity * n, self.arity * n);
        for c in 0..self.arity {
            out.view_mut((c * n, c * n), (n, n)).copy_from(&(g.as_ref() * vol));
        }
        out
    }

    /// Local L2 mass matrix.
    pub fn local_mass(&self, cell: usize) -> DMatrix<f64> {
        let b = &self.cells[cell].basis;
        b.transpose() * self.unit_gram(cell) * b
    }

    /// Moments of the local basis against monomial units (`ncoef × nloc`).
    pub fn local_moments(&self, cell: usize) -> DMatrix<f64> {
        self.unit_gram(cell) * &self.cells[cell].basis
    }

    /// Canonical interpolant of a cellwise polynomial field: every DOF is
    /// evaluated on the first cell containing its simplex.
    pub fn interpolate<F>(&self, f: F) -> FeFunction
    where
        F: Fn(usize, &SimplexGeom) -> BaryPoly + Sync,
    {
        let mut out = vec![0.0; self.dim()];
        let vals: Vec<Vec<(usize, f64)>> = (0..self.mesh.num_cells())
            .into_par_iter()
            .map(|c| {
                let geom = self.mesh.cell_geom(c);
                let cb = &self.cells[c];
                let mut p: Option<BaryPoly> = None;
                let mut res = Vec::new();
                for (l, &g) in cb.dofs.iter().enumerate() {
                    if self.support(g)[0] == c {
                        let p = p.get_or_insert_with(|| f(c, &geom));
                        res.push((g, cb.local[l].eval(p, &geom)));
                    }
                }
                res
            })
            .collect();
        for v in vals {
            for (g, x) in v {
                out[g] = x;
            }
        }
        FeFunction { slot: self.slot, coeffs: out }
    }

    /// `Σ_K ‖u‖²_{L2(K)}` over the listed cells.
    pub fn l2_norm_sq(&self, u: &[f64], cells: &[usize]) -> f64 {
        cells
            .iter()
            .map(|&c| {
                let loc = nalgebra::DVector::from_vec(self.local_coeffs(c, u));
                loc.dot(&(self.local_mass(c) * &loc))
            })
            .sum()
    }
}

/// `L_σ u`: the non-distinguished DOFs of `u` at `σ`, expanded in their basis functions.
pub fn eval_l_sigma(space: &FeSpace, s: SimplexId, u: &FeFunction) -> Result<FeFunction, ElementError> {
    if u.slot != space.slot {
        return Err(ElementError::SlotMismatch { expected: space.slot, got: u.slot });
    }
    space.mesh.check(s)?;
    let mut out = FeFunction::zeros(space);
    for g in space.dofs_on(s) {
        if !space.dofs[g].distinguished {
            out.coeffs[g] = u.coeffs[g];
        }
    }
    Ok(out)
}

/// All slots of a family on a mesh together with the discrete differentials.
#[derive(Clone, Debug)]
pub struct FeComplex {
    pub mesh: Arc<SimplicialMesh>,
    pub family: ElementFamily,
    pub spaces: Vec<FeSpace>,
    /// `d[k]` maps slot-`k` coefficients to slot-`(k+1)` coefficients.
    pub d: Vec<SparseRows>,
    /// Rounding scale of each entry of `d[k]`: `‖W_j‖₁ · max|X| · ‖B_i‖₁` for
    /// the functional row, operator and basis column involved.
    pub d_scale: Vec<SparseRows>,
}

fn diff_op(dim: usize, slot: usize) -> DiffOp {
    match (dim, slot) {
        (2, 0) => DiffOp::Curl2d,
        (2, _) => DiffOp::Div2d,
        (_, 0) => DiffOp::Grad3d,
        (_, 1) => DiffOp::Curl3d,
        _ => DiffOp::Div3d,
    }
}

/// Local differential `W_{k+1} · d · B_k` and its rounding scale.
fn local_differential(from: &FeSpace, to: &FeSpace, cell: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let geom = from.mesh.cell_geom(cell);
    let d = geom.dim();
    let op = diff_op(d, from.slot);
    let nfrom = from.ncoef();
    let nto = to.ncoef();
    let mut x = DMatrix::zeros(nto, nfrom);
    for j in 0..nfrom {
        let dp = diff(op, &unit(d, from.degree, from.arity, j), &geom).expect("slot arity").with_degree(to.degree);
        for i in 0..nto {
            x[(i, j)] = dp.coeffs[i];
        }
    }
    let b = &from.cells[cell].basis;
    let w = &to.cells[cell].funcs;
    let xmax = x.amax();
    let wn: Vec<f64> = w.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
    let bn: Vec<f64> = b.column_iter().map(|c| c.iter().map(|v| v.abs()).sum()).collect();
    let scale = DMatrix::from_fn(w.nrows(), b.ncols(), |i, j| wn[i] * xmax * bn[j]);
    (w * (x * b), scale)
}

fn assemble_differential(from: &FeSpace, to: &FeSpace) -> Result<(SparseRows, SparseRows), ElementError> {
    let mesh = &from.mesh;
    let locals: Vec<(DMatrix<f64>, DMatrix<f64>)> =
        (0..mesh.num_cells()).into_par_iter().map(|c| local_differential(from, to, c)).collect();
    let rows: Vec<(Vec<(usize, f64)>, Vec<(usize, f64)>)> = (0..to.dim())
        .into_par_iter()
        .map(|j| {
            let sigma = to.dofs[j].simplex;
            let cells = mesh.cells_of(sigma);
            let per_cell: Vec<HashMap<usize, (f64, f64)>> = cells
                .iter()
                .map(|&c| {
                    let r = to.cells[c].dofs.iter().position(|&g| g == j).expect("row DOF lies in its star");
                    let (dl, sl) = &locals[c];
                    from.cells[c].dofs.iter().enumerate().map(|(l, &g)| (g, (dl[(r, l)], sl[(r, l)]))).collect()
                })
                .collect();
            let row_scale = per_cell.iter().flat_map(|m| m.values().map(|v| v.1)).fold(0.0f64, f64::max);
            let tol = 1e-9 * row_scale.max(f64::MIN_POSITIVE);
            let mut vals = Vec::new();
            let mut scales = Vec::new();
            for (&g, &(v, s)) in &per_cell[0] {
                if per_cell.iter().all(|m| m.contains_key(&g)) {
                    for m in &per_cell[1..] {
                        if (m[&g].0 - v).abs() > tol {
                            return Err(ElementError::Consistency {
                                row: j,
                                simplex: sigma,
                                detail: format!("column {g}: {} vs {}", v, m[&g].0),
                            });
                        }
                    }
                    vals.push((g, v));
                    scales.push((g, s));
                }
            }
            for m in &per_cell {
                for (&g, &(v, _)) in m {
                    if !per_cell.iter().all(|o| o.contains_key(&g)) && v.abs() > tol {
                        return Err(ElementError::Consistency {
                            row: j,
                            simplex: sigma,
                            detail: format!("column {g} is not shared by all cells but has value {v}"),
                        });
                    }
                }
            }
            vals.sort_by_key(|e| e.0);
            scales.sort_by_key(|e| e.0);
            Ok((vals, scales))
        })
        .collect::<Result<_, ElementError>>()?;
    let mut dm = SparseRows::new(to.dim(), from.dim());
    let mut sm = SparseRows::new(to.dim(), from.dim());
    for (j, (v, s)) in rows.into_iter().enumerate() {
        dm.rows[j] = v;
        sm.rows[j] = s;
    }
    Ok((dm, sm))
}

/// Assembles every slot and differential of a family on a mesh.
pub fn assemble_complex(mesh: Arc<SimplicialMesh>, family: ElementFamily) -> Result<FeComplex, ElementError> {
    let spaces: Vec<FeSpace> =
        (0..family.nslots()).map(|s| assemble_space(mesh.clone(), family, s)).collect::<Result<_, _>>()?;
    let mut d = Vec::new();
    let mut d_scale = Vec::new();
    for s in 0..family.dim() {
        let (a, b) = assemble_differential(&spaces[s], &spaces[s + 1])?;
        d.push(a);
        d_scale.push(b);
    }
    Ok(FeComplex { mesh, family, spaces, d, d_scale })
}

impl FeComplex {
    pub fn apply_d(&self, slot: usize, u: &FeFunction) -> FeFunction {
        FeFunction { slot: slot + 1, coeffs: self.d[slot].mul_vec(&u.coeffs) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpanViolation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpanReport {
    pub slot: usize,
    pub checked: usize,
    pub max_ratio: f64,
    pub violations: Vec<SpanViolation>,
}

impl SpanReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that the differential of every distinguished basis function of
/// `slot` has vanishing non-distinguished DOFs in the next slot.
pub fn check_span_condition(cx: &FeComplex, slot: usize, tol: f64) -> SpanReport {
    let (from, to) = (&cx.spaces[slot], &cx.spaces[slot + 1]);
    let mut checked = 0;
    let mut max_ratio: f64 = 0.0;
    let mut violations = Vec::new();
    for (j, row) in cx.d[slot].rows.iter().enumerate() {
        if to.dofs[j].distinguished {
            continue;
        }
        for (k, &(i, v)) in row.iter().enumerate() {
            if !from.dofs[i].distinguished {
                continue;
            }
            checked += 1;
            let scale = cx.d_scale[slot].rows[j][k].1.max(f64::MIN_POSITIVE);
            let ratio = v.abs() / scale;
            max_ratio = max_ratio.max(ratio);
            if ratio > tol {
                violations.push(SpanViolation { row: j, col: i, value: v, scale });
            }
        }
    }
    SpanReport { slot, checked, max_ratio, violations }
}
