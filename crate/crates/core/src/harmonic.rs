//! Harmonic lifts `R^k_ω` and harmonic projections `Q^k_ω` on patches.
//!
//! Inputs enter through their cellwise moments against the monomial units of
//! the slot (see [`crate::fields::moments`]); on a patch the moment columns
//! are ordered by the local cell index.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::elements::FeComplex;
use crate::linalg;
use crate::mesh::Patch;
use crate::poly::BaryPoly;

#[derive(Debug, Error)]
pub enum HarmonicError {
    #[error("local complex on the patch of {owner} is not exact at slot {slot} (reduced eigenvalue ratio {ratio:.3e})")]
    PatchTopology { owner: crate::mesh::SimplexId, slot: usize, ratio: f64 },
    #[error("slot {0} has no harmonic lift")]
    Slot(usize),
}

/// Relative cutoff for the constraint null space.
const CONSTRAINT_RTOL: f64 = 1e-10;
/// Smallest admissible eigenvalue ratio of the reduced system.
const REDUCED_RTOL: f64 = 1e-13;

/// The discrete complex restricted to a patch.
#[derive(Clone, Debug)]
pub struct PatchComplex {
    pub cx: Arc<FeComplex>,
    pub patch: Patch,
    /// Sorted global DOFs of each slot carried by the patch cells.
    pub dofs: Vec<Vec<usize>>,
    /// L2 mass matrices per slot.
    pub mass: Vec<DMatrix<f64>>,
    /// `d[k]`: slot `k` to slot `k+1`, restricted to the patch.
    pub d: Vec<DMatrix<f64>>,
    /// `load[k]`: moments of slot `k` to the load vector `(f, φ_a)_ω`.
    pub load: Vec<DMatrix<f64>>,
    /// `mom[k]`: patch coefficients of slot `k` to their moments.
    pub mom: Vec<DMatrix<f64>>,
    /// Unit Gram matrices per slot (block diagonal over the cells).
    pub gram: Vec<DMatrix<f64>>,
    /// Slot-0 coefficients of the constant 1.
    pub constant: DVector<f64>,
    /// Slot-0 moments to the patch mean.
    pub mean_row: DVector<f64>,
    pub measure: f64,
    pub diameter: f64,
}

/// Output of a single lift solve with its residuals.
#[derive(Clone, Debug, Serialize)]
pub struct HarmonicSolveResult {
    pub coeffs: Vec<f64>,
    pub constraint_residual: f64,
    pub normal_residual: f64,
}

impl PatchComplex {
    pub fn new(cx: Arc<FeComplex>, patch: Patch) -> Self {
        let mesh = cx.mesh.clone();
        let nslots = cx.spaces.len();
        let ncell = patch.cells.len();
        let dofs: Vec<Vec<usize>> = cx
            .spaces
            .iter()
            .map(|sp| {
                let mut v: Vec<usize> = patch.cells.iter().flat_map(|&c| sp.cells[c].dofs.iter().copied()).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let pos: Vec<HashMap<usize, usize>> =
            dofs.iter().map(|v| v.iter().enumerate().map(|(i, &g)| (g, i)).collect()).collect();
        let mut mass = Vec::with_capacity(nslots);
        let mut load = Vec::with_capacity(nslots);
        let mut mom = Vec::with_capacity(nslots);
        let mut gram = Vec::with_capacity(nslots);
        for (k, sp) in cx.spaces.iter().enumerate() {
            let n = dofs[k].len();
            let block = sp.ncoef();
            let mut m = DMatrix::zeros(n, n);
            let mut l = DMatrix::zeros(n, ncell * block);
            let mut mo = DMatrix::zeros(ncell * block, n);
            let mut g = DMatrix::zeros(ncell * block, ncell * block);
            for (ci, &c) in patch.cells.iter().enumerate() {
                let cb = &sp.cells[c];
                let lm = sp.local_mass(c);
                let ug = sp.unit_gram(c);
                let lmom = &ug * &cb.basis;
                g.view_mut((ci * block, ci * block), (block, block)).copy_from(&ug);
                for (a, &ga) in cb.dofs.iter().enumerate() {
                    let ia = pos[k][&ga];
                    for (b, &gb) in cb.dofs.iter().enumerate() {
                        m[(ia, pos[k][&gb])] += lm[(a, b)];
                    }
                    for r in 0..block {
                        l[(ia, ci * block + r)] += cb.basis[(r, a)];
                        mo[(ci * block + r, ia)] += lmom[(r, a)];
                    }
                }
            }
            mass.push(m);
            load.push(l);
            mom.push(mo);
            gram.push(g);
        }
        let d = (0..nslots - 1)
            .map(|k| cx.d[k].submatrix(&dofs[k + 1], &dofs[k]))
            .collect();
        let sp0 = &cx.spaces[0];
        let dim = mesh.dim();
        let one = BaryPoly::constant(dim, 1.0);
        let mut constant = DVector::zeros(dofs[0].len());
        let mut done = vec![false; dofs[0].len()];
        for &c in &patch.cells {
            let geom = mesh.cell_geom(c);
            let cb = &sp0.cells[c];
            for (l, &g) in cb.dofs.iter().enumerate() {
                let i = pos[0][&g];
                if !done[i] {
                    constant[i] = cb.local[l].eval(&one, &geom);
                    done[i] = true;
                }
            }
        }
        let measure = patch.measure(&mesh);
        let one_q = one.with_degree(sp0.degree);
        let block0 = sp0.ncoef();
        let mut mean_row = DVector::zeros(ncell * block0);
        for ci in 0..ncell {
            for (r, &v) in one_q.coeffs.iter().enumerate() {
                mean_row[ci * block0 + r] = v / measure;
            }
        }
        let verts = patch.closure(&mesh, 0);
        let coords = mesh.coords();
        let mut diameter: f64 = 0.0;
        for (i, &a) in verts.iter().enumerate() {
            for &b in &verts[i + 1..] {
                let p = crate::mesh::sub(&coords[a], &coords[b]);
                diameter = diameter.max(crate::mesh::dot(&p, &p).sqrt());
            }
        }
        PatchComplex { cx, patch, dofs, mass, d, load, mom, gram, constant, mean_row, measure, diameter }
    }

    pub fn dim(&self) -> usize {
        self.cx.mesh.dim()
    }

    /// Number of moment columns of slot `k` on the patch.
    pub fn moment_cols(&self, k: usize) -> usize {
        self.patch.cells.len() * self.cx.spaces[k].ncoef()
    }

    /// Global moment column of a patch moment column of slot `k`.
    pub fn global_column(&self, k: usize, col: usize) -> usize {
        let block = self.cx.spaces[k].ncoef();
        self.patch.cells[col / block] * block + col % block
    }

    /// Extracts the patch moments of slot `k` from a global moment vector.
    pub fn restrict_moments(&self, k: usize, global: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.moment_cols(k), |i, _| global[self.global_column(k, i)])
    }

    /// Constraint rows for the lift of slot `k`: the lift is orthogonal to
    /// constants (`k = 1`) or to `d(Λ^{k-2})` (`k ≥ 2`).
    fn constraint(&self, k: usize) -> DMatrix<f64> {
        if k == 1 {
            DMatrix::from_row_slice(1, self.constant.len(), (&self.mass[0] * &self.constant).as_slice())
        } else {
            (&self.mass[k - 1] * &self.d[k - 2]).transpose()
        }
    }

    /// `R^k_ω` as a matrix from patch moments of slot `k` to patch
    /// coefficients of slot `k − 1` (`1 ≤ k ≤ D`).
    pub fn lift_operator(&self, k: usize) -> Result<DMatrix<f64>, HarmonicError> {
        if k == 0 || k > self.dim() {
            return Err(HarmonicError::Slot(k));
        }
        let dk = &self.d[k - 1];
        // unknowns are expressed in an L2-orthonormal basis so that rank
        // decisions and the reduced solve do not see the local basis scaling
        let lt = self.mass[k - 1].clone().cholesky().expect("mass matrices are positive definite").unpack().transpose();
        let t = lt.clone().try_inverse().expect("Cholesky factor is invertible");
        let dks = dk * &t;
        let a = dks.transpose() * &self.mass[k] * &dks;
        let mut c = self.constraint(k) * &t;
        for mut row in c.row_iter_mut() {
            let nr = row.norm();
            if nr > 0.0 {
                row /= nr;
            }
        }
        let n = linalg::null_space(&c, CONSTRAINT_RTOL);
        let red = n.transpose() * &a * &n;
        let red = (&red + red.transpose()) * 0.5;
        let ev = red.clone().symmetric_eigenvalues();
        let emax = ev.iter().fold(0.0f64, |x, y| x.max(*y));
        let emin = ev.iter().fold(f64::INFINITY, |x, y| x.min(*y));
        let ratio = if emax > 0.0 { emin / emax } else { 0.0 };
        if red.nrows() > 0 && !(ratio > REDUCED_RTOL) {
            return Err(HarmonicError::PatchTopology { owner: self.patch.owner, slot: k, ratio });
        }
        let rhs = n.transpose() * dks.transpose() * &self.load[k];
        let y = match red.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => return Err(HarmonicError::PatchTopology { owner: self.patch.owner, slot: k, ratio }),
        };
        Ok(t * (n * y))
    }

    /// Solves `R^k_ω` for one input and reports the residuals of the
    /// variational equation and of the orthogonality constraint.
    pub fn solve_r(&self, k: usize, moments: &DVector<f64>) -> Result<HarmonicSolveResult, HarmonicError> {
        if k == 0 {
            let mean = self.mean_row.dot(moments);
            return Ok(HarmonicSolveResult { coeffs: vec![mean], constraint_residual: 0.0, normal_residual: 0.0 });
        }
        let r = self.lift_operator(k)? * moments;
        let dk = &self.d[k - 1];
        let b = dk.transpose() * &self.load[k] * moments;
        let ar = dk.transpose() * &self.mass[k] * dk * &r;
        let normal_residual = (&ar - &b).norm() / b.norm().max(ar.norm()).max(f64::MIN_POSITIVE);
        let c = self.constraint(k);
        let scale = (c.norm() * r.norm()).max(f64::MIN_POSITIVE);
        let constraint_residual = (&c * &r).norm() / scale;
        Ok(HarmonicSolveResult { coeffs: r.iter().copied().collect(), constraint_residual, normal_residual })
    }

    /// `Q^k_ω = d R^k + R^{k+1} d` as a matrix acting on the stacked patch
    /// moments `[m_k(u); m_{k+1}(du)]` (the second block is empty at `k = D`).
    pub fn projection_operator(&self, k: usize) -> Result<DMatrix<f64>, HarmonicError> {
        let dim = self.dim();
        if k > dim {
            return Err(HarmonicError::Slot(k));
        }
        let n = self.dofs[k].len();
        let c0 = self.moment_cols(k);
        let c1 = if k < dim { self.moment_cols(k + 1) } else { 0 };
        let mut q = DMatrix::zeros(n, c0 + c1);
        let first = if k == 0 {
            &self.constant * self.mean_row.transpose()
        } else {
            &self.d[k - 1] * self.lift_operator(k)?
        };
        q.view_mut((0, 0), (n, c0)).copy_from(&first);
        if k < dim {
            q.view_mut((0, c0), (n, c1)).copy_from(&self.lift_operator(k + 1)?);
        }
        Ok(q)
    }

    /// Applies `Q^k_ω` to patch moments of an input and of its differential.
    pub fn apply_q(&self, k: usize, mk: &DVector<f64>, mk1: Option<&DVector<f64>>) -> Result<Vec<f64>, HarmonicError> {
        let q = self.projection_operator(k)?;
        let mut x = DVector::zeros(q.ncols());
        x.rows_mut(0, mk.len()).copy_from(mk);
        if let Some(m) = mk1 {
            x.rows_mut(mk.len(), m.len()).copy_from(m);
        }
        Ok((q * x).iter().copied().collect())
    }

    /// Patch moments of slot `k` of a global coefficient vector.
    pub fn moments_of(&self, k: usize, global: &[f64]) -> DVector<f64> {
        let loc = DVector::from_fn(self.dofs[k].len(), |i, _| global[self.dofs[k][i]]);
        &self.mom[k] * loc
    }

    /// Norm of `R^k_ω` from broken L2 inputs to the scale-free graph norm
    /// `(‖d r‖² + diam⁻² ‖r‖²)^{1/2}`.
    pub fn lift_norm(&self, k: usize) -> Result<f64, HarmonicError> {
        let s = self.lift_operator(k)?;
        let dk = &self.d[k - 1];
        let h = self.diameter;
        let out = dk.transpose() * &self.mass[k] * dk + &self.mass[k - 1] / (h * h);
        let l = chol_lower(&self.gram[k]);
        let sl = &s * &l;
        Ok(max_eig(&(sl.transpose() * out * sl)).sqrt())
    }

    /// Norm of `Q^k_ω` in the scale-free graph norm
    /// `(‖u‖² + diam² ‖du‖²)^{1/2}` on broken inputs and on outputs.
    pub fn projection_norm(&self, k: usize) -> Result<f64, HarmonicError> {
        let dim = self.dim();
        let q = self.projection_operator(k)?;
        let h = self.diameter;
        let mut out = self.mass[k].clone();
        if k < dim {
            out += self.d[k].transpose() * &self.mass[k + 1] * &self.d[k] * (h * h);
        }
        let l0 = chol_lower(&self.gram[k]);
        let (c0, c1) = (l0.nrows(), q.ncols() - l0.nrows());
        let mut t = DMatrix::zeros(c0 + c1, c0 + c1);
        t.view_mut((0, 0), (c0, c0)).copy_from(&l0);
        if k < dim {
            let l1 = chol_lower(&self.gram[k + 1]) / h;
            t.view_mut((c0, c0), (c1, c1)).copy_from(&l1);
        }
        let qt = q * t;
        Ok(max_eig(&(qt.transpose() * out * qt)).sqrt())
    }
}

fn chol_lower(g: &DMatrix<f64>) -> DMatrix<f64> {
    g.clone().cholesky().expect("unit Gram matrices are positive definite").unpack()
}

fn max_eig(a: &DMatrix<f64>) -> f64 {
    let s = (a + a.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().fold(0.0f64, |x, y| x.max(*y))
}
