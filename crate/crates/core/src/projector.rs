//! The local commuting projections `π^k` onto a discrete complex.
//!
//! Every operator acts on cellwise moments of the input (slot `k`) and of its
//! differential (slot `k + 1`) and is assembled once as sparse rows:
//!
//! * `P̂_0 = M^0` and `P̂_{k+1} = M^{k+1} + d A_k`, the intermediate maps `π̂^k`;
//! * `A_k` collects, for every simplex `σ` and every slot-`k` DOF `N_j` on `σ`,
//!   `N_j (I − π̂^k) R^{k+1}_{σ,[k]}` with the lift taken on the layer-`k` patch;
//! * `π^k f = P̂_k m_k(f) + A_k m_{k+1}(df)`, and `π^D = P̂_D`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::elements::{assemble_complex, ElementError, ElementFamily, FeComplex, FeFunction};
use crate::fields::{cell_l2_sq, moments, InputField, MomentLayout};
use crate::harmonic::{HarmonicError, PatchComplex};
use crate::linalg::SparseRows;
use crate::mesh::{extended_patch, SimplexId, SimplicialMesh};
use crate::weights::{auxiliary_complex, build_all_weights, build_smoother, SkeletonSmoother, WeightError};

#[derive(Debug, Error)]
pub enum ProjectorError {
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("patch solve for {sigma} failed: {source}")]
    Patch { sigma: SimplexId, source: HarmonicError },
    #[error("slot {0} out of range")]
    Slot(usize),
    #[error("input arity {got} does not match slot arity {expected}")]
    Arity { expected: usize, got: usize },
}

/// Output dependence radius of `π^k` in layers around a cell.
pub fn locality_radius(dim: usize, k: usize) -> usize {
    if dim == 2 {
        [1, 2, 2][k]
    } else {
        [1, 2, 3, 3][k]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProjectorConfig {
    /// Extra quadrature degree for analytic inputs.
    pub quad_bump: usize,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        ProjectorConfig { quad_bump: 2 }
    }
}

/// Assembled commuting projections of one family on one mesh.
#[derive(Clone, Debug)]
pub struct CommutingProjector {
    pub cx: Arc<FeComplex>,
    pub config: ProjectorConfig,
    pub layouts: Vec<MomentLayout>,
    pub smoothers: Vec<SkeletonSmoother>,
    /// `M^k` over coefficients of slot `k`.
    pub m: Vec<SparseRows>,
    /// `P̂_k`: moments of slot `k` to coefficients of slot `k`.
    pub p_hat: Vec<SparseRows>,
    /// `A_k`: moments of slot `k + 1` to coefficients of slot `k`.
    pub a: Vec<SparseRows>,
}

/// Moments of an input field and of its differential.
#[derive(Clone, Debug)]
pub struct InputMoments {
    pub value: Vec<f64>,
    pub diff: Option<Vec<f64>>,
}

impl CommutingProjector {
    pub fn build(mesh: Arc<SimplicialMesh>, family: ElementFamily, config: ProjectorConfig) -> Result<Self, ProjectorError> {
        let cx = Arc::new(assemble_complex(mesh, family)?);
        Self::from_complex(cx, config)
    }

    pub fn from_complex(cx: Arc<FeComplex>, config: ProjectorConfig) -> Result<Self, ProjectorError> {
        let mesh = cx.mesh.clone();
        let dim = mesh.dim();
        let family = cx.family;
        let layouts: Vec<MomentLayout> = (0..=dim)
            .map(|k| MomentLayout { dim, arity: family.arity(k), degree: family.moment_degree(k) })
            .collect();
        let aux = auxiliary_complex(&mesh)?;
        let weights = build_all_weights(&mesh)?;
        let smoothers: Vec<SkeletonSmoother> =
            (0..=dim).map(|k| build_smoother(&aux, &weights[k], &family, k)).collect();
        let m: Vec<SparseRows> = smoothers
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let sp = &cx.spaces[k];
                let mut out = SparseRows::new(sp.dim(), s.rows.ncols);
                for (i, row) in s.rows.rows.iter().enumerate() {
                    let g = sp.distinguished(SimplexId::new(k, i)).expect("distinguished DOF");
                    out.rows[g] = row.clone();
                }
                out
            })
            .collect();
        let mut p_hat = vec![m[0].clone()];
        let mut a = Vec::with_capacity(dim);
        for k in 0..dim {
            let ak = assemble_correction(&cx, k, &p_hat[k])?;
            let next = m[k + 1].add(&cx.d[k].mul(&ak));
            a.push(ak);
            p_hat.push(next);
        }
        Ok(CommutingProjector { cx, config, layouts, smoothers, m, p_hat, a })
    }

    pub fn dim(&self) -> usize {
        self.cx.mesh.dim()
    }

    /// Cellwise moments of an input field of slot `k`.
    pub fn input_moments(&self, k: usize, input: &InputField) -> Result<InputMoments, ProjectorError> {
        let dim = self.dim();
        if k > dim {
            return Err(ProjectorError::Slot(k));
        }
        if input.arity != self.layouts[k].arity {
            return Err(ProjectorError::Arity { expected: self.layouts[k].arity, got: input.arity });
        }
        let mesh = &self.cx.mesh;
        let value = moments(mesh, self.layouts[k], &input.value, self.config.quad_bump);
        let diff = match (&input.diff, k < dim) {
            (Some(src), true) => Some(moments(mesh, self.layouts[k + 1], src, self.config.quad_bump)),
            _ => None,
        };
        Ok(InputMoments { value, diff })
    }

    /// `π^k` on precomputed moments; a missing differential is taken as zero.
    pub fn project_moments(&self, k: usize, mo: &InputMoments) -> FeFunction {
        let mut c = self.p_hat[k].mul_vec(&mo.value);
        if k < self.dim() {
            if let Some(df) = &mo.diff {
                for (x, y) in c.iter_mut().zip(self.a[k].mul_vec(df)) {
                    *x += y;
                }
            }
        }
        FeFunction { slot: k, coeffs: c }
    }

    /// `π^k` of an input field; a missing differential is taken as zero.
    pub fn project(&self, k: usize, input: &InputField) -> Result<FeFunction, ProjectorError> {
        let mo = self.input_moments(k, input)?;
        Ok(self.project_moments(k, &mo))
    }

    pub fn project0(&self, u: &InputField) -> Result<FeFunction, ProjectorError> {
        self.project(0, u)
    }

    pub fn project1(&self, xi: &InputField) -> Result<FeFunction, ProjectorError> {
        self.project(1, xi)
    }

    pub fn project2(&self, v: &InputField) -> Result<FeFunction, ProjectorError> {
        self.project(2, v)
    }

    pub fn project3(&self, p: &InputField) -> Result<FeFunction, ProjectorError> {
        if self.dim() < 3 {
            return Err(ProjectorError::Slot(3));
        }
        self.project(3, p)
    }

    /// `π̂^k` on moments of slot `k`.
    pub fn project_hat(&self, k: usize, value: &[f64]) -> FeFunction {
        FeFunction { slot: k, coeffs: self.p_hat[k].mul_vec(value) }
    }

    /// Moments of a discrete function of slot `k`.
    pub fn fe_moments(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let sp = &self.cx.spaces[k];
        let block = sp.ncoef();
        let mut out = vec![0.0; self.cx.mesh.num_cells() * block];
        for c in 0..self.cx.mesh.num_cells() {
            let loc = DVector::from_vec(sp.local_coeffs(c, u));
            let mo = sp.local_moments(c) * loc;
            out[c * block..(c + 1) * block].copy_from_slice(mo.as_slice());
        }
        out
    }

    /// Moments of a discrete function and of its exact differential.
    pub fn fe_input_moments(&self, k: usize, u: &[f64]) -> InputMoments {
        let diff = (k < self.dim()).then(|| self.fe_moments(k + 1, &self.cx.d[k].mul_vec(u)));
        InputMoments { value: self.fe_moments(k, u), diff }
    }

    /// `‖π^{k+1}(ds) − d π^k s‖ / max(‖ds‖, ε)` in L2 over the whole mesh.
    pub fn commutation_residual(&self, k: usize, sample: &InputField) -> Result<f64, ProjectorError> {
        if k >= self.dim() {
            return Err(ProjectorError::Slot(k));
        }
        let mo = self.input_moments(k, sample)?;
        let df = mo.diff.clone().ok_or(ProjectorError::Slot(k))?;
        let lhs = self.project_moments(k + 1, &InputMoments { value: df, diff: None });
        let rhs = self.cx.apply_d(k, &self.project_moments(k, &mo));
        let diff: Vec<f64> = lhs.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect();
        let sp = &self.cx.spaces[k + 1];
        let cells: Vec<usize> = (0..self.cx.mesh.num_cells()).collect();
        let num = sp.l2_norm_sq(&diff, &cells).sqrt();
        let src = sample.diff.as_ref().expect("differential present");
        let den: f64 = cell_l2_sq(&self.cx.mesh, src, self.config.quad_bump).iter().sum::<f64>().sqrt();
        Ok(num / den.max(1e-300))
    }

    /// DOF values `N_j (I − π̂^k) Q^k_{σ,[k]} f` for the DOFs on `σ`, the
    /// unsimplified form of the correction carried by `A_k`.
    pub fn harmonic_form_correction(
        &self,
        k: usize,
        sigma: SimplexId,
        mo: &InputMoments,
    ) -> Result<Vec<(usize, f64)>, ProjectorError> {
        let dim = self.dim();
        if k >= dim {
            return Err(ProjectorError::Slot(k));
        }
        let patch = extended_patch(&self.cx.mesh, sigma, k).map_err(|e| ProjectorError::Element(e.into()))?;
        let pc = PatchComplex::new(self.cx.clone(), patch);
        let mk = pc.restrict_moments(k, &mo.value);
        let zero = vec![0.0; self.cx.mesh.num_cells() * self.cx.spaces[k + 1].ncoef()];
        let mk1 = pc.restrict_moments(k + 1, mo.diff.as_ref().unwrap_or(&zero));
        let q = pc.apply_q(k, &mk, Some(&mk1)).map_err(|source| ProjectorError::Patch { sigma, source })?;
        let qv = DVector::from_vec(q);
        let qmom = &pc.mom[k] * &qv;
        let block = self.cx.spaces[k].ncoef();
        let mut global = vec![0.0; self.cx.mesh.num_cells() * block];
        for (i, v) in qmom.iter().enumerate() {
            global[pc.global_column(k, i)] = *v;
        }
        let hat = self.p_hat[k].mul_vec(&global);
        let pos: HashMap<usize, usize> = pc.dofs[k].iter().enumerate().map(|(i, &g)| (g, i)).collect();
        Ok(self.cx.spaces[k].dofs_on(sigma).map(|g| (g, qv[pos[&g]] - hat[g])).collect())
    }
}

/// Assembles `A_k` for all simplices carrying slot-`k` DOFs.
fn assemble_correction(cx: &Arc<FeComplex>, k: usize, p_hat: &SparseRows) -> Result<SparseRows, ProjectorError> {
    let mesh = &cx.mesh;
    let sp = &cx.spaces[k];
    let sigmas: Vec<SimplexId> = (0..=mesh.dim())
        .filter(|&m| sp.per_dim[m] > 0)
        .flat_map(|m| (0..mesh.num(m)).map(move |i| SimplexId::new(m, i)))
        .collect();
    let ncols = mesh.num_cells() * cx.spaces[k + 1].ncoef();
    let block = sp.ncoef();
    let parts: Vec<Vec<(usize, Vec<(usize, f64)>)>> = sigmas
        .par_iter()
        .map(|&sigma| {
            let patch = extended_patch(mesh, sigma, k).expect("simplex exists");
            let pc = PatchComplex::new(cx.clone(), patch);
            let s = pc.lift_operator(k + 1).map_err(|source| ProjectorError::Patch { sigma, source })?;
            let ms = &pc.mom[k] * &s;
            let pos: HashMap<usize, usize> = pc.dofs[k].iter().enumerate().map(|(i, &g)| (g, i)).collect();
            let cell_pos = pc.patch.cell_index();
            let mut rows = Vec::new();
            for g in sp.dofs_on(sigma) {
                let mut row = s.row(pos[&g]).clone_owned();
                for &(col, v) in &p_hat.rows[g] {
                    if let Some(&ci) = cell_pos.get(&(col / block)) {
                        row -= ms.row(ci * block + col % block) * v;
                    }
                }
                let mut entries: Vec<(usize, f64)> =
                    row.iter().enumerate().map(|(i, &v)| (pc.global_column(k + 1, i), v)).collect();
                entries.sort_by_key(|e| e.0);
                rows.push((g, entries));
            }
            Ok(rows)
        })
        .collect::<Result<_, ProjectorError>>()?;
    let mut out = SparseRows::new(sp.dim(), ncols);
    for part in parts {
        for (g, row) in part {
            out.rows[g] = row;
        }
    }
    Ok(out)
}
