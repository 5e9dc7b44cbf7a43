//! Checks of the structural assumptions and of the projector properties,
//! collected into a deterministic JSON report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::elements::{
    bubble_complex_check, build_reference, check_span_condition, check_unisolvency, eval_l_sigma, BubbleComplex, BubbleComplexReport,
    DofKind, ElementFamily, FamilyTag, FeComplex, FeFunction, FeSpace,
};
use crate::fields::{cell_l2_sq, moments, poly_input, CartesianPoly, InputField, MomentLayout};
use crate::harmonic::PatchComplex;
use crate::linalg::{self, SparseRows};
use crate::mesh::{
    cell_neighbourhood, extended_patch, h_patch, star_patch, uniform_refine, SimplexId, SimplicialMesh,
};
use crate::poly::BaryPoly;
use crate::projector::{locality_radius, CommutingProjector, InputMoments, ProjectorConfig, ProjectorError};
use crate::weights::{auxiliary_complex, build_all_weights, build_smoother, coboundary, SkeletonSmoother, WeightError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

/// Outcome of one named check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub status: Status,
    pub data: Value,
    pub tolerance: Option<f64>,
    pub seconds: Option<f64>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, ok: bool, data: Value, tolerance: Option<f64>) -> Self {
        let status = if ok { Status::Pass } else { Status::Fail };
        CheckRecord { name: name.into(), status, data, tolerance, seconds: None }
    }

    pub fn skipped(name: impl Into<String>, reason: &str) -> Self {
        CheckRecord { name: name.into(), status: Status::Skipped, data: json!({ "reason": reason }), tolerance: None, seconds: None }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// Numerical thresholds of all checks; each can be overridden by name.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    /// Relative singular value cutoff for ranks.
    pub rank: f64,
    /// Relative size of `d ∘ d`.
    pub dd: f64,
    /// Non-distinguished DOFs of differentials of distinguished basis functions.
    pub span: f64,
    /// Non-distinguished slot-0 DOFs of the constant.
    pub constant: f64,
    pub double_complex: f64,
    pub projection: f64,
    pub commutation: f64,
    /// Smallest over largest singular value of reference DOF matrices.
    pub unisolvency: f64,
    /// Largest admissible max/min ratio of boundedness statistics across levels.
    pub drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-11,
            dd: 1e-10,
            span: 1e-11,
            constant: 1e-12,
            double_complex: 1e-10,
            projection: 1e-9,
            commutation: 1e-9,
            unisolvency: 1e-10,
            drift: 2.0,
        }
    }
}

impl Tolerances {
    pub const NAMES: [&'static str; 9] =
        ["rank", "dd", "span", "constant", "double_complex", "projection", "commutation", "unisolvency", "drift"];

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), String> {
        if !(value.is_finite() && value > 0.0) {
            return Err(format!("tolerance {name} must be positive, got {value}"));
        }
        let slot = match name {
            "rank" => &mut self.rank,
            "dd" => &mut self.dd,
            "span" => &mut self.span,
            "constant" => &mut self.constant,
            "double_complex" => &mut self.double_complex,
            "projection" => &mut self.projection,
            "commutation" => &mut self.commutation,
            "unisolvency" => &mut self.unisolvency,
            "drift" => &mut self.drift,
            _ => return Err(format!("unknown tolerance {name} (expected one of {})", Self::NAMES.join(", "))),
        };
        *slot = value;
        Ok(())
    }
}

/// Runs checks and optionally records their wall-clock time.
#[derive(Clone, Copy, Debug, Default)]
pub struct Timer {
    pub enabled: bool,
}

impl Timer {
    pub fn run(&self, f: impl FnOnce() -> CheckRecord) -> CheckRecord {
        let t = Instant::now();
        let mut r = f();
        if self.enabled {
            r.seconds = Some(t.elapsed().as_secs_f64());
        }
        r
    }

    pub fn run_many(&self, f: impl FnOnce() -> Vec<CheckRecord>) -> Vec<CheckRecord> {
        let t = Instant::now();
        let mut rs = f();
        if self.enabled {
            let s = t.elapsed().as_secs_f64() / rs.len().max(1) as f64;
            for r in &mut rs {
                r.seconds = Some(s);
            }
        }
        rs
    }
}

/// Assumption label: `A` in two dimensions, `B` in three.
pub fn assumption_label(dim: usize, n: usize) -> String {
    format!("{}{n}", if dim == 2 { 'A' } else { 'B' })
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den > 0.0 { num / den } else { num }
}

// ---------------------------------------------------------------- exactness

/// Ranks of a complex of matrices and the resulting exactness verdict.
#[derive(Clone, Debug, Serialize)]
pub struct RankData {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub kernels: Vec<usize>,
    /// `Σ (−1)^k dim V_k`, equal to 1 for an exact complex augmented by constants.
    pub alternating_sum: i64,
    /// Largest `‖D_{k+1} D_k‖_F / (‖D_{k+1}‖_F ‖D_k‖_F)`.
    pub dd: f64,
    pub exact: bool,
}

/// Checks `dim ker D_0 = 1`, `dim ker D_k = rank D_{k−1}` and surjectivity of
/// the last differential.
pub fn rank_identities(ds: &[DMatrix<f64>], dims: &[usize], tol: &Tolerances) -> RankData {
    let ranks: Vec<usize> = ds.iter().map(|d| linalg::rank(d, tol.rank)).collect();
    let kernels: Vec<usize> = (0..dims.len()).map(|k| dims[k] - ranks.get(k).copied().unwrap_or(0)).collect();
    let mut dd: f64 = 0.0;
    for k in 0..ds.len().saturating_sub(1) {
        let p = &ds[k + 1] * &ds[k];
        let s = (ds[k + 1].norm() * ds[k].norm()).max(f64::MIN_POSITIVE);
        dd = dd.max(p.norm() / s);
    }
    let mut exact = kernels[0] == 1 && dd <= tol.dd;
    for k in 1..dims.len() {
        exact &= kernels[k] == ranks[k - 1];
    }
    let alternating_sum = dims.iter().enumerate().map(|(k, &n)| if k % 2 == 0 { n as i64 } else { -(n as i64) }).sum();
    RankData { dims: dims.to_vec(), ranks, kernels, alternating_sum, dd, exact }
}

/// L2 norms of all global basis functions of a space.
pub fn basis_norms(sp: &FeSpace) -> Vec<f64> {
    let mut s = vec![0.0; sp.dim()];
    for c in 0..sp.mesh.num_cells() {
        let m = sp.local_mass(c);
        for (l, &g) in sp.cells[c].dofs.iter().enumerate() {
            s[g] += m[(l, l)];
        }
    }
    s.into_iter().map(f64::sqrt).collect()
}

/// Differentials in the basis normalised to unit L2 norm.
pub fn normalized_differentials(cx: &FeComplex) -> Vec<DMatrix<f64>> {
    let norms: Vec<Vec<f64>> = cx.spaces.iter().map(basis_norms).collect();
    cx.d
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let mut m = d.to_dense();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    m[(i, j)] *= norms[k + 1][i] / norms[k][j];
                }
            }
            m
        })
        .collect()
}

fn patch_dofs(cx: &FeComplex, cells: &[usize]) -> Vec<Vec<usize>> {
    cx.spaces
        .iter()
        .map(|sp| {
            let mut v: Vec<usize> = cells.iter().flat_map(|&c| sp.cells[c].dofs.iter().copied()).collect();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}

/// Every distinct patch `ω_σ^h` and `ω_σ^[ℓ]`, `ℓ ≤ 2`, keyed by its cells.
fn local_patches(mesh: &SimplicialMesh) -> BTreeMap<Vec<usize>, String> {
    let mut out = BTreeMap::new();
    for m in 0..=mesh.dim() {
        for i in 0..mesh.num(m) {
            let s = SimplexId::new(m, i);
            let mut ps = vec![(h_patch(mesh, s).expect("simplex exists"), "h".to_string())];
            for l in 0..=2 {
                ps.push((extended_patch(mesh, s, l).expect("simplex exists"), format!("layer{l}")));
            }
            for (p, kind) in ps {
                out.entry(p.cells).or_insert_with(|| format!("{s}:{kind}"));
            }
        }
    }
    out
}

/// Exactness of the complex on the whole mesh and on every local patch.
pub fn verify_exactness(cx: &FeComplex, tol: &Tolerances) -> Vec<CheckRecord> {
    let dim = cx.mesh.dim();
    let label = assumption_label(dim, 1);
    let ds = normalized_differentials(cx);
    let dims: Vec<usize> = cx.spaces.iter().map(|s| s.dim()).collect();
    let global = rank_identities(&ds, &dims, tol);
    let mut out = vec![CheckRecord::new(
        format!("{label}.exactness.global"),
        global.exact,
        serde_json::to_value(&global).expect("serialisable"),
        Some(tol.rank),
    )];
    let patches = local_patches(&cx.mesh);
    let results: Vec<(String, RankData)> = patches
        .par_iter()
        .map(|(cells, name)| {
            let dofs = patch_dofs(cx, cells);
            let sub: Vec<DMatrix<f64>> = (0..dim)
                .map(|k| DMatrix::from_fn(dofs[k + 1].len(), dofs[k].len(), |i, j| ds[k][(dofs[k + 1][i], dofs[k][j])]))
                .collect();
            let pd: Vec<usize> = dofs.iter().map(|v| v.len()).collect();
            (name.clone(), rank_identities(&sub, &pd, tol))
        })
        .collect();
    let failures: Vec<Value> = results
        .iter()
        .filter(|(_, r)| !r.exact)
        .map(|(n, r)| json!({ "patch": n, "dims": r.dims, "ranks": r.ranks, "kernels": r.kernels }))
        .collect();
    let max_dd = results.iter().map(|(_, r)| r.dd).fold(0.0, f64::max);
    out.push(CheckRecord::new(
        format!("{label}.exactness.patches"),
        failures.is_empty(),
        json!({ "patches": results.len(), "failed": failures.len(), "max_dd": max_dd,
                "failures": failures.into_iter().take(20).collect::<Vec<_>>() }),
        Some(tol.rank),
    ));
    out
}

// -------------------------------------------------------------- assumptions

fn distinguished_kind(dim: usize, slot: usize) -> DofKind {
    match (dim, slot) {
        (_, 0) => DofKind::PointEval,
        (d, s) if s == d => DofKind::CellMoment,
        (2, _) => DofKind::NormalMoment,
        (_, 1) => DofKind::TangentialMoment,
        _ => DofKind::NormalMoment,
    }
}

/// Every `k`-simplex carries exactly one distinguished slot-`k` DOF of the
/// canonical kind and no other simplex carries one.
pub fn check_distinguished(cx: &FeComplex) -> CheckRecord {
    let dim = cx.mesh.dim();
    let mut problems = Vec::new();
    for (k, sp) in cx.spaces.iter().enumerate() {
        let want = distinguished_kind(dim, k);
        for info in &sp.dofs {
            if info.distinguished && (info.simplex.dim != k || info.kind != want) {
                problems.push(json!({ "slot": k, "simplex": info.simplex.to_string(), "kind": format!("{:?}", info.kind) }));
            }
        }
        for i in 0..cx.mesh.num(k) {
            let s = SimplexId::new(k, i);
            let n = sp.dofs_on(s).filter(|&g| sp.dofs[g].distinguished).count();
            if n != 1 {
                problems.push(json!({ "slot": k, "simplex": s.to_string(), "count": n }));
            }
        }
    }
    CheckRecord::new(
        format!("{}.distinguished_dofs", assumption_label(dim, 0)),
        problems.is_empty(),
        json!({ "problems": problems.into_iter().take(20).collect::<Vec<_>>() }),
        None,
    )
}

/// Differentials of distinguished basis functions have no non-distinguished DOFs.
pub fn check_span(cx: &FeComplex, tol: &Tolerances) -> CheckRecord {
    let dim = cx.mesh.dim();
    let reports: Vec<_> = (0..dim).map(|k| check_span_condition(cx, k, tol.span)).collect();
    let ok = reports.iter().all(|r| r.pass());
    let data: Vec<Value> = reports
        .iter()
        .map(|r| json!({ "slot": r.slot, "checked": r.checked, "max_ratio": r.max_ratio, "violations": r.violations.len() }))
        .collect();
    CheckRecord::new(format!("{}.span", assumption_label(dim, 2)), ok, json!({ "slots": data }), Some(tol.span))
}

/// The non-distinguished slot-0 DOFs annihilate constants.
pub fn check_constants(cx: &FeComplex, tol: &Tolerances) -> CheckRecord {
    let dim = cx.mesh.dim();
    let sp = &cx.spaces[0];
    let one = sp.interpolate(|_, _| BaryPoly::constant(dim, 1.0));
    let mut max_nd: f64 = 0.0;
    let mut max_dist: f64 = 0.0;
    for (g, info) in sp.dofs.iter().enumerate() {
        if info.distinguished {
            max_dist = max_dist.max((one.coeffs[g] - 1.0).abs());
        } else {
            max_nd = max_nd.max(one.coeffs[g].abs());
        }
    }
    CheckRecord::new(
        format!("{}.constants", assumption_label(dim, 3)),
        max_nd <= tol.constant && max_dist <= tol.constant,
        json!({ "max_non_distinguished": max_nd, "max_distinguished_defect": max_dist }),
        Some(tol.constant),
    )
}

/// Support inspection of the assembled bases and a perturbation probe of
/// `L_σ` with data changed away from `ω_σ`.
pub fn check_local_support<R: Rng>(cx: &FeComplex, rng: &mut R) -> CheckRecord {
    let dim = cx.mesh.dim();
    let mesh = &cx.mesh;
    let mut support_violations = 0usize;
    let mut probe_violations = 0usize;
    let mut output_violations = 0usize;
    let mut probes = 0usize;
    for sp in &cx.spaces {
        for c in 0..mesh.num_cells() {
            for &g in &sp.cells[c].dofs {
                if !mesh.cells_of(sp.dofs[g].simplex).contains(&c) {
                    support_violations += 1;
                }
            }
        }
        for m in 0..=dim {
            if sp.per_dim[m] == 0 {
                continue;
            }
            for i in 0..mesh.num(m) {
                let s = SimplexId::new(m, i);
                let star: BTreeSet<usize> = mesh.cells_of(s).iter().copied().collect();
                let u = FeFunction { slot: sp.slot, coeffs: (0..sp.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect() };
                let mut v = u.clone();
                for g in 0..sp.dim() {
                    if sp.support(g).iter().all(|c| !star.contains(c)) {
                        v.coeffs[g] += rng.gen_range(-1.0..1.0);
                    }
                }
                let lu = eval_l_sigma(sp, s, &u).expect("matching slot");
                let lv = eval_l_sigma(sp, s, &v).expect("matching slot");
                probes += 1;
                if sp.dofs_on(s).any(|g| lu.coeffs[g].to_bits() != lv.coeffs[g].to_bits()) {
                    probe_violations += 1;
                }
                if lu.coeffs.iter().enumerate().any(|(g, &x)| x != 0.0 && sp.dofs[g].simplex != s) {
                    output_violations += 1;
                }
            }
        }
    }
    CheckRecord::new(
        format!("{}.local_support", assumption_label(dim, 4)),
        support_violations == 0 && probe_violations == 0 && output_violations == 0,
        json!({ "probes": probes, "support_violations": support_violations,
                "probe_violations": probe_violations, "output_violations": output_violations }),
        None,
    )
}

/// Assumption checks other than exactness.
pub fn verify_assumptions<R: Rng>(cx: &FeComplex, tol: &Tolerances, rng: &mut R, timer: Timer) -> Vec<CheckRecord> {
    vec![
        timer.run(|| check_distinguished(cx)),
        timer.run(|| check_span(cx, tol)),
        timer.run(|| check_constants(cx, tol)),
        timer.run(|| check_local_support(cx, rng)),
    ]
}

/// A copy of the complex whose distinguished basis function `φ_x` of `slot`
/// is replaced by `φ_x + φ_j` for a non-distinguished `φ_j` with a
/// non-distinguished differential; `None` if no such `φ_j` exists.
pub fn span_mutant(cx: &FeComplex, slot: usize) -> Option<FeComplex> {
    let (from, to) = (&cx.spaces[slot], &cx.spaces[slot + 1]);
    let d = &cx.d[slot];
    let j = (0..from.dim()).find(|&j| {
        !from.dofs[j].distinguished
            && d.rows.iter().enumerate().any(|(r, row)| !to.dofs[r].distinguished && row.iter().any(|&(c, v)| c == j && v != 0.0))
    })?;
    let cell = from.support(j)[0];
    let x = *from.cells[cell].dofs.iter().find(|&&g| from.dofs[g].distinguished)?;
    let mut out = cx.clone();
    let mix = |rows: &mut SparseRows, other: &SparseRows| {
        for (r, row) in rows.rows.iter_mut().enumerate() {
            let Some(p) = row.iter().position(|e| e.0 == j) else { continue };
            let add = other.rows[r][p].1;
            match row.iter().position(|e| e.0 == x) {
                Some(q) => row[q].1 += add,
                None => {
                    row.push((x, add));
                    row.sort_by_key(|e| e.0);
                }
            }
        }
    };
    let (d0, s0) = (cx.d[slot].clone(), cx.d_scale[slot].clone());
    mix(&mut out.d[slot], &d0);
    mix(&mut out.d_scale[slot], &s0);
    Some(out)
}

// ------------------------------------------------------- elements, bubbles

/// Reference DOF matrices are invertible and a duplicated-DOF mutant is rejected.
pub fn check_unisolvency_family(family: &ElementFamily, tol: &Tolerances) -> Vec<CheckRecord> {
    let mut slots = Vec::new();
    let mut mutants = Vec::new();
    let mut ok = true;
    let mut rejected = true;
    for slot in 0..family.nslots() {
        let re = match build_reference(family, slot) {
            Ok(r) => r,
            Err(e) => {
                ok = false;
                slots.push(json!({ "slot": slot, "error": e.to_string() }));
                continue;
            }
        };
        let r = check_unisolvency(&re);
        let good = r.ndofs == r.shape_dim && r.sigma_min > tol.unisolvency * r.sigma_max;
        ok &= good;
        slots.push(json!({ "slot": slot, "ndofs": r.ndofs, "shape_dim": r.shape_dim,
                           "sigma_min": r.sigma_min, "sigma_max": r.sigma_max, "condition": r.condition }));
        if re.dofs.len() >= 2 {
            let m = check_unisolvency(&re.with_duplicated_dof(0, re.dofs.len() - 1));
            let caught = !(m.ndofs == m.shape_dim && m.sigma_min > tol.unisolvency * m.sigma_max);
            rejected &= caught;
            mutants.push(json!({ "slot": slot, "sigma_min": m.sigma_min, "rejected": caught }));
        }
    }
    vec![
        CheckRecord::new("unisolvency", ok, json!({ "slots": slots }), Some(tol.unisolvency)),
        CheckRecord::new("unisolvency.mutant", rejected, json!({ "mutants": mutants }), Some(tol.unisolvency)),
    ]
}

/// Bubble complexes underlying the DOFs of a family.
pub fn family_bubble_complexes(family: &ElementFamily) -> Vec<BubbleComplex> {
    let k = family.k;
    match family.tag {
        FamilyTag::Lrt => vec![BubbleComplex::LagrangeEdge { k }],
        FamilyTag::Lbdm => vec![BubbleComplex::LagrangeEdge { k }, BubbleComplex::BdmFace { family: FamilyTag::Lbdm, k }],
        FamilyTag::Hs => vec![BubbleComplex::HermiteEdge { k }, BubbleComplex::BdmFace { family: FamilyTag::Hs, k }],
        FamilyTag::Afn => vec![BubbleComplex::ArgyrisEdge { k }, BubbleComplex::ArgyrisFace { k }],
        FamilyTag::Whitney3d => vec![],
    }
}

/// Integer dimension identity, numerical exactness and trace conditions of a bubble complex.
pub fn check_bubble(bc: BubbleComplex) -> CheckRecord {
    let name = format!("bubble.{}", bc.name());
    match bubble_complex_check(bc) {
        Ok(r) => bubble_record(name, &r),
        Err(e) => CheckRecord::new(name, false, json!({ "error": e.to_string() }), None),
    }
}

pub fn bubble_record(name: String, r: &BubbleComplexReport) -> CheckRecord {
    let ok = r.identity_holds && r.exact && r.is_complex && r.boundary_residual < 1e-12 && r.membership_residual < 1e-10;
    CheckRecord::new(name, ok, serde_json::to_value(r).expect("serialisable"), Some(1e-12))
}

pub fn check_bubbles(family: &ElementFamily) -> Vec<CheckRecord> {
    let list = family_bubble_complexes(family);
    if list.is_empty() {
        return vec![CheckRecord::skipped("bubble", "lowest-order Whitney forms carry no bubble DOFs")];
    }
    list.into_iter().map(check_bubble).collect()
}

// ------------------------------------------------------------- projector

/// `d M^k = M^{k+1} d` on random polynomials, relative ℓ2 on cochains.
pub fn check_double_complex<R: Rng>(
    mesh: &Arc<SimplicialMesh>,
    family: &ElementFamily,
    samples: usize,
    degree: usize,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<CheckRecord, WeightError> {
    let dim = mesh.dim();
    let aux = auxiliary_complex(mesh)?;
    let ws = build_all_weights(mesh)?;
    let sm: Vec<_> = (0..=dim).map(|k| build_smoother(&aux, &ws[k], family, k)).collect();
    Ok(double_complex_record(mesh, family, &sm, samples, degree, rng, tol))
}

/// Double-complex residuals for a given set of skeleton smoothers, one per slot.
pub fn double_complex_record<R: Rng>(
    mesh: &SimplicialMesh,
    family: &ElementFamily,
    sm: &[SkeletonSmoother],
    samples: usize,
    degree: usize,
    rng: &mut R,
    tol: &Tolerances,
) -> CheckRecord {
    let dim = mesh.dim();
    let layout = |k: usize| MomentLayout { dim, arity: family.arity(k), degree: family.moment_degree(k) };
    let mut worst = vec![0.0f64; dim];
    for k in 0..dim {
        for _ in 0..samples {
            let p = CartesianPoly::random(rng, dim, family.arity(k), degree);
            let inp = poly_input(&p, k);
            let lhs = coboundary(mesh, k, &sm[k].apply_cochain(&moments(mesh, layout(k), &inp.value, 2)));
            let rhs = sm[k + 1].apply_cochain(&moments(mesh, layout(k + 1), inp.diff.as_ref().expect("differential"), 2));
            worst[k] = worst[k].max(rel_l2(&lhs, &rhs));
        }
    }
    let ok = worst.iter().all(|&w| w < tol.double_complex);
    CheckRecord::new(
        "double_complex",
        ok,
        json!({ "samples_per_slot": samples, "degree": degree, "cells": mesh.num_cells(), "max_residual": worst }),
        Some(tol.double_complex),
    )
}

/// `π^k u = u` for random discrete `u`: relative ℓ2 coefficient error in the
/// basis normalised to unit L2 norm (pass criterion) and in the raw basis.
pub fn check_projection<R: Rng>(p: &CommutingProjector, samples: usize, rng: &mut R, tol: &Tolerances) -> CheckRecord {
    let mut worst = Vec::new();
    let mut worst_raw = Vec::new();
    for k in 0..=p.dim() {
        let bn = basis_norms(&p.cx.spaces[k]);
        let (mut w, mut wr) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            let u: Vec<f64> = (0..bn.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let out = p.project_moments(k, &p.fe_input_moments(k, &u)).coeffs;
            let scaled = |v: &[f64]| -> Vec<f64> { v.iter().zip(&bn).map(|(x, n)| x * n).collect() };
            w = w.max(rel_l2(&scaled(&out), &scaled(&u)));
            wr = wr.max(rel_l2(&out, &u));
        }
        worst.push(w);
        worst_raw.push(wr);
    }
    let ok = worst.iter().all(|&w| w < tol.projection);
    CheckRecord::new(
        "projection",
        ok,
        json!({ "samples_per_slot": samples, "max_error": worst, "max_error_raw_basis": worst_raw }),
        Some(tol.projection),
    )
}

/// `π^{k+1} d = d π^k` on random polynomials of degree `k_family + 1`.
pub fn check_commutation<R: Rng>(
    p: &CommutingProjector,
    samples: usize,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<CheckRecord, ProjectorError> {
    let dim = p.dim();
    let fam = p.cx.family;
    let degree = fam.k + 1;
    let mut worst = vec![0.0f64; dim];
    for k in 0..dim {
        for _ in 0..samples {
            let poly = CartesianPoly::random(rng, dim, fam.arity(k), degree);
            worst[k] = worst[k].max(p.commutation_residual(k, &poly_input(&poly, k))?);
        }
    }
    let ok = worst.iter().all(|&w| w < tol.commutation);
    Ok(CheckRecord::new(
        "commutation",
        ok,
        json!({ "samples_per_pair": samples, "degree": degree, "quad_bump": p.config.quad_bump, "max_residual": worst }),
        Some(tol.commutation),
    ))
}

/// Outcome of one locality probe.
#[derive(Clone, Debug, Serialize)]
pub struct LocalityProbe {
    pub slot: usize,
    pub cell: usize,
    pub radius: usize,
    pub interior: bool,
    /// Output DOFs on the closure of the cell are bitwise unchanged by data outside the radius patch.
    pub outside_unchanged: bool,
    /// Some output DOF on the closure of the cell changes with data on the cell.
    pub inside_changed: bool,
}

/// Compares `π^k` on two inputs that differ only outside `ω_f^[r]` and on
/// two inputs that differ only on `f`.
pub fn locality_probe<R: Rng>(p: &CommutingProjector, slot: usize, cell: usize, rng: &mut R) -> LocalityProbe {
    let dim = p.dim();
    let mesh = &p.cx.mesh;
    let radius = locality_radius(dim, slot);
    let near: BTreeSet<usize> = cell_neighbourhood(mesh, cell, radius).into_iter().collect();
    let interior = (0..mesh.dim())
        .flat_map(|m| mesh.cell_sub(cell, m).iter().map(move |&i| SimplexId::new(m, i)))
        .all(|s| !mesh.is_boundary(s));
    let random = |n: usize, rng: &mut R| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let nv = p.layouts[slot].block();
    let base = InputMoments {
        value: random(mesh.num_cells() * nv, rng),
        diff: (slot < dim).then(|| random(mesh.num_cells() * p.layouts[slot + 1].block(), rng)),
    };
    let perturb = |mo: &InputMoments, keep: &dyn Fn(usize) -> bool, rng: &mut R| {
        let mut out = mo.clone();
        for (c, chunk) in out.value.chunks_mut(nv).enumerate() {
            if !keep(c) {
                chunk.iter_mut().for_each(|x| *x += rng.gen_range(-1.0..1.0));
            }
        }
        if let Some(df) = out.diff.as_mut() {
            let nd = p.layouts[slot + 1].block();
            for (c, chunk) in df.chunks_mut(nd).enumerate() {
                if !keep(c) {
                    chunk.iter_mut().for_each(|x| *x += rng.gen_range(-1.0..1.0));
                }
            }
        }
        out
    };
    let outside = perturb(&base, &|c| near.contains(&c), rng);
    let inside = perturb(&base, &|c| c != cell, rng);
    let dofs = &p.cx.spaces[slot].cells[cell].dofs;
    let (a, b, c) = (p.project_moments(slot, &base), p.project_moments(slot, &outside), p.project_moments(slot, &inside));
    LocalityProbe {
        slot,
        cell,
        radius,
        interior,
        outside_unchanged: dofs.iter().all(|&g| a.coeffs[g].to_bits() == b.coeffs[g].to_bits()),
        inside_changed: dofs.iter().any(|&g| a.coeffs[g] != c.coeffs[g]),
    }
}

/// Locality probes on every cell and slot.
pub fn check_locality<R: Rng>(p: &CommutingProjector, rng: &mut R) -> CheckRecord {
    let mut per_slot = Vec::new();
    let mut ok = true;
    for k in 0..=p.dim() {
        let probes: Vec<LocalityProbe> = (0..p.cx.mesh.num_cells()).map(|c| locality_probe(p, k, c, rng)).collect();
        let unchanged = probes.iter().filter(|x| x.outside_unchanged).count();
        let changed = probes.iter().filter(|x| x.inside_changed).count();
        let interior = probes.iter().filter(|x| x.interior).count();
        ok &= unchanged == probes.len() && changed == probes.len();
        per_slot.push(json!({ "slot": k, "radius": locality_radius(p.dim(), k), "cells": probes.len(),
                              "interior_cells": interior, "outside_unchanged": unchanged, "inside_changed": changed }));
    }
    CheckRecord::new("locality", ok, json!({ "slots": per_slot }), None)
}

// ------------------------------------------------------------ boundedness

/// Fixed smooth inputs of the boundedness study for slots 0 and 1.
pub fn boundedness_inputs(dim: usize) -> [CartesianPoly; 2] {
    let e = |v: &[u32]| -> Vec<u32> { v[..dim].to_vec() };
    let mut u = vec![(1.0, e(&[2, 0, 0])), (1.0, e(&[0, 2, 0]))];
    if dim == 3 {
        u.push((1.0, vec![0, 0, 2]));
    }
    let mut xi = vec![
        vec![(1.0, e(&[0, 0, 0])), (1.0, e(&[1, 1, 0]))],
        vec![(1.0, e(&[2, 0, 0])), (-1.0, e(&[0, 2, 0]))],
    ];
    if dim == 3 {
        xi.push(vec![(1.0, vec![1, 0, 1]), (0.5, vec![0, 1, 0])]);
    }
    [CartesianPoly { dim, components: vec![u] }, CartesianPoly { dim, components: xi }]
}

/// `p(x / s)`, the input transported to a mesh dilated by `s`.
pub fn dilate(p: &CartesianPoly, s: f64) -> CartesianPoly {
    let components = p
        .components
        .iter()
        .map(|terms| terms.iter().map(|(c, e)| (c / s.powi(e.iter().sum::<u32>() as i32), e.clone())).collect())
        .collect();
    CartesianPoly { dim: p.dim, components }
}

/// Boundedness statistics on one mesh.
#[derive(Clone, Debug, Serialize)]
pub struct BoundednessLevel {
    pub cells: usize,
    pub mesh_size: f64,
    /// Largest per-cell ratio `‖π^k s‖_{f} / ‖s‖_{ω_f^[r]}` in the diameter-scaled graph norm, slots 0 and 1.
    pub pi: Vec<f64>,
    /// Largest per-cell L2 ratio `‖M^k s‖_f / ‖s‖_{ω_f^[1]}`, slots 0 and 1.
    pub smoother: Vec<f64>,
    /// Largest `‖R^k‖` over vertex stars, `k = 1..=D`.
    pub lift: Vec<f64>,
    /// Largest `‖Q^k‖` over vertex stars, `k = 0..D`.
    pub harmonic_projection: Vec<f64>,
}

fn graph_norm_cells(p: &CommutingProjector, k: usize, coeffs: &[f64], cell: usize, h: f64) -> f64 {
    let sp = &p.cx.spaces[k];
    let mut n = sp.l2_norm_sq(coeffs, &[cell]) / (h * h);
    if k < p.dim() {
        n += p.cx.spaces[k + 1].l2_norm_sq(&p.cx.d[k].mul_vec(coeffs), &[cell]);
    }
    n
}

/// Per-cell and per-patch operator norms on one mesh; all norms are scaled by
/// the local diameter so that the ratios are invariant under dilation.
pub fn boundedness_level(p: &CommutingProjector, inputs: &[CartesianPoly; 2]) -> Result<BoundednessLevel, ProjectorError> {
    let mesh = p.cx.mesh.clone();
    let dim = mesh.dim();
    let nc = mesh.num_cells();
    let diam: Vec<f64> = (0..nc).map(|c| mesh.cell_geom(c).circumdiameter()).collect();
    let mut pi = Vec::new();
    let mut smoother = Vec::new();
    for k in 0..2 {
        let input: InputField = poly_input(&inputs[k], k);
        let mo = p.input_moments(k, &input)?;
        let out = p.project_moments(k, &mo);
        let m_out = p.m[k].mul_vec(&mo.value);
        let val = cell_l2_sq(&mesh, &input.value, p.config.quad_bump);
        let dif = input.diff.as_ref().map(|d| cell_l2_sq(&mesh, d, p.config.quad_bump)).unwrap_or_else(|| vec![0.0; nc]);
        let radius = locality_radius(dim, k);
        let ratios: Vec<(f64, f64)> = (0..nc)
            .into_par_iter()
            .map(|f| {
                let h = diam[f];
                let num = graph_norm_cells(p, k, &out.coeffs, f, h);
                let den: f64 = cell_neighbourhood(&mesh, f, radius).iter().map(|&c| val[c] / (h * h) + dif[c]).sum();
                let mnum = p.cx.spaces[k].l2_norm_sq(&m_out, &[f]);
                let mden: f64 = cell_neighbourhood(&mesh, f, 1).iter().map(|&c| val[c]).sum();
                ((num / den).sqrt(), (mnum / mden).sqrt())
            })
            .collect();
        pi.push(ratios.iter().map(|r| r.0).fold(0.0, f64::max));
        smoother.push(ratios.iter().map(|r| r.1).fold(0.0, f64::max));
    }
    let stars: Vec<(Vec<f64>, Vec<f64>)> = (0..mesh.num(0))
        .into_par_iter()
        .map(|v| {
            let s = SimplexId::new(0, v);
            let pc = PatchComplex::new(p.cx.clone(), star_patch(&mesh, s).expect("vertex exists"));
            let lift = (1..=dim).map(|k| pc.lift_norm(k)).collect::<Result<Vec<_>, _>>();
            let proj = (0..dim).map(|k| pc.projection_norm(k)).collect::<Result<Vec<_>, _>>();
            match (lift, proj) {
                (Ok(a), Ok(b)) => Ok((a, b)),
                (Err(e), _) | (_, Err(e)) => Err(ProjectorError::Patch { sigma: s, source: e }),
            }
        })
        .collect::<Result<_, _>>()?;
    let colmax = |sel: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>, n: usize| -> Vec<f64> {
        (0..n).map(|i| stars.iter().map(|s| sel(s)[i]).fold(0.0, f64::max)).collect()
    };
    Ok(BoundednessLevel {
        cells: nc,
        mesh_size: mesh.mesh_size(),
        pi,
        smoother,
        lift: colmax(&|s| &s.0, dim),
        harmonic_projection: colmax(&|s| &s.1, dim),
    })
}

/// Boundedness statistics over uniform refinements and their drift.
#[derive(Clone, Debug, Serialize)]
pub struct BoundednessStudy {
    pub levels: Vec<BoundednessLevel>,
    /// `max / min` across levels of every statistic.
    pub drift: BTreeMap<String, f64>,
    pub max_drift: f64,
}

pub fn boundedness_study(
    base: &SimplicialMesh,
    family: ElementFamily,
    refinements: usize,
    config: ProjectorConfig,
) -> Result<BoundednessStudy, ProjectorError> {
    let inputs = boundedness_inputs(base.dim());
    let mut mesh = base.clone();
    let mut levels = Vec::new();
    for level in 0..=refinements {
        if level > 0 {
            mesh = uniform_refine(&mesh);
        }
        let p = CommutingProjector::build(Arc::new(mesh.clone()), family, config)?;
        levels.push(boundedness_level(&p, &inputs)?);
    }
    let mut drift = BTreeMap::new();
    let mut add = |name: String, vals: Vec<f64>| {
        let mx = vals.iter().copied().fold(0.0, f64::max);
        let mn = vals.iter().copied().fold(f64::INFINITY, f64::min);
        drift.insert(name, if mn > 0.0 { mx / mn } else { f64::INFINITY });
    };
    for k in 0..2 {
        add(format!("pi{k}"), levels.iter().map(|l| l.pi[k]).collect());
        add(format!("smoother{k}"), levels.iter().map(|l| l.smoother[k]).collect());
    }
    for k in 0..base.dim() {
        add(format!("lift{}", k + 1), levels.iter().map(|l| l.lift[k]).collect());
        add(format!("harmonic_projection{k}"), levels.iter().map(|l| l.harmonic_projection[k]).collect());
    }
    let max_drift = drift.values().copied().fold(0.0, f64::max);
    Ok(BoundednessStudy { levels, drift, max_drift })
}

pub fn check_boundedness(study: &BoundednessStudy, tol: &Tolerances) -> CheckRecord {
    CheckRecord::new(
        "boundedness",
        study.max_drift < tol.drift,
        serde_json::to_value(study).expect("serialisable"),
        Some(tol.drift),
    )
}

// ----------------------------------------------------------------- report

#[derive(Clone, Debug, Serialize)]
pub struct ReportMeta {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub quad_bump: usize,
    pub tolerances: Tolerances,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshInfo {
    pub descriptor: String,
    pub dim: usize,
    pub refinements: usize,
    pub vertices: usize,
    pub cells: usize,
    pub mesh_size: f64,
    pub shape_regularity: Option<f64>,
}

impl MeshInfo {
    pub fn new(descriptor: &str, refinements: usize, mesh: &SimplicialMesh) -> Self {
        MeshInfo {
            descriptor: descriptor.to_string(),
            dim: mesh.dim(),
            refinements,
            vertices: mesh.num(0),
            cells: mesh.num_cells(),
            mesh_size: mesh.mesh_size(),
            shape_regularity: mesh.shape_regularity().ok(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyInfo {
    pub tag: String,
    pub degree: usize,
    pub label: String,
    pub description: String,
}

impl From<&ElementFamily> for FamilyInfo {
    fn from(f: &ElementFamily) -> Self {
        FamilyInfo { tag: f.tag.name().to_string(), degree: f.k, label: f.label(), description: f.tag.describe().to_string() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub meta: ReportMeta,
    pub mesh: MeshInfo,
    pub family: FamilyInfo,
    pub checks: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn new(
        command: &str,
        seed: u64,
        quad_bump: usize,
        tolerances: Tolerances,
        mesh: MeshInfo,
        family: FamilyInfo,
        checks: Vec<CheckRecord>,
    ) -> Self {
        let count = |s: Status| checks.iter().filter(|c| c.status == s).count();
        let meta = ReportMeta {
            schema_version: SCHEMA_VERSION,
            tool: "feec".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            quad_bump,
            tolerances,
            passed: count(Status::Pass),
            failed: count(Status::Fail),
            skipped: count(Status::Skipped),
        };
        VerificationReport { meta, mesh, family, checks }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(CheckRecord::passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable");
        s.push('\n');
        s
    }
}

/// Writes the report as pretty JSON with a fixed key order.
pub fn emit_report(report: &VerificationReport, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, report.to_json())
}
