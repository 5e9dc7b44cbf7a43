//! Finite element families, global spaces and bubble complexes.

mod bubble;
mod dofs;
mod space;

pub use bubble::{analyse_bubble_spaces, bubble_complex_check, BubbleComplex, BubbleComplexReport, BubbleKind, BubbleSpace};
pub use dofs::{
    bdm_bubble_basis, bubble_basis, build_reference, cell_dofs, check_unisolvency, mean_zero_basis, reference_simplex,
    shape_basis, shape_dim, vertex_free_mean_zero_basis, Dof, DofKind, ElementFamily, FamilyTag, ReferenceElement,
    Step, Term, UnisolvencyReport,
};
pub use space::{
    assemble_complex, assemble_space, check_span_condition, eval_l_sigma, DofInfo, FeComplex, FeFunction, FeSpace,
    SpanReport, SpanViolation,
};

use thiserror::Error;

use crate::mesh::{MeshError, SimplexId};

#[derive(Debug, Error)]
pub enum ElementError {
    #[error("degree {k} is out of range for family {family} (minimum {min})")]
    Degree { family: &'static str, k: usize, min: usize },
    #[error("slot {0} does not exist for this family")]
    Slot(usize),
    #[error("mesh dimension {mesh} does not match family dimension {family}")]
    Dimension { mesh: usize, family: usize },
    #[error("local DOF matrix is singular on cell {cell} (slot {slot})")]
    Unisolvency { cell: usize, slot: usize },
    #[error("inconsistent differential entry for DOF {row} attached to {simplex}: {detail}")]
    Consistency { row: usize, simplex: SimplexId, detail: String },
    #[error("function of slot {got} passed where slot {expected} is required")]
    SlotMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}
