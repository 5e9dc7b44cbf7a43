//! Local bounded commuting projections onto finite element de Rham complexes
//! on simplicial meshes in two and three dimensions.

pub mod cli;
pub mod elements;
pub mod fields;
pub mod harmonic;
pub mod linalg;
pub mod mesh;
pub mod poly;
pub mod projector;
pub mod verify;
pub mod weights;
