//! Numerical verification of the variational theory of translating
//! solitons: the weighted functional `F(Σ) = ∫ e^⟨T,x⟩ dμ`, the drifted
//! Laplacian `𝓛`, the stability operator `L` and Hamiltonian variations
//! `J∇f` on sampled Lagrangian patches in `ℂⁿ`.

pub mod ambient;
pub mod catalog;
pub mod error;
pub mod grid;
pub mod jet;
pub mod operators;
pub mod patch;
pub mod report;
pub mod sampling;
pub mod variation;

pub use ambient::AmbientStructure;
pub use catalog::{SolitonKind, SolitonSpec};
pub use error::{Error, Result};
pub use grid::ParameterGrid;
pub use operators::{NormalField, ScalarField, Support, WeightedMeasure};
pub use patch::{build_patch, Backend, ImmersedPatch};
pub use report::CheckReport;
