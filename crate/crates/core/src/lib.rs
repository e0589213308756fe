//! Desk-scale computational toolkit for locally conformal symplectic (lcs)
//! geometry: twisted exterior calculus, lcs Hamiltonian flows with conformal
//! factors and actions, translated points and Lee chords, generating
//! functions quadratic at infinity over twisted cotangent bundles, min-max
//! spectral selectors, and the derived partial order, bi-invariant metric,
//! capacity and non-squeezing verdicts.

pub mod calculus;
pub mod chart;
pub mod chords;
pub mod contact;
pub mod cubical;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod field;
pub mod genfun;
pub mod invariants;
pub mod lcs;
pub mod newton;
pub mod spectral;

pub use chart::Chart;
pub use error::{Error, Result};
pub use expr::Expr;
pub use field::{KForm, ScalarField, VectorField};
pub use lcs::{LcsTriple, ModelSpace};
