//! Numerical laboratory for Aharonov–Bohm eigenvalues with a moving pole.
//!
//! The magnetic problem with half-integer circulation is solved in its gauge
//! form: a real Laplace eigenproblem on a domain slit along a ray, with an
//! anti-periodic trace condition across the slit.

pub mod blowup;
pub mod branch;
pub mod disk_oracle;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod localexp;
pub mod numeric;

pub use blowup::{BlowupSolver, CoeffC, FiniteFormSample, GSample, GTable, RMatrix};
pub use branch::{BifurcationReport, BranchSample, PowerFit};
pub use disk_oracle::{DiskMode, DiskVariant};
pub use error::{Error, Result};
pub use fem::{DofMap, EigenPair, SparseSym};
pub use geometry::{CrackGeometry, CrackedMesh, Domain, DomainKind, DomainSpec, MeshParams, SymmetryTag};
pub use localexp::{BasisCase, LocalExpansion};
