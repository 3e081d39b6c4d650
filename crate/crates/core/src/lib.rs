//! Outer annihilators and Smirnov-class certificates for self-adjoint multiplication
//! models with finite-rank dissipative coupling.
//!
//! The model operator is multiplication by `k` on `L²(μ)` for a compactly supported
//! measure `μ` built from atoms, polynomial densities and self-similar pieces. All
//! operator functions are evaluated by spectral calculus on that model.

pub mod annihilator;
pub mod detect;
pub mod error;
pub mod hardy;
pub mod measure;
pub mod operator;
pub mod quad;
pub mod scenario;

pub use error::{Error, Result};
pub use measure::{AcPiece, Atom, ScPiece, SpectralMeasure, Symbol, SymbolVector};
