//! Spectral graph filtering with polynomial bases.
//!
//! The crate implements polynomial filters `z = sum_k alpha_k g_k(P) x` over
//! the normalized adjacency `P` of a graph, with three families of bases:
//!
//! * fixed classical bases (monomial, Chebyshev, Jacobi, Bernstein),
//! * learnable orthonormal bases defined by three-term recurrence
//!   coefficients (`favard`),
//! * the signal-dependent optimal basis, whose basis vectors are orthonormal
//!   so the coefficient-learning problem has an identity Hessian
//!   (`optbasis`), computed in `O(K |E|)` with a two-term orthogonalization.
//!
//! A dense eigendecomposition oracle ([`oracle`]) provides ground truth for
//! small graphs, and a small reverse-mode tape ([`autodiff`]) trains the
//! filters and the surrounding MLPs.

pub mod autodiff;
pub mod basis;
pub mod cli;
pub mod dense;
pub mod error;
pub mod experiments;
pub mod filtering;
pub mod graph;
pub mod oracle;
pub mod train;

pub use basis::{BasisKind, RecurrenceCoefficients};
pub use error::{Error, Result};
pub use filtering::{BasisVectors, CoefficientMatrix, SignalMatrix};
pub use graph::{Graph, SparseMatrix};
