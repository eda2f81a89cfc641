//! Positive solutions of p-th Yamabe-type equations
//! `−Δ_p u + h u^{q−1} = λ f u^{α−1}` on finite connected weighted graphs.
//!
//! Solutions are computed by constrained energy minimization with radial
//! retraction and certified by independent residual, bound and derivative
//! checks. See [`solver::solve_yamabe`] for the entry point and [`cli`] for
//! the command-line front end.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod functionals;
pub mod graph;
pub mod operators;
pub mod solver;
pub mod verification;

pub use error::{Error, Result};
pub use functionals::{ConstraintKind, ProblemSpec, SolveMode};
pub use graph::{VertexFunction, WeightedGraph};
pub use operators::LaplacianVariant;
pub use solver::{solve_yamabe, SolveOptions, SolveResult};
pub use verification::{CheckStatus, VerificationReport};
